"""
Команды программы: price, sweep, dist, simulate, validate

Каждая команда пишет CSV в каталог результатов и возвращает пути записанных файлов
"""
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence, TypeVar

import numpy as np
from loguru import logger

from cdo_pricer import TrancheQuote, LossCurve, price_maturities, spread_table_units
from comparison_models import event_process
from config import RunConfig
from errors import ValidationFailed
from mc_oracle import simulate_paths
from model_core import INTERNAL_TIME_UNIT, PortfolioSpec, ValidatedModel, validate
from pgf_engine import count_distribution_curve
from portfolio_loss import defaults_distribution_curve, firm_default_probability
from tools import ENGINE_VERSION, config_comment, make_safe_filename, prepare_output_folder, write_csv_atomic
from validation_suite import CheckResult, check_sweep_properties, run_suite

T = TypeVar("T")

QUOTE_HEADER = (
    "mode", "tranche_attach", "tranche_detach", "T_years",
    "spread_table_units", "V", "annuity", "expected_tranche_loss", "expected_portfolio_loss",
)


def _ordered_map(func: Callable[..., T], items: Sequence, jobs: int) -> list[T]:
    """map с сохранением порядка входа; параллельно при jobs > 1"""
    if jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items))


def _output_file(run: RunConfig, name: str) -> str:
    return os.path.join(prepare_output_folder(run.output), name)


def _comment(run: RunConfig) -> str:
    return config_comment(run.resolved, ENGINE_VERSION)


def validated_model(run: RunConfig, spec: PortfolioSpec|None = None) -> ValidatedModel:
    """Проверка модели из настроек, срок: первый из maturities"""
    return validate(spec or run.spec, run.pricing, run.tranches)


CHECK_HEADER = ("check", "passed", "soft", "measured", "reference", "discrepancy", "standard_error", "tolerance", "detail")


def _check_rows(results: Sequence[CheckResult]) -> list[tuple]:
    """Строки отчёта проверок; исход каждой пишется в журнал"""
    rows = []
    for item in results:
        level = "INFO" if item.passed else ("WARNING" if item.soft else "ERROR")
        logger.log(level, f"{item.name}: {'ok' if item.passed else 'FAIL'} ({item.detail})")
        rows.append((
            item.name, item.passed, item.soft, item.measured, item.reference,
            item.discrepancy, item.standard_error, item.tolerance, item.detail,
        ))
    return rows


def _quote_rows(quotes: Sequence[TrancheQuote], curves: LossCurve) -> list[tuple]:
    rows = []
    for quote in quotes:
        rows.append((
            str(quote.mode),
            quote.tranche.attach,
            quote.tranche.detach,
            quote.horizon,
            quote.spread_table_units,
            quote.protection_leg,
            quote.annuity,
            float(quote.expected_loss[-1]),
            float(curves.portfolio_loss(np.array([quote.horizon]))[0]),
        ))
    return rows


def cmd_price(run: RunConfig, *, jobs: int = 1) -> list[str]:
    """Спреды всех траншей на все сроки из maturities

    Каждый срок считается со своей кривой потерь, поэтому результат не зависит от jobs
    """
    model = validated_model(run)
    logger.info(f"Оценка: режим {run.mode}, сроки {run.maturities}, траншей {len(run.tranches)}, потоков {jobs}")

    def price_horizon(horizon: float) -> list[tuple]:
        curves = LossCurve(model, run.mode)
        return _quote_rows(price_maturities(model, run.tranches, [horizon], run.mode, curves=curves), curves)

    rows = [row for chunk in _ordered_map(price_horizon, list(run.maturities), jobs) for row in chunk]
    path = _output_file(run, f"price_{run.mode}.csv")
    return [write_csv_atomic(path, QUOTE_HEADER, rows, _comment(run))]


def apply_sweep_value(spec: PortfolioSpec, parameter: str, value: float) -> PortfolioSpec:
    """Подстановка значения параметра: w: доля возмещения, остальные: общий процесс"""
    if parameter == "w":
        return replace(spec, recovery=value)
    return replace(spec, common=replace(spec.common, **{parameter: value}))


@dataclass(frozen=True)
class SweepTrend:
    """Поведение спреда транша на сетке параметра"""
    parameter: str
    attach: float
    detach: float
    horizon: float
    minimum: float
    maximum: float
    relative_variation: float
    trend: str


def sweep_trend(parameter: str, quotes: Sequence[TrancheQuote]) -> SweepTrend:
    """Монотонность и относительный размах спреда по точкам сетки"""
    spreads = np.array([quote.spread for quote in quotes])
    steps = np.diff(spreads)
    scale = max(abs(float(spreads.mean())), 1e-300)
    relative = float((spreads.max() - spreads.min()) / scale)
    tol = 1e-12 * scale
    if np.all(np.abs(steps) <= tol):
        trend = "flat"
    elif np.all(steps >= -tol):
        trend = "nondecreasing"
    elif np.all(steps <= tol):
        trend = "nonincreasing"
    else:
        trend = "mixed"
    first = quotes[0]
    return SweepTrend(
        parameter=parameter,
        attach=first.tranche.attach,
        detach=first.tranche.detach,
        horizon=first.horizon,
        minimum=float(spreads.min()),
        maximum=float(spreads.max()),
        relative_variation=relative,
        trend=trend,
    )


def sweep_parameter(run: RunConfig, parameter: str, grid: Sequence[float], *, jobs: int = 1) -> list[list[TrancheQuote]]:
    """Котировки в каждой точке сетки; внешний список идёт по сетке"""
    def price_point(value: float) -> list[TrancheQuote]:
        model = validated_model(run, apply_sweep_value(run.spec, parameter, value))
        logger.debug(f"Чувствительность: {parameter}={value:g}")
        return price_maturities(model, run.tranches, run.sweep.maturities, run.mode)

    return _ordered_map(price_point, list(grid), jobs)


def cmd_sweep(run: RunConfig, *, jobs: int = 1) -> list[str]:
    """Чувствительность спредов к параметрам; файл на каждый параметр, сводка трендов

    Качественные проверки направлений пишутся в sweep_checks.csv и на код выхода не влияют
    """
    written = []
    trends: list[SweepTrend] = []
    checks: list[CheckResult] = []
    header = ("parameter", "value", "mode", "tranche_attach", "tranche_detach", "T_years", "spread_table_units")
    for parameter, grid in run.sweep.parameters.items():
        logger.info(f"Чувствительность к {parameter}: точек {len(grid)}")
        per_point = sweep_parameter(run, parameter, grid, jobs=jobs)
        checks.extend(check_sweep_properties(parameter, grid, per_point, run.spec.common.lambda0))
        rows = [
            (parameter, value, str(quote.mode), quote.tranche.attach, quote.tranche.detach,
             quote.horizon, quote.spread_table_units)
            for value, quotes in zip(grid, per_point)
            for quote in quotes
        ]
        path = _output_file(run, make_safe_filename(f"sweep_{parameter}.csv"))
        written.append(write_csv_atomic(path, header, rows, _comment(run)))
        # одна и та же позиция во всех точках: один транш на одном сроке
        for position in range(len(per_point[0])):
            trend = sweep_trend(parameter, [quotes[position] for quotes in per_point])
            trends.append(trend)
            logger.info(
                f"{parameter}: транш [{trend.attach:g}, {trend.detach:g}] T={trend.horizon:g} "
                f"{trend.trend}, размах {trend.relative_variation:.4g}"
            )
    summary_header = (
        "parameter", "tranche_attach", "tranche_detach", "T_years",
        "min_spread_table_units", "max_spread_table_units", "relative_variation", "trend",
    )
    summary_rows = [
        (item.parameter, item.attach, item.detach, item.horizon,
         spread_table_units(item.minimum), spread_table_units(item.maximum), item.relative_variation, item.trend)
        for item in trends
    ]
    written.append(write_csv_atomic(_output_file(run, "sweep_summary.csv"), summary_header, summary_rows, _comment(run)))
    if checks:
        path = _output_file(run, "sweep_checks.csv")
        written.append(write_csv_atomic(path, CHECK_HEADER, _check_rows(checks), _comment(run)))
    return written


def cmd_dist(run: RunConfig, *, jobs: int = 1) -> list[str]:
    """P(N(T) = n) общего процесса и P(D(T) = j) на сроках maturities с диагностикой"""
    model = validated_model(run)
    spec = model.spec
    horizons = model.internal_time(np.array(run.maturities))
    common = event_process(spec.common, run.mode, "model.common")
    idio = event_process(spec.idio, run.mode, "model.idio")
    counts = count_distribution_curve(common, horizons)
    defaults = defaults_distribution_curve(spec, horizons, mode=run.mode)

    mode = str(run.mode)
    count_rows = []
    default_rows = []
    summary_rows = []
    for years, count, dist in zip(run.maturities, counts, defaults):
        count_rows.extend((mode, years, n, p) for n, p in enumerate(count.pmf))
        default_rows.extend((mode, years, j, p) for j, p in enumerate(dist.pmf))
        summary_rows.append((
            mode, years, count.n_max, count.points, count.captured_mass, count.imag_residue,
            float(dist.pmf.sum()), dist.mean(), dist.expected_loss(spec.recovery),
            firm_default_probability(spec.firm, idio, common, float(count.horizon)),
        ))
        logger.info(
            f"T={years:g}: масса N {count.captured_mass:.12f} (n_max={count.n_max}), "
            f"E[D]={dist.mean():.6g}"
        )
    comment = _comment(run)
    return [
        write_csv_atomic(_output_file(run, f"dist_counts_{mode}.csv"), ("mode", "T_years", "n", "probability"), count_rows, comment),
        write_csv_atomic(_output_file(run, f"dist_defaults_{mode}.csv"), ("mode", "T_years", "j", "probability"), default_rows, comment),
        write_csv_atomic(
            _output_file(run, f"dist_summary_{mode}.csv"),
            ("mode", "T_years", "n_max", "fft_points", "captured_mass", "imag_residue",
             "defaults_mass", "expected_defaults", "expected_portfolio_loss", "firm_default_probability"),
            summary_rows,
            comment,
        ),
    ]


def simulation_horizon(run: RunConfig) -> float:
    """simulation.horizon задан в единицах параметров; перевод во внутренние"""
    return run.sim_horizon * INTERNAL_TIME_UNIT.per_year / run.pricing.time_unit.per_year


def cmd_simulate(run: RunConfig, *, jobs: int = 1) -> list[str]:
    """Траектории общего процесса заражения: по строке на путь и гистограмма N(T)"""
    model = validated_model(run)
    horizon = simulation_horizon(run)
    cfg = replace(run.simulation, jobs=jobs)
    n_max = run.sim_n_max
    path_rows = []
    counts = np.zeros(n_max + 1, dtype=np.int64)
    for index, record in enumerate(simulate_paths(model.spec.common, horizon, cfg)):
        path_rows.append((
            index,
            record.n_events,
            record.terminal_intensity,
            ";".join(f"{t:.10g}" for t in record.event_times),
        ))
        counts[min(record.n_events, n_max)] += 1
    n_paths = len(path_rows)
    probabilities = counts / n_paths
    errors = np.sqrt(probabilities * (1.0 - probabilities) / n_paths)
    histogram_rows = [(n, p, se) for n, (p, se) in enumerate(zip(probabilities, errors))]
    comment = _comment(run)
    return [
        write_csv_atomic(
            _output_file(run, "simulate_paths.csv"),
            ("path", "n_events", "terminal_intensity", "event_times_quarters"),
            path_rows,
            comment,
        ),
        write_csv_atomic(
            _output_file(run, "simulate_histogram.csv"),
            ("n", "probability", "standard_error"),
            histogram_rows,
            comment,
        ),
    ]


def cmd_validate(run: RunConfig, *, jobs: int = 1, flip_diffusion_sign: bool = False) -> list[str]:
    """Сверка аналитики с Монте-Карло и двух способов вычисления преобразования

    Отчёт пишется всегда; при любом проваленном обязательном пункте: ValidationFailed
    """
    model = validated_model(run)
    results = run_suite(
        run,
        model,
        horizon=simulation_horizon(run),
        jobs=jobs,
        flip_diffusion_sign=flip_diffusion_sign,
    )
    rows = _check_rows(results)
    written = [write_csv_atomic(_output_file(run, "validate_report.csv"), CHECK_HEADER, rows, _comment(run))]
    failed = [item.name for item in results if not item.passed and not item.soft]
    if failed:
        raise ValidationFailed(f"Не прошли проверки: {', '.join(failed)}")
    return written


COMMANDS: dict[str, Callable[..., list[str]]] = {
    "price": cmd_price,
    "sweep": cmd_sweep,
    "dist": cmd_dist,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
}
