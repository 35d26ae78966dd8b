"""
Набор проверок команды validate

Обязательные проверки: совпадение двух способов вычисления преобразования,
ветви первообразной против квадратуры, знак диффузионного члена,
аналитика против Монте-Карло, тождества портфеля.
Мягкие проверки (soft) сравнивают спреды с опубликованными значениями базового
сценария и проверяют направление спредов по параметрам и срокам; на код выхода не влияют
"""
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from loguru import logger
from scipy.integrate import quad

from cdo_pricer import (
    LossCurve, TrancheQuote, expected_tranche_loss, expected_tranche_loss_cdf_form, price_maturities,
)
from config import RunConfig
from errors import PoleError
from mc_oracle import Estimate, Histogram, sample_default_times, sample_terminal
from model_core import ContagionParams, ValidatedModel, base_case_spec
from model_enums import BMethod, ComparisonMode, TimeUnit
from pgf_engine import (
    DIFFUSION_SIGN, AbelConstants, abel_constants, antiderivative_I, count_distribution,
    joint_transform, parameter_jacobian, solve_b0_closed_form, time_of_parameter,
)
from portfolio_loss import defaults_distribution_curve, firm_default_probability

CROSS_METHOD_TOL = 1e-8
BRANCH_TOL = 1e-10
PGF_TOL = 1e-7
MASS_TOL = 1e-6
SIGN_TOL = 1e-6
IDENTITY_TOL = 1e-10
PARAMETER_TIME_TOL = 1e-7
TOWER_TOL = 1e-10
MARGINAL_TOL = 1e-8
LEG_ABS_FLOOR = 1e-6
TABLE_REL_TOL = 0.10
FLATNESS_TOL = 0.01
MONOTONE_TOL = 1e-12

EXPECTED_DIRECTIONS = {"lambda0": "nondecreasing", "beta": "nonincreasing", "w": "nonincreasing"}
"""Ожидаемое направление спреда каждого транша по сетке параметра"""

PUBLISHED_SPREADS: dict[ComparisonMode, dict[float, tuple[float|None, ...]]] = {
    ComparisonMode.DYNAMIC_CONTAGION: {3.0: (0.5343, 0.0421, 0.00006), 6.0: (0.5689, 0.1660, 0.0012)},
    ComparisonMode.POISSON: {3.0: (3.9439, None, None), 6.0: (3.9439, None, None)},
    ComparisonMode.AJD_NO_SELF: {3.0: (1.9368, None, None), 6.0: (1.9368, None, None)},
}
"""Опубликованные спреды базового сценария, единицы по 100 б.п."""


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    reference: float
    discrepancy: float
    tolerance: float
    standard_error: float = math.nan
    detail: str = ""
    soft: bool = False


def _relative(measured: float, reference: float) -> float:
    return abs(measured - reference) / max(abs(reference), 1e-300)


def _absolute_check(name: str, measured: float, reference: float, tol: float, *, relative: bool = False) -> CheckResult:
    discrepancy = _relative(measured, reference) if relative else abs(measured - reference)
    return CheckResult(
        name=name,
        passed=bool(discrepancy <= tol),
        measured=measured,
        reference=reference,
        discrepancy=discrepancy,
        tolerance=tol,
        detail=f"{'отн.' if relative else 'абс.'} отклонение {discrepancy:.3g}, допуск {tol:g}",
    )


def _mc_check(name: str, estimate: Estimate, reference: float, z: float, floor: float = 0.0) -> CheckResult:
    diff = abs(estimate.value - reference)
    return CheckResult(
        name=name,
        passed=bool(diff <= z * estimate.standard_error + floor),
        measured=estimate.value,
        reference=reference,
        discrepancy=estimate.deviation(reference),
        tolerance=z,
        standard_error=estimate.standard_error,
        detail=f"|МК - аналитика| = {diff:.3g}, {estimate.deviation(reference):.2f} SE, путей {estimate.n_paths}",
    )


def _histogram_check(name: str, histogram: Histogram, target: np.ndarray, z: float) -> CheckResult:
    worst = histogram.sup_deviation(target, floor=1.0 / histogram.n_paths)
    return CheckResult(
        name=name,
        passed=bool(worst <= z),
        measured=worst,
        reference=0.0,
        discrepancy=worst,
        tolerance=z,
        detail=f"наибольшее отклонение по корзинам {worst:.2f} SE, корзин {target.size}, путей {histogram.n_paths}",
    )


def check_cross_method(params: ContagionParams) -> list[CheckResult]:
    """Параметрическое решение против ОДУ для E[theta^N(T)]"""
    results = []
    for theta in (0.5, 0.9, 0.97, 0.99):
        for horizon in (1.0, 4.0, 12.0):
            closed = joint_transform(params, theta, 0.0, horizon, method=BMethod.CLOSED_FORM).value
            ode = joint_transform(params, theta, 0.0, horizon, method=BMethod.ODE).value
            results.append(_absolute_check(
                f"cross_method theta={theta:g} T={horizon:g}", closed, ode, CROSS_METHOD_TOL, relative=True
            ))
    return results


def _branch_check(name: str, constants: AbelConstants, lower: float, upper: float) -> CheckResult:
    def integrand(s: float) -> float:
        return s / (s * s - s - constants.alpha1)

    reference = quad(integrand, lower, upper, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    measured = antiderivative_I(upper, constants) - antiderivative_I(lower, constants)
    return _absolute_check(name, measured, reference, BRANCH_TOL)


def check_antiderivative_branches(params: ContagionParams) -> list[CheckResult]:
    """I(b) - I(a) против квадратуры на всех трёх ветвях дискриминанта"""
    positive = abel_constants(params, 0.97)
    r_lo, r_hi = positive.roots
    negative = AbelConstants(alpha1=-0.5, alpha2=0.0, u0=1.0, discriminant=-1.0)
    double_root = AbelConstants(alpha1=-0.25, alpha2=0.0, u0=1.0, discriminant=0.0)
    return [
        _branch_check(f"antiderivative D={positive.discriminant:.4g}", positive, r_hi + 0.05, r_hi + 2.0),
        _branch_check(f"antiderivative D={positive.discriminant:.4g} below roots", positive, r_lo - 2.0, r_lo - 0.05),
        _branch_check("antiderivative D<0", negative, -1.0, 2.0),
        _branch_check("antiderivative D=0", double_root, 1.0, 3.0),
    ]


def check_parameter_time(params: ContagionParams, theta: float = 0.97) -> list[CheckResult]:
    """t(u) через первообразную: против квадратуры dt/du и в корне u* параметрического пути"""
    constants = abel_constants(params, theta)
    r_lo, r_hi = constants.roots
    results = []
    for u in (0.5 * (r_lo + constants.u0), 0.5 * (constants.u0 + r_hi)):
        reference = 12.0 + quad(
            parameter_jacobian, constants.u0, u, args=(constants, params), epsabs=1e-13, epsrel=1e-13, limit=200
        )[0]
        measured = time_of_parameter(u, constants, params, 12.0)
        results.append(_absolute_check(f"parameter time u={u:.6g}", measured, reference, BRANCH_TOL))
    for horizon in (1.0, 4.0, 12.0):
        route = solve_b0_closed_form(params, theta, 0.0, horizon).parametric
        if route is None:
            continue
        u_star = float(route.u_of(route.x_star))
        try:
            residual = time_of_parameter(u_star, constants, params, horizon)
        except PoleError:
            logger.debug(f"u* = {u_star!r} неотличимо от корня при T={horizon:g}, проверка пропущена")
            continue
        results.append(_absolute_check(f"parameter time t(u*) T={horizon:g}", residual, 0.0, PARAMETER_TIME_TOL))
    return results


def check_diffusion_sign(params: ContagionParams, horizon: float, diffusion_sign: float) -> CheckResult:
    """Знак sigma^2 в c'(t) против преобразования Лапласа процесса Орнштейна-Уленбека

    При beta -> бесконечности скачки исчезают, и E[exp(-v lambda(T))] = exp(-v m + v^2 s^2 / 2)
    """
    v = 0.5
    ou = replace(params, beta=1e8)
    decay = math.exp(-ou.delta * horizon)
    mean = ou.eta + (ou.lambda0 - ou.eta) * decay
    variance = ou.sigma ** 2 * (1.0 - decay ** 2) / (2.0 * ou.delta)
    reference = math.exp(-v * mean + 0.5 * v * v * variance)
    measured = joint_transform(ou, 1.0, v, horizon, method=BMethod.ODE, diffusion_sign=diffusion_sign).value
    return _absolute_check("c_delta diffusion sign", measured, reference, SIGN_TOL, relative=True)


def check_count_distribution(
        params: ContagionParams,
        horizon: float,
        diffusion_sign: float
    ) -> tuple[list[CheckResult], np.ndarray]:
    """Масса обращения и совпадение производящей функции с преобразованием"""
    dist = count_distribution(params, horizon, tail_tol=1e-9, diffusion_sign=diffusion_sign)
    results = [CheckResult(
        name="count_distribution mass",
        passed=bool(dist.captured_mass >= 1.0 - MASS_TOL),
        measured=dist.captured_mass,
        reference=1.0,
        discrepancy=dist.deficit,
        tolerance=MASS_TOL,
        detail=f"n_max={dist.n_max}, точек {dist.points}",
    )]
    for theta in (0.5, 0.9, 0.99):
        transform = joint_transform(params, theta, 0.0, horizon, diffusion_sign=diffusion_sign).value
        results.append(_absolute_check(f"pgf theta={theta:g}", dist.pgf(theta), transform, PGF_TOL))
    return results, dist.pmf


def _binned(pmf: np.ndarray, n_max: int) -> np.ndarray:
    """Вероятности 0..n_max - 1 и хвост P(N >= n_max) в последней корзине"""
    head = np.zeros(n_max + 1)
    size = min(pmf.size, n_max)
    head[:size] = pmf[:size]
    head[n_max] = max(0.0, 1.0 - head[:n_max].sum())
    return head


def check_against_simulation(
        run: RunConfig,
        params: ContagionParams,
        horizon: float,
        pmf: np.ndarray,
        diffusion_sign: float,
        jobs: int
    ) -> list[CheckResult]:
    """Преобразование, гистограмма N(T), средняя интенсивность и шаг дискретизации"""
    z = run.z_tolerance
    cfg = replace(run.simulation, jobs=jobs)
    sample = sample_terminal(params, horizon, cfg)
    results = []
    for v in (0.0, 0.5):
        analytic = joint_transform(params, 0.97, v, horizon, diffusion_sign=diffusion_sign).value
        results.append(_mc_check(f"transform_mc theta=0.97 v={v:g}", sample.transform(0.97, v), analytic, z))
    results.append(_histogram_check(
        "count_histogram_mc", sample.count_histogram(run.sim_n_max), _binned(pmf, run.sim_n_max), z
    ))
    results.append(_mc_check(
        "mean_intensity_mc", sample.mean_intensity(), float(params.expected_count(horizon)) / horizon, z
    ))

    fine = sample_terminal(params, horizon, replace(cfg, dt=cfg.dt / 2.0))
    coarse_estimate = sample.transform(0.97, 0.5)
    fine_estimate = fine.transform(0.97, 0.5)
    combined = math.hypot(coarse_estimate.standard_error, fine_estimate.standard_error)
    diff = abs(coarse_estimate.value - fine_estimate.value)
    results.append(CheckResult(
        name="discretization dt vs dt/2",
        passed=bool(diff <= z * combined),
        measured=fine_estimate.value,
        reference=coarse_estimate.value,
        discrepancy=diff / combined if combined > 0 else math.inf,
        tolerance=z,
        standard_error=combined,
        detail=f"dt={cfg.dt:g} и {cfg.dt / 2:g}: разница {diff:.3g}",
    ))
    return results


def check_portfolio(run: RunConfig, model: ValidatedModel, jobs: int) -> list[CheckResult]:
    """Тождества портфеля и сверка распределения дефолтов и ног траншей с Монте-Карло"""
    z = run.z_tolerance
    spec = model.spec
    longest = model.with_horizon(max(run.maturities))
    horizon = longest.horizon_internal
    results = []

    precise = defaults_distribution_curve(spec, np.array([horizon]), tail_tol=1e-10)[0]
    results.append(_absolute_check("tower mean E[D]", precise.mean(), precise.tower_mean, TOWER_TOL))
    results.append(_absolute_check(
        "E[D]/N vs firm default probability",
        precise.mean() / spec.n_firms,
        firm_default_probability(spec.firm, spec.idio, spec.common, horizon),
        MARGINAL_TOL,
    ))
    portfolio_loss = precise.expected_loss(spec.recovery)
    tranche_sum = sum(expected_tranche_loss(precise, tranche, spec.recovery) for tranche in run.tranches)
    results.append(_absolute_check("tranche additivity", tranche_sum, portfolio_loss, IDENTITY_TOL))
    worst_form = max(
        abs(expected_tranche_loss(precise, tranche, spec.recovery)
            - expected_tranche_loss_cdf_form(precise, tranche, spec.recovery))
        for tranche in run.tranches
    )
    results.append(_absolute_check("tranche loss cdf form", worst_form, 0.0, IDENTITY_TOL))

    cfg = replace(run.simulation, jobs=jobs)
    sample = sample_default_times(spec, horizon, cfg)
    histogram_times = sorted({float(model.internal_time(t)) for t in run.maturities})
    distributions = defaults_distribution_curve(spec, np.array(histogram_times))
    for t, dist in zip(histogram_times, distributions):
        results.append(_histogram_check(f"defaults_histogram_mc t={t:g}", sample.defaults_histogram(t), dist.pmf, z))

    curves = LossCurve(longest)
    quotes = price_maturities(longest, run.tranches, [longest.cfg.horizon], curves=curves)
    for quote, legs in zip(quotes, sample.tranche_legs(longest, run.tranches)):
        results.append(_mc_check(f"protection_leg_mc {quote.tranche}", legs.protection_leg, quote.protection_leg, z, LEG_ABS_FLOOR))
        results.append(_mc_check(f"annuity_mc {quote.tranche}", legs.annuity, quote.annuity, z, LEG_ABS_FLOOR))
    return results


def is_base_case(run: RunConfig) -> bool:
    base = base_case_spec()
    return run.spec == base and run.pricing.r == 0.03 and run.pricing.time_unit is TimeUnit.QUARTER


def check_published_spreads(run: RunConfig, model: ValidatedModel) -> list[CheckResult]:
    """Мягкое сравнение с опубликованными спредами; рядом всегда пишется значение движка"""
    results = []
    for mode, table in PUBLISHED_SPREADS.items():
        quotes = price_maturities(model, run.tranches, sorted(table), mode)
        by_key = {(quote.horizon, index % len(run.tranches)): quote for index, quote in enumerate(quotes)}
        for horizon, targets in table.items():
            for index, target in enumerate(targets):
                if target is None:
                    continue
                measured = by_key[(horizon, index)].spread_table_units
                discrepancy = _relative(measured, target)
                results.append(CheckResult(
                    name=f"published {mode} T={horizon:g} tranche {index + 1}",
                    passed=bool(discrepancy <= TABLE_REL_TOL),
                    measured=measured,
                    reference=target,
                    discrepancy=discrepancy,
                    tolerance=TABLE_REL_TOL,
                    detail=f"движок {measured:.6g}, опубликовано {target:g}",
                    soft=True,
                ))
        if mode is not ComparisonMode.DYNAMIC_CONTAGION:
            first = [quote.spread for quote in quotes if quote.tranche == run.tranches[0]]
            variation = (max(first) - min(first)) / max(abs(np.mean(first)), 1e-300)
            results.append(CheckResult(
                name=f"published {mode} tranche 1 flatness",
                passed=bool(variation <= FLATNESS_TOL),
                measured=variation,
                reference=0.0,
                discrepancy=variation,
                tolerance=FLATNESS_TOL,
                detail=f"относительный размах спреда по срокам {variation:.3g}",
                soft=True,
            ))
    return results


def _relative_spread(spreads: np.ndarray) -> float:
    return float((spreads.max() - spreads.min()) / max(abs(float(spreads.mean())), 1e-300))


def _direction_check(name: str, spreads: Sequence[float], expected: str) -> CheckResult:
    """Наибольший шаг против ожидаемого направления, в долях среднего спреда"""
    spreads = np.asarray(spreads, dtype=float)
    steps = np.diff(spreads) / max(abs(float(spreads.mean())), 1e-300)
    against = -steps if expected == "nondecreasing" else steps
    worst = max(0.0, float(against.max())) if against.size else 0.0
    return CheckResult(
        name=name,
        passed=bool(worst <= MONOTONE_TOL),
        measured=worst,
        reference=0.0,
        discrepancy=worst,
        tolerance=MONOTONE_TOL,
        detail=f"ожидается {expected}, спреды " + ", ".join(f"{value:.6g}" for value in spreads),
        soft=True,
    )


def check_sweep_properties(
        parameter: str,
        grid: Sequence[float],
        per_point: Sequence[Sequence[TrancheQuote]],
        lambda0: float
    ) -> list[CheckResult]:
    """Качественное поведение спредов на сетке параметра

    lambda0 и beta, w: монотонность каждого транша; eta: размах не больше FLATNESS_TOL
    на точках eta < lambda0; sigma: у старшего транша наименьший размах на каждом сроке
    """
    results = []
    positions = range(len(per_point[0]))
    if parameter in EXPECTED_DIRECTIONS:
        for position in positions:
            quotes = [point[position] for point in per_point]
            results.append(_direction_check(
                f"sweep {parameter} {quotes[0].tranche} T={quotes[0].horizon:g}",
                [quote.spread for quote in quotes],
                EXPECTED_DIRECTIONS[parameter],
            ))
    elif parameter == "eta":
        below = [index for index, value in enumerate(grid) if value < lambda0]
        if len(below) < 2:
            return results
        for position in positions:
            quotes = [per_point[index][position] for index in below]
            variation = _relative_spread(np.array([quote.spread for quote in quotes]))
            results.append(CheckResult(
                name=f"sweep eta<lambda0 flatness {quotes[0].tranche} T={quotes[0].horizon:g}",
                passed=bool(variation <= FLATNESS_TOL),
                measured=variation,
                reference=0.0,
                discrepancy=variation,
                tolerance=FLATNESS_TOL,
                detail=f"точек {len(below)}, относительный размах {variation:.3g}",
                soft=True,
            ))
    elif parameter == "sigma":
        by_horizon: dict[float, list[tuple[TrancheQuote, float]]] = {}
        for position in positions:
            quotes = [point[position] for point in per_point]
            variation = _relative_spread(np.array([quote.spread for quote in quotes]))
            by_horizon.setdefault(quotes[0].horizon, []).append((quotes[0], variation))
        for horizon, items in by_horizon.items():
            senior, senior_variation = max(items, key=lambda item: item[0].tranche.attach)
            smallest = min(variation for _, variation in items)
            results.append(CheckResult(
                name=f"sweep sigma senior robustness T={horizon:g}",
                passed=bool(senior_variation <= smallest),
                measured=senior_variation,
                reference=smallest,
                discrepancy=senior_variation - smallest,
                tolerance=0.0,
                detail=f"размах старшего транша {senior.tranche}: {senior_variation:.3g}, наименьший {smallest:.3g}",
                soft=True,
            ))
    return results


def check_term_structure(quotes: Sequence[TrancheQuote]) -> list[CheckResult]:
    """Спред каждого транша не убывает со сроком"""
    by_tranche: dict[tuple[float, float], list[TrancheQuote]] = {}
    for quote in quotes:
        by_tranche.setdefault((quote.tranche.attach, quote.tranche.detach), []).append(quote)
    results = []
    for items in by_tranche.values():
        items = sorted(items, key=lambda quote: quote.horizon)
        if len(items) < 2:
            continue
        results.append(_direction_check(
            f"term structure {items[0].mode} {items[0].tranche}",
            [quote.spread for quote in items],
            "nondecreasing",
        ))
    return results


def run_suite(
        run: RunConfig,
        model: ValidatedModel,
        *,
        horizon: float,
        jobs: int = 1,
        flip_diffusion_sign: bool = False
    ) -> list[CheckResult]:
    """Все проверки по порядку; horizon: срок проверок процесса во внутренних единицах"""
    sign = -DIFFUSION_SIGN if flip_diffusion_sign else DIFFUSION_SIGN
    if flip_diffusion_sign:
        logger.warning("Знак диффузионного члена c'(t) перевёрнут, проверки с ним должны провалиться")
    params = model.spec.common

    results = check_cross_method(params)
    results.extend(check_antiderivative_branches(params))
    results.extend(check_parameter_time(params))
    results.append(check_diffusion_sign(params, horizon, sign))
    count_results, pmf = check_count_distribution(params, horizon, sign)
    results.extend(count_results)
    results.extend(check_against_simulation(run, params, horizon, pmf, sign, jobs))
    results.extend(check_portfolio(run, model, jobs))
    maturities = sorted(set(run.maturities))
    if len(maturities) > 1:
        results.extend(check_term_structure(price_maturities(model, run.tranches, maturities, curves=LossCurve(model))))
    if is_base_case(run):
        results.extend(check_published_spreads(run, model))
    passed = sum(item.passed for item in results)
    logger.info(f"Проверок пройдено: {passed} из {len(results)}")
    return results
