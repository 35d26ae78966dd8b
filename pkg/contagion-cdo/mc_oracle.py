"""
Монте-Карло симулятор процесса динамического заражения

Независимый оракул для аналитических величин: преобразования, распределения
числа событий и дефолтов, ноги траншей.
Пути считаются пачками; каждая пачка получает свой поток Philox с ключом
(seed, номер потока, номер пачки), поэтому результат не зависит от порядка
и числа потоков исполнения
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence, TypeVar

import numpy as np
from loguru import logger

from model_core import ContagionParams, PortfolioSpec, TrancheSpec, ValidatedModel
from model_enums import FloorPolicy, SimScheme

STREAM_COMMON = 1
STREAM_IDIO = 2
STREAM_THRESHOLD = 3

T = TypeVar("T")


@dataclass(frozen=True)
class SimConfig:
    """Настройки симуляции

    dt и portfolio_dt заданы во внутренних единицах времени (кварталах)
    """
    n_paths: int = 100_000
    dt: float = 1e-3
    seed: int = 20240601
    scheme: SimScheme = SimScheme.EULER_BERNOULLI
    floor_policy: FloorPolicy = FloorPolicy.REFLECT_ZERO_RATE
    batch_size: int = 10_000
    antithetic: bool = False
    portfolio_paths: int = 10_000
    portfolio_dt: float = 1e-2
    jobs: int = 1

    def errors(self, prefix: str = "simulation") -> list[str]:
        found: list[str] = []
        if self.n_paths < 1:
            found.append(f"{prefix}.n_paths: должно быть >= 1, получено {self.n_paths}")
        if self.portfolio_paths < 1:
            found.append(f"{prefix}.portfolio_paths: должно быть >= 1, получено {self.portfolio_paths}")
        for name in ("dt", "portfolio_dt"):
            value = getattr(self, name)
            if not (0.0 < value <= 0.01):
                found.append(f"{prefix}.{name}: требуется 0 < {name} <= 0.01, получено {value}")
        if self.batch_size < 2:
            found.append(f"{prefix}.batch_size: должно быть >= 2, получено {self.batch_size}")
        elif self.antithetic and self.batch_size % 2:
            found.append(f"{prefix}.batch_size: при antithetic должно быть чётным, получено {self.batch_size}")
        if not (0 <= self.seed < 2 ** 64):
            found.append(f"{prefix}.seed: должно лежать в [0, 2^64), получено {self.seed}")
        if self.jobs < 1:
            found.append(f"{prefix}.jobs: должно быть >= 1, получено {self.jobs}")
        return found

    def batches(self, n_paths: int) -> list[int]:
        """Размеры пачек: полные batch_size и остаток"""
        full, rest = divmod(n_paths, self.batch_size)
        sizes = [self.batch_size] * full
        if rest:
            sizes.append(rest + rest % 2 if self.antithetic else rest)
        return sizes


@dataclass(frozen=True)
class PathRecord:
    """Одна траектория: моменты событий, lambda(T) и, по желанию, вся траектория lambda"""
    event_times: np.ndarray
    terminal_intensity: float
    intensity_path: np.ndarray|None = field(default=None, repr=False)

    @property
    def n_events(self) -> int:
        return int(self.event_times.size)


@dataclass(frozen=True)
class Estimate:
    """Оценка среднего со стандартной ошибкой"""
    value: float
    standard_error: float
    n_paths: int

    def deviation(self, target: float) -> float:
        """Отклонение от target в стандартных ошибках"""
        diff = abs(self.value - target)
        if self.standard_error == 0.0:
            return 0.0 if diff == 0.0 else math.inf
        return diff / self.standard_error

    def within(self, target: float, z: float = 3.0) -> bool:
        return self.deviation(target) <= z

    def scaled(self, factor: float, shift: float = 0.0) -> "Estimate":
        """Оценка величины shift + factor * X"""
        return Estimate(shift + factor * self.value, abs(factor) * self.standard_error, self.n_paths)


@dataclass(frozen=True)
class Histogram:
    """Гистограмма с поэлементными стандартными ошибками sqrt(p (1 - p) / n)"""
    probabilities: np.ndarray
    standard_errors: np.ndarray
    n_paths: int

    def sup_deviation(self, target: np.ndarray, floor: float = 0.0) -> float:
        """Наибольшее отклонение в стандартных ошибках; floor: нижняя граница ошибки"""
        size = max(self.probabilities.size, target.size)
        own = np.zeros(size)
        own[:self.probabilities.size] = self.probabilities
        other = np.zeros(size)
        other[:target.size] = target
        # ошибка по аналитической вероятности, чтобы пустые корзины не давали ноль
        se = np.sqrt(np.clip(other * (1.0 - other), 0.0, None) / self.n_paths)
        se = np.maximum(np.maximum(se, np.pad(self.standard_errors, (0, size - self.standard_errors.size))), floor)
        diff = np.abs(own - other)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(diff == 0.0, 0.0, diff / se)
        return float(np.max(ratio))


@dataclass(frozen=True)
class LegEstimate:
    """Оценки защитной ноги и аннуитета одного транша"""
    tranche: TrancheSpec
    protection_leg: Estimate
    annuity: Estimate


def batch_generator(seed: int, stream: int, batch_index: int) -> np.random.Generator:
    """Счётчиковый генератор Philox с ключом (seed, поток, пачка)"""
    key = np.array([seed, (stream << 32) | batch_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class _IntensityStepper:
    """Шаг Эйлера для массива независимых процессов одинаковой формы"""
    def __init__(
            self,
            params: ContagionParams,
            cfg: SimConfig,
            rng: np.random.Generator,
            shape: tuple[int, ...],
            dt: float
        ):
        self.params = params
        self.cfg = cfg
        self.rng = rng
        self.shape = shape
        self.dt = dt
        self.sqrt_dt = math.sqrt(dt)
        self.intensity = np.full(shape, float(params.lambda0))

    def _gaussian(self) -> np.ndarray:
        if not self.cfg.antithetic:
            return self.rng.standard_normal(self.shape)
        half = self.rng.standard_normal((self.shape[0] // 2,) + self.shape[1:])
        return np.concatenate((half, -half), axis=0)

    def step(self) -> np.ndarray:
        """Один шаг; возвращает число событий на шаге"""
        params = self.params
        rate = np.maximum(self.intensity, 0.0) * self.dt
        jumps = np.zeros(self.shape)
        if self.cfg.scheme is SimScheme.EULER_BERNOULLI:
            events = (self.rng.random(self.shape) < rate).astype(np.int64)
            fired = events.astype(bool)
            jumps[fired] = self.rng.exponential(1.0 / params.beta, int(fired.sum()))
        else:
            events = self.rng.poisson(rate)
            fired = events > 0
            jumps[fired] = self.rng.gamma(events[fired], 1.0 / params.beta)
        noise = self._gaussian()
        self.intensity = (
            self.intensity
            + params.delta * (params.eta - self.intensity) * self.dt
            + params.sigma * self.sqrt_dt * noise
            + jumps
        )
        if self.cfg.floor_policy is FloorPolicy.CLIP_ZERO_RATE:
            np.maximum(self.intensity, 0.0, out=self.intensity)
        return events


def _step_grid(horizon: float, dt: float) -> tuple[int, float]:
    """Число шагов и фактический шаг, укладывающийся в horizon целое число раз"""
    n_steps = max(1, int(math.ceil(horizon / dt - 1e-9)))
    return n_steps, horizon / n_steps


def _run_batches(func: Callable[[int, int], T], sizes: Sequence[int], jobs: int) -> list[T]:
    """Пачки в фиксированном порядке; параллельно при jobs > 1"""
    if jobs <= 1 or len(sizes) == 1:
        return [func(index, size) for index, size in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, range(len(sizes)), sizes))


def _aggregate(batch_values: list[np.ndarray]) -> Estimate:
    """Среднее и стандартная ошибка

    При 10 и более пачках одинакового размера: по средним пачек, иначе по путям
    """
    sizes = np.array([values.size for values in batch_values])
    n_paths = int(sizes.sum())
    means = np.array([values.mean() for values in batch_values])
    value = float(np.dot(means, sizes) / n_paths)
    if len(batch_values) >= 10 and np.all(sizes == sizes[0]):
        standard_error = float(np.std(means, ddof=1) / math.sqrt(len(means)))
    elif n_paths > 1:
        squares = np.array([np.sum((values - value) ** 2) for values in batch_values])
        standard_error = float(math.sqrt(squares.sum() / (n_paths - 1) / n_paths))
    else:
        standard_error = math.inf
    return Estimate(value, standard_error, n_paths)


def _simulate_terminal(
        params: ContagionParams,
        horizon: float,
        cfg: SimConfig,
        batch_index: int,
        size: int,
        *,
        record_events: bool = False,
        record_intensity: bool = False
    ) -> dict[str, np.ndarray]:
    """Одна пачка: N(T), lambda(T), интеграл lambda и, по желанию, события"""
    rng = batch_generator(cfg.seed, STREAM_COMMON, batch_index)
    n_steps, dt = _step_grid(horizon, cfg.dt)
    stepper = _IntensityStepper(params, cfg, rng, (size,), dt)
    counts = np.zeros(size, dtype=np.int64)
    area = np.zeros(size)
    event_paths: list[np.ndarray] = []
    event_steps: list[np.ndarray] = []
    intensity_path = np.empty((n_steps + 1, size)) if record_intensity else None
    if intensity_path is not None:
        intensity_path[0] = stepper.intensity
    for step in range(n_steps):
        area += stepper.intensity * dt
        events = stepper.step()
        counts += events
        if record_events and events.any():
            fired = np.nonzero(events)[0]
            event_paths.append(np.repeat(fired, events[fired]))
            event_steps.append(np.full(int(events[fired].sum()), step + 1))
        if intensity_path is not None:
            intensity_path[step + 1] = stepper.intensity
    result = {
        "counts": counts,
        "terminal": stepper.intensity,
        "area": area,
    }
    if record_events:
        paths = np.concatenate(event_paths) if event_paths else np.zeros(0, dtype=np.int64)
        steps = np.concatenate(event_steps) if event_steps else np.zeros(0, dtype=np.int64)
        order = np.argsort(paths, kind="stable")
        result["event_paths"] = paths[order]
        result["event_times"] = steps[order] * dt
    if intensity_path is not None:
        result["intensity_path"] = intensity_path
    return result


def simulate_paths(
        params: ContagionParams,
        horizon: float,
        cfg: SimConfig,
        *,
        record_intensity: bool = False
    ) -> Iterator[PathRecord]:
    """Поток траекторий процесса событий на [0, horizon]

    На каждом шаге: событие с вероятностью max(lambda, 0) dt (или пуассоновское число событий),
    каждое событие добавляет к lambda скачок Exp(beta)
    """
    for batch_index, size in enumerate(cfg.batches(cfg.n_paths)):
        batch = _simulate_terminal(
            params, horizon, cfg, batch_index, size,
            record_events=True, record_intensity=record_intensity,
        )
        bounds = np.searchsorted(batch["event_paths"], np.arange(size + 1))
        for path in range(size):
            yield PathRecord(
                event_times=batch["event_times"][bounds[path]:bounds[path + 1]],
                terminal_intensity=float(batch["terminal"][path]),
                intensity_path=batch["intensity_path"][:, path] if record_intensity else None,
            )


def _on_or_before(times: np.ndarray, t: float) -> np.ndarray:
    """times <= t с допуском на накопленную ошибку сетки шагов"""
    return times <= t + 1e-9 * max(1.0, t)


def _histogram(samples: list[np.ndarray], size: int) -> Histogram:
    counts = sum(np.bincount(np.minimum(batch, size - 1), minlength=size) for batch in samples)
    n_paths = int(sum(batch.size for batch in samples))
    probabilities = counts / n_paths
    errors = np.sqrt(probabilities * (1.0 - probabilities) / n_paths)
    return Histogram(probabilities, errors, n_paths)


@dataclass(frozen=True)
class TerminalSample:
    """Смоделированные пачки: N(T), lambda(T) и интеграл lambda по [0, T]

    Одна выборка обслуживает все оценки на одном сроке
    """
    horizon: float
    batches: list[dict[str, np.ndarray]] = field(repr=False)

    @property
    def n_paths(self) -> int:
        return int(sum(batch["counts"].size for batch in self.batches))

    def estimate(self, func: Callable[[dict[str, np.ndarray]], np.ndarray]) -> Estimate:
        return _aggregate([func(batch) for batch in self.batches])

    def transform(self, theta: float, v: float) -> Estimate:
        """Среднее theta^N(T) exp(-v lambda(T))"""
        estimate = self.estimate(
            lambda batch: np.power(theta, batch["counts"].astype(float)) * np.exp(-v * batch["terminal"])
        )
        logger.debug(f"МК преобразование theta={theta}, v={v}, T={self.horizon}: {estimate}")
        return estimate

    def mean_intensity(self) -> Estimate:
        """Среднее по времени lambda на [0, T]"""
        return self.estimate(lambda batch: batch["area"] / self.horizon)

    def mean_count(self) -> Estimate:
        return self.estimate(lambda batch: batch["counts"].astype(float))

    def count_histogram(self, n_max: int) -> Histogram:
        """Гистограмма N(T) на 0..n_max, последняя корзина собирает хвост"""
        return _histogram([batch["counts"] for batch in self.batches], n_max + 1)


def sample_terminal(params: ContagionParams, horizon: float, cfg: SimConfig) -> TerminalSample:
    def run(batch_index: int, size: int) -> dict[str, np.ndarray]:
        return _simulate_terminal(params, horizon, cfg, batch_index, size)

    sizes = cfg.batches(cfg.n_paths)
    logger.info(f"Симуляция: путей {cfg.n_paths}, пачек {len(sizes)}, dt={cfg.dt:g}, T={horizon:g}")
    return TerminalSample(horizon, _run_batches(run, sizes, cfg.jobs))


def estimate_transform(
        params: ContagionParams,
        theta: float,
        v: float,
        horizon: float,
        cfg: SimConfig
    ) -> Estimate:
    """Среднее theta^N(T) exp(-v lambda(T)) со стандартной ошибкой"""
    return sample_terminal(params, horizon, cfg).transform(theta, v)


def estimate_count_distribution(
        params: ContagionParams,
        horizon: float,
        cfg: SimConfig,
        n_max: int
    ) -> tuple[Histogram, Estimate]:
    """Гистограмма N(T) на 0..n_max и среднее N(T)"""
    sample = sample_terminal(params, horizon, cfg)
    return sample.count_histogram(n_max), sample.mean_count()


def _simulate_default_times(
        spec: PortfolioSpec,
        horizon: float,
        cfg: SimConfig,
        batch_index: int,
        size: int
    ) -> np.ndarray:
    """Моменты дефолта (size, N) во внутренних единицах, inf: дефолта не было

    Порог: фирма выживает, пока (1 - d)^N_i(t) dtilde^N(t) >= U_i
    """
    n_steps, dt = _step_grid(horizon, cfg.portfolio_dt)
    common = _IntensityStepper(spec.common, cfg, batch_generator(cfg.seed, STREAM_COMMON, batch_index), (size,), dt)
    idio = _IntensityStepper(
        spec.idio, cfg, batch_generator(cfg.seed, STREAM_IDIO, batch_index), (size, spec.n_firms), dt
    )
    thresholds = batch_generator(cfg.seed, STREAM_THRESHOLD, batch_index).random((size, spec.n_firms))
    survival = np.ones((size, spec.n_firms))
    default_times = np.full((size, spec.n_firms), np.inf)
    theta, dtilde = spec.firm.theta, spec.firm.dtilde
    for step in range(n_steps):
        common_events = common.step()
        idio_events = idio.step()
        survival *= np.power(theta, idio_events) * np.power(dtilde, common_events)[:, np.newaxis]
        defaulted = (survival < thresholds) & np.isinf(default_times)
        default_times[defaulted] = (step + 1) * dt
    return default_times


@dataclass(frozen=True)
class DefaultTimesSample:
    """Смоделированные моменты дефолта, в каждой пачке массив (пути, N), отсортированный по строкам"""
    spec: PortfolioSpec
    horizon: float
    batches: list[np.ndarray] = field(repr=False)

    def defaults_histogram(self, t: float) -> Histogram:
        """Гистограмма D(t), t во внутренних единицах, t <= horizon"""
        if t > self.horizon * (1.0 + 1e-12):
            raise ValueError(f"Срок {t} за пределами смоделированного горизонта {self.horizon}")
        counts = [np.sum(_on_or_before(times, t), axis=1) for times in self.batches]
        return _histogram(counts, self.spec.n_firms + 1)

    def tranche_legs(self, model: ValidatedModel, tranches: Sequence[TrancheSpec]) -> list[LegEstimate]:
        """Защитная нога и аннуитет по смоделированным моментам дефолта

        Защитная нога: дисконтированные приращения потерь транша в моменты дефолтов
        """
        spec = self.spec
        pricing = model.cfg
        r = pricing.annual_rate
        horizon = model.horizon_internal
        payment_times = pricing.payment_times
        payment_internal = model.internal_time(payment_times)
        lgd = spec.loss_given_default / spec.n_firms
        losses = lgd * np.arange(1, spec.n_firms + 1)

        per_batch = []
        for times in self.batches:
            discount = np.where(_on_or_before(times, horizon), np.exp(-r * times / model.units_per_year), 0.0)
            defaults_at = np.stack([np.sum(_on_or_before(times, t), axis=1) for t in payment_internal], axis=1)
            legs = []
            for tranche in tranches:
                increments = np.diff(np.clip(losses - tranche.attach, 0.0, tranche.width), prepend=0.0)
                protection = discount @ increments
                loss_at = np.clip(lgd * defaults_at - tranche.attach, 0.0, tranche.width)
                annuity = (tranche.width - loss_at) @ (np.exp(-r * payment_times) * pricing.accrual)
                legs.append((protection, annuity))
            per_batch.append(legs)

        return [
            LegEstimate(
                tranche=tranche,
                protection_leg=_aggregate([legs[index][0] for legs in per_batch]),
                annuity=_aggregate([legs[index][1] for legs in per_batch]),
            )
            for index, tranche in enumerate(tranches)
        ]


def sample_default_times(spec: PortfolioSpec, horizon: float, cfg: SimConfig) -> DefaultTimesSample:
    """Моменты дефолта пула на [0, horizon] пороговой конструкцией"""
    def run(batch_index: int, size: int) -> np.ndarray:
        return np.sort(_simulate_default_times(spec, horizon, cfg, batch_index, size), axis=1)

    sizes = cfg.batches(cfg.portfolio_paths)
    logger.info(
        f"Симуляция пула: путей {cfg.portfolio_paths}, фирм {spec.n_firms}, dt={cfg.portfolio_dt:g}, T={horizon:g}"
    )
    return DefaultTimesSample(spec, horizon, _run_batches(run, sizes, cfg.jobs))


def estimate_portfolio_distribution(spec: PortfolioSpec, horizon: float, cfg: SimConfig) -> Histogram:
    """Гистограмма D(t), t во внутренних единицах"""
    return sample_default_times(spec, horizon, cfg).defaults_histogram(horizon)


def estimate_marginal_default(
        spec: PortfolioSpec,
        horizon: float,
        n: int,
        cfg: SimConfig
    ) -> Estimate:
    """P_i(t, n) = 1 - dtilde^n E[(1 - d)^N_i(t)]"""
    transform = estimate_transform(spec.idio, spec.firm.theta, 0.0, horizon, cfg)
    return transform.scaled(-spec.firm.dtilde ** n, 1.0)


def estimate_tranche_legs(
        model: ValidatedModel,
        tranches: Sequence[TrancheSpec],
        cfg: SimConfig
    ) -> list[LegEstimate]:
    """Ноги траншей по новой выборке моментов дефолта до срока модели"""
    return sample_default_times(model.spec, model.horizon_internal, cfg).tranche_legs(model, tranches)
