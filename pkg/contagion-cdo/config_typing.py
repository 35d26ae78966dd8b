"""
Схема JSON-файла настроек

Ключи и обязательность берутся прямо из этих TypedDict при проверке файла
"""
try:
    from typing import NotRequired, TypedDict
except ImportError:  # Python < 3.11
    from typing_extensions import NotRequired, TypedDict


class ProcessDict(TypedDict):
    lambda0: float
    delta: float
    eta: float
    sigma: float
    beta: float


class ModelDict(TypedDict):
    n_firms: int
    recovery: float
    d: NotRequired[float]
    theta: NotRequired[float]
    ell: float
    idio: ProcessDict
    common: ProcessDict
    r: float
    payments_per_year: NotRequired[int]
    time_unit: NotRequired[str]
    rate_basis: NotRequired[str]


class SweepDict(TypedDict):
    parameters: NotRequired[dict[str, list[float]]]
    maturities: NotRequired[list[float]]


class SimulationDict(TypedDict):
    n_paths: NotRequired[int]
    portfolio_paths: NotRequired[int]
    dt: NotRequired[float]
    portfolio_dt: NotRequired[float]
    seed: NotRequired[int]
    scheme: NotRequired[str]
    floor_policy: NotRequired[str]
    batch_size: NotRequired[int]
    antithetic: NotRequired[bool]
    z_tolerance: NotRequired[float]
    horizon: NotRequired[float]
    n_max: NotRequired[int]


class LogDict(TypedDict):
    level: NotRequired[str|int]
    path: NotRequired[str]


class ConfigDict(TypedDict):
    base_case: NotRequired[bool]
    model: ModelDict
    mode: NotRequired[str]
    maturities: list[float]
    tranches: list[list[float]]
    sweep: NotRequired[SweepDict]
    simulation: NotRequired[SimulationDict]
    output: NotRequired[str]
    log: NotRequired[LogDict]
