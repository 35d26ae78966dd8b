"""
Управление конфигурацией
"""
import copy
import json
import os
import sys
import typing
from dataclasses import dataclass, field, replace
from typing import Any

from errors import ConfigException
from mc_oracle import SimConfig
from model_core import ContagionParams, FirmParams, PortfolioSpec, PricingConfig, TrancheSpec
from model_enums import ComparisonMode, FloorPolicy, SimScheme, TimeUnit
from config_typing import ConfigDict

if sys.version_info >= (3, 11):
    from typing import is_typeddict
else:  # TypedDict схемы взяты из typing_extensions
    from typing_extensions import is_typeddict

OUTPUT_ENV = "CONTAGION_CDO_OUTPUT"
"""Единственная переменная окружения: каталог для результатов"""

_BASE_CASE_PROCESS = {"lambda0": 1.5, "delta": 2.0, "eta": 1.5, "sigma": 0.4, "beta": 1.5}
BASE_CASE: dict[str, Any] = {
    "model": {
        "n_firms": 50,
        "recovery": 0.4,
        "theta": 0.97,
        "ell": 0.5,
        "idio": dict(_BASE_CASE_PROCESS),
        "common": dict(_BASE_CASE_PROCESS),
        "r": 0.03,
    },
    "maturities": [3.0, 4.0, 5.0, 6.0],
    "tranches": [[0.0, 0.07], [0.07, 0.12], [0.12, 1.0]],
}
"""Базовый сценарий; параметры процессов поквартальные, r годовая"""

DEFAULT_SWEEP_GRIDS: dict[str, list[float]] = {
    "lambda0": [0.5, 1.0, 1.5, 2.0, 2.5],
    "beta": [1.0, 1.25, 1.5, 2.0, 2.5, 3.0],
    "eta": [0.5, 1.0, 1.5, 2.0, 2.5],
    "w": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
    "sigma": [0.0, 0.2, 0.4, 0.6, 0.8],
}
SWEEP_PARAMETERS = tuple(DEFAULT_SWEEP_GRIDS)


@dataclass(frozen=True)
class SweepSettings:
    parameters: dict[str, list[float]]
    maturities: list[float]


@dataclass(frozen=True)
class RunConfig:
    """Разобранный файл настроек

    resolved: итоговый словарь после подстановки базового сценария,
    он пишется комментарием в каждый CSV
    """
    spec: PortfolioSpec
    pricing: PricingConfig
    tranches: list[TrancheSpec]
    maturities: list[float]
    mode: ComparisonMode
    sweep: SweepSettings
    simulation: SimConfig
    z_tolerance: float
    sim_horizon: float
    sim_n_max: int
    output: str
    log_level: str|int
    log_path: str
    resolved: dict[str, Any] = field(repr=False)


def _merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    result = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(result.get(key), dict):
            result[key] = _merge(result[key], value)
        else:
            result[key] = copy.deepcopy(value)
    return result


def schema_errors(data: Any, schema: type, prefix: str = "") -> list[str]:
    """Лишние и недостающие ключи относительно TypedDict, с полным путём ключа"""
    if not isinstance(data, dict):
        return [f"{prefix or '<root>'}: ожидался объект, получено {type(data).__name__}"]
    hints = typing.get_type_hints(schema)
    found: list[str] = []
    for key in data.keys() - hints.keys():
        found.append(f"{prefix}{key}: неизвестный ключ")
    for key in schema.__required_keys__ - data.keys():
        found.append(f"{prefix}{key}: обязательный ключ отсутствует")
    for key, hint in hints.items():
        if key in data and is_typeddict(hint):
            found.extend(schema_errors(data[key], hint, f"{prefix}{key}."))
    return sorted(found)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


_JSON_TYPES: dict[type, typing.Callable[[Any], bool]] = {
    float: _is_number,
    int: lambda value: isinstance(value, int) and not isinstance(value, bool),
    bool: lambda value: isinstance(value, bool),
    str: lambda value: isinstance(value, str),
    list: lambda value: isinstance(value, list),
}


class _Reader:
    """Чтение значений с приведением типа; ошибки копятся с путём ключа"""
    def __init__(self):
        self.errors: list[str] = []

    def get(self, data: dict[str, Any], path: str, cast: type, default: Any = None) -> Any:
        section = data
        *parents, key = path.split(".")
        for parent in parents:
            section = section.get(parent, {})
        if key not in section:
            return default
        value = section[key]
        if not _JSON_TYPES[cast](value):
            self.errors.append(f"{path}: ожидалось {cast.__name__}, получено {value!r}")
            return default
        return cast(value)

    def enum(self, data: dict[str, Any], path: str, enum: type, default: Any) -> Any:
        raw = self.get(data, path, str)
        if raw is None:
            return default
        try:
            return enum.parse(raw) if hasattr(enum, "parse") else enum(raw)
        except ValueError:
            allowed = ", ".join(item.value for item in enum)
            self.errors.append(f"{path}: допустимо {allowed}, получено {raw!r}")
            return default

    def floats(self, data: dict[str, Any], path: str, default: list[float]|None = None) -> list[float]:
        raw = self.get(data, path, list)
        if raw is None:
            return list(default or [])
        if not all(_is_number(item) for item in raw):
            self.errors.append(f"{path}: ожидался список чисел, получено {raw!r}")
            return []
        return [float(item) for item in raw]


def _process(reader: _Reader, data: dict[str, Any], path: str) -> ContagionParams:
    return ContagionParams(**{
        name: reader.get(data, f"{path}.{name}", float, float("nan"))
        for name in ("lambda0", "delta", "eta", "sigma", "beta")
    })


def parse_config(raw: dict[str, Any], *, output_override: str|None = None) -> RunConfig:
    """Проверка и разбор словаря настроек

    Raises
    ------
    ConfigException
        Со всеми найденными нарушениями
    """
    if not isinstance(raw, dict):
        raise ConfigException("Файл настроек должен содержать JSON-объект")
    if raw.get("base_case") is True:
        data = _merge(BASE_CASE, raw)
        raw_model = raw.get("model")
        if isinstance(raw_model, dict) and "d" in raw_model and "theta" not in raw_model:
            data["model"].pop("theta")
    else:
        data = copy.deepcopy(raw)
    errors = schema_errors(data, ConfigDict)
    if errors:
        raise ConfigException("; ".join(errors))

    reader = _Reader()
    model = data["model"]
    if "d" in model and "theta" in model:
        reader.errors.append("model.d: задано вместе с model.theta, нужно что-то одно")
    ell = reader.get(data, "model.ell", float, float("nan"))
    if "d" in model:
        firm = FirmParams(d=reader.get(data, "model.d", float, float("nan")), ell=ell)
    elif "theta" in model:
        firm = FirmParams.from_theta(reader.get(data, "model.theta", float, float("nan")), ell)
    else:
        reader.errors.append("model.d: обязательный ключ отсутствует (или model.theta)")
        firm = FirmParams(d=float("nan"), ell=ell)
    spec = PortfolioSpec(
        n_firms=reader.get(data, "model.n_firms", int, 0),
        recovery=reader.get(data, "model.recovery", float, float("nan")),
        firm=firm,
        idio=_process(reader, data, "model.idio"),
        common=_process(reader, data, "model.common"),
    )

    maturities = reader.floats(data, "maturities")
    if not maturities:
        reader.errors.append("maturities: список сроков пуст")
    pricing = PricingConfig(
        r=reader.get(data, "model.r", float, float("nan")),
        horizon=maturities[0] if maturities else 1.0,
        payments_per_year=reader.get(data, "model.payments_per_year", int, 4),
        time_unit=reader.enum(data, "model.time_unit", TimeUnit, TimeUnit.QUARTER),
        rate_basis=reader.enum(data, "model.rate_basis", TimeUnit, TimeUnit.YEAR),
    )

    tranches = []
    raw_tranches = reader.get(data, "tranches", list, [])
    for index, pair in enumerate(raw_tranches):
        if not (isinstance(pair, list) and len(pair) == 2 and all(_is_number(item) for item in pair)):
            reader.errors.append(f"tranches[{index}]: ожидалась пара [attach, detach], получено {pair!r}")
            continue
        tranches.append(TrancheSpec(float(pair[0]), float(pair[1])))
    if not raw_tranches:
        reader.errors.append("tranches: список траншей пуст")

    parameters = data.get("sweep", {}).get("parameters")
    if parameters is None:
        parameters = DEFAULT_SWEEP_GRIDS
    elif not isinstance(parameters, dict):
        reader.errors.append(f"sweep.parameters: ожидался объект, получено {parameters!r}")
        parameters = {}
    sweep_grids: dict[str, list[float]] = {}
    for name in parameters:
        if name not in SWEEP_PARAMETERS:
            reader.errors.append(f"sweep.parameters.{name}: допустимо {', '.join(SWEEP_PARAMETERS)}")
            continue
        grid = reader.floats({"sweep": {"parameters": parameters}}, f"sweep.parameters.{name}")
        if not grid:
            reader.errors.append(f"sweep.parameters.{name}: пустая сетка")
        sweep_grids[name] = grid
    if not sweep_grids:
        reader.errors.append("sweep.parameters: не задано ни одного параметра")
    mode = reader.enum(data, "mode", ComparisonMode, ComparisonMode.DYNAMIC_CONTAGION)
    sweep = SweepSettings(
        parameters=sweep_grids,
        maturities=reader.floats(data, "sweep.maturities", maturities),
    )

    defaults = SimConfig()
    simulation = SimConfig(
        n_paths=reader.get(data, "simulation.n_paths", int, defaults.n_paths),
        dt=reader.get(data, "simulation.dt", float, defaults.dt),
        seed=reader.get(data, "simulation.seed", int, defaults.seed),
        scheme=reader.enum(data, "simulation.scheme", SimScheme, defaults.scheme),
        floor_policy=reader.enum(data, "simulation.floor_policy", FloorPolicy, defaults.floor_policy),
        batch_size=reader.get(data, "simulation.batch_size", int, defaults.batch_size),
        antithetic=reader.get(data, "simulation.antithetic", bool, defaults.antithetic),
        portfolio_paths=reader.get(data, "simulation.portfolio_paths", int, defaults.portfolio_paths),
        portfolio_dt=reader.get(data, "simulation.portfolio_dt", float, defaults.portfolio_dt),
    )
    reader.errors.extend(simulation.errors())
    z_tolerance = reader.get(data, "simulation.z_tolerance", float, 3.0)
    sim_horizon = reader.get(data, "simulation.horizon", float, 12.0)
    sim_n_max = reader.get(data, "simulation.n_max", int, 40)
    if sim_n_max < 1:
        reader.errors.append(f"simulation.n_max: должно быть >= 1, получено {sim_n_max}")
    if not z_tolerance > 0:
        reader.errors.append(f"simulation.z_tolerance: должно быть > 0, получено {z_tolerance}")
    if not sim_horizon > 0:
        reader.errors.append(f"simulation.horizon: должно быть > 0, получено {sim_horizon}")

    if reader.errors:
        raise ConfigException("; ".join(reader.errors))

    output = output_override or os.environ.get(OUTPUT_ENV) or data.get("output", "output")
    data["output"] = output
    return RunConfig(
        spec=spec,
        pricing=pricing,
        tranches=tranches,
        maturities=maturities,
        mode=mode,
        sweep=sweep,
        simulation=simulation,
        z_tolerance=z_tolerance,
        sim_horizon=sim_horizon,
        sim_n_max=sim_n_max,
        output=output,
        log_level=data.get("log", {}).get("level", "INFO"),
        log_path=data.get("log", {}).get("path", os.path.join(output, "contagion-cdo.log")),
        resolved=data,
    )


def load_config(path: str, *, output_override: str|None = None) -> RunConfig:
    """Загрузка JSON-файла настроек"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.loads(f.read())
    except FileNotFoundError as ex:
        raise ConfigException(f"Файл настроек не найден: {path}") from ex
    except json.JSONDecodeError as ex:
        raise ConfigException(f"Файл настроек {path} не является JSON: {ex}") from ex
    return parse_config(raw, output_override=output_override)


def with_overrides(
        run: RunConfig,
        *,
        seed: int|None = None,
        mode: str|None = None
    ) -> RunConfig:
    """Переопределение seed и режима из командной строки; resolved обновляется тоже"""
    resolved = copy.deepcopy(run.resolved)
    simulation = run.simulation
    if seed is not None:
        simulation = replace(simulation, seed=seed)
        errors = simulation.errors()
        if errors:
            raise ConfigException("; ".join(errors))
        resolved.setdefault("simulation", {})["seed"] = seed
    parsed_mode = run.mode
    if mode is not None:
        try:
            parsed_mode = ComparisonMode.parse(mode)
        except ValueError as ex:
            raise ConfigException(f"--mode: неизвестный режим {mode!r}") from ex
        resolved["mode"] = str(parsed_mode)
    return replace(run, simulation=simulation, mode=parsed_mode, resolved=resolved)
