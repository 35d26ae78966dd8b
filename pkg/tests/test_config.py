"""
Тесты разбора файла настроек
"""
import json

import pytest

from config import BASE_CASE, DEFAULT_SWEEP_GRIDS, OUTPUT_ENV, load_config, parse_config, schema_errors, with_overrides
from config_typing import ConfigDict
from errors import ConfigException
from model_core import base_case_spec, base_case_tranches
from model_enums import ComparisonMode, TimeUnit


def _message(raw: dict) -> str:
    with pytest.raises(ConfigException) as info:
        parse_config(raw)
    assert info.value.status == 2
    return info.value.message


def test_base_case_defaults(monkeypatch):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)
    run = parse_config({"base_case": True})
    assert run.spec == base_case_spec()
    assert run.tranches == base_case_tranches()
    assert run.maturities == [3.0, 4.0, 5.0, 6.0]
    assert run.pricing.r == 0.03
    assert run.pricing.horizon == 3.0
    assert run.pricing.time_unit is TimeUnit.QUARTER
    assert run.mode is ComparisonMode.DYNAMIC_CONTAGION
    assert run.sweep.parameters == DEFAULT_SWEEP_GRIDS
    assert run.sweep.maturities == run.maturities
    assert run.output == "output"
    assert run.resolved["model"]["theta"] == 0.97


def test_full_config_without_base_case():
    """Полный файл без base_case эквивалентен базовому сценарию"""
    run = parse_config(json.loads(json.dumps(BASE_CASE)))
    assert run.spec == base_case_spec()


def test_unknown_key_has_dotted_path():
    message = _message({"base_case": True, "model": {"common": {"gamma": 1.0}}, "extra": 1})
    assert "extra: неизвестный ключ" in message
    assert "model.common.gamma: неизвестный ключ" in message


def test_missing_key_has_dotted_path():
    raw = json.loads(json.dumps(BASE_CASE))
    del raw["model"]["common"]["beta"]
    del raw["tranches"]
    message = _message(raw)
    assert "model.common.beta: обязательный ключ отсутствует" in message
    assert "tranches: обязательный ключ отсутствует" in message


def test_schema_errors_sorted():
    errors = schema_errors({"model": {}, "zzz": 0, "aaa": 0}, ConfigDict)
    assert errors == sorted(errors)
    assert errors[0].startswith("aaa")


def test_d_and_theta_conflict():
    message = _message({"base_case": True, "model": {"d": 0.05, "theta": 0.95}})
    assert "model.d" in message


def test_d_replaces_base_theta():
    run = parse_config({"base_case": True, "model": {"d": 0.05}})
    assert run.spec.firm.d == 0.05
    assert "theta" not in run.resolved["model"]


def test_wrong_type_reported():
    message = _message({"base_case": True, "model": {"n_firms": "50"}})
    assert message.startswith("model.n_firms: ожидалось int")


def test_empty_tranches():
    assert "tranches: список траншей пуст" in _message({"base_case": True, "tranches": []})


def test_malformed_tranche():
    assert "tranches[1]" in _message({"base_case": True, "tranches": [[0.0, 0.5], [0.5]]})


def test_zero_paths():
    assert "simulation.n_paths" in _message({"base_case": True, "simulation": {"n_paths": 0}})


def test_bad_mode_and_sweep_parameter():
    message = _message({"base_case": True, "mode": "gaussian", "sweep": {"parameters": {"gamma": [1.0]}}})
    assert "mode: допустимо" in message
    assert "sweep.parameters.gamma" in message


def test_short_mode_name():
    run = parse_config({"base_case": True, "mode": "dynamic"})
    assert run.mode is ComparisonMode.DYNAMIC_CONTAGION


def test_output_precedence(monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, "from-env")
    raw = {"base_case": True, "output": "from-file"}
    assert parse_config(raw).output == "from-env"
    assert parse_config(raw, output_override="from-cli").output == "from-cli"
    monkeypatch.delenv(OUTPUT_ENV)
    run = parse_config(raw)
    assert run.output == "from-file"
    assert run.log_path.startswith("from-file")


def test_with_overrides():
    run = with_overrides(parse_config({"base_case": True}), seed=5, mode="poisson")
    assert run.simulation.seed == 5
    assert run.mode is ComparisonMode.POISSON
    assert run.resolved["simulation"]["seed"] == 5
    assert run.resolved["mode"] == "poisson"
    with pytest.raises(ConfigException):
        with_overrides(run, mode="gaussian")
    with pytest.raises(ConfigException):
        with_overrides(run, seed=-1)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigException):
        load_config(str(tmp_path / "missing.json"))
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigException):
        load_config(str(broken))
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"base_case": True, "mode": "ajd_no_self"}), encoding="utf-8")
    assert load_config(str(good)).mode is ComparisonMode.AJD_NO_SELF
