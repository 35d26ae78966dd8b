"""
Тесты распределения числа дефолтов и производящей функции потерь
"""
import itertools
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import binom

from model_core import FirmParams
from pgf_engine import count_distribution_curve, joint_transform
from portfolio_loss import (
    FirmExposure, conditional_count_pmf, defaults_distribution, firm_default_probability,
    loss_pgf_general, marginal_default_prob, mix_conditional_binomials,
)

STUB_COMMON_PMF = np.array([0.5, 0.3, 0.2])
"""Распределение числа событий общего процесса для проверок перебором"""


def _brute_force_defaults(common_pmf: np.ndarray, marginal: np.ndarray, n_firms: int) -> np.ndarray:
    """P(D = j) перебором всех исходов фирм при каждом n"""
    pmf = np.zeros(n_firms + 1)
    for n, weight in enumerate(common_pmf):
        p = marginal[n]
        for outcome in itertools.product((0, 1), repeat=n_firms):
            j = sum(outcome)
            pmf[j] += weight * p ** j * (1.0 - p) ** (n_firms - j)
    return pmf


@pytest.mark.parametrize("p", [0.0, 0.013, 0.5, 0.97, 1.0])
def test_conditional_count_pmf_is_binomial(p):
    pmf = conditional_count_pmf(p, 50)
    np.testing.assert_allclose(pmf, binom.pmf(np.arange(51), 50, p), atol=1e-12)
    assert pmf.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("n_firms", [1, 2, 3, 4])
def test_mixture_matches_brute_force(n_firms):
    marginal = np.array([0.02, 0.15, 0.6])
    mixed = mix_conditional_binomials(STUB_COMMON_PMF, marginal, n_firms)
    np.testing.assert_allclose(mixed, _brute_force_defaults(STUB_COMMON_PMF, marginal, n_firms), atol=1e-12)


def test_mixture_tower_mean():
    """E[D] = N * сумма P(N = n) P_i(t, n)"""
    marginal = np.array([0.02, 0.15, 0.6])
    mixed = mix_conditional_binomials(STUB_COMMON_PMF, marginal, 7)
    mean = float(np.dot(np.arange(8), mixed))
    assert mean == pytest.approx(7 * float(np.dot(STUB_COMMON_PMF, marginal)), abs=1e-12)


def test_marginal_default_prob(base_spec):
    firm, idio = base_spec.firm, base_spec.idio
    idio_part = joint_transform(idio, firm.theta, 0.0, 12.0).value
    values = marginal_default_prob(firm, idio, 12.0, np.arange(3))
    np.testing.assert_allclose(values, 1.0 - firm.dtilde ** np.arange(3) * idio_part, rtol=1e-14)
    assert values[0] < values[1] < values[2]
    # d = 1: первое же событие приводит к дефолту
    certain = FirmParams(d=1.0, ell=1.0)
    assert marginal_default_prob(certain, idio, 12.0, 1) == pytest.approx(1.0)


def test_defaults_distribution_base_case(base_spec):
    dist = defaults_distribution(base_spec, 12.0)
    assert dist.pmf.size == base_spec.n_firms + 1
    assert dist.pmf.sum() >= 1.0 - 1e-6
    p = firm_default_probability(base_spec.firm, base_spec.idio, base_spec.common, 12.0)
    assert dist.mean() / base_spec.n_firms == pytest.approx(p, rel=1e-7)
    assert dist.expected_loss(base_spec.recovery) == pytest.approx(0.6 * p, rel=1e-7)


@pytest.mark.parametrize("common_changes", [{}, {"lambda0": 2.5}, {"beta": 1.0}], ids=["base", "lambda0=2.5", "beta=1"])
def test_tower_identity_on_truncated_counts(base_spec, common_changes):
    """E[D(t)] = N * сумма P_i(t, n) P(N = n) по одному и тому же усечённому P(N = n)"""
    spec = replace(base_spec, common=replace(base_spec.common, **common_changes))
    t = 12.0
    dist = defaults_distribution(spec, t)
    assert dist.tower_gap <= 1e-10
    common_pmf = count_distribution_curve(spec.common, np.array([t]))[0].pmf
    marginal = marginal_default_prob(spec.firm, spec.idio, t, np.arange(common_pmf.size))
    assert dist.tower_mean == pytest.approx(spec.n_firms * float(np.dot(common_pmf, marginal)), rel=1e-7)


def test_defaults_distribution_zero_horizon(base_spec):
    dist = defaults_distribution(base_spec, 0.0)
    assert dist.pmf[0] == pytest.approx(1.0, abs=1e-12)


def test_survival_and_loss_atoms(small_spec):
    dist = defaults_distribution(small_spec, 4.0)
    survival = dist.survival()
    assert survival[0] == pytest.approx(dist.pmf.sum())
    assert np.all(np.diff(survival) <= 0.0)
    atoms = dist.loss_atoms(small_spec.recovery)
    assert atoms[-1] == pytest.approx(0.6)
    assert dist.loss_pgf(small_spec.recovery, 1.0) == pytest.approx(dist.pmf.sum(), abs=1e-14)


def test_loss_pgf_general_homogeneous(small_spec):
    """Для однородного пула общая формула совпадает с распределением D(t)"""
    t = 4.0
    dist = defaults_distribution(small_spec, t)
    common_pmf = count_distribution_curve(small_spec.common, np.array([t]))[0].pmf
    exposures = [FirmExposure(small_spec.firm, small_spec.idio, small_spec.recovery)] * small_spec.n_firms
    for u in (0.1, 0.5, 0.9):
        general = loss_pgf_general(exposures, small_spec.common, u, t, common_pmf=common_pmf)
        assert general == pytest.approx(dist.loss_pgf(small_spec.recovery, u), abs=1e-8), f"u={u}"


def test_loss_pgf_general_heterogeneous_brute_force(base_spec):
    """Две разные фирмы и два исхода общего процесса: перебор всех исходов"""
    t = 4.0
    common_pmf = np.array([0.6, 0.4])
    exposures = [
        FirmExposure(base_spec.firm, base_spec.idio, 0.4),
        FirmExposure(FirmParams(d=0.1, ell=1.0), replace(base_spec.idio, lambda0=0.5), 0.7),
    ]
    u = 0.3
    expected = 0.0
    for n, weight in enumerate(common_pmf):
        probs = [marginal_default_prob(item.firm, item.idio, t, n) for item in exposures]
        for outcome in itertools.product((0, 1), repeat=2):
            chance = np.prod([p if hit else 1.0 - p for p, hit in zip(probs, outcome)])
            loss = sum((1.0 - item.recovery) / 2 for item, hit in zip(exposures, outcome) if hit)
            expected += weight * chance * u ** loss
    measured = loss_pgf_general(exposures, base_spec.common, u, t, common_pmf=common_pmf)
    assert measured == pytest.approx(expected, abs=1e-12)
    assert loss_pgf_general(exposures, base_spec.common, 1.0, t, common_pmf=common_pmf) == pytest.approx(1.0, abs=1e-12)


def test_dead_common_factor(base_spec):
    """Без событий общего процесса D(t): биномиальное с вероятностью P_i(t, 0)"""
    dead = replace(base_spec.common, lambda0=0.0, eta=0.0, sigma=0.0)
    spec = replace(base_spec, common=dead)
    dist = defaults_distribution(spec, 12.0)
    p = marginal_default_prob(spec.firm, spec.idio, 12.0, 0)
    np.testing.assert_allclose(dist.pmf, binom.pmf(np.arange(51), 50, p), atol=1e-8)
