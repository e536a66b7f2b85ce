import json
import math

import numpy as np
import pytest

from lowvar.diagnostics import initial_state
from lowvar.filter import (
    FilterParams,
    InfeasibleParams,
    NormCollapse,
    apply_filter_dense,
    apply_filter_mps,
    binomial_weights,
    default_y,
    filter_values,
    scalar_g,
    suggest_params,
)
from lowvar.hamiltonian import HamiltonianSpec, build_dense
from lowvar.mps import MpsState
from lowvar.oracle import SpectrumData, diagonalize, exact_filtered_moments
from lowvar.tensor import TruncationPolicy

FINE = TruncationPolicy(max_bond=None, svd_threshold=1e-12)


def auto_params(n, M, E, eps=1e-8):
    return FilterParams(M, default_y(n, n / math.sqrt(M)), E, eps)


# -- weights and scalar function ------------------------------------------------

def test_weights_m4_full_range():
    ms, w = binomial_weights(4, 5.0)
    assert list(ms) == [-2, -1, 0, 1, 2]
    np.testing.assert_allclose(w * 16, [1, 4, 6, 4, 1], rtol=1e-14)


@pytest.mark.parametrize("M", [2, 10, 100, 1600, 10 ** 4, 10 ** 6])
def test_full_range_weights_sum_to_one(M):
    _, w = binomial_weights(M, math.sqrt(M))
    assert abs(w.sum() - 1.0) <= 1e-12


@pytest.mark.parametrize("M,y", [(10 ** 4, 3.0), (400, 2.0), (1600, 1.0), (100, 4.0)])
def test_truncated_weight_deficit(M, y):
    ms, w = binomial_weights(M, y)
    assert ms.size == 2 * min(int(y * math.sqrt(M)), M // 2) + 1
    np.testing.assert_array_equal(w, w[::-1])
    deficit = 1.0 - w.sum()
    assert -1e-14 <= deficit <= math.exp(-y * y / 2)
    ref = np.array([math.comb(M, M // 2 - int(m)) for m in ms], dtype=object)
    exact = [float(int(c) * 10 ** 30 // 2 ** M) / 1e30 for c in ref[ms.size // 2:ms.size // 2 + 3]]
    np.testing.assert_allclose(w[ms.size // 2:ms.size // 2 + 3], exact, rtol=1e-12)


def test_m_10000_y3_deficit_value():
    _, w = binomial_weights(10 ** 4, 3.0)
    assert 1.0 - w.sum() <= 1.11e-2


def test_params_validation():
    with pytest.raises(ValueError, match="even"):
        FilterParams(7, 1.0)
    with pytest.raises(ValueError):
        FilterParams(0, 1.0)
    with pytest.raises(ValueError):
        FilterParams(4, 0.0)
    with pytest.raises(ValueError):
        FilterParams(4, 1.0, epsilon_total=0.0)
    with pytest.raises(ValueError):
        FilterParams(4.5, 1.0)
    with pytest.raises(ValueError):
        FilterParams(4, 1.0, E_center=3.0).check_center(2)
    assert FilterParams(100, 3.0).n_terms == 61


def test_g_at_zero():
    assert abs(scalar_g(0.0, 100, 5.0) - 1.0) <= 1e-14
    v = scalar_g(0.0, 400, 3.0)
    assert 1 - math.exp(-4.5) <= v.real <= 1.0 + 1e-15
    assert abs(v.imag) <= 1e-12


@pytest.mark.parametrize("M", [100, 400, 1600])
@pytest.mark.parametrize("y", [2.0, 3.0, 4.0])
def test_truncation_bound_on_grid(M, y):
    x = np.linspace(-1, 1, 1001)
    g = scalar_g(x, M, y)
    assert np.abs(g.imag).max() <= 1e-12
    assert np.abs(np.cos(x) ** M - g).max() <= math.exp(-y * y / 2)


def test_g_domain():
    with pytest.raises(ValueError):
        scalar_g(1.5, 10, 1.0)
    with pytest.raises(ValueError):
        scalar_g(np.array([0.0, -1.01]), 10, 1.0)


def test_filter_values_real_forms():
    x = np.linspace(-1, 1, 11)
    np.testing.assert_allclose(filter_values(x, FilterParams(20, 10.0)), np.cos(x) ** 20, atol=1e-15)
    np.testing.assert_allclose(filter_values(x, FilterParams(400, 2.0)), scalar_g(x, 400, 2.0).real, atol=1e-15)


def test_cosine_sandwich():
    x = np.linspace(-1, 1, 2001)
    for a in (2, 10, 100, 10 ** 4):
        c = np.cos(x) ** a
        assert np.all(np.exp(-a * x ** 2) <= c * (1 + 1e-12) + 1e-300)
        assert np.all(c <= np.exp(-a * x ** 2 / 2) * (1 + 1e-12))


# -- parameter suggestion -------------------------------------------------------

def test_suggest_quadratic_regime():
    p = suggest_params(10, 1.0)
    assert p.M == 100
    assert p.y == pytest.approx(math.sqrt(6 * math.log(10)))


def test_suggest_degenerate_target():
    p = suggest_params(10, 10.0)
    assert p.M == 2 and p.y == 1.0


def test_suggest_rounds_to_even():
    assert suggest_params(7, 1.0).M == 50
    assert suggest_params(10, 0.7).M % 2 == 0


def test_suggest_zeta_ceiling():
    n, delta = 10, 1.0
    assert 100 <= n / 0.3 ** 2
    assert suggest_params(n, delta, zeta_hint=0.3).M == 100
    assert 100 > n / 0.35 ** 2
    with pytest.raises(InfeasibleParams, match="ceiling"):
        suggest_params(n, delta, zeta_hint=0.35)


def test_suggest_errors():
    with pytest.raises(ValueError):
        suggest_params(10, 0.0)
    with pytest.raises(InfeasibleParams, match="s_ratio"):
        suggest_params(10, 1.0, s_ratio=0.05)
    assert suggest_params(10, 1.0, s_ratio=0.5).M == 100


# -- dense path -----------------------------------------------------------------

def test_dense_point_mass_unchanged():
    data = SpectrumData(np.array([-1.0, 0.5, 2.0]), np.array([0.0, 1.0, 0.0]), 3)
    res = apply_filter_dense(data, FilterParams(50, 3.0, 0.5))
    assert res.delta2 == 0.0 and res.mu == 0.5
    np.testing.assert_array_equal(res.populations.populations, data.populations)


def test_dense_gaussian_closed_form():
    n, M = 100, 5000
    e = np.linspace(-n, n, 20001)
    p = np.exp(-e ** 2 / (2 * 10.0 ** 2))
    data = SpectrumData(e, p / p.sum(), n)
    res = apply_filter_dense(data, auto_params(n, M, 0.0))
    pred = n / math.sqrt(2 * M)
    assert abs(math.sqrt(res.delta2) - pred) <= 0.1 * pred


def test_dense_binomial_gap_floor():
    n = 11
    e = np.array([n - 2.0 * k for k in range(n + 1)])
    p = np.array([math.comb(n, k) for k in range(n + 1)], dtype=float) / 2 ** n
    data = SpectrumData(e, p, n)
    res = apply_filter_dense(data, FilterParams(10 ** 6, 600.0, 0.0))
    assert math.sqrt(res.delta2) >= 1.0 - 1e-12  # half of the level spacing 2
    assert res.delta2 == pytest.approx(1.0, abs=1e-12)
    assert res.log_norm < -4000


def test_dense_matches_exact_oracle(plus_spectrum):
    data = plus_spectrum(8)
    for M, y in ((64, 3.0), (64, 100.0), (200, 2.0)):
        p = FilterParams(M, y, data.mean)
        res = apply_filter_dense(data, p)
        ref = exact_filtered_moments(data, p)
        assert res.mu == pytest.approx(ref.mu, rel=1e-12)
        assert res.delta2 == pytest.approx(ref.delta2, rel=1e-10)
        assert 2 * res.log_norm == pytest.approx(math.log(ref.norm2), rel=1e-10, abs=1e-12)


def test_mean_shift_bound_dense(plus_spectrum):
    ratios = []
    for n in (6, 8, 10):
        data = plus_spectrum(n)
        for M in (n, 2 * n * n, 8 * n * n):
            res = apply_filter_dense(data, auto_params(n, M, data.mean))
            ratios.append(abs(res.mu - data.mean) * math.sqrt(M) / n)
    assert max(ratios) <= 2.0


def test_variance_monotone_in_M(plus_spectrum):
    data = plus_spectrum(8)
    d2 = [apply_filter_dense(data, auto_params(8, M, data.mean)).delta2 for M in (8, 16, 32, 64, 128, 256, 512)]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(d2, d2[1:]))


def test_norm_floor_constant_stable(plus_spectrum):
    c = []
    for n in (6, 8, 10):
        data = plus_spectrum(n)
        for M in (n * n, 2 * n * n, 4 * n * n):
            res = apply_filter_dense(data, auto_params(n, M, data.mean))
            c.append(math.exp(res.log_norm) / (math.sqrt(n) / M ** 0.25))
    assert min(c) > 0.1
    assert max(c) / min(c) <= 2.0


# -- MPS path -------------------------------------------------------------------

def test_mps_eigenstate_fixed_point():
    spec = HamiltonianSpec(4)
    w, v = np.linalg.eigh(build_dense(spec))
    j = 7
    psi = MpsState.from_dense(v[:, j], 4)
    out, rep = apply_filter_mps(psi, FilterParams(16, 3.0, float(w[j])), spec, FINE)
    fid = abs(np.vdot(out.to_dense(), v[:, j])) ** 2
    assert fid >= 1 - 1e-8
    assert rep.delta2 <= 1e-8


def test_mps_free_field_vs_dense_oracle():
    spec = HamiltonianSpec(5, "field")
    psi = initial_state(5)
    data = diagonalize(spec, psi)
    for E in (0.0, 1.0):
        p = FilterParams(50, 3.0, E)
        out, rep = apply_filter_mps(psi, p, spec, FINE)
        ref = exact_filtered_moments(data, p)
        assert abs(rep.mu - ref.mu) <= 1e-6 * max(abs(ref.mu), 1e-3)
        assert rep.delta2 == pytest.approx(ref.delta2, rel=1e-6)


def test_mps_ising8_quadratic_M(plus_spectrum):
    spec = HamiltonianSpec(8)
    psi = initial_state(8)
    data = plus_spectrum(8)
    p = auto_params(8, 64, data.mean)
    out, rep = apply_filter_mps(psi, p, spec, FINE)
    ref = exact_filtered_moments(data, p)
    assert rep.mu == pytest.approx(ref.mu, rel=1e-6)
    assert rep.delta2 == pytest.approx(ref.delta2, rel=1e-6)
    eta = rep.delta2 * p.M / 8 ** 2
    assert eta <= 1.0
    assert rep.epsilon_met and rep.error_bound <= p.epsilon_total
    assert 2 * rep.log_norm == pytest.approx(math.log(ref.norm2), rel=1e-8)


def test_mps_report_contents():
    spec = HamiltonianSpec(6)
    p = auto_params(6, 36, 2.0)
    out, rep = apply_filter_mps(initial_state(6), p, spec, FINE)
    assert len(rep.terms) == p.m_max + 1
    for term in rep.terms:
        assert term["t"] == pytest.approx(2 * term["m"] / 6)
    assert rep.epsilon_share == pytest.approx(p.epsilon_total / p.n_terms)
    assert rep.bond_profile == out.bond_dims and rep.max_bond == out.max_bond
    assert abs(out.norm - 1.0) < 1e-12
    d = json.loads(rep.to_json())
    for key in ("params", "terms", "log_norm", "bond_profile", "mu", "delta2", "timings"):
        assert key in d
    assert "timings" not in rep.to_dict(timings=False)


def test_mps_routes_agree():
    spec = HamiltonianSpec(4)
    psi = initial_state(4, "random", seed=3)
    data = diagonalize(spec, psi)
    p = FilterParams(16, 2.5, data.mean, 1e-6)
    _, a = apply_filter_mps(psi, p, spec, FINE, route="state")
    _, b = apply_filter_mps(psi, p, spec, FINE, route="mpo", threads=2)
    ref = exact_filtered_moments(data, p)
    for rep in (a, b):
        assert rep.mu == pytest.approx(ref.mu, rel=1e-5)
        assert rep.delta2 == pytest.approx(ref.delta2, rel=1e-5)
    assert b.terms[1]["evolution_bound"] <= p.epsilon_total / p.n_terms


def test_mps_dense_consistency_bounded_bond(plus_spectrum):
    n = 8
    spec = HamiltonianSpec(n)
    data = plus_spectrum(n)
    p = auto_params(n, 64, data.mean, eps=1e-6)
    pol = TruncationPolicy(max_bond=8, svd_threshold=1e-10)
    out, rep = apply_filter_mps(initial_state(n), p, spec, pol)
    dense = apply_filter_dense(data, p)
    tol = 10 * (rep.discarded_weight + p.epsilon_total) * n ** 2
    assert abs(rep.mu - dense.mu) <= tol
    assert abs(rep.delta2 - dense.delta2) <= tol


def test_mps_threads_bit_identical():
    spec = HamiltonianSpec(6)
    p = auto_params(6, 36, 1.0)
    a, ra = apply_filter_mps(initial_state(6), p, spec, FINE, threads=1)
    b, rb = apply_filter_mps(initial_state(6), p, spec, FINE, threads=3)
    assert ra.to_dict(timings=False) == rb.to_dict(timings=False)


def test_mps_norm_collapse_in_gap():
    spec = HamiltonianSpec(5, "field")
    with pytest.raises(NormCollapse) as info:
        apply_filter_mps(initial_state(5), FilterParams(2000, 3.0, 0.0), spec, FINE)
    assert info.value.log_norm < math.log(1e-8)
    assert info.value.report is not None


def test_mps_rejects_bad_inputs():
    spec = HamiltonianSpec(4)
    with pytest.raises(ValueError):
        apply_filter_mps(initial_state(5), FilterParams(4, 1.0), spec)
    with pytest.raises(ValueError):
        apply_filter_mps(initial_state(4), FilterParams(4, 1.0, 5.0), spec)
    with pytest.raises(ValueError):
        apply_filter_mps(initial_state(4), FilterParams(4, 1.0), spec, route="fast")
