"""Acceptance criteria 1-10, one verdict line per criterion.

Each test prints ``criterion K: PASS|FAIL <measurement>`` and the verdicts
are repeated in the terminal summary.
"""

import math
import time

import numpy as np
import pytest
import scipy.linalg

from lowvar.diagnostics import SweepPlan, entropy_vs_bond_report, fit_power_law, initial_state, run_sweep
from lowvar.evolution import EvolutionRequest, time_evolution_mpo
from lowvar.filter import FilterParams, apply_filter_dense, apply_filter_mps, default_y, scalar_g
from lowvar.hamiltonian import HamiltonianSpec, build_dense
from lowvar.oracle import (
    SpectrumData,
    berry_esseen_error,
    diagonalize,
    eigenstate_population_bound_check,
    exact_filtered_moments,
)
from lowvar.tensor import TruncationPolicy

VERDICTS = []


def verdict(label, ok, detail):
    line = f"criterion {label}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    VERDICTS.append(line)
    return ok


@pytest.fixture(scope="module")
def oracle_run(plus_spectrum):
    """Criterion 2 run: Ising N=8, |+>^8, M=64, unbounded bond."""
    n, M = 8, 64
    data = plus_spectrum(n)
    params = FilterParams(M, default_y(n, n / math.sqrt(M)), data.mean, 1e-8)
    t0 = time.perf_counter()
    state, report = apply_filter_mps(initial_state(n), params, HamiltonianSpec(n),
                                     TruncationPolicy(max_bond=None, svd_threshold=1e-12))
    elapsed = time.perf_counter() - t0
    return state, report, exact_filtered_moments(data, params), elapsed


@pytest.fixture(scope="module")
def variance_sweep():
    """Criteria 3 and 5: dense path, Ising N=10, M = 64..1024."""
    plan = SweepPlan([HamiltonianSpec(10)], M_grid=[64, 128, 256, 512, 1024], path="dense")
    return run_sweep(plan, keep_states=True)


def test_criterion_1_truncation_bound():
    t0 = time.perf_counter()
    x = np.linspace(-1.0, 1.0, 1001)
    worst = 0.0
    ok = True
    for M in (100, 400, 1600, 10 ** 4):
        for y in (2.0, 3.0, 4.0):
            err = float(np.abs(np.cos(x) ** M - scalar_g(x, M, y)).max())
            bound = math.exp(-y * y / 2)
            worst = max(worst, err / bound)
            ok &= err <= bound
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 10
    assert verdict(1, ok, f"max err/bound = {worst:.3g}, {elapsed:.2f} s")


def test_criterion_2_oracle_equivalence(oracle_run):
    _, rep, ref, elapsed = oracle_run
    rmu = abs(rep.mu - ref.mu) / abs(ref.mu)
    rd = abs(rep.delta2 - ref.delta2) / ref.delta2
    ok = rmu <= 1e-6 and rd <= 1e-6 and elapsed < 300
    assert verdict(2, ok, f"rel err mu {rmu:.2e}, delta2 {rd:.2e}, {elapsed:.1f} s")


def test_criterion_3_variance_scaling(variance_sweep):
    rows = variance_sweep.ok()
    assert len(rows) == 5
    fit = fit_power_law([r["M"] for r in rows], [r["delta2"] for r in rows])
    ok = -1.15 <= fit.exponent <= -0.85
    assert verdict(3, ok, f"exponent {fit.exponent:.4f} (r^2 {fit.r_squared:.3f})")


def test_criterion_4_gaussian_closed_form():
    n, M = 100, 5000
    e = np.linspace(-n, n, 20001)
    p = np.exp(-e ** 2 / (2 * 10.0 ** 2))
    data = SpectrumData(e, p / p.sum(), n)
    res = apply_filter_dense(data, FilterParams(M, default_y(n, n / math.sqrt(M)), 0.0))
    pred = n / math.sqrt(2 * M)
    rel = abs(math.sqrt(res.delta2) - pred) / pred
    assert verdict(4, rel <= 0.1, f"delta {math.sqrt(res.delta2):.4f} vs {pred:.4f} (rel {rel:.3f})")


def test_criterion_5_mean_shift(variance_sweep):
    rows = variance_sweep.ok()
    r = np.array([abs(x["mu"] - x["E_center"]) * math.sqrt(x["M"]) / x["n_sites"] for x in rows])
    med = float(np.median(r))
    ok = r.max() <= 5 and r.max() <= 5 * med
    assert verdict(5, ok, f"max {r.max():.4f}, median {med:.4f}")


def test_criterion_6a_coin_toss_tightness():
    vals = {}
    for n in (5, 7, 9, 11, 13):
        e = np.array([n - 2.0 * k for k in range(n + 1)])
        p = np.array([math.comb(n, k) for k in range(n + 1)], dtype=float) / 2 ** n
        vals[n] = berry_esseen_error(SpectrumData(e, p, n))[0] * math.sqrt(n)
    # the enumerated distribution is the one the free-field model produces
    d9 = diagonalize(HamiltonianSpec(9, "field"), initial_state(9))
    vals9 = berry_esseen_error(d9)[0] * math.sqrt(9)
    ok = min(vals.values()) >= 0.05 and abs(vals9 - vals[9]) < 1e-9
    detail = ", ".join(f"N={n}: {v:.4f}" for n, v in vals.items())
    assert verdict("6a", ok, f"zeta*sqrt(N) {detail}")


def test_criterion_6b_ising_zeta_decay(plus_spectrum):
    ns = (6, 8, 10, 12)
    zetas = [berry_esseen_error(plus_spectrum(n))[0] for n in ns]
    fit = fit_power_law(ns, zetas)
    detail = ", ".join(f"{z:.4f}" for z in zetas)
    assert verdict("6b", fit.exponent <= -0.4, f"exponent {fit.exponent:.3f} (zetas {detail})")


def test_criterion_7_entropy_bound(oracle_run, variance_sweep):
    states = [oracle_run[0]] + variance_sweep.states()
    assert len(states) == 6
    worst = math.inf
    for st in states:
        rep = entropy_vs_bond_report(st)
        worst = min(worst, min(math.log(d) - s for d, s in zip(rep.bond_dims, rep.S1)))
    assert verdict(7, worst >= -1e-10, f"min log D - S1 = {worst:.3g} over {len(states)} states")


def test_criterion_8_evolution_contract():
    spec = HamiltonianSpec(8)
    H = build_dense(spec)
    t0 = time.perf_counter()
    errs = []
    for t in (0.25, 0.5, 1.0, 2.0):
        res = time_evolution_mpo(EvolutionRequest(t, 1e-6, spec))
        errs.append(float(np.linalg.norm(res.mpo.to_dense() - scipy.linalg.expm(-1j * t * H), 2)))
    elapsed = time.perf_counter() - t0
    ok = max(errs) <= 1e-6 and elapsed < 120
    assert verdict(8, ok, f"errors {', '.join(f'{e:.2e}' for e in errs)}, {elapsed:.1f} s")


def test_criterion_9_population_bound(plus_spectrum):
    rep = eigenstate_population_bound_check(HamiltonianSpec(8), plus_spectrum(8, vectors=True))
    ok = rep.holds and rep.n_states == 256
    assert verdict(9, ok, f"{rep.n_states} eigenstates, min slack {rep.slack.min():.4f}")


def test_criterion_10_bond_dimension_report():
    """Measured only: bond dimension at a fixed delta target; growth must be monotone."""
    ns = (8, 12, 16, 20, 24)
    plan = SweepPlan([HamiltonianSpec(n) for n in ns], target_deltas=[2.0],
                     policies=[TruncationPolicy(max_bond=64, svd_threshold=1e-8)], epsilon_total=1e-6,
                     oracle=False)
    table = run_sweep(plan)
    print("\n   N      M   max_bond   S1_mid   delta2")
    for r in table.rows:
        if r["status"] == "ok":
            print(f"{r['n_sites']:4d} {r['M']:6d} {r['max_bond']:10d} {r['S1_mid']:8.4f} {r['delta2']:8.4f}")
        else:
            print(f"{r['n_sites']:4d} failed: {r['error']}")
    ok = all(r["status"] == "ok" for r in table.rows)
    bonds = [r["max_bond"] for r in table.rows if r["status"] == "ok"]
    ok &= all(b >= a for a, b in zip(bonds, bonds[1:]))
    detail = ", ".join(f"N={r['n_sites']}: D={r['max_bond']}" for r in table.ok())
    assert verdict(10, ok, f"monotone bond growth at delta=2: {detail}")
