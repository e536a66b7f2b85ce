"""Parameter sweeps, power-law fits and entanglement bookkeeping."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np
import scipy.stats

from . import __version__
from .filter import FilterParams, apply_filter_dense, apply_filter_mps, default_y, filter_values
from .hamiltonian import MAX_DENSE_SITES, HamiltonianSpec, build_mpo
from .mps import MpsState, entropy_from_schmidt, expectation, product_state, schmidt_spectra
from .oracle import berry_esseen_error, diagonalize
from .tensor import TruncationPolicy

__all__ = [
    "SweepPlan",
    "SweepTable",
    "ScalingFit",
    "EntropyReport",
    "run_sweep",
    "fit_power_law",
    "entropy_vs_bond_report",
    "initial_state",
    "write_csv",
    "config_hash",
    "SWEEP_COLUMNS",
]

SWEEP_COLUMNS = [
    "cell", "status", "path", "model", "n_sites", "M", "y", "seed", "max_bond_policy", "svd_threshold",
    "E_center", "mu", "delta2", "log_norm", "zeta", "max_bond", "S1_mid", "S2_mid", "error_bound", "error",
]

# Schmidt values below this relative size are numerical noise of the dense vector.
_DENSE_SPLIT = TruncationPolicy(max_bond=None, svd_threshold=1e-14)


def initial_state(n_sites: int, kind: str = "plus", seed: Optional[int] = None) -> MpsState:
    """Product state: ``"plus"``, ``"zero"`` or ``"random"`` (Haar single-site vectors)."""
    if kind == "plus":
        v = np.array([1.0, 1.0]) / math.sqrt(2.0)
        return product_state([v] * n_sites)
    if kind == "zero":
        return product_state([np.array([1.0, 0.0])] * n_sites)
    if kind == "random":
        rng = np.random.default_rng(seed)
        vecs = rng.normal(size=(n_sites, 2)) + 1j * rng.normal(size=(n_sites, 2))
        return product_state(list(vecs / np.linalg.norm(vecs, axis=1, keepdims=True)))
    raise ValueError(f"unknown state kind {kind!r}")


@dataclass(frozen=True)
class SweepPlan:
    """Grid of filter runs.

    Cells are the product ``specs x (M_grid or target_deltas) x policies x
    seeds`` in that nesting order. ``y_rule`` is ``"suggest"`` (the
    ``sqrt(6 log(N / delta))`` rule with ``delta = N / sqrt(M)``) or a
    fixed positive number. ``oracle`` adds the exact Berry-Esseen error for
    cells with ``N <= 14`` (always on for the dense path).
    """

    specs: Sequence[HamiltonianSpec]
    M_grid: Sequence[int] = ()
    target_deltas: Sequence[float] = ()
    y_rule: Union[str, float] = "suggest"
    policies: Sequence[TruncationPolicy] = (TruncationPolicy(),)
    seeds: Sequence[int] = (0,)
    state: str = "plus"
    path: str = "mps"
    epsilon_total: float = 1e-8
    oracle: bool = True
    output: Optional[str] = None

    def __post_init__(self):
        if not self.specs:
            raise ValueError("sweep needs at least one model")
        if not self.M_grid and not self.target_deltas:
            raise ValueError("sweep needs an M grid or a list of delta targets")
        if not self.policies or not self.seeds:
            raise ValueError("policy and seed grids must be nonempty")
        if self.path not in ("mps", "dense"):
            raise ValueError(f"path must be 'mps' or 'dense', got {self.path!r}")
        if self.y_rule != "suggest" and not (isinstance(self.y_rule, (int, float)) and self.y_rule > 0):
            raise ValueError(f"y_rule must be 'suggest' or a positive number, got {self.y_rule!r}")
        if self.path == "dense" and any(s.n_sites > MAX_DENSE_SITES for s in self.specs):
            raise ValueError(f"dense path limited to N <= {MAX_DENSE_SITES}")

    def cells(self) -> List[dict]:
        out = []
        for spec in self.specs:
            if self.M_grid:
                grid = [("M", M) for M in self.M_grid]
            else:
                grid = [("delta", d) for d in self.target_deltas]
            for kind, val in grid:
                for pol in self.policies:
                    for seed in self.seeds:
                        out.append({"spec": spec, kind: val, "policy": pol, "seed": seed})
        return out

    def to_dict(self) -> dict:
        return {"specs": [s.to_dict() for s in self.specs], "M_grid": list(self.M_grid),
                "target_deltas": list(self.target_deltas), "y_rule": self.y_rule,
                "policies": [{"max_bond": p.max_bond, "svd_threshold": p.svd_threshold} for p in self.policies],
                "seeds": list(self.seeds), "state": self.state, "path": self.path,
                "epsilon_total": self.epsilon_total, "oracle": self.oracle}

    def digest(self) -> str:
        return config_hash(self.to_dict())


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _cell_params(plan: SweepPlan, cell: dict, n: int, E: float) -> FilterParams:
    if "M" in cell:
        M = int(cell["M"])
        delta = n / math.sqrt(M)
    else:
        delta = float(cell["delta"])
        M = max(2, math.ceil(n * n / (delta * delta) - 1e-9))
        M += M % 2
    y = default_y(n, delta) if plan.y_rule == "suggest" else float(plan.y_rule)
    return FilterParams(M, y, E, plan.epsilon_total)


def _mid_entropies(state: MpsState):
    if state.n_sites < 2:
        return 0.0, 0.0
    s = schmidt_spectra(state)[state.n_sites // 2 - 1]
    return entropy_from_schmidt(s, 1.0), entropy_from_schmidt(s, 2.0)


def _run_cell(plan: SweepPlan, idx: int, cell: dict, keep_state: bool = False) -> dict:
    spec: HamiltonianSpec = cell["spec"]
    pol: TruncationPolicy = cell["policy"]
    n = spec.n_sites
    row = {k: "" for k in SWEEP_COLUMNS}
    row.update(cell=idx, path=plan.path, model=spec.model, n_sites=n, seed=cell["seed"],
               max_bond_policy=pol.max_bond if pol.max_bond is not None else "", svd_threshold=pol.svd_threshold)
    t0 = time.perf_counter()
    try:
        psi = initial_state(n, plan.state, cell["seed"])
        H = build_mpo(spec)
        E = expectation(psi, H).real
        params = _cell_params(plan, cell, n, E)
        row.update(M=params.M, y=params.y, E_center=E)
        dense = plan.path == "dense"
        data = None
        if dense or (plan.oracle and n <= MAX_DENSE_SITES):
            data = diagonalize(spec, psi, keep_vectors=dense)
        if data is not None:
            row["zeta"] = berry_esseen_error(data)[0]
        if plan.path == "dense":
            res = apply_filter_dense(data, params)
            b = data.eigenvectors.conj().T @ psi.to_dense()
            x = (data.eigenvalues - params.E_center) / params.scale(n)
            vec = data.eigenvectors @ (filter_values(x, params) * b)
            out = MpsState.from_dense(vec, n, policy=_DENSE_SPLIT)
            row.update(mu=res.mu, delta2=res.delta2, log_norm=res.log_norm, error_bound=0.0)
        else:
            out, rep = apply_filter_mps(psi, params, spec, pol)
            row.update(mu=rep.mu, delta2=rep.delta2, log_norm=rep.log_norm, error_bound=rep.error_bound)
            row["_report"] = rep
        s1, s2 = _mid_entropies(out)
        row.update(max_bond=out.max_bond, S1_mid=s1, S2_mid=s2, status="ok")
        if keep_state:
            row["_state"] = out
    except Exception as exc:  # recorded per row; the sweep carries on
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        row["_traceback"] = traceback.format_exc()
    row["_time"] = time.perf_counter() - t0
    return row


@dataclass
class SweepTable:
    """Sweep rows in cell order plus the plan digest."""

    rows: List[dict]
    plan_hash: str
    columns: List[str] = field(default_factory=lambda: list(SWEEP_COLUMNS))

    def states(self) -> List[MpsState]:
        return [r["_state"] for r in self.rows if "_state" in r]

    def ok(self) -> List[dict]:
        return [r for r in self.rows if r["status"] == "ok"]

    def column(self, name: str, only_ok: bool = True) -> np.ndarray:
        rows = self.ok() if only_ok else self.rows
        return np.array([r[name] for r in rows], dtype=float)

    def write(self, path, timings_path=None) -> None:
        meta = {"plan_hash": self.plan_hash, "version": __version__, "schema": "sweep/1"}
        write_csv(path, self.columns, self.rows, meta)
        if timings_path is not None:
            write_csv(timings_path, ["cell", "seconds"],
                      [{"cell": r["cell"], "seconds": r["_time"]} for r in self.rows], meta)


def run_sweep(plan: SweepPlan, threads: int = 1, keep_states: bool = False) -> SweepTable:
    """Run every cell of ``plan``; failures become rows with ``status="failed"``.

    With ``keep_states`` each successful row also carries its filtered state
    under the private key ``"_state"``.
    """
    cells = plan.cells()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda ic: _run_cell(plan, ic[0], ic[1], keep_states), enumerate(cells)))
    else:
        rows = [_run_cell(plan, i, c, keep_states) for i, c in enumerate(cells)]
    rows.sort(key=lambda r: r["cell"])
    table = SweepTable(rows, plan.digest())
    if plan.output:
        Path(plan.output).parent.mkdir(parents=True, exist_ok=True)
        table.write(plan.output)
    return table


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Sequence[dict], meta: Dict[str, str]) -> None:
    """CSV with ``#`` metadata lines, a schema line and a header row."""
    with open(path, "w", newline="") as fh:
        for k in sorted(meta):
            fh.write(f"# {k}: {meta[k]}\n")
        fh.write(f"# columns: {','.join(columns)}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])


class ScalingFit(NamedTuple):
    exponent: float
    prefactor: float
    r_squared: float
    n_points: int

    def to_dict(self) -> dict:
        return self._asdict()


def fit_power_law(xs, ys) -> ScalingFit:
    """Least-squares fit of ``log y = log c + k log x``."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1D and of equal length")
    if x.size < 4:
        raise ValueError(f"power-law fit needs at least 4 points, got {x.size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    res = scipy.stats.linregress(lx, ly)
    r2 = float(res.rvalue ** 2) if np.ptp(ly) > 0 else 1.0
    return ScalingFit(float(res.slope), float(math.exp(res.intercept)), min(max(r2, 0.0), 1.0), int(x.size))


@dataclass
class EntropyReport:
    """Per-cut entropies against ``log`` of the bond dimension."""

    cuts: List[int]
    bond_dims: List[int]
    S1: List[float]
    S2: List[float]

    @property
    def slack(self) -> List[float]:
        return [math.log(d) - s for d, s in zip(self.bond_dims, self.S1)]

    @property
    def holds(self) -> bool:
        return all(s >= -1e-10 for s in self.slack) and all(
            math.log(d) - s >= -1e-10 for d, s in zip(self.bond_dims, self.S2))

    def max_entropy(self) -> float:
        return max(self.S1, default=0.0)

    def to_dict(self) -> dict:
        return {"cuts": self.cuts, "bond_dims": self.bond_dims, "S1": self.S1, "S2": self.S2,
                "slack": self.slack, "holds": self.holds}


def entropy_vs_bond_report(state: MpsState) -> EntropyReport:
    """Von Neumann and Renyi-2 entropy at every cut with its bond dimension."""
    spectra = schmidt_spectra(state)
    dims = state.bond_dims
    return EntropyReport(list(range(1, state.n_sites)), list(dims),
                         [entropy_from_schmidt(s, 1.0) for s in spectra],
                         [entropy_from_schmidt(s, 2.0) for s in spectra])
