"""Truncated cosine energy filter.

The filter ``cos^M((H - E) / N)`` is expanded as

    2^{-M} sum_m binom(M, M/2 - m) exp(2 i m (H - E) / N)

and the sum is cut at ``|m| <= floor(y sqrt(M))``, which changes the scalar
function by at most ``exp(-y^2 / 2)`` on ``[-1, 1]``. On an MPS the kept
terms are evaluated either through one shared Chebyshev recurrence on the
input state (``route="state"``) or by building a ``T_t`` MPO per term
(``route="mpo"``).
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import mpmath
import numpy as np
import scipy.special

from .evolution import ChebyshevEvolver, EvolutionRequest, chebyshev_coefficients, time_evolution_mpo
from .hamiltonian import HamiltonianSpec, build_mpo
from .mps import (
    MpoOperator,
    MpsState,
    apply_mpo,
    combine,
    expectation,
    mpo_linear_combination,
    weighted_sum_with_error,
)
from .oracle import SpectrumData
from .tensor import TruncationPolicy

__all__ = [
    "FilterParams",
    "FilterReport",
    "DenseFilterResult",
    "NormCollapse",
    "InfeasibleParams",
    "binomial_weights",
    "scalar_g",
    "suggest_params",
    "default_y",
    "apply_filter_dense",
    "apply_filter_mps",
    "filter_values",
    "COLLAPSE_FLOOR",
]

log = logging.getLogger(__name__)

COLLAPSE_FLOOR = 1e-150


class NormCollapse(RuntimeError):
    """The filtered vector is too small to carry a meaningful direction."""

    def __init__(self, message: str, log_norm: float, report: Optional["FilterReport"] = None):
        super().__init__(message)
        self.log_norm = log_norm
        self.report = report


class InfeasibleParams(ValueError):
    """A requested filter cannot be built within the stated constraints."""


@dataclass(frozen=True)
class FilterParams:
    """Parameters of the truncated cosine filter.

    Attributes
    ----------
    M : int
        Filter power, positive and even.
    y : float
        Truncation radius in units of ``sqrt(M)``.
    E_center : float
        Energy the filter is centred on.
    epsilon_total : float
        Total operator-norm budget for approximating the kept terms.
    denominator : float or None
        Scale inside the cosine; ``None`` means the chain length ``N``.
    """

    M: int
    y: float
    E_center: float = 0.0
    epsilon_total: float = 1e-8
    denominator: Optional[float] = None

    def __post_init__(self):
        if isinstance(self.M, bool) or int(self.M) != self.M:
            raise ValueError(f"M must be an integer, got {self.M!r}")
        object.__setattr__(self, "M", int(self.M))
        if self.M < 2 or self.M % 2:
            raise ValueError(f"M must be a positive even integer, got {self.M}")
        if not (self.y > 0 and math.isfinite(self.y)):
            raise ValueError(f"y must be positive and finite, got {self.y}")
        if not math.isfinite(self.E_center):
            raise ValueError("E_center must be finite")
        if not 0 < self.epsilon_total < 1:
            raise ValueError(f"epsilon_total must lie in (0, 1), got {self.epsilon_total}")
        if self.denominator is not None and not self.denominator > 0:
            raise ValueError("denominator must be positive")

    @property
    def m_max(self) -> int:
        return min(int(math.floor(self.y * math.sqrt(self.M))), self.M // 2)

    @property
    def n_terms(self) -> int:
        return 2 * self.m_max + 1

    @property
    def untruncated(self) -> bool:
        return self.m_max == self.M // 2

    def scale(self, n_sites: int) -> float:
        return float(self.denominator) if self.denominator else float(n_sites)

    def check_center(self, n_sites: int) -> None:
        if abs(self.E_center) > n_sites:
            raise ValueError(f"E_center={self.E_center} outside [-N, N] for N={n_sites}")

    def to_dict(self) -> dict:
        return asdict(self)


def _log_center_weight(M: int) -> float:
    """``log(2^{-M} binom(M, M/2))`` to full double precision."""
    h = M // 2
    with mpmath.workdps(30):
        val = mpmath.loggamma(M + 1) - 2 * mpmath.loggamma(h + 1) - M * mpmath.log(2)
        return float(val)


def _log_weights(M: int, m_max: int) -> np.ndarray:
    """``log w_m`` for ``m = 0..m_max`` from the centre weight and exact ratios."""
    h = M // 2
    j = np.arange(m_max, dtype=float)
    # w_{j+1} / w_j = (h - j) / (h + j + 1)
    steps = np.log1p(-(2.0 * j + 1.0) / (h + j + 1.0))
    return _log_center_weight(M) + np.concatenate([[0.0], np.cumsum(steps)])


def binomial_weights(M: int, y: float) -> Tuple[np.ndarray, np.ndarray]:
    """Kept indices ``m`` and weights ``2^{-M} binom(M, M/2 - m)``.

    Returns ``(ms, weights)`` with ``ms = -m_max..m_max`` ascending.
    """
    p = FilterParams(M, y)
    lw = _log_weights(p.M, p.m_max)
    half = np.exp(lw)
    ms = np.arange(-p.m_max, p.m_max + 1)
    return ms, np.concatenate([half[:0:-1], half])


def _g_values(x: np.ndarray, M: int, y: float) -> np.ndarray:
    ms, w = binomial_weights(M, y)
    x = np.asarray(x, dtype=float)
    return np.exp(2j * np.multiply.outer(x, ms)) @ w


def scalar_g(x, M: int, y: float):
    """Truncated series ``g_y(x) = sum_{|m| <= y sqrt(M)} w_m exp(2 i m x)``.

    Accepts a scalar or an array of points in ``[-1, 1]``.
    """
    xa = np.asarray(x, dtype=float)
    if np.any(np.abs(xa) > 1.0):
        raise ValueError("g_y is only controlled on [-1, 1]")
    out = _g_values(xa, M, y)
    return complex(out) if out.ndim == 0 else out


def default_y(n_sites: int, delta: float) -> float:
    """``sqrt(6 log(N / delta))``, floored at one."""
    return max(math.sqrt(6.0 * max(math.log(n_sites / delta), 0.0)), 1.0)


def suggest_params(n_sites: int, target_delta: float, zeta_hint: Optional[float] = None, *,
                   E_center: float = 0.0, epsilon_total: float = 1e-8,
                   s_ratio: Optional[float] = None, s_floor: float = 0.1) -> FilterParams:
    """Filter parameters aimed at standard deviation ``target_delta``.

    ``M = ceil(N^2 / delta^2)`` rounded up to even and ``y = sqrt(6 log(N/delta))``.

    Raises
    ------
    InfeasibleParams
        If ``zeta_hint`` is given and ``M > N / zeta_hint^2``, or if
        ``s_ratio`` is below ``s_floor``.
    """
    if not target_delta > 0:
        raise ValueError("target_delta must be positive")
    if s_ratio is not None and s_ratio < s_floor:
        raise InfeasibleParams(f"s_ratio={s_ratio:.4g} below floor {s_floor}; input energy spread too narrow")
    M = max(2, math.ceil(n_sites ** 2 / target_delta ** 2 - 1e-9))
    M += M % 2
    if zeta_hint is not None:
        if not zeta_hint > 0:
            raise ValueError("zeta_hint must be positive")
        ceiling = n_sites / zeta_hint ** 2
        if M > ceiling:
            raise InfeasibleParams(f"M={M} exceeds the Berry-Esseen ceiling N/zeta^2={ceiling:.4g}")
    return FilterParams(M, default_y(n_sites, target_delta), E_center, epsilon_total)


# ---------------------------------------------------------------------------
# dense path


class DenseFilterResult(NamedTuple):
    populations: SpectrumData
    mu: float
    delta2: float
    log_norm: float


def filter_values(x, params: FilterParams) -> np.ndarray:
    """Real filter values at reduced energies ``x``: ``cos^M`` when untruncated, else ``g_y``."""
    x = np.asarray(x, dtype=float)
    if params.untruncated:
        return np.cos(x) ** params.M
    return _g_values(x, params.M, params.y).real


def _log_abs_filter(x: np.ndarray, params: FilterParams) -> np.ndarray:
    if params.untruncated:
        with np.errstate(divide="ignore"):
            return params.M * np.log(np.abs(np.cos(x)))
    with np.errstate(divide="ignore"):
        return np.log(np.abs(_g_values(x, params.M, params.y)))


def apply_filter_dense(data: SpectrumData, params: FilterParams) -> DenseFilterResult:
    """Filter an energy distribution in the eigenbasis.

    Populations are reweighted by ``|g_y((E_j - E) / N)|^2`` in log space;
    when the series is untruncated ``cos^M`` is used in closed form.
    ``log_norm`` is the log of ``||g_y |p>||``.
    """
    x = (data.eigenvalues - params.E_center) / params.scale(data.n_sites)
    with np.errstate(divide="ignore"):
        logp = np.log(data.populations) + 2.0 * _log_abs_filter(x, params)
    if not np.any(np.isfinite(logp)):
        raise NormCollapse("filtered distribution has zero norm", -math.inf)
    lse = float(scipy.special.logsumexp(logp))
    pops = np.exp(logp - lse)
    pops /= pops.sum()
    out = data.with_populations(pops)
    return DenseFilterResult(out, out.mean, out.variance, 0.5 * lse)


# ---------------------------------------------------------------------------
# MPS path


@dataclass
class FilterReport:
    """Record of one MPS filtering run."""

    params: dict
    n_sites: int
    route: str
    model: dict
    terms: List[dict] = field(default_factory=list)
    weight_total: float = 0.0
    epsilon_share: float = 0.0
    error_bound: float = 0.0
    epsilon_met: bool = True
    log_norm: float = 0.0
    norm_floor_scale: float = 0.0
    norm_ratio: float = 0.0
    bond_profile: List[int] = field(default_factory=list)
    max_bond: int = 0
    discarded_weight: float = 0.0
    mu: float = math.nan
    delta2: float = math.nan
    timings: Dict[str, float] = field(default_factory=dict)

    def to_dict(self, timings: bool = True) -> dict:
        out = asdict(self)
        if not timings:
            out.pop("timings")
        return out

    def to_json(self, timings: bool = True) -> str:
        return json.dumps(self.to_dict(timings), indent=2, sort_keys=True, allow_nan=True)


def _moments(state: MpsState, spec: HamiltonianSpec) -> Tuple[float, float]:
    H = build_mpo(spec)
    mu = expectation(state, H).real
    shifted = mpo_linear_combination([(1.0, H), (-mu, MpoOperator.identity(spec.n_sites))])
    res = apply_mpo(shifted, state, TruncationPolicy.exact())
    return float(mu), float(res.norm ** 2 / state.norm ** 2)


def _state_route(psi: MpsState, params: FilterParams, spec: HamiltonianSpec, policy: TruncationPolicy,
                 ms: np.ndarray, w: np.ndarray, eps_term: float, report: FilterReport, threads: int):
    n = spec.n_sites
    scale = params.scale(n)
    E = params.E_center
    evolver = ChebyshevEvolver(psi, spec, policy)
    a = evolver.a
    weights = dict(zip(ms.tolist(), w.tolist()))
    pair_coeffs = []
    tail_total = 0.0
    for m in range(1, params.m_max + 1):
        theta = 2.0 * m / scale
        c, tail = chebyshev_coefficients(theta, a, eps_term / 2.0)
        k = np.arange(len(c))
        # exp(-i theta E) exp(i theta H) + exp(i theta E) exp(-i theta H)
        pair = c * (np.exp(-1j * theta * E) * (-1.0) ** k + np.exp(1j * theta * E))
        pair_coeffs.append((m, theta, pair, tail))
        tail_total += weights[m] * 2.0 * tail
    order = max([len(p) for _, _, p, _ in pair_coeffs], default=1)
    t0 = time.perf_counter()
    evolver.extend(order)
    report.timings["chebyshev_vectors"] = time.perf_counter() - t0
    total = np.zeros(order, dtype=np.complex128)
    total[0] += weights[0]
    report.terms.append({"m": 0, "t": 0.0, "weight": weights[0], "order": 1, "tail": 0.0,
                         "compression": 0.0, "error": 0.0})
    for m, theta, pair, tail in pair_coeffs:
        total[: len(pair)] += weights[m] * pair
        comp = evolver.propagated_error(pair)
        err = 2.0 * tail + comp
        report.terms.append({"m": m, "t": theta, "weight": weights[m], "order": len(pair), "tail": 2.0 * tail,
                             "compression": comp, "error": err})
    t0 = time.perf_counter()
    terms = [(complex(c), v) for c, v in zip(total, evolver.vectors) if c != 0]
    out, sum_err = weighted_sum_with_error(terms, policy, threads)
    report.timings["reduction"] = time.perf_counter() - t0
    bound = tail_total + evolver.propagated_error(total) + sum_err
    return out, bound


def _mpo_route(psi: MpsState, params: FilterParams, spec: HamiltonianSpec, policy: TruncationPolicy,
               ms: np.ndarray, w: np.ndarray, eps_term: float, report: FilterReport, threads: int,
               method: str):
    n = spec.n_sites
    scale = params.scale(n)
    E = params.E_center
    weights = dict(zip(ms.tolist(), w.tolist()))

    def one(m):
        theta = 2.0 * m / scale
        res = time_evolution_mpo(EvolutionRequest(theta, eps_term, spec, policy, method=method))
        fwd, e1 = combine([(1.0, res.mpo, psi)], policy)
        bwd, e2 = combine([(1.0, res.mpo.dagger(), psi)], policy)
        return m, theta, res, fwd, bwd, e1 + e2

    t0 = time.perf_counter()
    mlist = list(range(1, params.m_max + 1))
    if threads > 1 and len(mlist) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, mlist))
    else:
        results = [one(m) for m in mlist]
    report.timings["evolution"] = time.perf_counter() - t0
    terms = [(weights[0], psi)]
    report.terms.append({"m": 0, "t": 0.0, "weight": weights[0], "error": 0.0, "bond_profile": []})
    bound = 0.0
    for m, theta, res, fwd, bwd, apply_err in results:
        wm = weights[m]
        # exp(2im(H-E)/N) = exp(-i theta E) T_{-theta}, T_{-theta} = T_theta^dagger
        terms.append((wm * np.exp(1j * theta * E), fwd))
        terms.append((wm * np.exp(-1j * theta * E), bwd))
        err = 2.0 * res.error_bound + apply_err
        bound += wm * err
        report.terms.append({"m": m, "t": theta, "weight": wm, "error": err,
                             "evolution_bound": res.error_bound, "bond_profile": list(res.bond_profile),
                             **{k: v for k, v in res.info.items() if k != "method"}})
    t0 = time.perf_counter()
    out, sum_err = weighted_sum_with_error(terms, policy, threads)
    report.timings["reduction"] = time.perf_counter() - t0
    return out, bound + sum_err


def apply_filter_mps(state: MpsState, params: FilterParams, spec: HamiltonianSpec,
                     policy: TruncationPolicy = TruncationPolicy(), *, route: str = "state",
                     method: str = "chebyshev", threads: int = 1) -> Tuple[MpsState, FilterReport]:
    """Apply the truncated filter to an MPS.

    Parameters
    ----------
    state : MpsState
        Input state; its stored norm is ignored.
    params : FilterParams
        Filter parameters. ``epsilon_total`` is split evenly over the
        ``2 m_max + 1`` kept terms.
    spec : HamiltonianSpec
        Hamiltonian defining the filter.
    policy : TruncationPolicy
        Compression rule for every intermediate state and operator.
    route : {"state", "mpo"}
        ``"state"`` shares one Chebyshev recurrence on the input vector;
        ``"mpo"`` builds a time-evolution MPO for every kept ``m``.
    method : {"chebyshev", "trotter"}
        Evolution method for the ``"mpo"`` route.
    threads : int
        Worker threads for the per-term map and the tree reduction.

    Returns
    -------
    (MpsState, FilterReport)
        Normalized filtered state and the run record.

    Raises
    ------
    NormCollapse
        If the filtered norm is below ``1e-150`` or below ``epsilon_total``,
        so that its direction is not resolved by the approximation.
    """
    if route not in ("state", "mpo"):
        raise ValueError(f"route must be 'state' or 'mpo', got {route!r}")
    n = spec.n_sites
    if state.n_sites != n:
        raise ValueError("state and Hamiltonian sizes differ")
    params.check_center(n)
    t_start = time.perf_counter()
    psi = MpsState(state.tensors, state.canonical_center, state.cumulative_discarded_weight, 0.0)
    ms, w = binomial_weights(params.M, params.y)
    eps_term = params.epsilon_total / params.n_terms
    report = FilterReport(params=params.to_dict(), n_sites=n, route=route, model=spec.to_dict(),
                          weight_total=float(w.sum()), epsilon_share=eps_term)
    if route == "state":
        out, bound = _state_route(psi, params, spec, policy, ms, w, eps_term, report, threads)
    else:
        out, bound = _mpo_route(psi, params, spec, policy, ms, w, eps_term, report, threads, method)
    report.error_bound = float(bound)
    report.epsilon_met = bool(bound <= params.epsilon_total)
    if not report.epsilon_met:
        log.warning("filter error bound %.3g exceeds epsilon_total %.3g", bound, params.epsilon_total)
    report.log_norm = float(out.log_norm)
    report.norm_floor_scale = math.sqrt(n) / params.M ** 0.25
    report.norm_ratio = float(out.norm / report.norm_floor_scale)
    report.discarded_weight = float(out.cumulative_discarded_weight)
    report.timings["filter"] = time.perf_counter() - t_start
    threshold = max(COLLAPSE_FLOOR, params.epsilon_total)
    if out.is_zero or out.log_norm < math.log(threshold):
        raise NormCollapse(f"filtered norm exp({out.log_norm:.4g}) below {threshold:.3g}", out.log_norm, report)
    out = MpsState(out.tensors, out.canonical_center, out.cumulative_discarded_weight, 0.0)
    report.bond_profile = out.bond_dims
    report.max_bond = out.max_bond
    t0 = time.perf_counter()
    report.mu, report.delta2 = _moments(out, spec)
    report.timings["moments"] = time.perf_counter() - t0
    return out, report
