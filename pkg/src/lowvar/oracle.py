"""Exact-diagonalization ground truth for chains up to 14 sites."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.special

from .hamiltonian import MAX_DENSE_SITES, HamiltonianSpec, build_dense
from .mps import MpsState

__all__ = [
    "SpectrumData",
    "diagonalize",
    "berry_esseen_error",
    "characteristic_function",
    "gaussianity_deviation_fit",
    "exact_filtered_moments",
    "eigenstate_population_bound_check",
    "half_chain_renyi2",
    "PopulationBoundReport",
    "GaussianityFit",
]


@dataclass(frozen=True, eq=False)
class SpectrumData:
    """Energy distribution ``{(E_j, |b_j|^2)}`` of a state.

    ``eigenvalues`` are sorted ascending. ``eigenvectors`` (columns) are only
    kept when requested from :func:`diagonalize`.
    """

    eigenvalues: np.ndarray
    populations: np.ndarray
    n_sites: int
    eigenvectors: Optional[np.ndarray] = None

    def __post_init__(self):
        e = np.asarray(self.eigenvalues, dtype=float)
        p = np.asarray(self.populations, dtype=float)
        if e.shape != p.shape or e.ndim != 1:
            raise ValueError("eigenvalues and populations must be 1D arrays of equal length")
        if np.any(p < -1e-14):
            raise ValueError("populations must be nonnegative")
        if abs(p.sum() - 1.0) > 1e-10:
            raise ValueError(f"populations sum to {p.sum():.15g}, expected 1")
        if np.any(np.diff(e) < 0):
            order = np.argsort(e, kind="stable")
            e, p = e[order], p[order]
            if self.eigenvectors is not None:
                object.__setattr__(self, "eigenvectors", self.eigenvectors[:, order])
        object.__setattr__(self, "eigenvalues", e)
        object.__setattr__(self, "populations", np.clip(p, 0.0, None))

    @property
    def mean(self) -> float:
        return float(np.dot(self.populations, self.eigenvalues))

    @property
    def variance(self) -> float:
        d = self.eigenvalues - self.mean
        return float(np.dot(self.populations, d * d))

    @property
    def std_dev(self) -> float:
        return math.sqrt(max(self.variance, 0.0))

    @property
    def s_ratio(self) -> float:
        """``sigma / sqrt(N)``, required to be bounded below for product states."""
        return self.std_dev / math.sqrt(self.n_sites)

    def cdf(self, x) -> np.ndarray:
        """Right-continuous cumulative distribution ``J(x) = sum_{E_j <= x} |b_j|^2``."""
        cum = np.concatenate([[0.0], np.cumsum(self.populations)])
        idx = np.searchsorted(self.eigenvalues, np.asarray(x, dtype=float), side="right")
        return cum[idx]

    def gaussian_cdf(self, x) -> np.ndarray:
        """Normal CDF with the distribution's own mean and variance."""
        x = np.asarray(x, dtype=float)
        s = self.std_dev
        if s == 0.0:
            return np.where(x > self.mean, 1.0, np.where(x < self.mean, 0.0, 0.5))
        return scipy.special.ndtr((x - self.mean) / s)

    def with_populations(self, populations: np.ndarray) -> "SpectrumData":
        return SpectrumData(self.eigenvalues, populations, self.n_sites, self.eigenvectors)

    def write_csv(self, path, meta: Optional[dict] = None) -> None:
        """Two-column CSV ``energy,population`` preceded by ``#`` metadata lines."""
        with open(path, "w", newline="") as fh:
            for key, val in sorted((meta or {}).items()):
                fh.write(f"# {key}: {val}\n")
            fh.write("# columns: energy,population\n")
            w = csv.writer(fh)
            w.writerow(["energy", "population"])
            for e, p in zip(self.eigenvalues, self.populations):
                w.writerow([repr(float(e)), repr(float(p))])


def _eigh(spec: HamiltonianSpec):
    if spec.n_sites > MAX_DENSE_SITES:
        raise ValueError(f"exact diagonalization limited to N <= {MAX_DENSE_SITES}, got {spec.n_sites}")
    H = build_dense(spec)
    if np.abs(H.imag).max() == 0.0:
        return scipy.linalg.eigh(H.real)
    return scipy.linalg.eigh(H)


def diagonalize(spec: HamiltonianSpec, state: Union[MpsState, np.ndarray],
                keep_vectors: bool = False) -> SpectrumData:
    """Energy distribution of ``state`` under ``spec``'s Hamiltonian."""
    if spec.n_sites > MAX_DENSE_SITES:
        raise ValueError(f"exact diagonalization limited to N <= {MAX_DENSE_SITES}, got {spec.n_sites}")
    psi = state.to_dense() if isinstance(state, MpsState) else np.asarray(state, dtype=np.complex128)
    if psi.size != 2 ** spec.n_sites:
        raise ValueError("state dimension does not match the Hamiltonian")
    psi = psi / np.linalg.norm(psi)
    evals, evecs = _eigh(spec)
    amps = evecs.conj().T @ psi
    pops = np.abs(amps) ** 2
    pops = pops / pops.sum()
    return SpectrumData(evals, pops, spec.n_sites, evecs if keep_vectors else None)


def berry_esseen_error(data: SpectrumData) -> Tuple[float, float]:
    """``zeta = sup_x |J(x) - G(x)|`` and the jump point where it is attained.

    Between atoms ``J`` is constant and ``G`` monotone, so the supremum is
    reached at an atom, approached either from the left or taken at the
    atom. A point mass (``sigma = 0``) uses the limiting step ``G`` with
    ``G(E) = 1/2``.
    """
    e = data.eigenvalues
    cum = np.cumsum(data.populations)
    right = cum
    left = np.concatenate([[0.0], cum[:-1]])
    g = data.gaussian_cdf(e)
    diff = np.maximum(np.abs(right - g), np.abs(left - g))
    j = int(np.argmax(diff))
    return float(diff[j]), float(e[j])


def characteristic_function(data: SpectrumData, t_grid: Iterable[float]) -> np.ndarray:
    """``phi(t') = sum_j |b_j|^2 exp(i t' (E_j - E) / sigma)``."""
    t = np.asarray(list(t_grid) if not isinstance(t_grid, np.ndarray) else t_grid, dtype=float)
    s = data.std_dev
    if s == 0.0:
        return np.ones_like(t, dtype=np.complex128)
    x = (data.eigenvalues - data.mean) / s
    return np.exp(1j * np.outer(t, x)) @ data.populations


class GaussianityFit(NamedTuple):
    coefficient: float
    scaled: float
    t_max: float
    residual: float


def gaussianity_deviation_fit(data: SpectrumData, t_max: float = 0.6, n_points: int = 60) -> GaussianityFit:
    """Least-squares fit ``|log phi(t') + t'^2/2| ~ c t'^3`` on ``(0, t_max]``.

    ``scaled`` is ``c * sigma^3 / N``, which stays of order one when the
    deviation from Gaussianity is governed by an extensive third cumulant.
    """
    t = np.linspace(t_max / n_points, t_max, n_points)
    phi = characteristic_function(data, t)
    logphi = np.log(np.abs(phi)) + 1j * np.unwrap(np.angle(phi))
    dev = np.abs(logphi + t ** 2 / 2)
    basis = t ** 3
    c = float(np.dot(basis, dev) / np.dot(basis, basis))
    resid = float(np.linalg.norm(dev - c * basis) / max(np.linalg.norm(dev), 1e-300))
    s = data.std_dev
    return GaussianityFit(c, c * s ** 3 / data.n_sites, t_max, resid)


def _g_exact(x: np.ndarray, M: int, y: float) -> np.ndarray:
    """Truncated binomial series evaluated with exact rational weights."""
    h = M // 2
    mmax = min(int(math.floor(y * math.sqrt(M))), h)
    denom = 1 << M
    acc = np.zeros_like(x, dtype=np.complex128)
    for m in range(-mmax, mmax + 1):
        w = Fraction(math.comb(M, h - m), denom)
        acc += float(w) * np.exp(2j * m * x)
    return acc


class FilteredMoments(NamedTuple):
    mu: float
    delta2: float
    norm2: float


def exact_filtered_moments(data: SpectrumData, params) -> FilteredMoments:
    """Mean, variance and squared norm after the truncated filter, by direct sums.

    ``norm2 = sum_j |b_j|^2 |g_y((E_j - E) / N)|^2``. Weights are exact
    rationals and the series is summed term by term with complex exponentials.
    """
    denom = params.denominator if getattr(params, "denominator", None) else data.n_sites
    x = (data.eigenvalues - params.E_center) / denom
    g = _g_exact(x, params.M, params.y)
    p = data.populations * np.abs(g) ** 2
    norm2 = float(p.sum())
    if norm2 == 0.0:
        raise ZeroDivisionError("filtered state has zero norm")
    mu = float(np.dot(p, data.eigenvalues) / norm2)
    d = data.eigenvalues - mu
    delta2 = float(np.dot(p, d * d) / norm2)
    return FilteredMoments(mu, delta2, norm2)


def half_chain_renyi2(vectors: np.ndarray, n_sites: int, cut: Optional[int] = None,
                      chunk: int = 512) -> np.ndarray:
    """Renyi-2 entropy across ``cut`` (default ``N // 2``) for each column."""
    cut = n_sites // 2 if cut is None else cut
    dA, dB = 2 ** cut, 2 ** (n_sites - cut)
    out = np.empty(vectors.shape[1])
    for start in range(0, vectors.shape[1], chunk):
        block = vectors[:, start:start + chunk]
        Ms = block.T.reshape(-1, dA, dB)
        if dA <= dB:
            rho = Ms @ Ms.conj().transpose(0, 2, 1)
        else:
            rho = Ms.conj().transpose(0, 2, 1) @ Ms
        purity = np.sum(np.abs(rho) ** 2, axis=(1, 2))
        out[start:start + chunk] = -np.log(purity)
    return out


@dataclass
class PopulationBoundReport:
    """Per-eigenstate check of ``|b_j|^2 <= exp(-S_2(E_j) / 2)``."""

    eigenvalues: np.ndarray
    populations: np.ndarray
    renyi2: np.ndarray
    cut: int

    @property
    def bound(self) -> np.ndarray:
        return np.exp(-self.renyi2 / 2)

    @property
    def slack(self) -> np.ndarray:
        return self.bound - self.populations

    @property
    def holds(self) -> bool:
        return bool(np.all(self.slack >= -1e-12))

    @property
    def n_states(self) -> int:
        return self.eigenvalues.size

    def summary(self) -> dict:
        sl = self.slack
        return {"n_states": int(self.n_states), "holds": self.holds, "cut": self.cut,
                "min_slack": float(sl.min()), "median_slack": float(np.median(sl)),
                "max_population": float(self.populations.max()),
                "max_renyi2": float(self.renyi2.max())}


def eigenstate_population_bound_check(spec: HamiltonianSpec, data: SpectrumData,
                                      cut: Optional[int] = None) -> PopulationBoundReport:
    """Compare every eigenstate population with its half-chain Renyi-2 bound."""
    if spec.n_sites > 12:
        raise ValueError(f"population bound check limited to N <= 12, got {spec.n_sites}")
    vecs = data.eigenvectors
    if vecs is None:
        evals, vecs = _eigh(spec)
        if not np.allclose(evals, data.eigenvalues, atol=1e-10):
            raise ValueError("spectrum does not belong to this Hamiltonian")
    cut = spec.n_sites // 2 if cut is None else cut
    s2 = half_chain_renyi2(vecs, spec.n_sites, cut)
    return PopulationBoundReport(data.eigenvalues, data.populations, s2, cut)
