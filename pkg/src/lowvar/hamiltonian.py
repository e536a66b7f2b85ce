"""Nearest-neighbour spin-1/2 chain Hamiltonians ``H = sum_i h_i`` with ``||h_i|| <= 1``.

Three families are supported (Pauli-matrix conventions, open boundaries):

* ``"ising"``  -- ``J sum Z_i Z_{i+1} + g sum X_i + h sum Z_i``
* ``"xxz"``    -- ``Jx sum (X_i X_{i+1} + Y_i Y_{i+1}) + Jz sum Z_i Z_{i+1} + h sum Z_i``
* ``"field"``  -- ``sum Z_i`` (non-interacting)

For the interacting models the local terms are the bond operators, each
carrying its share of the one-site fields (half a field on interior sites,
the full field on the two boundary sites). A single global factor rescales
``H`` so that the largest bond term has operator norm exactly one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Tuple

import numpy as np

from .mps import MpoOperator

__all__ = [
    "HamiltonianSpec",
    "PAULI",
    "build_mpo",
    "build_dense",
    "local_terms",
    "MAX_DENSE_SITES",
]

MAX_DENSE_SITES = 14

PAULI = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}

_DEFAULT_COUPLINGS = {
    "ising": {"J": 1.0, "g": 1.05, "h": 0.5},
    "xxz": {"Jx": 1.0, "Jz": 1.0, "h": 0.0},
    "field": {},
}


@dataclass(frozen=True)
class HamiltonianSpec:
    """Symbolic description of a 1D local Hamiltonian.

    Parameters
    ----------
    n_sites : int
        Chain length ``N``.
    model : str
        ``"ising"``, ``"xxz"`` or ``"field"``.
    couplings : dict
        Model parameters; missing keys fall back to the model defaults
        (Ising ``J=1, g=1.05, h=0.5``; XXZ ``Jx=Jz=1, h=0``).
    normalize : bool
        Rescale so that every local term has ``||h_i|| <= 1``.
    """

    n_sites: int
    model: str = "ising"
    couplings: Tuple[Tuple[str, float], ...] = ()
    normalize: bool = True

    def __init__(self, n_sites: int, model: str = "ising", couplings=None, normalize: bool = True):
        if model not in _DEFAULT_COUPLINGS:
            raise ValueError(f"unsupported model {model!r}; expected one of {sorted(_DEFAULT_COUPLINGS)}")
        if n_sites < 1:
            raise ValueError("n_sites must be positive")
        if model != "field" and n_sites < 2:
            raise ValueError(f"interacting model {model!r} needs n_sites >= 2")
        merged = dict(_DEFAULT_COUPLINGS[model])
        for key, val in dict(couplings or {}).items():
            if key not in merged:
                raise ValueError(f"unknown coupling {key!r} for model {model!r}")
            merged[key] = float(val)
        object.__setattr__(self, "n_sites", int(n_sites))
        object.__setattr__(self, "model", model)
        object.__setattr__(self, "couplings", tuple(sorted(merged.items())))
        object.__setattr__(self, "normalize", bool(normalize))

    @property
    def params(self) -> Dict[str, float]:
        return dict(self.couplings)

    @cached_property
    def _raw_terms(self) -> List[Tuple[int, np.ndarray]]:
        return _raw_local_terms(self.n_sites, self.model, self.params)

    @cached_property
    def scale(self) -> float:
        """Global factor multiplying the raw couplings."""
        if not self.normalize:
            return 1.0
        top = max((_opnorm(h) for _, h in self._raw_terms), default=0.0)
        return 1.0 / top if top > 0 else 1.0

    @cached_property
    def norm_bound(self) -> float:
        """Sum of local-term operator norms, an upper bound for ``||H||``."""
        return float(sum(_opnorm(h) for _, h in local_terms(self)))

    def with_sites(self, n_sites: int) -> "HamiltonianSpec":
        return HamiltonianSpec(n_sites, self.model, self.params, self.normalize)

    def to_dict(self) -> dict:
        return {"n_sites": self.n_sites, "model": self.model,
                "couplings": self.params, "normalize": self.normalize}


def _opnorm(mat: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvalsh(mat)))) if mat.size else 0.0


def _raw_local_terms(n: int, model: str, p: Dict[str, float]) -> List[Tuple[int, np.ndarray]]:
    X, Y, Z, I = PAULI["X"], PAULI["Y"], PAULI["Z"], PAULI["I"]
    if model == "field":
        return [(i, Z.copy()) for i in range(n)]
    if model == "ising":
        bond = p["J"] * np.kron(Z, Z)
        site = p["g"] * X + p["h"] * Z
    else:
        bond = p["Jx"] * (np.kron(X, X) + np.kron(Y, Y)) + p["Jz"] * np.kron(Z, Z)
        site = p["h"] * Z
    terms = []
    for b in range(n - 1):
        fl = 1.0 if b == 0 else 0.5
        fr = 1.0 if b == n - 2 else 0.5
        terms.append((b, bond + fl * np.kron(site, I) + fr * np.kron(I, site)))
    return terms


def local_terms(spec: HamiltonianSpec) -> List[Tuple[int, np.ndarray]]:
    """Normalized local terms as ``(first_site, matrix)`` pairs.

    Matrices act on one site (``field``) or two adjacent sites.
    """
    return [(i, spec.scale * h) for i, h in spec._raw_terms]


def build_dense(spec: HamiltonianSpec) -> np.ndarray:
    """Full ``2^N x 2^N`` matrix of the normalized Hamiltonian."""
    n = spec.n_sites
    if n > MAX_DENSE_SITES:
        raise ValueError(f"dense build limited to N <= {MAX_DENSE_SITES}, got {n}")
    dim = 2 ** n
    H = np.zeros((dim, dim), dtype=np.complex128)
    for i, h in local_terms(spec):
        k = int(round(math.log2(h.shape[0])))
        H += np.kron(np.kron(np.eye(2 ** i), h), np.eye(2 ** (n - i - k)))
    return H


def build_mpo(spec: HamiltonianSpec) -> MpoOperator:
    """Finite-state-machine MPO of the normalized Hamiltonian.

    Virtual index 0 is the "done" state and the last index the "not started"
    state. Bond dimension is 2 for the field model, 3 for Ising and 5 for XXZ.
    The bond-term field shares add back up to one full field per site.
    """
    n = spec.n_sites
    s = spec.scale
    p = spec.params
    X, Y, Z, I = PAULI["X"], PAULI["Y"], PAULI["Z"], PAULI["I"]
    if spec.model == "field":
        links = []
        field_ops = [s * Z] * n
    elif spec.model == "ising":
        links = [(s * p["J"] * Z, Z)]
        field_ops = [s * (p["g"] * X + p["h"] * Z)] * n
    else:
        links = [(s * p["Jx"] * X, X), (s * p["Jx"] * Y, Y), (s * p["Jz"] * Z, Z)]
        field_ops = [s * p["h"] * Z] * n
    w = len(links) + 2
    tensors = []
    for i in range(n):
        W = np.zeros((w, 2, 2, w), dtype=np.complex128)
        # W[a, :, :, b]: a = left virtual, b = right virtual.
        W[w - 1, :, :, w - 1] = I
        W[0, :, :, 0] = I
        W[w - 1, :, :, 0] = field_ops[i]
        for k, (left_op, right_op) in enumerate(links, start=1):
            W[w - 1, :, :, k] = left_op
            W[k, :, :, 0] = right_op
        if i == 0:
            W = W[w - 1:w]
        if i == n - 1:
            W = W[..., 0:1]
        tensors.append(W)
    return MpoOperator(tensors)

