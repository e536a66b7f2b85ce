"""Open-boundary matrix product states and operators.

Tensor conventions
------------------
* MPS site tensors have legs ``(left, physical, right)``.
* MPO site tensors have legs ``(left, out, in, right)``, so an MPO acting on
  an MPS contracts its ``in`` leg with the state's physical leg.
* A *cut* ``k`` (``1 <= k <= N-1``) separates sites ``[0, k)`` from
  ``[k, N)``; it sits on the bond to the right of site ``k - 1``.

States are kept with unit-norm tensors and a separate ``log_norm`` so that
heavily damped filter outputs do not underflow.
"""

from __future__ import annotations

import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from .tensor import TruncationPolicy, truncated_svd

__all__ = [
    "MpsState",
    "MpoOperator",
    "product_state",
    "apply_mpo",
    "weighted_sum",
    "weighted_sum_with_error",
    "combine",
    "expectation",
    "renyi_entropy",
    "schmidt_spectra",
    "mpo_product",
    "mpo_linear_combination",
    "compress_mpo",
    "save_tensor_train",
    "load_tensor_train",
]

_EXACT = TruncationPolicy.exact()


# ---------------------------------------------------------------------------
# shared sweep kernels


def _right_orthonormalize(tensors: List[np.ndarray]) -> List[np.ndarray]:
    """QR sweep from the right; all but site 0 become right isometries."""
    ts = list(tensors)
    for i in range(len(ts) - 1, 0, -1):
        dl, d, dr = ts[i].shape
        q, r = scipy.linalg.qr(ts[i].reshape(dl, d * dr).T, mode="economic")
        k = q.shape[1]
        ts[i] = q.T.reshape(k, d, dr)
        ts[i - 1] = np.tensordot(ts[i - 1], r.T, axes=(2, 0))
    return ts


def _compress_train(tensors: Sequence[np.ndarray], policy: TruncationPolicy):
    """Canonicalize and truncate a tensor train left to right.

    Returns ``(tensors, norm, discarded)``. The returned tensors have unit
    norm with all sites but the last left-isometric; ``norm`` is the norm of
    the truncated train and ``discarded`` the dropped squared weight relative
    to the norm of the input. Successive truncations are orthogonal, so
    ``discarded`` is exactly the relative squared error.
    """
    ts = _right_orthonormalize(tensors)
    n = len(ts)
    total = float(np.vdot(ts[0], ts[0]).real)
    if total == 0.0 or not np.isfinite(total):
        if not np.isfinite(total):
            raise np.linalg.LinAlgError("non-finite tensor train")
        return [np.zeros((1, t.shape[1], 1), dtype=np.complex128) for t in ts], 0.0, 0.0
    current = total
    discarded = 0.0
    for i in range(n - 1):
        dl, d, dr = ts[i].shape
        u, s, vh, w = truncated_svd(ts[i].reshape(dl * d, dr), policy)
        discarded += w * current / total
        current *= 1.0 - w
        k = s.size
        ts[i] = u.reshape(dl, d, k)
        ts[i + 1] = np.tensordot(s[:, None] * vh, ts[i + 1], axes=(1, 0))
    norm = float(np.linalg.norm(ts[-1]))
    if norm > 0.0:
        ts[-1] = ts[-1] / norm
    return ts, norm, discarded


def _direct_sum(trains: Sequence[Sequence[np.ndarray]]) -> List[np.ndarray]:
    """Tensor train of the sum of several trains (block-diagonal bonds)."""
    if len(trains) == 1:
        return list(trains[0])
    n = len(trains[0])
    if n == 1:
        return [sum(t[0] for t in trains)]
    out = []
    for i in range(n):
        blocks = [t[i] for t in trains]
        phys = blocks[0].shape[1:-1]
        if i == 0:
            out.append(np.concatenate(blocks, axis=-1))
        elif i == n - 1:
            out.append(np.concatenate(blocks, axis=0))
        else:
            dl = sum(b.shape[0] for b in blocks)
            dr = sum(b.shape[-1] for b in blocks)
            big = np.zeros((dl,) + phys + (dr,), dtype=np.complex128)
            ol = orr = 0
            for b in blocks:
                big[ol:ol + b.shape[0], ..., orr:orr + b.shape[-1]] = b
                ol += b.shape[0]
                orr += b.shape[-1]
            out.append(big)
    return out


def _apply_raw(op_tensors: Sequence[np.ndarray], state_tensors: Sequence[np.ndarray]):
    out = []
    for W, A in zip(op_tensors, state_tensors):
        wl, do, di, wr = W.shape
        al, _, ar = A.shape
        B = np.einsum("aoib,xiy->axoby", W, A, optimize=True)
        out.append(B.reshape(wl * al, do, wr * ar))
    return out


# ---------------------------------------------------------------------------
# operators


class MpoOperator:
    """Matrix product operator with site tensors ``(left, out, in, right)``."""

    def __init__(self, tensors: Sequence[np.ndarray]):
        ts = [np.asarray(t, dtype=np.complex128) for t in tensors]
        if not ts:
            raise ValueError("an MPO needs at least one site")
        for i, t in enumerate(ts):
            if t.ndim != 4:
                raise ValueError(f"MPO tensor {i} has {t.ndim} legs, expected 4")
        if ts[0].shape[0] != 1 or ts[-1].shape[-1] != 1:
            raise ValueError("boundary bonds of an MPO must have dimension 1")
        for i in range(len(ts) - 1):
            if ts[i].shape[-1] != ts[i + 1].shape[0]:
                raise ValueError(f"bond mismatch between sites {i} and {i + 1}")
        self.tensors = ts

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> List[int]:
        return [t.shape[-1] for t in self.tensors[:-1]]

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims, default=1)

    @property
    def phys_dims(self) -> List[int]:
        return [t.shape[2] for t in self.tensors]

    @classmethod
    def identity(cls, n_sites: int, d: int = 2) -> "MpoOperator":
        eye = np.eye(d, dtype=np.complex128).reshape(1, d, d, 1)
        return cls([eye.copy() for _ in range(n_sites)])

    @classmethod
    def from_dense(cls, matrix: np.ndarray, n_sites: int, d: int = 2,
                   policy: TruncationPolicy = _EXACT) -> "MpoOperator":
        op = np.asarray(matrix, dtype=np.complex128).reshape([d] * (2 * n_sites))
        perm = [x for i in range(n_sites) for x in (i, n_sites + i)]
        vec = op.transpose(perm).reshape(1, -1, 1)
        tensors, norm, _ = _split_vector(vec.reshape(-1), n_sites, d * d, policy)
        tensors[-1] = norm * tensors[-1]
        return cls([t.reshape(t.shape[0], d, d, t.shape[-1]) for t in tensors])

    def to_dense(self) -> np.ndarray:
        n = self.n_sites
        acc = self.tensors[0]
        for t in self.tensors[1:]:
            acc = np.tensordot(acc, t, axes=(-1, 0))
        # acc legs: 1, o0, i0, o1, i1, ..., 1
        acc = acc.reshape(acc.shape[1:-1])
        perm = list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))
        dim = math.prod(self.phys_dims)
        return acc.transpose(perm).reshape(dim, dim)

    def dagger(self) -> "MpoOperator":
        return MpoOperator([t.conj().transpose(0, 2, 1, 3) for t in self.tensors])

    def scaled(self, alpha: complex) -> "MpoOperator":
        ts = [t.copy() for t in self.tensors]
        ts[0] = alpha * ts[0]
        return MpoOperator(ts)

    def frobenius_norm(self) -> float:
        return float(np.sqrt(max(_train_overlap(self._as_train(), self._as_train()).real, 0.0)))

    def _as_train(self) -> List[np.ndarray]:
        return [t.reshape(t.shape[0], t.shape[1] * t.shape[2], t.shape[3]) for t in self.tensors]

    @classmethod
    def _from_train(cls, train, d_out: Sequence[int], d_in: Sequence[int]) -> "MpoOperator":
        return cls([t.reshape(t.shape[0], do, di, t.shape[-1]) for t, do, di in zip(train, d_out, d_in)])

    def __repr__(self):
        return f"MpoOperator(n_sites={self.n_sites}, bond_dims={self.bond_dims})"


def mpo_product(a: MpoOperator, b: MpoOperator) -> MpoOperator:
    """The operator ``a @ b`` (``b`` acts first), bonds multiply."""
    if a.n_sites != b.n_sites:
        raise ValueError("MPO length mismatch")
    out = []
    for A, B in zip(a.tensors, b.tensors):
        if A.shape[2] != B.shape[1]:
            raise ValueError("physical dimension mismatch in MPO product")
        C = np.einsum("aopb,xpiy->axoiby", A, B, optimize=True)
        al, bl, do, di, ar, br = C.shape
        out.append(C.reshape(al * bl, do, di, ar * br))
    return MpoOperator(out)


def mpo_linear_combination(terms: Sequence[Tuple[complex, MpoOperator]]) -> MpoOperator:
    """Uncompressed ``sum_i w_i O_i`` via block-diagonal bonds."""
    if not terms:
        raise ValueError("empty linear combination")
    trains = []
    for w, op in terms:
        tr = op._as_train()
        tr[0] = w * tr[0]
        trains.append(tr)
    ref = terms[0][1]
    d_out = [t.shape[1] for t in ref.tensors]
    d_in = [t.shape[2] for t in ref.tensors]
    return MpoOperator._from_train(_direct_sum(trains), d_out, d_in)


def compress_mpo(op: MpoOperator, policy: TruncationPolicy) -> Tuple[MpoOperator, float]:
    """SVD-sweep compression in the Frobenius (Hilbert-Schmidt) geometry.

    Returns ``(compressed, frobenius_error)`` where ``frobenius_error`` is the
    absolute Hilbert-Schmidt distance between input and output, an upper bound
    on the operator-norm change.
    """
    d_out = [t.shape[1] for t in op.tensors]
    d_in = [t.shape[2] for t in op.tensors]
    train, norm, discarded = _compress_train(op._as_train(), policy)
    error = norm * math.sqrt(discarded / max(1.0 - discarded, 1e-300)) if discarded > 0 else 0.0
    train[-1] = norm * train[-1]
    return MpoOperator._from_train(train, d_out, d_in), error


# ---------------------------------------------------------------------------
# states


@dataclass(frozen=True, eq=False)
class MpsState:
    """Normalized tensor train plus bookkeeping.

    Attributes
    ----------
    tensors : tuple of ndarray
        Site tensors ``(left, physical, right)`` of the unit-norm state.
    canonical_center : int or None
        Site holding the orthogonality centre, if the train is in mixed
        canonical form.
    cumulative_discarded_weight : float
        Sum of relative squared weights dropped by every truncation that
        produced this state.
    log_norm : float
        Logarithm of the norm of the vector this object stands for; ``-inf``
        for the zero vector.
    """

    tensors: Tuple[np.ndarray, ...]
    canonical_center: Optional[int] = None
    cumulative_discarded_weight: float = 0.0
    log_norm: float = 0.0

    def __post_init__(self):
        ts = tuple(np.asarray(t, dtype=np.complex128) for t in self.tensors)
        if not ts:
            raise ValueError("an MPS needs at least one site")
        for i, t in enumerate(ts):
            if t.ndim != 3:
                raise ValueError(f"MPS tensor {i} has {t.ndim} legs, expected 3")
        if ts[0].shape[0] != 1 or ts[-1].shape[-1] != 1:
            raise ValueError("boundary bonds of an MPS must have dimension 1")
        for i in range(len(ts) - 1):
            if ts[i].shape[-1] != ts[i + 1].shape[0]:
                raise ValueError(f"bond mismatch between sites {i} and {i + 1}")
        object.__setattr__(self, "tensors", ts)

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> List[int]:
        return [t.shape[-1] for t in self.tensors[:-1]]

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims, default=1)

    @property
    def phys_dims(self) -> List[int]:
        return [t.shape[1] for t in self.tensors]

    @property
    def norm(self) -> float:
        return math.exp(self.log_norm) if self.log_norm > -math.inf else 0.0

    @property
    def is_zero(self) -> bool:
        return self.log_norm == -math.inf

    def to_dense(self, include_norm: bool = False) -> np.ndarray:
        acc = self.tensors[0]
        for t in self.tensors[1:]:
            acc = np.tensordot(acc, t, axes=(-1, 0))
        vec = acc.reshape(-1)
        return vec * self.norm if include_norm else vec

    @classmethod
    def from_dense(cls, vector: np.ndarray, n_sites: int, d: int = 2,
                   policy: TruncationPolicy = _EXACT) -> "MpsState":
        vec = np.asarray(vector, dtype=np.complex128).reshape(-1)
        if vec.size != d ** n_sites:
            raise ValueError(f"vector of length {vec.size} is not {d}^{n_sites}")
        tensors, norm, discarded = _split_vector(vec, n_sites, d, policy)
        log_norm = math.log(norm) if norm > 0 else -math.inf
        return cls(tuple(tensors), canonical_center=n_sites - 1,
                   cumulative_discarded_weight=discarded, log_norm=log_norm)

    def canonicalize(self, center: int) -> "MpsState":
        """Mixed canonical form about ``center``; the state itself is unchanged."""
        n = self.n_sites
        if not 0 <= center < n:
            raise ValueError(f"centre {center} outside [0, {n})")
        ts = _right_orthonormalize(self.tensors)
        for i in range(center):
            dl, d, dr = ts[i].shape
            q, r = scipy.linalg.qr(ts[i].reshape(dl * d, dr), mode="economic")
            ts[i] = q.reshape(dl, d, q.shape[1])
            ts[i + 1] = np.tensordot(r, ts[i + 1], axes=(1, 0))
        nrm = float(np.linalg.norm(ts[center]))
        if nrm > 0:
            ts[center] = ts[center] / nrm
        return replace(self, tensors=tuple(ts), canonical_center=center)

    def compress(self, policy: TruncationPolicy) -> "MpsState":
        ts, norm, discarded = _compress_train(self.tensors, policy)
        return _wrap(ts, norm, self.log_norm, self.cumulative_discarded_weight + discarded)

    def is_left_isometry(self, site: int, tol: float = 1e-10) -> bool:
        t = self.tensors[site]
        m = t.reshape(-1, t.shape[-1])
        return bool(np.allclose(m.conj().T @ m, np.eye(m.shape[1]), atol=tol))

    def is_right_isometry(self, site: int, tol: float = 1e-10) -> bool:
        t = self.tensors[site]
        m = t.reshape(t.shape[0], -1)
        return bool(np.allclose(m @ m.conj().T, np.eye(m.shape[0]), atol=tol))

    def stored_norm(self) -> float:
        """Norm of the tensor train itself (1 for a valid nonzero state)."""
        return float(np.sqrt(max(_train_overlap(self.tensors, self.tensors).real, 0.0)))

    def overlap(self, other: "MpsState") -> complex:
        """``<self|other>`` of the unit-norm trains (``log_norm`` ignored)."""
        return complex(_train_overlap(self.tensors, other.tensors))

    def __repr__(self):
        return (f"MpsState(n_sites={self.n_sites}, bond_dims={self.bond_dims}, "
                f"log_norm={self.log_norm:.6g}, discarded={self.cumulative_discarded_weight:.3g})")


def _wrap(ts, norm: float, log_offset: float, discarded: float) -> MpsState:
    if norm == 0.0 or log_offset == -math.inf:
        return MpsState(tuple(ts), canonical_center=len(ts) - 1,
                        cumulative_discarded_weight=discarded, log_norm=-math.inf)
    return MpsState(tuple(ts), canonical_center=len(ts) - 1,
                    cumulative_discarded_weight=discarded, log_norm=log_offset + math.log(norm))


def _split_vector(vec: np.ndarray, n_sites: int, d: int, policy: TruncationPolicy):
    """Sequential SVDs of a dense vector into a left-canonical train."""
    total = float(np.vdot(vec, vec).real)
    tensors = []
    rest = vec.reshape(1, -1)
    discarded = 0.0
    current = total
    for i in range(n_sites - 1):
        dl = rest.shape[0]
        mat = rest.reshape(dl * d, -1)
        u, s, vh, w = truncated_svd(mat, policy)
        if total > 0:
            discarded += w * current / total
            current *= 1.0 - w
        tensors.append(u.reshape(dl, d, s.size))
        rest = s[:, None] * vh
    last = rest.reshape(rest.shape[0], d, 1)
    norm = float(np.linalg.norm(last))
    tensors.append(last / norm if norm > 0 else last)
    return tensors, norm, discarded


def _train_overlap(bra: Sequence[np.ndarray], ket: Sequence[np.ndarray]) -> complex:
    env = np.ones((1, 1), dtype=np.complex128)
    for b, k in zip(bra, ket):
        env = np.einsum("xy,xpa,ypb->ab", env, b.conj(), k, optimize=True)
    return env[0, 0]


def product_state(local_vectors: Sequence[np.ndarray], tol: float = 1e-12) -> MpsState:
    """Bond-dimension-1 MPS ``|p_1> (x) |p_2> (x) ...``."""
    tensors = []
    for i, v in enumerate(local_vectors):
        v = np.asarray(v, dtype=np.complex128).reshape(-1)
        if abs(np.linalg.norm(v) - 1.0) > tol:
            raise ValueError(f"local vector {i} has norm {np.linalg.norm(v)}, expected 1")
        tensors.append(v.reshape(1, -1, 1))
    if not tensors:
        raise ValueError("need at least one site")
    return MpsState(tuple(tensors), canonical_center=0)


def _check_compatible(op: MpoOperator, state: MpsState):
    if op.n_sites != state.n_sites:
        raise ValueError(f"MPO has {op.n_sites} sites, state has {state.n_sites}")
    for i, (W, A) in enumerate(zip(op.tensors, state.tensors)):
        if W.shape[2] != A.shape[1]:
            raise ValueError(f"physical dimension mismatch at site {i}")


def apply_mpo(op: MpoOperator, state: MpsState, policy: TruncationPolicy) -> MpsState:
    """``op |state>`` followed by SVD-sweep compression."""
    _check_compatible(op, state)
    raw = _apply_raw(op.tensors, state.tensors)
    ts, norm, discarded = _compress_train(raw, policy)
    return _wrap(ts, norm, state.log_norm, state.cumulative_discarded_weight + discarded)


def _sum_pair(terms: Sequence[Tuple[complex, MpsState]], policy: TruncationPolicy):
    amps = [(w, s) for w, s in terms if w != 0 and not s.is_zero]
    base_discarded = sum(s.cumulative_discarded_weight for _, s in terms)
    if not amps:
        zeros = [np.zeros((1, di, 1), dtype=np.complex128) for di in terms[0][1].phys_dims]
        return MpsState(tuple(zeros), canonical_center=None,
                        cumulative_discarded_weight=base_discarded, log_norm=-math.inf), 0.0
    logs = [math.log(abs(w)) + s.log_norm for w, s in amps]
    top = max(logs)
    trains = []
    for (w, s), lg in zip(amps, logs):
        ts = list(s.tensors)
        ts[0] = (w / abs(w)) * math.exp(lg - top) * ts[0]
        trains.append(ts)
    ts, norm, discarded = _compress_train(_direct_sum(trains), policy)
    return _wrap(ts, norm, top, base_discarded + discarded), _abs_error(norm, discarded, top)


def combine(terms, policy: TruncationPolicy) -> Tuple[MpsState, float]:
    """One-shot compressed linear combination.

    ``terms`` holds ``(w, state)`` or ``(w, op, state)`` entries, the latter
    meaning ``w * op|state>``. All pieces are stacked into a single train and
    compressed once. Returns ``(state, error)`` with ``error`` the absolute
    norm of the compression error.
    """
    trains, logs, weights = [], [], []
    for item in terms:
        if len(item) == 2:
            w, st = item
            raw = list(st.tensors)
        else:
            w, op, st = item
            _check_compatible(op, st)
            raw = _apply_raw(op.tensors, st.tensors)
        if w == 0 or st.is_zero:
            continue
        trains.append(raw)
        logs.append(math.log(abs(w)) + st.log_norm)
        weights.append(complex(w))
    if not trains:
        raise ValueError("linear combination has no nonzero terms")
    top = max(logs)
    for tr, w, lg in zip(trains, weights, logs):
        tr[0] = (w / abs(w)) * math.exp(lg - top) * tr[0]
    ts, norm, discarded = _compress_train(_direct_sum(trains), policy)
    error = _abs_error(norm, discarded, top)
    base = sum(item[-1].cumulative_discarded_weight for item in terms)
    return _wrap(ts, norm, top, base + discarded), error


def _abs_error(norm: float, discarded: float, log_offset: float) -> float:
    if discarded <= 0.0:
        return 0.0
    return math.exp(log_offset) * norm * math.sqrt(discarded / max(1.0 - discarded, 1e-300))


def weighted_sum_with_error(terms: Sequence[Tuple[complex, MpsState]], policy: TruncationPolicy,
                            threads: int = 1) -> Tuple[MpsState, float]:
    """:func:`weighted_sum` that also returns the accumulated absolute
    compression error of the merges (triangle inequality over the tree)."""
    terms = [(complex(w), s) for w, s in terms]
    if not terms:
        raise ValueError("weighted_sum needs at least one term")
    n = terms[0][1].n_sites
    if any(s.n_sites != n for _, s in terms):
        raise ValueError("all states must have the same number of sites")
    if len(terms) == 1:
        w, s = terms[0]
        if w == 1:
            return s, 0.0
        return _sum_pair([(w, s)], policy)

    def amp(item):
        w, s = item[1]
        return -(math.log(abs(w)) + s.log_norm) if w != 0 and not s.is_zero else math.inf

    order = sorted(enumerate(terms), key=lambda it: (amp(it), it[0]))
    level = [t for _, t in order]
    error = 0.0
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        while len(level) > 1:
            pairs = [level[i:i + 2] for i in range(0, len(level), 2)]
            if pool is not None:
                merged = list(pool.map(lambda p: _sum_pair(p, policy), pairs))
            else:
                merged = [_sum_pair(p, policy) for p in pairs]
            error += sum(e for _, e in merged)
            level = [(1.0, m) for m, _ in merged]
    finally:
        if pool is not None:
            pool.shutdown()
    return level[0][1], error


def weighted_sum(terms: Sequence[Tuple[complex, MpsState]], policy: TruncationPolicy,
                 threads: int = 1) -> MpsState:
    """Compressed ``sum_i w_i |psi_i>``, reduced pairwise in tree order.

    Terms are sorted by effective amplitude ``|w_i| * norm_i`` (largest
    first, ties by input position) and merged as neighbouring pairs, level by
    level, with compression after every merge. The reduction order depends
    only on the inputs, so ``threads > 1`` gives bit-identical results.
    """
    return weighted_sum_with_error(terms, policy, threads)[0]


def _expect_tensors(bra, op_tensors, ket) -> complex:
    env = np.ones((1, 1, 1), dtype=np.complex128)
    for B, W, K in zip(bra, op_tensors, ket):
        env = np.einsum("xwy,xoa,woib,yic->abc", env, B.conj(), W, K, optimize=True)
    return env[0, 0, 0]


def expectation(state: MpsState, op: MpoOperator) -> complex:
    """``<psi|op|psi> / <psi|psi>`` for the state's direction."""
    _check_compatible(op, state)
    if state.is_zero:
        raise ValueError("expectation value of the zero state is undefined")
    num = _expect_tensors(state.tensors, op.tensors, state.tensors)
    den = _train_overlap(state.tensors, state.tensors).real
    return complex(num / den)


def schmidt_spectra(state: MpsState) -> List[np.ndarray]:
    """Schmidt coefficients (singular values) at every cut ``k = 1..N-1``.

    Entry ``k - 1`` holds the normalized singular values across cut ``k``.
    """
    ts = _right_orthonormalize(state.tensors)
    out = []
    for i in range(state.n_sites - 1):
        dl, d, dr = ts[i].shape
        u, s, vh, _ = truncated_svd(ts[i].reshape(dl * d, dr), _EXACT)
        nrm = float(np.linalg.norm(s))
        out.append(s / nrm if nrm > 0 else s)
        ts[i] = u.reshape(dl, d, s.size)
        ts[i + 1] = np.tensordot(s[:, None] * vh, ts[i + 1], axes=(1, 0))
    return out


def entropy_from_schmidt(schmidt: np.ndarray, alpha: float) -> float:
    """Renyi-``alpha`` entropy (natural log) from Schmidt coefficients."""
    if alpha <= 0:
        raise ValueError(f"Renyi index must be positive, got {alpha}")
    lam = np.asarray(schmidt, dtype=float) ** 2
    lam = lam[lam > 0]
    lam = lam / lam.sum()
    if alpha == 1:
        return float(max(-np.sum(lam * np.log(lam)), 0.0))
    if math.isinf(alpha):
        return float(-math.log(lam.max()))
    return float(max(math.log(np.sum(lam ** alpha)) / (1.0 - alpha), 0.0))


def renyi_entropy(state: MpsState, cut: int, alpha: float = 1.0) -> float:
    """Renyi entanglement entropy across cut ``k``; ``alpha = 1`` is von Neumann."""
    if alpha <= 0:
        raise ValueError(f"Renyi index must be positive, got {alpha}")
    if not 1 <= cut <= state.n_sites - 1:
        raise ValueError(f"cut {cut} outside [1, {state.n_sites - 1}]")
    centred = state.canonicalize(cut - 1)
    t = centred.tensors[cut - 1]
    s = scipy.linalg.svdvals(t.reshape(-1, t.shape[-1]))
    return entropy_from_schmidt(s, alpha)


# ---------------------------------------------------------------------------
# serialization

_MAGIC = b"LVTT\x00\x01\x00\x00"


def save_tensor_train(path: Union[str, Path], obj: Union[MpsState, MpoOperator]) -> None:
    """Write an MPS or MPO checkpoint.

    Layout: 8-byte magic ``b"LVTT\\0\\1\\0\\0"``, a little-endian ``uint32``
    header length, a UTF-8 JSON header (``kind``, ``n_sites``, ``shapes`` and
    state metadata), then every tensor as row-major little-endian
    ``complex128``.
    """
    if isinstance(obj, MpsState):
        header = {"kind": "mps", "log_norm": obj.log_norm if obj.log_norm > -math.inf else None,
                  "canonical_center": obj.canonical_center,
                  "cumulative_discarded_weight": obj.cumulative_discarded_weight}
    elif isinstance(obj, MpoOperator):
        header = {"kind": "mpo"}
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    header["n_sites"] = len(obj.tensors)
    header["shapes"] = [list(t.shape) for t in obj.tensors]
    header["dtype"] = "<c16"
    raw = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        for t in obj.tensors:
            fh.write(np.ascontiguousarray(t, dtype="<c16").tobytes())


def load_tensor_train(path: Union[str, Path]) -> Union[MpsState, MpoOperator]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != _MAGIC:
        raise ValueError(f"{path}: not a tensor-train checkpoint")
    (hlen,) = struct.unpack("<I", blob[8:12])
    header = json.loads(blob[12:12 + hlen].decode())
    offset = 12 + hlen
    tensors = []
    for shape in header["shapes"]:
        count = math.prod(shape)
        arr = np.frombuffer(blob, dtype="<c16", count=count, offset=offset).reshape(shape)
        tensors.append(arr.astype(np.complex128))
        offset += 16 * count
    if header["kind"] == "mpo":
        return MpoOperator(tensors)
    log_norm = header["log_norm"]
    return MpsState(tuple(tensors), canonical_center=header["canonical_center"],
                    cumulative_discarded_weight=header["cumulative_discarded_weight"],
                    log_norm=-math.inf if log_norm is None else log_norm)
