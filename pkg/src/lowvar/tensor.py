"""Dense complex tensors with named legs and truncated SVD splitting.

The MPS/MPO kernels work on bare ``numpy`` arrays for speed, but every
truncation decision in the package goes through :func:`truncated_svd`, so
cutoff semantics are defined in exactly one place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

__all__ = [
    "DenseTensor",
    "TruncationPolicy",
    "contract",
    "svd_split",
    "truncated_svd",
]


@dataclass(frozen=True)
class TruncationPolicy:
    """Rules for discarding singular values.

    Attributes
    ----------
    max_bond : int or None
        Largest bond dimension kept; ``None`` means unbounded.
    svd_threshold : float
        Relative cutoff: singular values strictly below
        ``svd_threshold * s_max`` are dropped.
    record_weight : bool
        Whether callers should accumulate the discarded weight.
    """

    max_bond: Optional[int] = None
    svd_threshold: float = 1e-12
    record_weight: bool = True

    def __post_init__(self):
        if not 0.0 <= self.svd_threshold < 1.0:
            raise ValueError(f"svd_threshold must lie in [0, 1), got {self.svd_threshold}")
        if self.max_bond is not None and self.max_bond < 1:
            raise ValueError(f"max_bond must be >= 1 when bounded, got {self.max_bond}")

    @classmethod
    def exact(cls) -> "TruncationPolicy":
        """Policy that keeps every nonzero singular value."""
        return cls(max_bond=None, svd_threshold=0.0)


class DenseTensor:
    """Complex tensor with an ordered tuple of leg labels.

    The array is stored C-contiguous (row-major) as ``complex128``.
    """

    __slots__ = ("data", "legs")

    def __init__(self, data, legs: Sequence[Hashable]):
        arr = np.ascontiguousarray(np.asarray(data, dtype=np.complex128))
        legs = tuple(legs)
        if arr.ndim != len(legs):
            raise ValueError(f"{arr.ndim}-leg array given {len(legs)} labels")
        if len(set(legs)) != len(legs):
            raise ValueError(f"repeated leg label in {legs}")
        if any(d < 1 for d in arr.shape):
            raise ValueError(f"leg dimensions must be positive, got {arr.shape}")
        self.data = arr
        self.legs = legs

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def dim(self, leg: Hashable) -> int:
        return self.data.shape[self.legs.index(leg)]

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))

    def transpose(self, legs: Sequence[Hashable]) -> "DenseTensor":
        perm = [self.legs.index(l) for l in legs]
        return DenseTensor(self.data.transpose(perm), legs)

    def relabel(self, mapping: dict) -> "DenseTensor":
        return DenseTensor(self.data, [mapping.get(l, l) for l in self.legs])

    def conj(self) -> "DenseTensor":
        return DenseTensor(self.data.conj(), self.legs)

    def norm(self) -> float:
        return float(np.linalg.norm(self.data.ravel()))

    def __add__(self, other: "DenseTensor") -> "DenseTensor":
        other = other.transpose(self.legs)
        return DenseTensor(self.data + other.data, self.legs)

    def __mul__(self, alpha) -> "DenseTensor":
        return DenseTensor(alpha * self.data, self.legs)

    __rmul__ = __mul__

    def __repr__(self):
        return f"DenseTensor(shape={self.shape}, legs={self.legs})"


def contract(a: DenseTensor, b: DenseTensor,
             pairs: Iterable[Tuple[Hashable, Hashable]]) -> DenseTensor:
    """Sum over paired legs of ``a`` and ``b``.

    The result carries the unpaired legs of ``a`` followed by the unpaired
    legs of ``b``, each in their original order.
    """
    pairs = list(pairs)
    la = [p[0] for p in pairs]
    lb = [p[1] for p in pairs]
    if len(set(la)) != len(la) or len(set(lb)) != len(lb):
        raise ValueError("a leg may appear in at most one pair")
    for x, y in pairs:
        if x not in a.legs:
            raise ValueError(f"leg {x!r} not on first tensor {a.legs}")
        if y not in b.legs:
            raise ValueError(f"leg {y!r} not on second tensor {b.legs}")
        if a.dim(x) != b.dim(y):
            raise ValueError(f"dimension mismatch on pair ({x!r}, {y!r}): {a.dim(x)} vs {b.dim(y)}")
    ia = [a.legs.index(x) for x in la]
    ib = [b.legs.index(y) for y in lb]
    out_legs = [l for l in a.legs if l not in la] + [l for l in b.legs if l not in lb]
    if len(set(out_legs)) != len(out_legs):
        raise ValueError(f"result would carry repeated labels {out_legs}")
    data = np.tensordot(a.data, b.data, axes=(ia, ib))
    if not out_legs:
        data = np.asarray(data).reshape(())
        return _Scalar(data)
    return DenseTensor(data, out_legs)


class _Scalar(DenseTensor):
    """Zero-leg contraction result."""

    __slots__ = ()

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.complex128).reshape(())
        self.legs = ()

    def item(self) -> complex:
        return complex(self.data)


def _svd(mat: np.ndarray):
    try:
        return scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesvd")


def truncated_svd(mat: np.ndarray, policy: TruncationPolicy):
    """SVD of a matrix with the package-wide truncation rule.

    Returns ``(u, s, vh, discarded_weight)`` where ``discarded_weight`` is the
    squared norm of the dropped singular values relative to the total.
    """
    if not np.all(np.isfinite(mat)):
        raise np.linalg.LinAlgError("non-finite entries in matrix to decompose")
    u, s, vh = _svd(mat)
    total = float(np.dot(s, s))
    if total == 0.0:
        return u[:, :1], s[:1], vh[:1, :], 0.0
    keep = int(np.count_nonzero(s >= policy.svd_threshold * s[0]))
    keep = max(keep, 1)
    if policy.max_bond is not None:
        keep = min(keep, policy.max_bond)
    dropped = s[keep:]
    discarded = float(np.dot(dropped, dropped)) / total
    return u[:, :keep], s[:keep], vh[:keep, :], discarded


def svd_split(t: DenseTensor, left_legs: Iterable[Hashable], policy: TruncationPolicy,
              bond_label: Tuple[Hashable, Hashable] = ("bond_l", "bond_r")):
    """Split ``t`` into a left isometry and a right factor carrying ``S V^†``.

    Returns ``(left, right, discarded_weight)``. The new bond leg is labelled
    ``bond_label[0]`` on the left factor (as its last leg) and
    ``bond_label[1]`` on the right factor (as its first leg).
    """
    left_legs = list(left_legs)
    if not left_legs or len(left_legs) >= len(t.legs):
        raise ValueError("left_legs must be a nonempty proper subset of the tensor legs")
    missing = [l for l in left_legs if l not in t.legs]
    if missing:
        raise ValueError(f"unknown legs {missing}")
    right_legs = [l for l in t.legs if l not in left_legs]
    tt = t.transpose(left_legs + right_legs)
    lshape = tt.shape[: len(left_legs)]
    rshape = tt.shape[len(left_legs):]
    mat = tt.data.reshape(math.prod(lshape), math.prod(rshape))
    u, s, vh, discarded = truncated_svd(mat, policy)
    k = s.size
    left = DenseTensor(u.reshape(*lshape, k), left_legs + [bond_label[0]])
    right = DenseTensor((s[:, None] * vh).reshape(k, *rshape), [bond_label[1]] + right_legs)
    return left, right, discarded
