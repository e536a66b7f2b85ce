import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lowvar.tensor import DenseTensor, TruncationPolicy, contract, svd_split, truncated_svd


def rand_tensor(rng, shape, legs):
    return DenseTensor(rng.normal(size=shape) + 1j * rng.normal(size=shape), legs)


def test_identity_composition():
    eye = DenseTensor(np.eye(2), ["a", "b"])
    out = contract(eye, eye.relabel({"a": "c", "b": "d"}), [("b", "c")])
    assert out.legs == ("a", "d")
    np.testing.assert_allclose(out.data, np.eye(2), atol=1e-15)


def test_unit_vector_normalization(rng):
    v = rng.normal(size=5) + 1j * rng.normal(size=5)
    v /= np.linalg.norm(v)
    out = contract(DenseTensor(v, ["i"]), DenseTensor(v.conj(), ["j"]), [("i", "j")])
    assert out.legs == ()
    assert abs(out.item() - 1.0) < 1e-14


def test_matches_triple_loop(rng):
    a = rand_tensor(rng, (4, 4), ["i", "k"])
    b = rand_tensor(rng, (4, 4), ["k2", "j"])
    out = contract(a, b, [("k", "k2")])
    ref = np.zeros((4, 4), dtype=complex)
    for i in range(4):
        for j in range(4):
            for k in range(4):
                ref[i, j] += a.data[i, k] * b.data[k, j]
    np.testing.assert_allclose(out.data, ref, rtol=1e-13, atol=1e-13)


def test_result_leg_order(rng):
    a = rand_tensor(rng, (2, 3, 4), ["x", "y", "z"])
    b = rand_tensor(rng, (3, 5), ["p", "q"])
    out = contract(a, b, [("y", "p")])
    assert out.legs == ("x", "z", "q")
    assert out.shape == (2, 4, 5)


def test_contract_errors(rng):
    a = rand_tensor(rng, (2, 3), ["x", "y"])
    b = rand_tensor(rng, (4, 5), ["p", "q"])
    with pytest.raises(ValueError, match="mismatch"):
        contract(a, b, [("y", "p")])
    with pytest.raises(ValueError):
        contract(a, b, [("nope", "p")])
    with pytest.raises(ValueError, match="repeated"):
        DenseTensor(np.zeros((2, 2)), ["x", "x"])
    c = rand_tensor(rng, (3, 2), ["y2", "x"])
    with pytest.raises(ValueError, match="repeated"):
        contract(a, c, [("y", "y2")])


def test_data_is_row_major_complex():
    t = DenseTensor(np.arange(6).reshape(2, 3).T, ["a", "b"])
    assert t.data.flags["C_CONTIGUOUS"]
    assert t.data.dtype == np.complex128
    assert t.size == 6 and t.is_finite()


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2 ** 31 - 1),
       st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False))
def test_bilinearity(m, k, n, seed, alpha, beta):
    rng = np.random.default_rng(seed)
    a = rand_tensor(rng, (m, k, 2), ["i", "k", "l"])
    a2 = rand_tensor(rng, (m, k, 2), ["i", "k", "l"])
    b = rand_tensor(rng, (k, n), ["k", "j"])
    lhs = contract(alpha * a + beta * a2, b, [("k", "k")]).data
    rhs = alpha * contract(a, b, [("k", "k")]).data + beta * contract(a2, b, [("k", "k")]).data
    scale = max(np.abs(rhs).max(), 1e-300)
    assert np.abs(lhs - rhs).max() <= 1e-12 * scale + 1e-14


def test_bilinearity_large(rng):
    a = rand_tensor(rng, (16, 16, 16), ["i", "k", "l"])
    a2 = rand_tensor(rng, (16, 16, 16), ["i", "k", "l"])
    b = rand_tensor(rng, (16, 16), ["k", "j"])
    lhs = contract(2.0 * a + (1 - 1j) * a2, b, [("k", "k")]).data
    rhs = 2.0 * contract(a, b, [("k", "k")]).data + (1 - 1j) * contract(a2, b, [("k", "k")]).data
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)


def test_associativity(rng):
    a = rand_tensor(rng, (3, 4), ["i", "j"])
    b = rand_tensor(rng, (4, 5, 2), ["j", "k", "x"])
    c = rand_tensor(rng, (5, 6), ["k", "l"])
    left = contract(contract(a, b, [("j", "j")]), c, [("k", "k")])
    right = contract(a, contract(b, c, [("k", "k")]), [("j", "j")])
    right = right.transpose(left.legs)
    assert np.linalg.norm(left.data - right.data) <= 1e-10 * np.linalg.norm(left.data)


def test_policy_validation():
    with pytest.raises(ValueError):
        TruncationPolicy(svd_threshold=1.0)
    with pytest.raises(ValueError):
        TruncationPolicy(svd_threshold=-0.1)
    with pytest.raises(ValueError):
        TruncationPolicy(max_bond=0)
    assert TruncationPolicy.exact().svd_threshold == 0.0


def test_split_rank_one(rng):
    u = rng.normal(size=3) + 1j * rng.normal(size=3)
    v = rng.normal(size=4)
    t = DenseTensor(np.multiply.outer(u, v), ["a", "b"])
    left, right, w = svd_split(t, ["a"], TruncationPolicy())
    assert left.dim("bond_l") == 1 and right.dim("bond_r") == 1
    assert w <= 1e-30


def test_split_exact_reconstruction(rng):
    t = rand_tensor(rng, (3, 2, 4), ["a", "b", "c"])
    left, right, w = svd_split(t, ["a", "c"], TruncationPolicy(max_bond=50, svd_threshold=0.0))
    rec = contract(left, right, [("bond_l", "bond_r")]).transpose(["a", "b", "c"])
    assert np.linalg.norm(rec.data - t.data) <= 1e-12 * t.norm()
    # left factor is an isometry; singular values sit on the right factor
    L = left.data.reshape(-1, left.dim("bond_l"))
    np.testing.assert_allclose(L.conj().T @ L, np.eye(L.shape[1]), atol=1e-12)


def test_split_truncation_matches_full_svd(rng):
    mat = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    t = DenseTensor(mat, ["r", "c"])
    left, right, w = svd_split(t, ["r"], TruncationPolicy(max_bond=4, svd_threshold=0.0))
    rec = contract(left, right, [("bond_l", "bond_r")]).data
    s = np.linalg.svd(mat, compute_uv=False)
    dropped = float(np.sum(s[4:] ** 2))
    assert abs(np.linalg.norm(rec - mat) ** 2 - dropped) <= 1e-10 * dropped
    assert abs(w - dropped / np.sum(s ** 2)) <= 1e-12


def test_split_error_monotone_in_max_bond(rng):
    mat = rng.normal(size=(10, 12))
    t = DenseTensor(mat, ["r", "c"])
    errs = []
    for D in range(1, 11):
        left, right, _ = svd_split(t, ["r"], TruncationPolicy(max_bond=D, svd_threshold=0.0))
        errs.append(np.linalg.norm(contract(left, right, [("bond_l", "bond_r")]).data - mat))
    assert all(a >= b - 1e-12 for a, b in zip(errs, errs[1:]))


def test_threshold_relative_and_ties_kept():
    s = np.array([1.0, 0.5, 1e-3, 1e-6])
    mat = np.diag(s)
    _, kept, _, w = truncated_svd(mat, TruncationPolicy(svd_threshold=1e-3))
    assert kept.size == 3  # exactly at the cutoff is kept
    assert abs(w - 1e-12 / np.sum(s ** 2)) < 1e-15
    _, kept2, _, _ = truncated_svd(1e6 * mat, TruncationPolicy(svd_threshold=1e-3))
    assert kept2.size == 3  # scale invariant


def test_discarded_weight_inequality(rng):
    mat = rng.normal(size=(9, 9))
    thr = 0.2
    _, kept, _, w = truncated_svd(mat, TruncationPolicy(svd_threshold=thr))
    s = np.linalg.svd(mat, compute_uv=False)
    kept_fraction = np.sum(kept ** 2) / np.sum(s ** 2)
    assert w <= 1 - (1 - thr ** 2) * kept_fraction + 1e-12


def test_split_rejects_nonfinite():
    t = DenseTensor(np.array([[1.0, np.nan], [0.0, 1.0]]), ["a", "b"])
    with pytest.raises(np.linalg.LinAlgError):
        svd_split(t, ["a"], TruncationPolicy())
    with pytest.raises(ValueError):
        svd_split(t, ["a", "b"], TruncationPolicy())
