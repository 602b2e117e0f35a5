import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stretchhess.smallmat import (
    JacobiConvergenceError,
    jacobi_eig,
    jacobi_eig_batch,
    jacobi_svd,
    signed_svd3,
    solve2x2,
    sym_eig3,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
mat3 = arrays(np.float64, (3, 3), elements=finite)


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_svd_identity():
    svd = signed_svd3(np.eye(3))
    assert np.allclose(svd.sigma, 1.0)
    assert np.allclose(svd.u @ svd.v.T, np.eye(3))
    assert np.allclose(svd.reconstruct(), np.eye(3))


def test_svd_reflection_lands_on_last_value():
    f = np.diag([2.0, 1.0, -1.0])
    svd = signed_svd3(f)
    assert np.allclose(svd.sigma, [2, 1, -1])
    assert np.allclose(svd.reconstruct(), f, atol=1e-14)
    assert np.isclose(np.linalg.det(svd.u), 1.0)
    assert np.isclose(np.linalg.det(svd.v), 1.0)


def test_svd_reflection_tie_goes_to_largest_index():
    svd = signed_svd3(np.diag([-1.0, 1.0, 1.0]))
    assert np.allclose(svd.sigma, [1, 1, -1])


def test_svd_matches_jacobi_oracle():
    rng = np.random.default_rng(3)
    for _ in range(50):
        f = rng.normal(size=(3, 3))
        if np.linalg.det(f) < 0:
            f[:, 0] *= -1
        svd = signed_svd3(f)
        assert _rel(svd.reconstruct(), f) < 1e-12
        _, s_ref, _ = jacobi_svd(f)
        assert np.allclose(np.sort(np.abs(s_ref))[::-1], svd.sigma, rtol=1e-12)


@settings(max_examples=200, deadline=None)
@given(mat3)
def test_svd_invariants(f):
    svd = signed_svd3(f)
    scale = max(np.linalg.norm(f), 1e-300)
    assert np.linalg.norm(svd.reconstruct() - f) <= 1e-10 * scale + 1e-300
    assert abs(np.linalg.det(svd.u) - 1) < 1e-10
    assert abs(np.linalg.det(svd.v) - 1) < 1e-10
    mag = np.abs(svd.sigma)
    assert mag[0] >= mag[1] >= mag[2]
    assert np.sum(svd.sigma < 0) <= 1
    with np.errstate(divide="ignore"):
        d = np.linalg.det(f)
    if abs(d) > 1e-9 * scale**3:
        assert np.sign(np.prod(svd.sigma)) == np.sign(d)


def test_svd_rank_deficient():
    f = np.outer([1.0, 2.0, 3.0], [0.0, 1.0, 1.0])
    svd = signed_svd3(f)
    assert np.allclose(svd.sigma[1:], 0.0, atol=1e-14)
    assert np.allclose(svd.reconstruct(), f, atol=1e-14)


def test_svd_batched_matches_single():
    rng = np.random.default_rng(0)
    fs = rng.normal(size=(5, 2, 3, 3))
    svd = signed_svd3(fs)
    assert svd.sigma.shape == (5, 2, 3)
    one = signed_svd3(fs[3, 1])
    assert np.allclose(svd.sigma[3, 1], one.sigma)
    assert np.allclose(svd.reconstruct(), fs)


def test_sym_eig3_examples():
    assert np.allclose(sym_eig3(np.eye(3)).values, 1.0)
    eig = sym_eig3(np.diag([3.0, -1.0, 2.0]))
    assert np.allclose(eig.values, [-1, 2, 3])


@settings(max_examples=200, deadline=None)
@given(mat3)
def test_sym_eig3_invariants(m):
    a = 0.5 * (m + m.T)
    eig = sym_eig3(a)
    q = eig.vectors
    scale = max(np.linalg.norm(a), 1e-300)
    assert np.all(np.diff(eig.values) >= -1e-12 * scale)
    assert np.linalg.norm(q.T @ q - np.eye(3)) < 1e-10
    assert np.linalg.norm(a @ q - q * eig.values) <= 1e-9 * scale + 1e-300


def test_sym_eig3_repeated_values():
    r = np.linalg.qr(np.random.default_rng(1).normal(size=(3, 3)))[0]
    for d in ([2, 2, 2], [1, 1, 5], [1, 5, 5], [1, 1 + 1e-13, 3]):
        a = r @ np.diag(d) @ r.T
        eig = sym_eig3(a)
        assert np.allclose(eig.values, np.sort(d), atol=1e-12)
        assert np.linalg.norm(a @ eig.vectors - eig.vectors * eig.values) < 1e-12


def test_sym_eig3_agrees_with_jacobi():
    rng = np.random.default_rng(7)
    a = rng.normal(size=(200, 3, 3))
    a = a + np.swapaxes(a, 1, 2)
    vals = sym_eig3(a).values
    ref, _ = jacobi_eig_batch(a)
    assert np.max(np.abs(vals - ref)) < 1e-9 * np.max(np.abs(ref))


def test_jacobi_examples():
    vals, vecs = jacobi_eig(np.diag([4.0, -2.0, 1.0]))
    assert np.allclose(vals, [-2, 1, 4])
    vals, _ = jacobi_eig(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(vals, [-1, 1])


def test_jacobi_12x12_reconstructs():
    rng = np.random.default_rng(11)
    a = rng.normal(size=(12, 12))
    a = a + a.T
    vals, vecs = jacobi_eig(a)
    assert _rel(vecs @ np.diag(vals) @ vecs.T, a) < 1e-10
    assert np.allclose(vecs.T @ vecs, np.eye(12), atol=1e-12)
    assert np.allclose(vals, np.linalg.eigvalsh(a), atol=1e-10)


def test_jacobi_sweep_cap_signals():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(8, 8))
    with pytest.raises(JacobiConvergenceError):
        jacobi_eig(a + a.T, max_sweeps=1)


def test_jacobi_rejects_non_square():
    with pytest.raises(ValueError):
        jacobi_eig(np.zeros((2, 3)))


def test_solve2x2():
    m = np.array([[1.0, -2.0], [-2.0, 1.0]])
    assert np.allclose(solve2x2(m, np.array([1.0, 0.0])), [-1 / 3, -2 / 3])
