import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curlsob.closed_forms import (SIGMA, anticommutator, dirac, loss_yau_field, loss_yau_spinor,
                                  pauli_dot, pauli_expectation, pauli_mult, spinor_quotient,
                                  zero_mode_residual)
from curlsob import spectral
from curlsob.fields import GridMismatchError, ScalarField, SpinorField, make_grid

finite = st.floats(-3, 3, allow_nan=False)


# pointwise oracles written out independently of the grid code
def psi_at(x, eta):
    r2 = x @ x
    sx = x[0] * SIGMA[0] + x[1] * SIGMA[1] + x[2] * SIGMA[2]
    return (np.eye(2) + 1j * sx) @ eta / (1 + r2) ** 1.5


def a_at(x, w):
    r2 = x @ x
    return 3 / (1 + r2) ** 2 * ((1 - r2) * w + 2 * (x @ w) * x + 2 * np.cross(w, x))


def zero_mode_defect(x, eta, h=1e-5):
    w = np.einsum("a,jab,b->j", eta.conj(), SIGMA, eta).real
    lhs = np.zeros(2, dtype=complex)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        lhs += -1j * SIGMA[j] @ (psi_at(x + e, eta) - psi_at(x - e, eta)) / (2 * h)
    rhs = np.tensordot(a_at(x, w), SIGMA, axes=(0, 0)) @ psi_at(x, eta)
    return np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs)


def test_pauli_algebra():
    for j in range(3):
        for k in range(3):
            assert np.allclose(anticommutator(j, k), 2 * (j == k) * np.eye(2))
    assert np.allclose(SIGMA[0] @ SIGMA[1], 1j * SIGMA[2])


@settings(max_examples=50, deadline=None)
@given(st.tuples(finite, finite, finite, finite))
def test_pauli_expectation_norm(t):
    eta = np.array([t[0] + 1j * t[1], t[2] + 1j * t[3]])
    w = pauli_expectation(eta)
    assert w.norm == pytest.approx(np.vdot(eta, eta).real, abs=1e-12)
    # (σ·w) has eigenvalues ±|w| with η an eigenvector for +|w|
    assert np.allclose(pauli_dot(w.w) @ eta, w.norm * eta, atol=1e-10)


def test_pauli_expectation_examples():
    assert np.allclose(pauli_expectation([1, 0]).w, [0, 0, 1])
    assert np.allclose(pauli_expectation([1 / np.sqrt(2), 1 / np.sqrt(2)]).w, [1, 0, 0])


@settings(max_examples=30, deadline=None)
@given(st.tuples(finite, finite, finite), st.floats(0, 2 * np.pi), st.floats(0, np.pi))
def test_zero_mode_equation_pointwise(x, a, b):
    eta = np.array([np.cos(b / 2), np.exp(1j * a) * np.sin(b / 2)])
    assert zero_mode_defect(np.array(x), eta) < 1e-8


def test_zero_mode_requires_unit_eta():
    x = np.array([0.3, -0.5, 0.8])
    assert zero_mode_defect(x, np.array([2.0, 0.0])) > 0.1


def test_closed_form_magnitudes():
    g = make_grid(16, 3.0)
    w = np.array([0.6, 0.0, 0.8])
    A = loss_yau_field(w, g)
    assert np.allclose(A.magnitude(), 3 / (1 + g.r2), rtol=1e-12)
    psi = loss_yau_spinor([0.6, 0.8j], g)
    assert np.allclose(psi.magnitude(), 1 / (1 + g.r2), rtol=1e-12)
    i0 = g.n // 2
    assert np.allclose(A.values[:, i0, i0, i0], 3 * w)


def test_grid_field_matches_pointwise_formula():
    g = make_grid(8, 2.0)
    w = np.array([0.0, 1.0, 0.0])
    eta = np.array([1, 1j]) / np.sqrt(2)
    A = loss_yau_field(w, g)
    psi = loss_yau_spinor(eta, g)
    for idx in [(0, 0, 0), (1, 5, 3), (7, 2, 6)]:
        x = g.coords[(slice(None), *idx)]
        assert np.allclose(A.values[(slice(None), *idx)], a_at(x, w))
        assert np.allclose(psi.values[(slice(None), *idx)], psi_at(x, eta))


def test_dirac_squares_to_minus_laplacian():
    g = make_grid(12, 2.0)
    rng = np.random.default_rng(0)
    psi = SpinorField(g, rng.normal(size=(2, *g.shape)) + 1j * rng.normal(size=(2, *g.shape)))

    def real_lap(f):
        return spectral.laplacian(ScalarField(g, f)).values

    lap = np.stack([real_lap(c.real) + 1j * real_lap(c.imag) for c in psi.values])
    assert np.allclose(dirac(dirac(psi)).values, -lap, atol=1e-9)


def test_pauli_mult_matches_matrix():
    g = make_grid(8, 1.0)
    rng = np.random.default_rng(1)
    A = loss_yau_field([1, 0, 0], g)
    psi = SpinorField(g, rng.normal(size=(2, *g.shape)) + 0j)
    out = pauli_mult(A, psi).values[:, 1, 2, 3]
    expect = pauli_dot(A.values[:, 1, 2, 3]) @ psi.values[:, 1, 2, 3]
    assert np.allclose(out, expect)
    with pytest.raises(GridMismatchError):
        pauli_mult(A, loss_yau_spinor([1, 0], make_grid(8, 2.0)))


@pytest.mark.parametrize("L, coarse, fine", [(8.0, 32, 64), (16.0, 64, 128)])
def test_zero_mode_residual_converges_on_interior(L, coarse, fine):
    res = []
    for n in (coarse, fine):
        g = make_grid(n, L)
        rep = zero_mode_residual(loss_yau_field([0, 0, 1], g), loss_yau_spinor([1, 0], g), radius=2.0)
        res.append(rep.relative_residual)
        assert rep.radius == 2.0 and not rep.degenerate
    assert res[1] < res[0] / 2.5
    assert res[1] < 0.011


def test_zero_mode_sign_option():
    g = make_grid(32, 8.0)
    A, psi = loss_yau_field([0, 0, 1], g), loss_yau_spinor([1, 0], g)
    plus = zero_mode_residual(A, psi, radius=2.0)
    minus = zero_mode_residual(A, psi, sign=-1, radius=2.0)
    assert plus.relative_residual < 0.05
    assert minus.relative_residual > 1.9
    assert minus.to_dict()["sign"] == -1
    with pytest.raises(ValueError):
        zero_mode_residual(A, psi, sign=0)


def test_zero_mode_rejects_degenerate_inputs():
    g = make_grid(8, 2.0)
    A = loss_yau_field([0, 0, 1], g)
    zero = SpinorField(g, np.zeros((2, *g.shape), dtype=complex))
    with pytest.raises(ValueError):
        zero_mode_residual(A, zero)
    with pytest.raises(ValueError):
        spinor_quotient(zero)
    with pytest.raises(GridMismatchError):
        zero_mode_residual(A, loss_yau_spinor([1, 0], make_grid(8, 3.0)))


def test_constant_spinor_is_degenerate():
    g = make_grid(8, 2.0)
    A = loss_yau_field([0, 0, 1], g)
    const = SpinorField(g, np.ones((2, *g.shape), dtype=complex))
    rep = zero_mode_residual(A, const)
    assert rep.degenerate and rep.relative_residual == 0.0


def test_spinor_quotient_scale_invariant():
    g = make_grid(32, 8.0)
    psi = loss_yau_spinor([1, 0], g)
    q = spinor_quotient(psi)
    assert np.isfinite(q) and q > 0
    assert spinor_quotient(psi * 3.5) == pytest.approx(q, rel=1e-12)
