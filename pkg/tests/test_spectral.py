import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spcrystal.errors import CellMismatch, NonNeutral
from spcrystal.geometry import make_cell, unit_torus
from spcrystal.spectral import (
    ScalarField,
    SpectrumField,
    analyze,
    apply_multiplier,
    field,
    forward,
    grad,
    inner,
    inv_k2,
    inv_laplacian,
    inverse,
    lambda_op,
    neg_laplacian,
    norm2,
    synthesize,
)

CELLS = [
    unit_torus((8, 8, 8)),
    make_cell(3, [[1, 0, 0], [0.3, 0.9, 0], [0.1, 0.2, 1.2]], (), (6, 8, 10)),
    make_cell(2, [[1, 0, 0], [0, 1, 0]], [2.0], (4, 4, 16)),
    make_cell(1, [[1, 0, 0]], [1.5, 1.5], (4, 8, 8)),
]
cell_st = st.sampled_from(CELLS)


def rand_field(cell, seed, real=False, nyquist=True, neutral=False):
    rng = np.random.default_rng(seed)
    C = rng.standard_normal(cell.grid) + 1j * rng.standard_normal(cell.grid)
    if not nyquist:
        C[cell.nyquist] = 0
    if neutral:
        C[0, 0, 0] = 0
    v = synthesize(C)
    return ScalarField(cell, v.real if real else v, real)


@settings(max_examples=25, deadline=None)
@given(cell_st, st.integers(0, 2**31))
def test_round_trip(cell, seed):
    f = rand_field(cell, seed)
    back = inverse(forward(f))
    assert np.max(np.abs(back.values - f.values)) <= 1e-12 * np.max(np.abs(f.values))


@settings(max_examples=25, deadline=None)
@given(cell_st, st.integers(0, 2**31))
def test_transform_is_unitary(cell, seed):
    f = rand_field(cell, seed)
    assert norm2(cell, analyze(f.values)) == pytest.approx(f.norm() ** 2, rel=1e-12)


def test_synthesis_sign_convention():
    cell = unit_torus((8, 8, 8))
    k = np.array([1, 2, -1]) @ cell.dual
    F = forward(field(cell, np.exp(-1j * cell.positions @ k)))
    assert abs(F.at((1, 2, -1))) == pytest.approx(np.sqrt(cell.npoints))
    assert F.norm() == pytest.approx(abs(F.at((1, 2, -1))) * np.sqrt(cell.dV))


def test_constant_field_has_only_zero_mode():
    cell = CELLS[2]
    F = forward(field(cell, lambda x, y, z: 3.0 + 0 * x))
    assert abs(F.at((0, 0, 0))) == pytest.approx(3.0 * np.sqrt(cell.npoints))
    F.coeffs[0, 0, 0] = 0
    assert np.max(np.abs(F.coeffs)) < 1e-12


def test_grad_examples():
    cell = unit_torus((8, 8, 8))
    gx, gy, gz = grad(field(cell, lambda x, y, z: np.cos(2 * np.pi * x)))
    x = cell.positions[..., 0]
    assert np.allclose(gx.values, -2 * np.pi * np.sin(2 * np.pi * x), atol=1e-12)
    assert np.max(np.abs(gy.values)) < 1e-12 and np.max(np.abs(gz.values)) < 1e-12
    zero = grad(field(cell, lambda x, y, z: 1.0 + 0 * x))
    assert all(np.max(np.abs(g.values)) < 1e-12 for g in zero)


@settings(max_examples=25, deadline=None)
@given(cell_st, st.integers(0, 2**31))
def test_grad_parseval(cell, seed):
    # Nyquist content has no well-defined real derivative, so it is excluded
    f = rand_field(cell, seed, real=True, nyquist=False)
    lhs = sum(g.norm() ** 2 for g in grad(f))
    rhs = cell.dV * float(np.sum(cell.k2 * np.abs(analyze(f.values)) ** 2))
    assert lhs == pytest.approx(rhs, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(cell_st, st.integers(0, 2**31))
def test_inv_laplacian_inverts_on_neutral_fields(cell, seed):
    rho = rand_field(cell, seed, real=True, neutral=True)
    phi = inv_laplacian(rho)
    assert abs(phi.integral()) <= 1e-12 * phi.norm()
    assert np.allclose(neg_laplacian(phi).values, rho.values, atol=1e-11 * np.max(np.abs(rho.values)))
    lam = lambda_op(rho)
    assert np.allclose(lambda_op(lam).values, phi.values, atol=1e-12 * np.max(np.abs(phi.values)))


@settings(max_examples=25, deadline=None)
@given(cell_st, st.integers(0, 2**31), st.floats(-3, 3), st.floats(-3, 3))
def test_inv_laplacian_linear(cell, seed, a, b):
    r1 = rand_field(cell, seed, real=True, neutral=True)
    r2 = rand_field(cell, seed + 1, real=True, neutral=True)
    lhs = inv_laplacian(a * r1 + b * r2).values
    rhs = a * inv_laplacian(r1).values + b * inv_laplacian(r2).values
    assert np.allclose(lhs, rhs, atol=1e-12 * (1 + np.max(np.abs(rhs))))


def test_charged_density_rejected():
    cell = unit_torus((4, 4, 4))
    with pytest.raises(NonNeutral):
        inv_laplacian(field(cell, lambda x, y, z: 1.0 + np.cos(2 * np.pi * x)))
    with pytest.raises(NonNeutral):
        lambda_op(field(cell, lambda x, y, z: 1.0 + 0 * x))


def test_inv_k2_zero_mode():
    cell = CELLS[1]
    w = inv_k2(cell)
    assert w[0, 0, 0] == 0
    assert np.allclose(w[cell.k2 > 0] * cell.k2[cell.k2 > 0], 1.0)


def test_multiplier_callable_and_array_agree():
    cell = CELLS[0]
    F = forward(rand_field(cell, 3))
    a = apply_multiplier(F, lambda c: c.k2)
    b = apply_multiplier(F, cell.k2)
    assert np.array_equal(a.coeffs, b.coeffs)


def test_inner_conjugates_first_slot():
    cell = CELLS[0]
    f, g = rand_field(cell, 1), rand_field(cell, 2)
    assert inner(cell, 1j * f.values, g.values) == pytest.approx(-1j * inner(cell, f.values, g.values))
    assert f.inner(g) == pytest.approx(np.conj(g.inner(f)))


def test_cell_mismatch():
    f = rand_field(CELLS[0], 1)
    g = rand_field(CELLS[1], 1)
    with pytest.raises(CellMismatch):
        f + g
    with pytest.raises(CellMismatch):
        ScalarField(CELLS[0], np.zeros((4, 4, 4)))
    with pytest.raises(CellMismatch):
        SpectrumField(CELLS[0], np.zeros((4, 4, 4)))


def test_real_flag_rejects_imaginary_part():
    with pytest.raises(ValueError):
        ScalarField(CELLS[0], np.ones((8, 8, 8)) * (1 + 1j), real=True)


def test_deterministic():
    rho = rand_field(CELLS[3], 5, real=True, neutral=True)
    assert np.array_equal(inv_laplacian(rho).values, inv_laplacian(rho).values)
