import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from spcrystal.densities import (
    Gaussian,
    IonSpecies,
    PhysicalUnits,
    TabulatedRadial,
    Uniform,
    assemble_rho,
    assemble_rho_plus,
    check_condition_infrared,
    check_resolvable,
    load_tabulated,
    periodize,
    project_to_manifold,
)
from spcrystal.errors import UnderResolved, ValidationError, ZeroField
from spcrystal.geometry import make_cell, unit_torus
from spcrystal.spectral import ScalarField, norm2

from support import heavy_tail_profile

CUBE = unit_torus((16, 16, 16))
SLAB = make_cell(2, [[1, 0, 0], [0, 1, 0]], [3.0], (8, 8, 48))
LINE = make_cell(1, [[1, 0, 0]], [2.0, 2.0], (8, 32, 32))


def image_sum(cell, sigma, frac, reach=6):
    """Direct real-space sum of Gaussians over lattice (and supercell) images."""
    g = Gaussian(sigma)
    x = cell.positions
    xj = cell.to_cartesian(frac)
    out = np.zeros(cell.grid)
    rng = range(-reach, reach + 1)
    for n in np.ndindex(len(rng), len(rng), len(rng)):
        shift = (np.array(n) - reach) @ cell.box
        r = np.linalg.norm(x - xj - shift, axis=-1)
        out += g.density(r)
    return out


def test_units():
    u = PhysicalUnits(hbar=2.0, mass_e=0.5)
    assert u.kinetic == pytest.approx(4.0)
    for bad in (dict(hbar=0.0), dict(mass_e=-1.0), dict(charge_e=1.0), dict(hbar=np.inf)):
        with pytest.raises(ValidationError):
            PhysicalUnits(**bad)


def test_gaussian_transform_matches_quadrature():
    g = Gaussian(0.3)
    for k in (0.0, 1.0, 5.0, 12.0):
        val = quad(lambda r: 4 * np.pi * r**2 * g.density(r) * np.sinc(k * r / np.pi), 0, 10)[0]
        assert g.transform(k) == pytest.approx(val, abs=1e-10)


def test_tabulated_gaussian_reproduces_gaussian():
    g = Gaussian(0.4)
    r = np.linspace(0, 5, 2001)
    t = TabulatedRadial(r, 7.0 * g.density(r))  # overall scale is irrelevant
    assert t.radial_moment(0) == pytest.approx(1.0, rel=1e-6)
    k = np.array([0.0, 1.0, 3.0, 6.0])
    assert np.allclose(t.transform(k), g.transform(k), atol=1e-5)
    assert t.density(np.array([6.0]))[0] == 0.0


def test_tabulated_file_round_trip(tmp_path):
    r = np.linspace(0, 3, 50)
    np.savetxt(tmp_path / "p.txt", np.c_[r, np.exp(-r)])
    t = load_tabulated(tmp_path / "p.txt")
    assert np.allclose(t.radius, r)
    np.savetxt(tmp_path / "bad.txt", np.c_[r, r, r])
    with pytest.raises(ValidationError):
        load_tabulated(tmp_path / "bad.txt")


@pytest.mark.parametrize("r, v", [
    ([0, 1, 2], [1, 1, 1]),
    ([0, 2, 1, 3], [1, 1, 1, 1]),
    ([0, 1, 2, 3], [1, -1, 1, 1]),
])
def test_tabulated_validation(r, v):
    with pytest.raises(ValidationError):
        TabulatedRadial(np.array(r, float), np.array(v, float))


def test_species_validation():
    with pytest.raises(ValidationError):
        IonSpecies(0.0, Gaussian(0.3))
    with pytest.raises(ValidationError):
        IonSpecies(1.0, Gaussian(0.3), (0.1, 0.2))
    with pytest.raises(ValidationError):
        IonSpecies(1.0, Gaussian(0.3), mass=0.0)
    with pytest.raises(ValidationError):
        Gaussian(0.0)


def test_resolution_limits():
    with pytest.raises(UnderResolved):
        check_resolvable(IonSpecies(1.0, Gaussian(0.1)), CUBE)
    with pytest.raises(UnderResolved):
        check_resolvable(IonSpecies(1.0, Gaussian(0.6)), CUBE)
    check_resolvable(IonSpecies(1.0, Gaussian(0.2)), CUBE)


@pytest.mark.parametrize("cell, sigma", [(CUBE, 0.15), (CUBE, 0.35), (SLAB, 0.3), (LINE, 0.3)])
def test_periodize_matches_image_sum(cell, sigma):
    frac = (0.3, 0.6, 0.45)
    s = IonSpecies(2.0, Gaussian(sigma), frac)
    rho = periodize(s, cell).values
    assert np.allclose(rho, 2.0 * image_sum(cell, sigma, frac), atol=1e-9 * np.max(rho))
    assert rho.sum() * cell.dV == pytest.approx(2.0, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.125, 0.5), st.lists(st.floats(0, 1), min_size=3, max_size=3), st.floats(0.5, 3))
def test_periodize_charge_and_positivity(sigma, frac, Z):
    rho = periodize(IonSpecies(Z, Gaussian(sigma), frac), CUBE).values
    assert rho.sum() * CUBE.dV == pytest.approx(Z, rel=1e-12)
    assert rho.min() >= -1e-12 * rho.max()


def test_periodize_grid_shift_is_roll():
    a = periodize(IonSpecies(1.0, Gaussian(0.25), (0.2, 0.3, 0.4)), CUBE).values
    b = periodize(IonSpecies(1.0, Gaussian(0.25), (0.2 + 3 / 16, 0.3, 0.4 - 1 / 16)), CUBE).values
    assert np.allclose(np.roll(a, (3, 0, -1), axis=(0, 1, 2)), b, atol=1e-13)


def test_uniform_background_is_constant():
    rho = periodize(IonSpecies(3.0, Uniform()), CUBE).values
    assert np.allclose(rho, 3.0)


def test_two_half_charges_equal_one_full():
    half = [IonSpecies(0.5, Gaussian(0.3), (0.1, 0.2, 0.3))] * 2
    full = [IonSpecies(1.0, Gaussian(0.3), (0.1, 0.2, 0.3))]
    assert np.allclose(assemble_rho_plus(half, CUBE).values, assemble_rho_plus(full, CUBE).values, atol=1e-14)
    assert np.max(np.abs(assemble_rho_plus([], CUBE).values)) == 0


def test_assemble_rho_neutral_for_matching_psi():
    rp = assemble_rho_plus([IonSpecies(1.0, Gaussian(0.3))], CUBE)
    psi = ScalarField(CUBE, np.sqrt(rp.values.clip(0)))
    assert abs(assemble_rho(psi, rp).integral()) < 1e-12


def test_project_to_manifold():
    psi = ScalarField(CUBE, np.full(CUBE.grid, 2.0 + 0j))
    out = project_to_manifold(psi, 1.0)
    assert np.allclose(out.values, 1.0)
    again = project_to_manifold(out, 1.0)
    assert np.allclose(again.values, out.values, rtol=1e-15)
    rng = np.random.default_rng(0)
    r = ScalarField(CUBE, rng.standard_normal(CUBE.grid) + 1j * rng.standard_normal(CUBE.grid))
    assert norm2(CUBE, project_to_manifold(r, 3.5).values) == pytest.approx(3.5, rel=1e-14)
    with pytest.raises(ZeroField):
        project_to_manifold(ScalarField(CUBE, np.zeros(CUBE.grid)), 1.0)


# ---------------------------------------------------------------- infrared gate

def test_infrared_vacuous_for_three_dimensions():
    rep = check_condition_infrared(IonSpecies(1.0, Gaussian(0.3)), CUBE)
    assert rep.passed and rep.vacuous


@pytest.mark.parametrize("cell", [SLAB, LINE])
@pytest.mark.parametrize("sigma", [0.2, 0.5, 1.0])
def test_gaussian_passes_infrared(cell, sigma):
    rep = check_condition_infrared(IonSpecies(1.0, Gaussian(sigma)), cell)
    assert rep.passed and rep.moment_finite
    assert all(r <= 1.1 for r in rep.ratios)


@pytest.mark.parametrize("cell, c", [(SLAB, 0.5), (LINE, 1.0)])
def test_gaussian_first_moment_against_quadrature(cell, c):
    sigma = 0.4
    # transverse coordinates are independent normals: E|x_i| = sigma sqrt(2/pi) each
    per_axis = quad(lambda z: 2 * z * np.exp(-z * z / (2 * sigma**2)) / np.sqrt(2 * np.pi * sigma**2), 0, 20)[0]
    n_axes = 1 if cell.d == 2 else 2
    rep = check_condition_infrared(IonSpecies(1.0, Gaussian(sigma)), cell)
    assert rep.moment == pytest.approx(1.0 + n_axes * per_axis, rel=1e-10)
    # tabulated version of the same profile agrees to quadrature accuracy
    r = np.linspace(0, 8 * sigma, 4001)
    tab = TabulatedRadial(r, Gaussian(sigma).density(r))
    rep_t = check_condition_infrared(IonSpecies(1.0, tab), cell)
    assert rep_t.passed
    assert rep_t.moment == pytest.approx(rep.moment, rel=1e-4)


@pytest.mark.parametrize("cell", [SLAB, LINE])
def test_heavy_tail_fails_infrared(cell):
    rep = check_condition_infrared(IonSpecies(1.0, heavy_tail_profile()), cell)
    assert not rep.passed
    assert not rep.moment_finite
    # 1 - rho^(s) ~ s^0.25: the quotient norm diverges on the line (d=2) but
    # converges on the disc (d=1), where the moment alone rejects it
    if cell.d == 2:
        assert max(rep.ratios) > 1.1


def test_uniform_fails_on_unbounded_cell():
    rep = check_condition_infrared(IonSpecies(1.0, Uniform()), SLAB)
    assert not rep.passed
