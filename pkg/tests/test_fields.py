"""Grids, fields, norms, and the Gaussian profile."""

import numpy as np
import pytest
from scipy.integrate import quad

from filament_ns import (Filament, FilamentConfig, FrameGrid, Grid,
                         InvalidParameter, ScalarField, gaussian_vortex,
                         lp_norm, oseen_profile, weighted_l2)
from filament_ns.fields import FrameField, dump_field, load_field


def square_grid(n=64, r_max=2.0, z_half=1.0):
    return Grid(0.0, r_max, -z_half, z_half, n, n)


# ---------------------------------------------------------------------------
# grid basics


def test_grid_spacing_and_centers():
    g = Grid(0.0, 2.0, -1.0, 3.0, 100, 200)
    assert g.h_r == pytest.approx(0.02)
    assert g.h_z == pytest.approx(0.02)
    rc = g.r_centers()
    assert rc[0] == pytest.approx(g.h_r / 2)
    # bit-exact reproducibility from indices
    assert rc[37] == 0.0 + (37 + 0.5) * g.h_r


@pytest.mark.parametrize("kwargs", [
    dict(r_min=1.0, r_max=1.0, z_min=0.0, z_max=1.0, n_r=16, n_z=16),
    dict(r_min=-0.1, r_max=1.0, z_min=0.0, z_max=1.0, n_r=16, n_z=16),
    dict(r_min=0.0, r_max=1.0, z_min=1.0, z_max=0.0, n_r=16, n_z=16),
    dict(r_min=0.0, r_max=1.0, z_min=0.0, z_max=1.0, n_r=4, n_z=16),
])
def test_grid_rejects_bad_geometry(kwargs):
    with pytest.raises(InvalidParameter):
        Grid(**kwargs)


def test_field_rejects_nonfinite():
    g = square_grid(16)
    vals = np.zeros((16, 16))
    vals[3, 5] = np.nan
    with pytest.raises(InvalidParameter):
        ScalarField(g, vals)


def test_filament_config_validation():
    with pytest.raises(InvalidParameter):
        Filament(-1.0, 1.0, 0.0)
    with pytest.raises(InvalidParameter):
        Filament(1.0, 0.0, 0.0)
    with pytest.raises(InvalidParameter):
        FilamentConfig((Filament(1.0, 1.0, 0.0), Filament(2.0, 1.0, 0.0)))


def test_filament_separation_recomputed():
    cfg = FilamentConfig((Filament(1.0, 1.0, 0.0), Filament(1.0, 1.0, 0.5)))
    assert cfg.d == pytest.approx(0.5)       # pair distance below both radii
    cfg = FilamentConfig((Filament(1.0, 0.3, 0.0), Filament(1.0, 1.0, 2.0)))
    assert cfg.d == pytest.approx(0.3)       # smallest radius wins


# ---------------------------------------------------------------------------
# lp_norm


def test_lp_norm_zero_field():
    g = square_grid()
    z = ScalarField.zeros(g)
    for p in (1, 2, np.inf):
        assert lp_norm(z, p) == 0.0


def test_lp_norm_single_cell_indicator():
    g = square_grid(32)
    vals = np.zeros((32, 32))
    vals[10, 20] = 3.5
    f = ScalarField(g, vals)
    assert lp_norm(f, 1) == pytest.approx(3.5 * g.h_r * g.h_z)
    assert lp_norm(f, np.inf) == pytest.approx(3.5)


def test_lp_norm_gaussian_mass():
    # adaptive-quadrature oracle for the radial profile gives exactly 1
    t = 1e-3
    oracle, err = quad(lambda rho: (1 / (4 * np.pi * t)) * np.exp(-rho**2 / (4 * t))
                       * 2 * np.pi * rho, 0, 20 * np.sqrt(t))
    assert err < 1e-10 and oracle == pytest.approx(1.0, abs=1e-9)
    g = Grid(0.0, 2.0, -1.0, 1.0, 400, 400)
    f = gaussian_vortex(g, 1.0, 1.0, 0.0, t)
    assert lp_norm(f, 1) == pytest.approx(oracle, abs=1e-6)


def test_lp_norm_rejects_p_below_one():
    g = square_grid(16)
    with pytest.raises(InvalidParameter):
        lp_norm(ScalarField.zeros(g), 0.5)


def test_lp_norm_homogeneity():
    rng = np.random.default_rng(3)
    g = square_grid(32)
    f = ScalarField(g, rng.normal(size=(32, 32)))
    cf = ScalarField(g, -2.5 * f.values)
    for p in (1, 2, 3, np.inf):
        assert lp_norm(cf, p) == pytest.approx(2.5 * lp_norm(f, p), rel=1e-13)


def test_lp_norm_holder_consistency():
    g = square_grid(48)
    f = gaussian_vortex(g, 1.0, 1.0, 0.0, 4e-3)
    area = (g.r_max - g.r_min) * (g.z_max - g.z_min)
    assert lp_norm(f, 1) <= lp_norm(f, np.inf) * area


def test_lp_norm_second_order_refinement():
    # smooth analytic field: error vs a fine reference drops ~4x per halving
    t = 4e-2
    def l1(n):
        g = Grid(0.0, 2.0, -1.0, 1.0, n, n)
        return lp_norm(gaussian_vortex(g, 1.0, 1.0, 0.0, t), 1)
    ref = l1(1024)
    errs = [abs(l1(n) - ref) for n in (32, 64, 128)]
    r1 = errs[0] / errs[1]
    r2 = errs[1] / errs[2]
    assert 3.2 <= r1 <= 4.8
    assert 3.2 <= r2 <= 4.8


# ---------------------------------------------------------------------------
# weighted L2 and the Gaussian profile


def test_weighted_l2_zero():
    f = FrameField.zeros(FrameGrid(8.0, 128))
    assert weighted_l2(f, 6.0) == 0.0


def test_weighted_l2_gaussian_value():
    # oracle: int G^2 w dX = 1/(4 pi)   (radial quadrature confirms to 1e-15)
    oracle = np.sqrt(1.0 / (4.0 * np.pi))   # = 0.28209479177387814
    G = oseen_profile(10.0, 512)
    assert weighted_l2(G, 10.0) == pytest.approx(oracle, abs=2e-6)


def test_weighted_l2_cutoff_tail():
    # frozen from the radial quadrature oracle:
    #   sqrt-integral difference vs cutoff -> inf: 1.7407e-5 at cutoff 6,
    #   1.59e-8 at cutoff 8 (the design default, below 1e-6)
    G = oseen_profile(12.0, 1024)
    full = np.sqrt(1.0 / (4.0 * np.pi))
    gap6 = full - weighted_l2(G, 6.0)
    assert gap6 == pytest.approx(1.7407e-5, rel=0.05)
    gap8 = full - weighted_l2(G, 8.0)
    assert abs(gap8) < 1e-6


def test_weighted_l2_rejects_cutoff_beyond_extent():
    G = oseen_profile(6.0, 64)
    with pytest.raises(InvalidParameter):
        weighted_l2(G, 6.5)


def test_oseen_profile_center_value_and_mass():
    G = oseen_profile(8.0, 256)
    assert G.values.max() == pytest.approx(1.0 / (4.0 * np.pi), rel=1e-3)
    mass = G.values.sum() * G.grid.cell_area
    assert mass == pytest.approx(1.0, abs=1e-4)


def test_oseen_profile_symmetry_exact():
    G = oseen_profile(5.0, 64).values
    assert np.array_equal(G, G[::-1, :])     # R -> -R
    assert np.array_equal(G, G[:, ::-1])     # Z -> -Z
    assert np.array_equal(G, G.T)            # R <-> Z


# ---------------------------------------------------------------------------
# interchange format


def test_field_dump_load_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    g = Grid(0.0, 1.5, -0.5, 2.5, 24, 16)
    f = ScalarField(g, rng.normal(size=(24, 16)) * 1e-7)
    path = tmp_path / "field.txt"
    dump_field(f, path)
    back = load_field(path)
    assert back.grid == g
    assert np.array_equal(back.values, f.values)
    header = path.read_text().splitlines()[0].split()
    assert header[:2] == ["24", "16"]
