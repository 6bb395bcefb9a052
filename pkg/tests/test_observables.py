import numpy as np
import pytest

from wignerbath import InitialStateSpec, make_initial_wigner, WignerFunction
from wignerbath.states import balanced_grid
from wignerbath.wigner import observables


def test_pure_gaussian_observables(w0_64):
    obs = observables(w0_64)
    assert obs.norm == pytest.approx(1.0, abs=1e-9)
    assert obs.purity == pytest.approx(1.0, abs=1e-6)
    assert abs(obs.negativity_volume) < 1e-8
    assert obs.mean_x == pytest.approx(0.0, abs=1e-12)
    assert obs.var_x == pytest.approx(1.0, abs=1e-8)
    assert obs.var_p == pytest.approx(0.25, abs=1e-8)


def test_mixture_purity():
    """Equal mixture of well-separated packets has purity ~ 1/2."""
    left = InitialStateSpec(kind="gaussian", x0=(-4.0,), p0=(0.0,), sigma=1.0)
    right = InitialStateSpec(kind="gaussian", x0=(4.0,), p0=(0.0,), sigma=1.0)
    grid = balanced_grid(InitialStateSpec(kind="gaussian", sigma=1.0), 128)
    w_l = make_initial_wigner(left, grid, boundary_tol=1e-4)
    w_r = make_initial_wigner(right, grid, boundary_tol=1e-4)
    mix = WignerFunction(grid=grid, t=0.0,
                         values=0.5 * w_l.values + 0.5 * w_r.values)
    obs = observables(mix)
    assert obs.norm == pytest.approx(1.0, abs=1e-6)
    assert obs.purity == pytest.approx(0.5, abs=1e-4)


def test_purity_never_exceeds_one(w0_64, cat_spec):
    assert observables(w0_64).purity <= 1.0 + 1e-6
    grid = balanced_grid(cat_spec, 128)
    wc = make_initial_wigner(cat_spec, grid)
    assert observables(wc).purity <= 1.0 + 1e-6


def test_displaced_moments():
    spec = InitialStateSpec(kind="gaussian", x0=(1.2,), p0=(-0.4,), sigma=0.7)
    grid = balanced_grid(spec, 128)
    w0 = make_initial_wigner(spec, grid, boundary_tol=1e-5)
    obs = observables(w0)
    assert obs.mean_x == pytest.approx(1.2, abs=1e-8)
    assert obs.mean_p == pytest.approx(-0.4, abs=1e-8)
    assert obs.var_x == pytest.approx(0.49, abs=1e-7)
    assert obs.var_p == pytest.approx(1.0 / (4 * 0.49), abs=1e-6)
