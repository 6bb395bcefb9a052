import numpy as np
import pytest

from wignerbath import (InitialStateSpec, ModelParams, QuadratureSpec,
                        make_initial_wigner, evolve, evolve_zeroth,
                        diagram_gain, diagram_loss_left, diagram_loss_right)
from wignerbath.states import balanced_grid, wigner_closed
from wignerbath.wigner import observables
from wignerbath.evolution import (_diagram_with_report, seg_e0, seg_e1,
                                  strip_gain_integral, window_loss_integral,
                                  modes_from_grid, modes_from_closed)


# ---------------------------------------------------------------------------
# closed-form time-integral helpers
# ---------------------------------------------------------------------------

def test_segment_integrals_against_quadrature():
    from numpy.polynomial.legendre import leggauss
    xg, wg = leggauss(80)
    rng = np.random.default_rng(1)
    for _ in range(20):
        beta = rng.uniform(-30, 30)
        s1, s2 = sorted(rng.uniform(0, 2, size=2))
        ss = 0.5 * (s2 - s1) * (xg + 1) + s1
        ws = 0.5 * (s2 - s1) * wg
        ref0 = np.sum(ws * np.exp(1j * beta * ss))
        ref1 = np.sum(ws * ss * np.exp(1j * beta * ss))
        assert abs(seg_e0(beta, s1, s2) - ref0) < 1e-12
        assert abs(seg_e1(beta, s1, s2) - ref1) < 1e-12
    # small-argument series branch: exact expansion through O(beta)
    beta = 1e-9
    expect = 1.3 + 1j * beta * 1.3**2 / 2.0
    assert abs(seg_e0(beta, 0.0, 1.3) - expect) < 1e-15
    assert seg_e1(0.0, 0.0, 1.3) == pytest.approx(1.3**2 / 2, abs=1e-12)


def test_strip_integral_full_window_factorizes():
    rng = np.random.default_rng(2)
    b1 = rng.normal(size=16) * 5
    b2 = rng.normal(size=16) * 5
    t = 1.3
    full = strip_gain_integral(b1, b2, t, np.zeros(16), np.full(16, 2 * t))
    prod = seg_e0(b1, 0.0, t) * seg_e0(b2, 0.0, t)
    assert np.max(np.abs(full - prod)) < 1e-13


def test_strip_integral_windowed():
    from numpy.polynomial.legendre import leggauss
    t = 1.3
    xg, wg = leggauss(60)

    def ref(b1, b2, lo, hi):
        kinks = sorted({0.0, t} | {v for v in (lo, hi, lo - t, hi - t)
                                   if 0.0 <= v <= t})
        total = 0.0 + 0.0j
        for a, b in zip(kinks[:-1], kinks[1:]):
            t1 = 0.5 * (b - a) * (xg + 1) + a
            w1 = 0.5 * (b - a) * wg
            alpha = np.clip(lo - t1, 0.0, t)
            beta = np.clip(hi - t1, 0.0, t)
            inner = (np.exp(1j * b2 * beta) - np.exp(1j * b2 * alpha)) / (1j * b2)
            total += np.sum(w1 * np.exp(1j * b1 * t1) * inner)
        return total

    for (lo, hi) in [(0.3, 1.9), (0.0, 1.1), (0.7, 2.6), (1.4, 2.2), (2.0, 9.0)]:
        got = strip_gain_integral(np.array(3.7), np.array(-2.2), t,
                                  np.array(lo), np.array(hi))
        assert abs(got - ref(3.7, -2.2, lo, hi)) < 1e-13


def test_window_loss_integral():
    from numpy.polynomial.legendre import leggauss
    xg, wg = leggauss(80)
    t = 0.9
    for (B, ta, tb) in [(4.2, 0.1, 0.7), (-11.0, 0.0, 0.9), (1e-8, 0.2, 0.4)]:
        ss = 0.5 * (tb - ta) * (xg + 1) + ta
        ws = 0.5 * (tb - ta) * wg
        ref = np.sum(ws * (t - ss) * np.exp(1j * B * ss))
        assert abs(window_loss_integral(np.array(B), t, ta, tb) - ref) < 1e-12


# ---------------------------------------------------------------------------
# mode representations
# ---------------------------------------------------------------------------

def test_grid_modes_reproduce_interpolant(gauss_spec):
    grid = balanced_grid(gauss_spec, 32)
    w0 = make_initial_wigner(gauss_spec, grid, boundary_tol=1e-6)
    modes = modes_from_grid(w0)
    rng = np.random.default_rng(9)
    for _ in range(5):
        X, Q = rng.uniform(-2, 2), rng.uniform(-1.5, 1.5)
        val = np.real(np.sum(modes.coef * np.exp(
            1j * (modes.u[:, 0][:, None] * X + modes.s[:, 0][None, :] * Q))))
        assert val == pytest.approx(
            float(wigner_closed(gauss_spec, np.array(X), np.array(Q))), abs=1e-9)


def test_closed_modes_reproduce_state(cat_spec):
    modes = modes_from_closed(cat_spec)
    rng = np.random.default_rng(10)
    for _ in range(5):
        X, Q = rng.uniform(-4, 4), rng.uniform(-1.5, 1.5)
        val = np.real(np.sum(modes.coef * np.exp(
            1j * (modes.u[:, 0][:, None] * X + modes.s[:, 0][None, :] * Q))))
        assert val == pytest.approx(
            float(wigner_closed(cat_spec, np.array(X), np.array(Q))), abs=1e-12)


# ---------------------------------------------------------------------------
# zeroth order
# ---------------------------------------------------------------------------

def test_zeroth_identity_at_t0(w0_64, params_ref):
    z = evolve_zeroth(w0_64, params_ref, 0.0)
    assert np.array_equal(z.values, w0_64.values)


def test_zeroth_is_analytic_shear(gauss_spec, w0_64, grid64, params_ref):
    t = 0.8
    z = evolve_zeroth(w0_64, params_ref, t)
    x = grid64.x_nodes
    p = grid64.p_nodes
    ref = wigner_closed(gauss_spec, x[:, None] - p[None, :] * t / params_ref.m_s,
                        p[None, :] + 0.0 * x[:, None])
    assert np.max(np.abs(z.values - ref)) < 1e-10


def test_zeroth_moments_and_norm(w0_64, params_ref):
    o0 = observables(w0_64)
    for t in (0.5, 1.0, 2.0):
        z = evolve_zeroth(w0_64, params_ref, t)
        oz = observables(z)
        expected = o0.var_x + t**2 * o0.var_p / params_ref.m_s**2
        assert oz.var_x == pytest.approx(expected, rel=1e-8)
        assert z.norm() == pytest.approx(w0_64.norm(), abs=1e-12)


def test_zeroth_composition(w0_64, params_ref):
    z12 = evolve_zeroth(evolve_zeroth(w0_64, params_ref, 0.7), params_ref, 0.8)
    z3 = evolve_zeroth(w0_64, params_ref, 1.5)
    assert np.max(np.abs(z12.values - z3.values)) < 1e-10


def test_zeroth_support_rejection(gauss_spec, params_ref):
    grid = balanced_grid(gauss_spec, 16)
    w0 = make_initial_wigner(gauss_spec, grid, boundary_tol=1e-4)
    with pytest.raises(ValueError, match="support leaves the box"):
        evolve_zeroth(w0, params_ref, 8.0)


# ---------------------------------------------------------------------------
# diagram properties
# ---------------------------------------------------------------------------

def test_diagrams_vanish_at_t0(tiny_instance):
    for fn in (diagram_gain, diagram_loss_left, diagram_loss_right):
        arr = fn(tiny_instance["w0"], tiny_instance["params"], 0.0,
                 tiny_instance["quad"])
        assert np.all(arr == 0.0)


def test_small_time_quadratic_scaling(tiny_instance):
    w0, params, quad = (tiny_instance[k] for k in ("w0", "params", "quad"))
    cell = tiny_instance["grid"].cell_volume
    for fn in (diagram_gain, diagram_loss_left):
        norms = [np.abs(fn(w0, params, t, quad, backend="closed")).sum() * cell
                 for t in (0.01, 0.02, 0.04)]
        r1 = norms[1] / norms[0]
        r2 = norms[2] / norms[1]
        assert r1 == pytest.approx(4.0, rel=0.05)
        assert r2 == pytest.approx(4.0, rel=0.05)


def test_loss_mirror_identity(gentle_instance):
    w0, params, t, quad = (gentle_instance[k] for k in
                           ("w0", "params", "t", "quad"))
    ll, _ = _diagram_with_report("loss_left", w0, params, t, quad, "grid")
    lr, _ = _diagram_with_report("loss_right", w0, params, t, quad, "grid")
    scale = np.max(np.abs(ll))
    assert np.max(np.abs(ll - np.conj(lr))) < 1e-12 * max(scale, 1.0)


def test_gain_is_real(gentle_instance):
    w0, params, t, quad = (gentle_instance[k] for k in
                           ("w0", "params", "t", "quad"))
    g, rep = _diagram_with_report("gain", w0, params, t, quad, "grid")
    assert rep["max_imag"] < 1e-12 * np.max(np.abs(g.real))


def test_backends_agree_when_wrap_free(gentle_instance):
    w0, params, t, quad = (gentle_instance[k] for k in
                           ("w0", "params", "t", "quad"))
    for term in ("gain", "loss_left"):
        vc, _ = _diagram_with_report(term, w0, params, t, quad, "closed")
        vg, _ = _diagram_with_report(term, w0, params, t, quad, "grid")
        assert np.max(np.abs(vc - vg)) < 1e-9 * np.max(np.abs(vc))


def test_quadrature_convergence_report(gentle_instance):
    """Doubling n_k changes each term by less than its error estimate."""
    w0, params, t = (gentle_instance[k] for k in ("w0", "params", "t"))
    base = QuadratureSpec(n_t=12, n_k=24, k_max=6.0, rel_tol=1e-4)
    fine = QuadratureSpec(n_t=24, n_k=48, k_max=6.0, rel_tol=1e-4)
    cell = gentle_instance["grid"].cell_volume
    for term in ("gain", "loss_left", "loss_right"):
        v1, rep = _diagram_with_report(term, w0, params, t, base, "grid")
        v2, _ = _diagram_with_report(term, w0, params, t, fine, "grid")
        change = float(np.sum(np.abs(v1 - v2)) * cell)
        assert rep["converged"]
        assert change <= max(rep["err_est"], 1e-14)


# ---------------------------------------------------------------------------
# assembled evolution
# ---------------------------------------------------------------------------

def test_evolve_g_zero_is_free_streaming(w0_64, params_ref):
    params = ModelParams(d=1, m_s=1.0, m_e=1.0, g=0.0, lambda_uv=8.0)
    quad = QuadratureSpec(n_k=16, k_max=8.0)
    res = evolve(w0_64, params, 0.7, quad)
    z = evolve_zeroth(w0_64, params, 0.7)
    assert np.array_equal(res.w_total.values, z.values)


def test_evolve_t_zero_is_identity(w0_64, params_ref):
    res = evolve(w0_64, params_ref, 0.0, QuadratureSpec(n_k=16, k_max=8.0))
    assert np.array_equal(res.w_total.values, w0_64.values)


def test_coupling_scaling(gentle_instance):
    """The assembled correction scales as g^2 with the kernel fixed."""
    w0, t, quad = (gentle_instance[k] for k in ("w0", "t", "quad"))
    p1 = ModelParams(d=1, m_s=1.0, m_e=1.0, g=0.1, lambda_uv=6.0)
    p2 = ModelParams(d=1, m_s=1.0, m_e=1.0, g=0.3, lambda_uv=6.0)
    r1 = evolve(w0, p1, t, quad)
    r2 = evolve(w0, p2, t, quad)
    corr1 = r1.w_total.values - r1.w_zeroth.values
    corr2 = r2.w_total.values - r2.w_zeroth.values
    assert np.max(np.abs(corr2 - 9.0 * corr1)) < 1e-12 * np.max(np.abs(corr2))
    assert np.array_equal(r1.w_gain, r2.w_gain)


def test_evolve_diagnostics(gentle_instance):
    w0, params, t, quad = (gentle_instance[k] for k in
                           ("w0", "params", "t", "quad"))
    res = evolve(w0, params, t, quad, workers=2)
    d = res.diagnostics
    assert abs(d["trace_defect_g2"]) <= max(1e-4 * d["gain_l1"], 1e-12)
    assert d["max_imag_residue"] < 1e-10
    assert d["hermiticity_defect"] < 1e-10
    assert not d["non_perturbative"]
    assert not d["quadrature_failed"]
    expected = res.w_zeroth.values + params.g**2 * (
        res.w_gain - res.w_loss_left - res.w_loss_right)
    assert np.array_equal(res.w_total.values, expected)


def test_workers_bit_identical(gentle_instance):
    w0, params, t, quad = (gentle_instance[k] for k in
                           ("w0", "params", "t", "quad"))
    r1 = evolve(w0, params, t, quad, workers=1)
    r3 = evolve(w0, params, t, quad, workers=3)
    assert np.array_equal(r1.w_total.values, r3.w_total.values)


def test_thermal_branches_run(gentle_instance):
    w0, t, quad = (gentle_instance[k] for k in ("w0", "t", "quad"))
    warm = ModelParams(d=1, m_s=1.0, m_e=1.0, g=0.1, lambda_uv=6.0, t_env=0.7)
    cold = ModelParams(d=1, m_s=1.0, m_e=1.0, g=0.1, lambda_uv=6.0)
    r_warm = evolve(w0, warm, t, quad)
    r_cold = evolve(w0, cold, t, quad)
    # a warm bath scatters more
    warm_l1 = np.abs(r_warm.w_gain).sum()
    cold_l1 = np.abs(r_cold.w_gain).sum()
    assert warm_l1 > cold_l1
    assert r_warm.diagnostics["max_imag_residue"] < 1e-10
    assert abs(r_warm.diagnostics["trace_defect_g2"]) <= \
        max(1e-4 * r_warm.diagnostics["gain_l1"], 1e-12)
