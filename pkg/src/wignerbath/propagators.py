"""Closed-form system propagators and spectral scalar-bath two-point functions.

System particle (nonrelativistic, mass m_s): the time-ordered (Feynman) and
anti-time-ordered (Dyson) propagators have the exact closed forms

    G_F(a;b) = theta(a.t - b.t) (m/(2 pi i dt))^{d/2} exp(i m |dx|^2 / (2 dt))
    G_D(a;b) = theta(b.t - a.t) (same kernel, principal branch)

obtained by closing the frequency contour of the (omega, k) representation;
the i*epsilon limit is taken analytically so no numerical epsilon appears
here.  G_D(a;b) = conj(G_F(b;a)) holds identically.

Environment (relativistic real scalar, mass m_e, hard momentum cutoff
lambda_uv): the fixed-order two-point function <phi(1) phi(2)> is evaluated
by a deterministic composite Gauss-Legendre quadrature of its spectral
representation; Feynman/Dyson/Wightman orderings are assembled from it.  A
thermal state adds Bose-Einstein weighted positive/negative frequency parts.
"""

from dataclasses import dataclass

import numpy as np

_EXP_CUT = 700.0  # exp underflow guard for Bose factors


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the particle + scalar-bath model.

    Units: natural (hbar = c = 1); masses/momenta/temperature in the same
    mass unit, times and lengths in its inverse.
    """

    d: int
    m_s: float
    m_e: float
    g: float
    t_env: float = 0.0
    lambda_uv: float = 50.0

    def __post_init__(self):
        if self.d not in (1, 3):
            raise ValueError(f"spatial dimension must be 1 or 3, got {self.d}")
        if not (self.m_s > 0.0):
            raise ValueError("m_s must be positive")
        if not (self.m_e > 0.0):
            raise ValueError("m_e must be positive")
        if not (self.lambda_uv > self.m_e):
            raise ValueError("lambda_uv must exceed m_e")
        if self.t_env < 0.0:
            raise ValueError("t_env must be >= 0")
        if not np.isfinite(self.g):
            raise ValueError("g must be finite")


@dataclass(frozen=True)
class SpacetimePoint:
    t: float
    x: tuple

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in np.atleast_1d(self.x)))
        if not (np.isfinite(self.t) and all(np.isfinite(v) for v in self.x)):
            raise ValueError("spacetime point components must be finite")


def free_kernel(dt, dx2, m_s, d):
    """(m/(2 pi i dt))^{d/2} exp(i m dx^2/(2 dt)); principal branch, dt != 0."""
    pref = (m_s / (2j * np.pi * dt)) ** (d / 2.0)
    return pref * np.exp(1j * m_s * dx2 / (2.0 * dt))


def _delta_xsq(a, b, d):
    if len(a.x) != d or len(b.x) != d:
        raise ValueError("point dimension does not match params.d")
    return sum((ax - bx) ** 2 for ax, bx in zip(a.x, b.x))


def sys_feynman(a, b, params):
    """Time-ordered system propagator; vanishes identically for a.t < b.t."""
    dt = a.t - b.t
    if dt == 0.0:
        raise ValueError(
            "equal-time system propagator is a nascent delta; evaluate it "
            "inside a kernel integral, not pointwise"
        )
    if dt < 0.0:
        return 0.0j
    return complex(free_kernel(dt, _delta_xsq(a, b, params.d), params.m_s, params.d))


def sys_dyson(a, b, params):
    """Anti-time-ordered system propagator; vanishes identically for a.t > b.t."""
    dt = a.t - b.t
    if dt == 0.0:
        raise ValueError(
            "equal-time system propagator is a nascent delta; evaluate it "
            "inside a kernel integral, not pointwise"
        )
    if dt > 0.0:
        return 0.0j
    return complex(free_kernel(dt, _delta_xsq(a, b, params.d), params.m_s, params.d))


def gauss_panels(lo, hi, n_per_panel, n_panels):
    """Composite Gauss-Legendre nodes/weights on [lo, hi]."""
    base_x, base_w = np.polynomial.legendre.leggauss(n_per_panel)
    edges = np.linspace(lo, hi, n_panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * base_x[None, :]).ravel()
    weights = (half[:, None] * base_w[None, :]).ravel()
    return nodes, weights


def bose_occupation(omega, t_env):
    """1/(e^{omega/T} - 1), zero for the vacuum."""
    if t_env <= 0.0:
        return np.zeros_like(np.asarray(omega, dtype=float))
    arg = np.minimum(np.asarray(omega, dtype=float) / t_env, _EXP_CUT)
    return 1.0 / np.expm1(arg)


def wightman_amp(dt, dx, params, n_per_panel=24):
    """<phi(1) phi(2)> for separations dt = t1 - t2, dx = x1 - x2 (vectorized).

    Spectral form with the hard cutoff |k| <= lambda_uv:
        d=1:  (1/2pi) Int_0^L dk cos(k dx)/omega * [phases]
        d=3:  (1/4pi^2) Int_0^L dk k^2 sinc(k r)/omega * [phases]
    where [phases] = (1+n) e^{-i omega dt} + n e^{+i omega dt}.
    """
    dt = np.asarray(dt, dtype=float)
    lam = params.lambda_uv
    if params.d == 1:
        r = np.abs(np.asarray(dx, dtype=float))
    else:
        dx = np.asarray(dx, dtype=float)
        if dx.shape[-1] != params.d:
            raise ValueError("dx must have last axis of length d")
        r = np.sqrt(np.sum(dx**2, axis=-1))
    # deterministic panel count from the largest phase across the batch
    phase = lam * (float(np.max(np.abs(dt), initial=0.0)) + float(np.max(r, initial=0.0)) + 1.0)
    panels = max(8, int(np.ceil(phase / (2.0 * n_per_panel))))
    k, w = gauss_panels(0.0, lam, n_per_panel, panels)
    omega = np.sqrt(k**2 + params.m_e**2)
    occ = bose_occupation(omega, params.t_env)

    dt_b = dt[..., None]
    r_b = r[..., None]
    phases = (1.0 + occ) * np.exp(-1j * omega * dt_b) + occ * np.exp(1j * omega * dt_b)
    if params.d == 1:
        integrand = np.cos(k * r_b) / omega * phases
        return np.sum(w * integrand, axis=-1) / (2.0 * np.pi)
    ang = np.where(r_b > 0, np.sin(k * r_b) / np.where(r_b > 0, k * r_b, 1.0), 1.0)
    integrand = k**2 * ang / omega * phases
    return np.sum(w * integrand, axis=-1) / (4.0 * np.pi**2)


def env_wightman(a, b, params, n_per_panel=24):
    """Fixed-order bath propagator Delta^<_{ab} = <phi(b) phi(a)>."""
    if not np.isfinite(params.lambda_uv):
        raise ValueError("the bath propagator is UV divergent without a finite cutoff")
    dt = b.t - a.t
    if params.d == 1:
        dx = b.x[0] - a.x[0]
    else:
        dx = np.array(b.x) - np.array(a.x)
    return complex(np.ravel(wightman_amp(np.array(dt), dx, params, n_per_panel))[0])


def env_feynman(a, b, params, n_per_panel=24):
    """Time-ordered bath propagator."""
    if a.t >= b.t:
        return env_wightman(b, a, params, n_per_panel)
    return env_wightman(a, b, params, n_per_panel)


def env_dyson(a, b, params, n_per_panel=24):
    """Anti-time-ordered bath propagator."""
    if a.t >= b.t:
        return env_wightman(a, b, params, n_per_panel)
    return env_wightman(b, a, params, n_per_panel)
