"""Wigner functions, density matrices, and the transforms between them.

Conventions (natural units, d spatial dimensions):

    W(x, p)   = (1/pi^d) Int d^dz rho(x - z, x + z) e^{2i p.z}
    rho(x, y) = Int d^dp W((x + y)/2, p) e^{-i p.(y - x)}

On a grid both integrals are evaluated exactly for the band-limited
(trigonometric) interpolant of the samples; the half-node midpoint in the
inverse transform is evaluated spectrally, never by nearest-node lookup.
All grid functions are treated as periodic over the box.
"""

from dataclasses import dataclass, field

import numpy as np

from .grids import PhaseSpaceGrid

# relative tolerance used when checking Hermiticity / imaginary residues
DEFAULT_HERMITICITY_TOL = 1e-10
DEFAULT_IMAG_TOL = 1e-12


@dataclass
class WignerFunction:
    """Real phase-space distribution sampled on a grid at one time."""

    grid: PhaseSpaceGrid
    t: float
    values: np.ndarray
    normalized: bool = True
    source: object = None  # InitialStateSpec when built from a closed form

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.value_shape():
            raise ValueError(
                f"Wigner values shape {self.values.shape} does not match grid "
                f"shape {self.grid.value_shape()}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("Wigner values must be finite")

    def norm(self):
        return float(self.values.sum() * self.grid.cell_volume)


@dataclass
class DensityMatrix:
    """Complex position-space density matrix sampled on the grid nodes."""

    grid: PhaseSpaceGrid
    t: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.grid.density_shape():
            raise ValueError(
                f"density matrix shape {self.values.shape} does not match grid "
                f"shape {self.grid.density_shape()}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("density matrix values must be finite")

    def trace(self):
        d, n = self.grid.d, self.grid.n_x
        vals = self.values
        for _ in range(d):
            vals = np.trace(vals, axis1=0, axis2=vals.ndim // 2)
        return complex(vals * self.grid.dx**d)

    def hermiticity_defect(self):
        """max |rho - rho^dagger| over all elements."""
        d = self.grid.d
        axes = tuple(range(d, 2 * d)) + tuple(range(d))
        return float(np.max(np.abs(self.values - self.values.conj().transpose(axes))))


def signed_mode_numbers(n):
    """Signed integer mode numbers with the Nyquist mode split into +/- halves.

    Returns (freqs, weights): `freqs` has length n+1 and `weights` multiply
    the FFT coefficients so that the interpolant is real for real samples.
    """
    m = np.arange(n)
    f = np.where(m < n // 2, m, m - n)
    freqs = np.concatenate([f[: n // 2], [-(n // 2), n // 2], f[n // 2 + 1 :]])
    weights = np.ones(n + 1)
    weights[n // 2] = 0.5
    weights[n // 2 + 1] = 0.5
    return freqs, weights


def mode_coefficients(values, axis):
    """FFT coefficients (Nyquist-split) of the trig interpolant along `axis`.

    The interpolant is  f(j) = sum_m c_m e^{2 pi i f_m j / n}  with c ordered
    like `signed_mode_numbers(n)[0]`.
    """
    n = values.shape[axis]
    c = np.fft.fft(values, axis=axis) / n
    freqs, weights = signed_mode_numbers(n)
    idx = freqs % n
    c = np.take(c, idx, axis=axis)
    shape = [1] * c.ndim
    shape[axis] = n + 1
    return c * weights.reshape(shape), freqs


def half_shift(arr, axis, delta):
    """Resample the trig interpolant along `axis` shifted by `delta` nodes.

    Exact for the split-Nyquist interpolant; for |delta| = 1/2 the Nyquist
    coefficient picks up cos(pi*delta) = 0.
    """
    n = arr.shape[axis]
    m = np.arange(n)
    f = np.where(m < n // 2, m, m - n).astype(float)
    phase = np.exp(2j * np.pi * f * delta / n)
    phase[n // 2] = np.cos(np.pi * delta)
    shape = [1] * arr.ndim
    shape[axis] = n
    return np.fft.ifft(np.fft.fft(arr, axis=axis) * phase.reshape(shape), axis=axis)


def _wigner_pair(arr, n, dx):
    """Transform the last two axes (row, col) of a density array to (x, p).

    Evaluates (1/pi) Int dz rho(x - z, x + z) e^{2ipz} with rho treated as
    compactly supported in the box (zero-padded to twice the box, so no
    periodic image interferes).  The z-sum runs on the half-grid: even
    z-steps read samples directly, odd steps read the interpolant shifted by
    half a cell in both arguments, which keeps the quadrature exact for
    band-limited data.
    """
    two = 2 * n
    pad = np.zeros(arr.shape[:-2] + (two, two), dtype=complex)
    pad[..., :n, :n] = arr
    pad_h = half_shift(half_shift(pad, -2, -0.5), -1, +0.5)
    J = np.arange(n)[:, None]
    M = np.arange(two)[None, :]
    ia, ib = (J - M) % two, (J + M) % two
    even = pad[..., ia, ib]  # z = m*dx
    odd = pad_h[..., ia, ib]  # z = (m + 1/2)*dx
    g = np.empty(arr.shape[:-2] + (n, 4 * n), dtype=complex)
    g[..., 0::2] = even
    g[..., 1::2] = odd
    # W[j,r] = (dx/2pi) sum_l g[j,l] e^{i pi (r - n/2) l / n}
    w4 = np.fft.ifft(g, axis=-1) * (4 * n)
    idx = (2 * np.arange(n) - n) % (4 * n)
    return np.take(w4, idx, axis=-1) * (dx / (2.0 * np.pi))


def _density_pair(arr, n, dp):
    """Transform the last two axes (x, p) of a Wigner array to (row, col).

    rho(x_a, x_b) = sum_r W((x_a + x_b)/2, p_r) e^{-i p_r (x_b - x_a)} dp with
    the midpoint evaluated spectrally on the half-node grid.
    """
    w_shift = half_shift(arr, -2, +0.5)
    w_half = np.empty(arr.shape[:-2] + (2 * n, n), dtype=complex)
    w_half[..., 0::2, :] = arr
    w_half[..., 1::2, :] = w_shift

    a = np.arange(n)
    H = a[:, None] + a[None, :]  # midpoint half-node index, 0..2n-2
    delta = a[None, :] - a[:, None]  # b - a
    r = np.arange(n)
    # e^{-i p_r (b-a) dx} = e^{-i pi (r - n/2)(b - a)/n}
    K = np.exp(-1j * np.pi * np.einsum("r,ab->rab", r - n // 2, delta) / n) * dp
    gathered = w_half[..., H, :]  # (..., a, b, r)
    return np.einsum("...abr,rab->...ab", gathered, K)


def wigner_from_density(rho, grid, hermiticity_tol=DEFAULT_HERMITICITY_TOL,
                        imag_tol=DEFAULT_IMAG_TOL):
    """Wigner transform of a gridded density matrix.

    The z-integral is carried out exactly for the band-limited interpolant of
    rho along every anti-diagonal.  Rejects non-Hermitian input and checks
    that the imaginary residue of the result is below `imag_tol` (relative to
    the largest value) before discarding it.
    """
    if not isinstance(rho, DensityMatrix):
        raise TypeError("rho must be a DensityMatrix")
    if rho.grid != grid:
        raise ValueError("density matrix grid does not match the requested grid")
    scale = max(float(np.max(np.abs(rho.values))), 1e-300)
    defect = rho.hermiticity_defect()
    if defect > hermiticity_tol * scale:
        raise ValueError(
            f"density matrix is not Hermitian: defect {defect:.3e} exceeds "
            f"{hermiticity_tol:.1e} * max|rho| = {hermiticity_tol * scale:.3e}"
        )

    d, n = grid.d, grid.n_x
    vals = rho.values.astype(complex)
    for axis in range(d):
        vals = np.moveaxis(vals, (axis, d + axis), (-2, -1))
        vals = _wigner_pair(vals, n, grid.dx)
        vals = np.moveaxis(vals, (-2, -1), (axis, d + axis))

    w_scale = max(float(np.max(np.abs(vals))), 1e-300)
    residue = float(np.max(np.abs(vals.imag)))
    if residue > imag_tol * w_scale:
        raise ValueError(
            f"Wigner transform imaginary residue {residue:.3e} exceeds "
            f"{imag_tol:.1e} * max|W|; input inconsistent"
        )
    return WignerFunction(grid=grid, t=rho.t, values=vals.real, normalized=False)


def density_from_wigner(w):
    """Inverse Wigner transform, spectrally exact for the grid interpolant."""
    if not isinstance(w, WignerFunction):
        raise TypeError("w must be a WignerFunction")
    grid = w.grid
    d, n = grid.d, grid.n_x
    vals = w.values.astype(complex)
    for axis in range(d):
        vals = np.moveaxis(vals, (axis, d + axis), (-2, -1))
        vals = _density_pair(vals, n, grid.dp)
        vals = np.moveaxis(vals, (-2, -1), (axis, d + axis))
    return DensityMatrix(grid=grid, t=w.t, values=vals)


def marginals(w):
    """Position and momentum marginal distributions of a Wigner function."""
    grid = w.grid
    d = grid.d
    pos = w.values.sum(axis=tuple(range(d, 2 * d))) * grid.dp**d
    mom = w.values.sum(axis=tuple(range(d))) * grid.dx**d
    return pos, mom


@dataclass
class ObservableRecord:
    norm: float
    purity: float
    negativity_volume: float
    mean_x: np.ndarray
    mean_p: np.ndarray
    var_x: np.ndarray
    var_p: np.ndarray

    def as_dict(self):
        return {
            "norm": self.norm,
            "purity": self.purity,
            "negativity_volume": self.negativity_volume,
            "mean_x": list(np.atleast_1d(self.mean_x)),
            "mean_p": list(np.atleast_1d(self.mean_p)),
            "var_x": list(np.atleast_1d(self.var_x)),
            "var_p": list(np.atleast_1d(self.var_p)),
        }


def observables(w):
    """Norm, purity, negativity volume, and first/second moments by grid sums.

    purity = (2 pi)^d Int W^2;  negativity_volume = Int |W| - Int W.
    Moments are normalized by the norm.
    """
    grid = w.grid
    d = grid.d
    cell = grid.cell_volume
    vals = w.values
    norm = float(vals.sum() * cell)
    purity = float((2.0 * np.pi) ** d * (vals**2).sum() * cell)
    negativity = float((np.abs(vals) - vals).sum() * cell)

    pos, mom = marginals(w)
    x = grid.x_nodes
    p = grid.p_nodes
    mean_x = np.empty(d)
    mean_p = np.empty(d)
    var_x = np.empty(d)
    var_p = np.empty(d)
    for axis in range(d):
        px = pos.sum(axis=tuple(i for i in range(d) if i != axis)) * grid.dx ** (d - 1)
        pp = mom.sum(axis=tuple(i for i in range(d) if i != axis)) * grid.dp ** (d - 1)
        mean_x[axis] = (x * px).sum() * grid.dx / norm
        mean_p[axis] = (p * pp).sum() * grid.dp / norm
        var_x[axis] = ((x - mean_x[axis]) ** 2 * px).sum() * grid.dx / norm
        var_p[axis] = ((p - mean_p[axis]) ** 2 * pp).sum() * grid.dp / norm
    return ObservableRecord(
        norm=norm,
        purity=purity,
        negativity_volume=negativity,
        mean_x=mean_x if d > 1 else float(mean_x[0]),
        mean_p=mean_p if d > 1 else float(mean_p[0]),
        var_x=var_x if d > 1 else float(var_x[0]),
        var_p=var_p if d > 1 else float(var_p[0]),
    )
