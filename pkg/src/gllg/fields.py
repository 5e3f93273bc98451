"""Discrete field algebra on the flat 2-torus.

The domain is [0, 2*pi)^2 sampled on a uniform N x N grid, wavenumbers
k in {-N/2, ..., N/2-1}^2 (standard FFT layout).  Conventions used by
every module in this package:

* scalar fields   -> arrays (..., N, N)          spatial axes (-2, -1)
* vector fields   -> arrays (..., N, N, 3)       spatial axes (-3, -2)
* matrix fields   -> arrays (..., N, N, 3, 3)    spatial axes (-4, -3)

Leading axes are broadcast (used for batched Monte Carlo states).  All
derivatives are spectral: exact for resolved Fourier modes, with the
Nyquist row/column zeroed in odd-derivative multipliers.

The Sobolev norm of order sigma is the spectral norm
``(sum_k (1+|k|^2)^sigma |fhat(k)|^2)^(1/2)`` normalised so that
``|1|_{L2} = 2*pi`` on the full torus (Parseval with area 4*pi^2).
"""

from __future__ import annotations

import os

import numpy as np
import scipy.fft as _sfft

TWO_PI = 2.0 * np.pi
#: side length of the torus, in the units used everywhere in this package
DOMAIN_LENGTH = TWO_PI


class StepFailureError(RuntimeError):
    """A time step produced an unusable state (candidate blow-up).

    Carries the failure time and a diagnostic payload (the local energy
    density at the last valid state) when raised from a stepping loop.
    """

    def __init__(self, message, time=None, payload=None):
        super().__init__(message)
        self.time = time
        self.payload = payload


_WORKERS_CACHE = None


def _workers():
    """Thread count for FFT calls; set via the GLLG_THREADS environment variable."""
    global _WORKERS_CACHE
    if _WORKERS_CACHE is None:
        env = os.environ.get("GLLG_THREADS")
        count = os.cpu_count() or 1
        if env:
            try:
                count = max(1, int(env))
            except ValueError:
                pass
        _WORKERS_CACHE = count
    return _WORKERS_CACHE


# cached per-N wavenumber grids and masks
_KCACHE = {}


def wavenumbers(n):
    """Integer wavenumber grids (k1, k2), each (N, N), FFT layout."""
    if n not in _KCACHE:
        k = np.fft.fftfreq(n, d=1.0 / n)
        k1 = k[:, None] * np.ones((1, n))
        k2 = np.ones((n, 1)) * k[None, :]
        ksq = k1 ** 2 + k2 ** 2
        # zero the Nyquist line in odd-derivative multipliers
        dk = k.copy()
        if n % 2 == 0:
            dk[n // 2] = 0.0
        d1 = dk[:, None] * np.ones((1, n))
        d2 = np.ones((n, 1)) * dk[None, :]
        cut = n // 3
        mask = (np.abs(k1) <= cut) & (np.abs(k2) <= cut)
        _KCACHE[n] = (k1, k2, ksq, d1, d2, mask)
    return _KCACHE[n]


def grid(n):
    """Physical coordinates (x1, x2), each (N, N), x = 2*pi*i/N."""
    x = TWO_PI * np.arange(n) / n
    return np.meshgrid(x, x, indexing="ij")


def grid_spacing(n):
    return TWO_PI / n


def _spatial_axes(f, rank):
    """Spatial axes for a field with `rank` trailing component axes."""
    nd = f.ndim
    return (nd - rank - 2, nd - rank - 1)


def _fft(f, rank):
    return _sfft.fft2(f, axes=_spatial_axes(f, rank), workers=_workers())


def _ifft(fh, rank):
    return _sfft.ifft2(fh, axes=_spatial_axes(fh, rank), workers=_workers())


def _bcast(mult, rank):
    """Reshape an (N, N) spectral multiplier to broadcast over components."""
    return mult.reshape(mult.shape + (1,) * rank)


def spectral_grad(f, rank=1):
    """Spectral partial derivatives (d1 f, d2 f) of a field.

    `rank` is the number of trailing component axes (0 scalar, 1 vector,
    2 matrix).
    """
    n = f.shape[_spatial_axes(f, rank)[0]]
    _, _, _, d1, d2, _ = wavenumbers(n)
    fh = _fft(f, rank)
    g1 = _ifft(1j * _bcast(d1, rank) * fh, rank).real
    g2 = _ifft(1j * _bcast(d2, rank) * fh, rank).real
    return g1, g2


def spectral_lap(f, rank=1):
    """Spectral Laplacian of a field."""
    n = f.shape[_spatial_axes(f, rank)[0]]
    _, _, ksq, _, _, _ = wavenumbers(n)
    fh = _fft(f, rank)
    return _ifft(-_bcast(ksq, rank) * fh, rank).real


def spectral_div(f1, f2, rank=1):
    """Spectral divergence d1 f1 + d2 f2 of a 2-component field pair."""
    n = f1.shape[_spatial_axes(f1, rank)[0]]
    _, _, _, d1, d2, _ = wavenumbers(n)
    fh1 = _fft(f1, rank)
    fh2 = _fft(f2, rank)
    out = 1j * (_bcast(d1, rank) * fh1 + _bcast(d2, rank) * fh2)
    return _ifft(out, rank).real


def dealias(f, rank=1):
    """2/3-rule dealiasing: zero modes with |k_i| > N//3."""
    n = f.shape[_spatial_axes(f, rank)[0]]
    mask = wavenumbers(n)[5]
    fh = _fft(f, rank)
    return _ifft(_bcast(mask, rank) * fh, rank).real


def integrate(density):
    """Quadrature of a scalar density over the torus (uniform Riemann sum)."""
    h = grid_spacing(density.shape[-1])
    return np.sum(density, axis=(-2, -1)) * h * h


def sobolev_norm(f, sigma, rank=None):
    """Spectral Sobolev norm |f|_{H^sigma} of a single field.

    All non-spatial axes are treated as components.  Normalised so that
    the constant field 1 has |1|_{L2} = 2*pi.
    """
    if rank is None:
        rank = f.ndim - 2
    n = f.shape[_spatial_axes(f, rank)[0]]
    ksq = wavenumbers(n)[2]
    fh = _fft(f, rank) / (n * n)
    comp_axes = tuple(range(f.ndim - rank, f.ndim))
    power = np.abs(fh) ** 2
    if comp_axes:
        power = power.sum(axis=comp_axes)
    weight = (1.0 + ksq) ** sigma
    return TWO_PI * np.sqrt(np.sum(weight * power))


def l2_norm(f):
    """L2 norm of a single field (N, N, C...) by quadrature.

    Equals sobolev_norm(f, 0) by Parseval.
    """
    return float(np.sqrt(np.sum(f ** 2)) * grid_spacing(f.shape[0]))


def cross(a, b):
    """Componentwise cross product of (..., 3) arrays (faster than np.cross)."""
    a1, a2, a3 = a[..., 0], a[..., 1], a[..., 2]
    b1, b2, b3 = b[..., 0], b[..., 1], b[..., 2]
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = a2 * b3 - a3 * b2
    out[..., 1] = a3 * b1 - a1 * b3
    out[..., 2] = a1 * b2 - a2 * b1
    return out


def max_norm_defect(v):
    """max_x | |v(x)| - 1 | for a vector field."""
    return float(np.max(np.abs(np.linalg.norm(v, axis=-1) - 1.0)))


def assert_unit(v, tol=1e-6):
    defect = max_norm_defect(v)
    if defect > tol:
        raise ValueError(f"field is not unit-norm: max | |v|-1 | = {defect:.3e} > {tol:.1e}")


def project_sphere(v, min_norm=0.5):
    """Normalise a vector field onto the unit sphere pointwise.

    Raises StepFailureError if any vector has length below `min_norm`
    (the preceding step was unstable).
    """
    norms = np.linalg.norm(v, axis=-1)
    small = float(norms.min())
    if small < min_norm:
        raise StepFailureError(
            f"pointwise norm collapsed to {small:.3e} < {min_norm}; step unstable"
        )
    return v / norms[..., None]


def dirichlet_energy(v, gauge=None):
    """Dirichlet energy (1/2) * integral |grad_A v|^2.

    With `gauge=None` this is the plain exchange energy (1/2)|grad v|^2;
    otherwise `gauge` supplies matrix fields (a1, a2) and the covariant
    gradient grad + A is used.
    """
    g1, g2 = spectral_grad(v)
    if gauge is not None:
        a1, a2 = _gauge_components(gauge)
        g1 = g1 + np.einsum("...ij,...j->...i", a1, v)
        g2 = g2 + np.einsum("...ij,...j->...i", a2, v)
    density = 0.5 * (np.sum(g1 * g1, axis=-1) + np.sum(g2 * g2, axis=-1))
    return integrate(density)


def _gauge_components(gauge):
    if hasattr(gauge, "a1"):
        return gauge.a1, gauge.a2
    return gauge


def energy_density(v):
    """Pointwise Dirichlet energy density (1/2)|grad v|^2."""
    g1, g2 = spectral_grad(v)
    return 0.5 * (np.sum(g1 * g1, axis=-1) + np.sum(g2 * g2, axis=-1))


def periodic_distance_sq(n, center):
    """Squared periodic distance of every grid point to a center index."""
    h = grid_spacing(n)
    idx = np.arange(n)
    d1 = np.abs(idx - center[0])
    d1 = np.minimum(d1, n - d1) * h
    d2 = np.abs(idx - center[1])
    d2 = np.minimum(d2, n - d2) * h
    return d1[:, None] ** 2 + d2[None, :] ** 2


def ball_mask(n, center, r):
    """Sharp indicator of the periodic ball B_r(center), center a grid index."""
    return periodic_distance_sq(n, center) < r * r


def local_energy(v, center, r):
    """Energy (1/2) int_{B_r(center)} |grad v|^2 with a sharp ball indicator.

    `center` is a grid index pair; the ball uses the periodic metric.
    """
    n = v.shape[-2]
    if not 0.0 < r < DOMAIN_LENGTH / 2:
        raise ValueError(f"radius must lie in (0, L/2); got {r}")
    dens = energy_density(v)
    mask = ball_mask(n, center, r)
    h = grid_spacing(n)
    return float(np.sum(dens[mask]) * h * h)


def ball_sums(density, r):
    """Sum of `density` (N, N) over the periodic ball B_r(c) for every center c.

    Evaluated for all centers at once by circular convolution with the
    sharp ball indicator.
    """
    n = density.shape[-1]
    mask = ball_mask(n, (0, 0), r).astype(float)
    out = _sfft.ifft2(_sfft.fft2(density) * _sfft.fft2(mask)).real
    return out


def local_energy_sup(v, r):
    """(sup over centers, argmax center index) of local_energy at radius r."""
    n = v.shape[-2]
    h = grid_spacing(n)
    sums = ball_sums(energy_density(v), r) * h * h
    idx = np.unravel_index(int(np.argmax(sums)), sums.shape)
    return float(sums[idx]), idx


def smallest_resolvable_scale(n):
    """Finest concentration scale the grid can certify (about two cells)."""
    return 2.0 * grid_spacing(n)


# ---------------------------------------------------------------------------
# parabolic rescaling
# ---------------------------------------------------------------------------

def _bilinear_sample(field, x1, x2):
    """Periodic bilinear interpolation of (N, N, C...) at physical points."""
    n = field.shape[0]
    h = grid_spacing(n)
    f1 = x1 / h
    f2 = x2 / h
    i0 = np.floor(f1).astype(int)
    j0 = np.floor(f2).astype(int)
    t1 = f1 - i0
    t2 = f2 - j0
    i0 %= n
    j0 %= n
    i1 = (i0 + 1) % n
    j1 = (j0 + 1) % n
    w00 = (1 - t1) * (1 - t2)
    w01 = (1 - t1) * t2
    w10 = t1 * (1 - t2)
    w11 = t1 * t2
    extra = field.ndim - 2
    sh = w00.shape + (1,) * extra
    return (
        field[i0, j0] * w00.reshape(sh)
        + field[i0, j1] * w01.reshape(sh)
        + field[i1, j0] * w10.reshape(sh)
        + field[i1, j1] * w11.reshape(sh)
    )


def parabolic_rescale(times, states, lam, z0, patch_times, halfwidth, n_space,
                      gauge_factor=False):
    """Parabolically rescaled family v(t', x') = u(t0 + lam^2 t', x0 + lam x').

    `states` is (T, N, N, C...) sampled at `times`; `z0 = (t0, x0)` with x0
    physical coordinates.  The sample patch is the Cartesian square
    [-halfwidth, halfwidth]^2 with `n_space` points per axis, linear
    interpolation in time and bilinear in space.  With `gauge_factor=True`
    the result carries the extra factor lam that connection components
    pick up under rescaling.

    Returns (patch_times, patch_coords, values) with values
    (len(patch_times), n_space, n_space, C...).
    """
    times = np.asarray(times, dtype=float)
    states = np.asarray(states)
    t0, x0 = z0
    patch_times = np.atleast_1d(np.asarray(patch_times, dtype=float))
    if lam * halfwidth > DOMAIN_LENGTH / 2:
        raise ValueError("rescaled sample box does not fit inside the torus chart")
    t_phys = t0 + lam * lam * patch_times
    if t_phys.min() < times[0] - 1e-12 or t_phys.max() > times[-1] + 1e-12:
        raise ValueError("rescaled time window lies outside the computed trajectory")
    xi = np.linspace(-halfwidth, halfwidth, n_space)
    p1, p2 = np.meshgrid(xi, xi, indexing="ij")
    q1 = (x0[0] + lam * p1) % DOMAIN_LENGTH
    q2 = (x0[1] + lam * p2) % DOMAIN_LENGTH
    out = []
    for tp in t_phys:
        j = int(np.searchsorted(times, tp, side="right")) - 1
        j = min(max(j, 0), len(times) - 2) if len(times) > 1 else 0
        if len(times) == 1:
            snap = states[0]
        else:
            w = (tp - times[j]) / (times[j + 1] - times[j])
            w = min(max(w, 0.0), 1.0)
            snap = (1.0 - w) * states[j] + w * states[j + 1]
        out.append(_bilinear_sample(snap, q1, q2))
    values = np.stack(out)
    if gauge_factor:
        values = lam * values
    return patch_times, xi, values


def patch_dirichlet_energy(field, spacing):
    """Dirichlet energy of a patch sample by second-order finite differences."""
    g1, g2 = np.gradient(field, spacing, axis=(0, 1))
    dens = 0.5 * (np.sum(g1 * g1, axis=-1) + np.sum(g2 * g2, axis=-1))
    return float(np.sum(dens) * spacing * spacing)


def patch_l2_norm(field, spacing):
    """L2 norm of a patch sample by the uniform Riemann sum."""
    return float(np.sqrt(np.sum(field ** 2) * spacing * spacing))
