"""Initial data constructors.

All constructors return unit vector fields exactly on the sphere: random
smooth data are parametrised through band-limited angle fields (so the
spectrum decays factorially and spectral operations see analytic data),
and the degree-1 bubble is the inverse stereographic projection of the
plane bubble glued to the constant north pole by a smooth radial cutoff.
"""

from __future__ import annotations

import numpy as np

from . import fields
from .fields import DOMAIN_LENGTH, TWO_PI

NORTH = np.array([0.0, 0.0, 1.0])


def constant_field(n, vec=(0.0, 0.0, 1.0)):
    vec = np.asarray(vec, dtype=float)
    vec = vec / np.linalg.norm(vec)
    return np.broadcast_to(vec, (n, n, 3)).copy()


def single_harmonic(n, wavenumber=1):
    """Equator-valued harmonic field m = (cos k x1, sin k x1, 0).

    lap m = -k^2 m is parallel to m, so the precession and damping terms
    vanish identically: an exact equilibrium of the deterministic flow.
    """
    x1, _ = fields.grid(n)
    out = np.zeros((n, n, 3))
    out[..., 0] = np.cos(wavenumber * x1)
    out[..., 1] = np.sin(wavenumber * x1)
    return out


def sphere_from_angles(theta, phi):
    """Unit field (sin t cos p, sin t sin p, cos t) from scalar angle fields."""
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def band_limited_scalar(n, seed, kmax=3, amp=1.0):
    """Random real scalar field with modes |k|_inf <= kmax, sup-scaled to amp."""
    rng = np.random.default_rng(seed)
    x1, x2 = fields.grid(n)
    out = np.zeros((n, n))
    for k1 in range(0, kmax + 1):
        for k2 in range(-kmax, kmax + 1):
            if k1 == 0 and k2 <= 0:
                continue
            decay = 1.0 / (1.0 + k1 * k1 + k2 * k2)
            a, b = rng.normal(size=2) * decay
            out += a * np.cos(k1 * x1 + k2 * x2) + b * np.sin(k1 * x1 + k2 * x2)
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= amp / peak
    return out


def random_smooth_spinfield(n, seed, kmax=3, amp=0.8):
    """Random smooth unit field: north pole tilted by band-limited angles.

    `amp` bounds the polar angle, so the Dirichlet energy grows with amp;
    amp <= 0.9 keeps the fields comfortably below the 4*pi concentration
    threshold at kmax <= 3.
    """
    theta = band_limited_scalar(n, seed, kmax=kmax, amp=amp)
    phi = band_limited_scalar(n, seed + 7919, kmax=kmax, amp=np.pi / 2)
    return sphere_from_angles(theta, phi)


def random_unit_axis_field(n, seed, kmax=2, amp=0.7):
    """Random smooth unit 3-vector field (for noise axes and rotation tests)."""
    return random_smooth_spinfield(n, seed, kmax=kmax, amp=amp)


def _smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        f0 = np.where(t > 0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
        f1 = np.where(t < 1, np.exp(-1.0 / np.maximum(1.0 - t, 1e-300)), 0.0)
    return f0 / (f0 + f1)


def bubble(n, rho, center=None, cutoff_radius=None, cutoff_width=None):
    """Degree-1 harmonic bubble of scale rho glued to the north pole.

    Inverse stereographic projection of the plane bubble,

        b(y) = (2 rho y1, 2 rho y2, |y|^2 - rho^2) / (rho^2 + |y|^2),

    interpolated to the constant north pole across a smooth radial cutoff
    starting at `cutoff_radius` (default L/4).  The plane bubble carries
    Dirichlet energy exactly 4*pi; the glue region contributes < 1% for
    rho <= L/64.
    """
    if center is None:
        center = (DOMAIN_LENGTH / 2, DOMAIN_LENGTH / 2)
    if cutoff_radius is None:
        cutoff_radius = DOMAIN_LENGTH / 4
    if cutoff_width is None:
        cutoff_width = DOMAIN_LENGTH / 8
    x1, x2 = fields.grid(n)
    # displacement wrapped to the symmetric chart (-L/2, L/2]
    y1 = (x1 - center[0] + DOMAIN_LENGTH / 2) % DOMAIN_LENGTH - DOMAIN_LENGTH / 2
    y2 = (x2 - center[1] + DOMAIN_LENGTH / 2) % DOMAIN_LENGTH - DOMAIN_LENGTH / 2
    rr = y1 * y1 + y2 * y2
    denom = rho * rho + rr
    b = np.stack([2 * rho * y1, 2 * rho * y2, rr - rho * rho], axis=-1) / denom[..., None]
    r = np.sqrt(rr)
    chi = 1.0 - _smooth_step((r - cutoff_radius) / cutoff_width)
    glued = chi[..., None] * b + (1.0 - chi)[..., None] * NORTH
    return fields.project_sphere(glued, min_norm=0.2)


def bubble_plane_energy_in_disc(rho, radius):
    """Closed-form plane-bubble energy inside a disc: 4*pi R^2/(rho^2 + R^2)."""
    return 4.0 * np.pi * radius * radius / (rho * rho + radius * radius)


def shrinking_bubble_states(n, rho0, times, t_star, center=None):
    """Hand-built bubble family with scale rho(t) = rho0 (1 - t/t_star).

    Synthetic trajectory for the concentration detector; not a simulation.
    """
    states = []
    for t in times:
        rho = rho0 * (1.0 - t / t_star)
        if rho <= 0:
            raise ValueError("times must stay strictly below t_star")
        states.append(bubble(n, rho, center=center))
    return np.stack(states)


def from_config_kind(kind, n, options=None):
    """Build initial data named by a run-config `initial.kind`."""
    options = dict(options or {})
    if kind == "constant":
        return constant_field(n, options.get("vec", (0.0, 0.0, 1.0)))
    if kind == "single_harmonic":
        return single_harmonic(n, int(options.get("wavenumber", 1)))
    if kind == "bubble":
        rho = float(options.get("rho", DOMAIN_LENGTH / 64))
        center = options.get("center")
        return bubble(n, rho, center=center)
    if kind == "random_smooth":
        return random_smooth_spinfield(
            n, int(options.get("seed", 0)),
            kmax=int(options.get("kmax", 3)), amp=float(options.get("amp", 0.8)))
    if kind == "file":
        path = options.get("path")
        if not path:
            raise ValueError("initial kind 'file' needs a 'path' option")
        arr = np.load(path)
        if arr.shape != (n, n, 3):
            raise ValueError(f"initial file has shape {arr.shape}, expected {(n, n, 3)}")
        return arr
    raise ValueError(f"unknown initial kind {kind!r}")
