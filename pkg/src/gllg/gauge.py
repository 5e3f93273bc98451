"""SO(3)-valued rotation field, gauge potential and covariant operators.

The rotation field Y solves the matrix Stratonovich SDE driven by the
truncated Wiener process, dY = sum_j Ghat_j Y o dW_j with Y(0) = I, where
Ghat_j(x) h = h x g_j(x) acts pointwise.  Because every generator is a
pointwise multiplication operator the SDE decouples over grid points and
is integrated pointwise.

Two steppers are provided:

* "lie" (default): each step left-multiplies by exp(DTheta_hat) with
  DTheta = sum_j g_j dW_j.  This is exact for commuting (in particular
  single-mode) noise and keeps Y orthogonal to rounding accuracy.
* "heun": a plain Stratonovich-Heun matrix step followed by polar
  re-orthonormalisation (closest rotation), kept for cross-validation.
  The size of the polar correction is recorded, and a step is rejected
  when it exceeds 1e-3 (the step size is too large for the noise).

The gauge potential is A_i = Y^T (d_i Y), skew-symmetric pointwise; the
covariant operators are grad_A = grad + A and
lap_A = lap + A.grad + (div A) + A^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import fields, noise

_EYE3 = np.eye(3)

#: polar correction above which an SDE step is rejected
REORTH_REJECT = 1e-3
#: orthogonality defect that triggers re-orthonormalisation inside steppers
REORTH_TRIGGER = 1e-12


class GaugeStepError(RuntimeError):
    """SDE step rejected: the re-orthonormalisation correction was too large."""


@dataclass
class RotationField:
    """Grid of proper rotations: values (N, N, 3, 3) at a given time."""

    values: np.ndarray
    time: float = 0.0

    @property
    def grid_size(self):
        return self.values.shape[0]


@dataclass
class GaugeField:
    """Pair of so(3)-valued connection components (A_1, A_2).

    skew_defect records the largest deviation from skew-symmetry that the
    projection (A - A^T)/2 removed when the field was produced.
    """

    a1: np.ndarray
    a2: np.ndarray
    skew_defect: float = 0.0
    _div: np.ndarray | None = dc_field(default=None, repr=False, compare=False)
    _square: np.ndarray | None = dc_field(default=None, repr=False, compare=False)

    @property
    def grid_size(self):
        return self.a1.shape[0]

    def div(self):
        """div A = d1 A1 + d2 A2 (spectral), cached."""
        if self._div is None:
            self._div = fields.spectral_div(self.a1, self.a2, rank=2)
        return self._div

    def square(self):
        """A^2 = A1 @ A1 + A2 @ A2 pointwise, cached."""
        if self._square is None:
            self._square = self.a1 @ self.a1 + self.a2 @ self.a2
        return self._square


def _values(y):
    return y.values if isinstance(y, RotationField) else np.asarray(y)


def skew_from_vec(w):
    """Matrix W_hat with W_hat h = h x w, for w (..., 3)."""
    w = np.asarray(w)
    out = np.zeros(w.shape[:-1] + (3, 3))
    w1, w2, w3 = w[..., 0], w[..., 1], w[..., 2]
    out[..., 0, 1] = w3
    out[..., 0, 2] = -w2
    out[..., 1, 0] = -w3
    out[..., 1, 2] = w1
    out[..., 2, 0] = w2
    out[..., 2, 1] = -w1
    return out


def rotation_from_angle_field(theta):
    """exp(theta_hat) for a 3-vector (angle-axis) field theta (..., 3).

    Uses the closed form exp(t K) = I + sin(a) K/a + (1-cos a) K^2/a^2
    with the stable sinc evaluation, exact at theta = 0.
    """
    theta = np.asarray(theta)
    k = skew_from_vec(theta)
    a = np.linalg.norm(theta, axis=-1)
    c1 = np.sinc(a / np.pi)                      # sin(a)/a
    half = np.sinc(a / (2.0 * np.pi))
    c2 = 0.5 * half * half                        # (1 - cos a)/a^2
    k2 = k @ k
    return _EYE3 + c1[..., None, None] * k + c2[..., None, None] * k2


def rotate_by_angle_field(theta, v):
    """Apply exp(theta_hat) to a vector field without forming matrices.

    exp(theta_hat) v = v + sin(a)/a (v x theta) + (1-cos a)/a^2 ((v x theta) x theta)
    with a = |theta|; identical to rotation_from_angle_field followed by a
    matrix-vector product, at a fraction of the cost.
    """
    a = np.sqrt(np.sum(theta * theta, axis=-1))
    c1 = np.sinc(a / np.pi)[..., None]
    half = np.sinc(a / (2.0 * np.pi))
    c2 = (0.5 * half * half)[..., None]
    vxt = fields.cross(v, theta)
    return v + c1 * vxt + c2 * fields.cross(vxt, theta)


def rodrigues(w, g):
    """Rotation field I + sin(W) Ghat + (1 - cos W) Ghat^2 with Ghat h = h x g.

    `w` is a scalar or an (N, N) scalar field; `g` a unit 3-vector field
    (tolerance 1e-8) or a constant unit 3-vector.
    """
    g = np.asarray(g, dtype=float)
    if g.ndim == 1:
        n = np.shape(w)[0] if np.ndim(w) >= 1 else None
        if n is None:
            raise ValueError("rodrigues with constant w needs a field g or 2-d w")
        g = np.broadcast_to(g, (n, n, 3))
    defect = float(np.max(np.abs(np.linalg.norm(g, axis=-1) - 1.0)))
    if defect > 1e-8:
        raise ValueError(f"g must be a unit field: max | |g|-1 | = {defect:.3e}")
    w = np.asarray(w, dtype=float)
    ghat = skew_from_vec(g)
    sw = np.sin(w)[..., None, None]
    cw = (1.0 - np.cos(w))[..., None, None]
    values = _EYE3 + sw * ghat + cw * (ghat @ ghat)
    return RotationField(values=values, time=0.0)


def rodrigues_versor(w, g):
    """Raw rotation array for rodrigues(w, g) without the unit-g check."""
    ghat = skew_from_vec(np.asarray(g, dtype=float))
    w = np.asarray(w, dtype=float)
    return _EYE3 + np.sin(w)[..., None, None] * ghat \
        + (1.0 - np.cos(w))[..., None, None] * (ghat @ ghat)


def orthogonality_defect(y):
    """max | Y^T Y - I | over the grid (entrywise)."""
    v = _values(y)
    return float(np.max(np.abs(np.swapaxes(v, -1, -2) @ v - _EYE3)))


def det_defect(y):
    """max | det Y - 1 | over the grid."""
    return float(np.max(np.abs(np.linalg.det(_values(y)) - 1.0)))


def polar_project(m):
    """Closest rotation to each 3x3 block (polar decomposition via SVD)."""
    u, _, vt = np.linalg.svd(m)
    r = u @ vt
    det = np.linalg.det(r)
    # reflections cannot occur for near-rotations, but keep the result proper
    if np.any(det < 0):
        flip = np.where(det < 0, -1.0, 1.0)
        u = u.copy()
        u[..., :, 2] *= flip[..., None]
        r = u @ vt
    return r


class YIntegrator:
    """Stepwise integrator for the rotation-field SDE on a fixed noise path.

    Advances one path step at a time so callers (the transformed-route
    stepper) can consume A(t) at step endpoints without storing the whole
    Y history.
    """

    def __init__(self, basis, path, method="lie", y0=None):
        if method not in ("lie", "heun"):
            raise ValueError(f"unknown method {method!r}")
        self.basis = basis
        self.path = path
        self.method = method
        n = basis.grid_size
        if y0 is None:
            y0 = np.broadcast_to(_EYE3, (n, n, 3, 3)).copy()
        self.values = y0
        self.step_index = 0
        self.max_reorth_correction = 0.0

    @property
    def time(self):
        return self.step_index * self.path.dt

    def step(self):
        dw = self.path.increments[:, self.step_index]
        w = noise.wiener_field(self.basis, dw)
        if self.method == "lie":
            rot = rotation_from_angle_field(w)
            y = rot @ self.values
            if orthogonality_defect(y) > REORTH_TRIGGER:
                y = self._reorthonormalize(y)
        else:
            incr = skew_from_vec(w)
            pred = self.values + incr @ self.values
            y = self.values + 0.5 * incr @ (self.values + pred)
            y = self._reorthonormalize(y)
        self.values = y
        self.step_index += 1
        return self.values

    def _reorthonormalize(self, y):
        r = polar_project(y)
        corr = float(np.max(np.abs(r - y)))
        self.max_reorth_correction = max(self.max_reorth_correction, corr)
        if corr > REORTH_REJECT:
            raise GaugeStepError(
                f"re-orthonormalisation correction {corr:.3e} exceeds "
                f"{REORTH_REJECT:.0e} at step {self.step_index}; reduce dt"
            )
        return r

    def advance_to(self, step_index):
        while self.step_index < step_index:
            self.step()
        return self.values


def integrate_Y(basis, path, t_end, method="lie"):
    """Integrate dY = S(Y) dt + G(Y) dW from Y(0) = I up to t_end.

    Stratonovich stepping pointwise on the grid; returns a RotationField
    satisfying the orthogonality invariants.
    """
    n_steps = int(round(t_end / path.dt))
    if n_steps > path.n_steps or abs(n_steps * path.dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError(
            f"t_end={t_end} is not a step multiple within the path horizon "
            f"{path.t_end}"
        )
    integ = YIntegrator(basis, path, method=method)
    integ.advance_to(n_steps)
    return RotationField(values=integ.values, time=n_steps * path.dt)


def integrate_Y_adjoint(basis, path, t_end, method="lie"):
    """Integrate the adjoint equation dY* = -Y* G o dW, Y*(0) = I.

    The solution is the pointwise transpose of Y; integrating it directly
    provides a consistency check on the forward stepper.
    """
    n_steps = int(round(t_end / path.dt))
    if n_steps > path.n_steps:
        raise ValueError("t_end beyond path horizon")
    n = basis.grid_size
    y = np.broadcast_to(_EYE3, (n, n, 3, 3)).copy()
    for k in range(n_steps):
        w = noise.wiener_field(basis, path.increments[:, k])
        if method == "lie":
            y = y @ rotation_from_angle_field(-w)
        else:
            incr = skew_from_vec(w)
            pred = y - y @ incr
            y = y - 0.5 * (y + pred) @ incr
            y = polar_project(y)
    return RotationField(values=y, time=n_steps * path.dt)


def gauge_potential(y):
    """Gauge potential A_i = Y^T (d_i Y), skew part enforced by projection.

    The pre-projection deviation from skew-symmetry is recorded on the
    returned GaugeField as a quality metric.
    """
    v = _values(y)
    d1, d2 = fields.spectral_grad(v, rank=2)
    yt = np.swapaxes(v, -1, -2)
    a1 = yt @ d1
    a2 = yt @ d2
    defect = max(
        float(np.max(np.abs(a1 + np.swapaxes(a1, -1, -2)))),
        float(np.max(np.abs(a2 + np.swapaxes(a2, -1, -2)))),
    ) * 0.5
    a1 = 0.5 * (a1 - np.swapaxes(a1, -1, -2))
    a2 = 0.5 * (a2 - np.swapaxes(a2, -1, -2))
    return GaugeField(a1=a1, a2=a2, skew_defect=defect)


def zero_gauge(n):
    z = np.zeros((n, n, 3, 3))
    return GaugeField(a1=z, a2=z.copy(), skew_defect=0.0)


def curvature_residual(a):
    """sup-norm of the curvature d1 A2 - d2 A1 + [A1, A2] over the grid.

    Vanishes (to spectral accuracy) exactly when A is a pure gauge.
    """
    a1, a2 = a.a1, a.a2
    d1a2 = fields.spectral_grad(a2, rank=2)[0]
    d2a1 = fields.spectral_grad(a1, rank=2)[1]
    resid = d1a2 - d2a1 + a1 @ a2 - a2 @ a1
    return float(np.max(np.abs(resid)))


def matvec(m, v):
    """Pointwise matrix-vector product of (..., 3, 3) and (..., 3)."""
    return np.einsum("...ij,...j->...i", m, v)


def covariant_gradient(a, v):
    """(d1 v + A1 v, d2 v + A2 v)."""
    d1, d2 = fields.spectral_grad(v)
    if a is None:
        return d1, d2
    return d1 + matvec(a.a1, v), d2 + matvec(a.a2, v)


def covariant_laplacian(a, v):
    """lap_A v = grad_A . (grad_A v) = lap v + 2 A.grad v + (div A) v + A^2 v.

    A^2 = A1^2 + A2^2.  The first-order part is 2 A.grad because the
    operator composition div(A v) contributes (div A) v + A.grad v.
    """
    lap = fields.spectral_lap(v)
    if a is None:
        return lap
    d1, d2 = fields.spectral_grad(v)
    first = matvec(a.a1, d1) + matvec(a.a2, d2)
    return lap + 2.0 * first + matvec(a.div(), v) + matvec(a.square(), v)


def apply_rotation(y, v, transpose=False):
    """Pointwise (Y v)(x) = Y(x) v(x); with transpose=True applies Y^T."""
    m = _values(y)
    if transpose:
        m = np.swapaxes(m, -1, -2)
    return matvec(m, v)


def gauge_sobolev_norm(a, sigma):
    """Spectral H^sigma norm of the full connection (both components)."""
    total = fields.sobolev_norm(a.a1, sigma, rank=2) ** 2 \
        + fields.sobolev_norm(a.a2, sigma, rank=2) ** 2
    return float(np.sqrt(total))


def gauge_linf(a):
    """Pointwise sup of the connection magnitude sqrt(|A1|^2 + |A2|^2)."""
    mag = np.sqrt(np.sum(a.a1 ** 2, axis=(-2, -1)) + np.sum(a.a2 ** 2, axis=(-2, -1)))
    return float(np.max(mag))


def gauge_l2_ball(a, center, r):
    """|A|^2_{L2(B_r(center))} with the sharp periodic ball indicator."""
    n = a.grid_size
    dens = np.sum(a.a1 ** 2, axis=(-2, -1)) + np.sum(a.a2 ** 2, axis=(-2, -1))
    mask = fields.ball_mask(n, center, r)
    h = fields.grid_spacing(n)
    return float(np.sum(dens[mask]) * h * h)


def div_plus_sq_l2(a):
    """|div A + A^2|_{L2}, the inhomogeneity norm in the energy inequality."""
    diva = fields.spectral_div(a.a1, a.a2, rank=2)
    asq = a.a1 @ a.a1 + a.a2 @ a.a2
    return fields.l2_norm(diva + asq)


@dataclass
class GaugeTrace:
    """Scalar time traces of the connection along a run.

    Stores exactly what the horizon functional and the energy envelope
    consume: |A(t)|_{H^1}, |A(t)|_{H^2}, |A(t)|_{L^inf} and
    |div A + A^2|_{L^2} at step times.
    """

    times: list = dc_field(default_factory=list)
    h1: list = dc_field(default_factory=list)
    h2: list = dc_field(default_factory=list)
    linf: list = dc_field(default_factory=list)
    div_plus_sq: list = dc_field(default_factory=list)

    def record(self, t, a):
        self.times.append(float(t))
        self.h1.append(gauge_sobolev_norm(a, 1.0))
        self.h2.append(gauge_sobolev_norm(a, 2.0))
        self.linf.append(gauge_linf(a))
        self.div_plus_sq.append(div_plus_sq_l2(a))

    def as_arrays(self):
        return (np.asarray(self.times), np.asarray(self.h1), np.asarray(self.h2),
                np.asarray(self.linf), np.asarray(self.div_plus_sq))

    def __len__(self):
        return len(self.times)
