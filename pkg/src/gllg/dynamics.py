"""Time stepping of the two equivalent formulations.

Direct route: Stratonovich stepping of the spin equation

    dm = -m x (lap m + alpha m x lap m) dt + (m x dW-field) o dW,

split per step into a Stratonovich-consistent noise substep followed by a
deterministic drift substep.  Transformed route: the spin field in the
rotating frame obeys a noise-free equation with random gauge coefficients,

    du/dt = alpha (lap_A u + |grad_A u|^2 u) - u x lap_A u,

stepped with the connection frozen at the stage times.  In both routes the
drift uses the Gilbert (tension-field) form of the right-hand side, which
coincides with the cross-product form on unit fields; the stiff
alpha*lap part is handled by an integrating factor in Fourier space
(semi-implicit mode, no diffusive CFL limit) or explicitly (explicit mode,
CFL-guarded).  Nonlinear terms are dealiased by the 2/3 rule and every
step ends with projection back onto the sphere; the pre-projection norm
defect is recorded since it doubles as a convergence diagnostic.

Noise substeps (all converge to the Stratonovich solution):

* "exp"  - pointwise rotation by exp(DTheta_hat), DTheta = sum_j g_j dW_j;
           exact solution of the noise subflow, preserves |m| = 1 exactly.
* "heun" - Stratonovich-Heun on the noise subflow (predictor/corrector).
* "ito"  - Euler-Maruyama plus the explicit Ito correction S(m) dt.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.fft as _sfft

from . import fields, gauge, noise
from .fields import StepFailureError

SCHEMES = ("direct_stratonovich", "transformed_gauge")
STEPPINGS = ("semi_implicit", "explicit")
NOISE_STEPPINGS = ("exp", "heun", "ito")


@dataclass
class LlgParams:
    """Run parameters for either route."""

    alpha: float
    dt: float
    t_end: float
    n: int
    scheme: str = "direct_stratonovich"
    stepping: str = "semi_implicit"
    noise_stepping: str = "exp"
    c_cfl: float = 0.1
    stride: int = 1
    initial_norm_tol: float = 1e-6

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive; got {self.alpha}")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive; got {self.dt}")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.stepping not in STEPPINGS:
            raise ValueError(f"unknown stepping {self.stepping!r}")
        if self.noise_stepping not in NOISE_STEPPINGS:
            raise ValueError(f"unknown noise_stepping {self.noise_stepping!r}")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.stepping == "explicit":
            h = fields.grid_spacing(self.n)
            limit = self.c_cfl * h * h / self.alpha
            if self.dt > limit:
                raise ValueError(
                    f"explicit stepping violates the CFL guard: dt={self.dt:.3e} > "
                    f"c_cfl*(L/N)^2/alpha = {limit:.3e}"
                )

    @property
    def n_steps(self):
        n = int(round(self.t_end / self.dt)) if self.t_end > 0 else 0
        if self.t_end > 0 and abs(n * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise ValueError("t_end must be an integer multiple of dt")
        return n


@dataclass
class Trajectory:
    """Stored snapshots of a run plus failure and quality metadata."""

    times: np.ndarray
    states: np.ndarray
    params: LlgParams | None = None
    seed: int | None = None
    scheme: str = "direct_stratonovich"
    basis_hash: str = ""
    failed: bool = False
    failure_time: float | None = None
    failure_payload: np.ndarray | None = None
    stats: dict = dc_field(default_factory=dict)
    gauge_trace: gauge.GaugeTrace | None = None
    final_rotation: np.ndarray | None = None
    initial_grad_sq: float = 0.0

    @classmethod
    def from_states(cls, times, states, **kw):
        """Wrap a hand-built family of snapshots (synthetic trajectories)."""
        states = np.asarray(states, dtype=float)
        traj = cls(times=np.asarray(times, dtype=float), states=states, **kw)
        if not traj.initial_grad_sq:
            traj.initial_grad_sq = 2.0 * fields.dirichlet_energy(states[0])
        return traj

    @property
    def grid_size(self):
        return self.states.shape[-2]


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------

def llg_drift(m, alpha):
    """Precession plus damping: -m x lap m - alpha m x (m x lap m).

    Spectral Laplacian; the returned product is dealiased (2/3 rule).
    """
    lap = fields.spectral_lap(m)
    mxl = fields.cross(m, lap)
    return fields.dealias(-mxl - alpha * fields.cross(m, mxl))


def _rhs_core(u, lap_u, d1, d2, a, alpha):
    """Gilbert-form right-hand side from precomputed plain derivatives of u."""
    if a is not None:
        a1u = gauge.matvec(a.a1, u)
        a2u = gauge.matvec(a.a2, u)
        c1 = d1 + a1u
        c2 = d2 + a2u
        first = gauge.matvec(a.a1, d1) + gauge.matvec(a.a2, d2)
        lap_a = lap_u + 2.0 * first + gauge.matvec(a.div(), u) \
            + gauge.matvec(a.a1, a1u) + gauge.matvec(a.a2, a2u)
        grad_sq = np.sum(c1 * c1, axis=-1) + np.sum(c2 * c2, axis=-1)
    else:
        lap_a = lap_u
        grad_sq = np.sum(d1 * d1, axis=-1) + np.sum(d2 * d2, axis=-1)
    return alpha * (lap_a + grad_sq[..., None] * u) - fields.cross(u, lap_a)


def gauged_rhs(u, a, alpha):
    """alpha (lap_A u + |grad_A u|^2 u) - u x lap_A u, dealiased.

    With a=None the covariant operators reduce to the plain ones and this
    is the Gilbert-form deterministic LLG right-hand side.
    """
    lap_u = fields.spectral_lap(u)
    g1, g2 = fields.spectral_grad(u)
    return fields.dealias(_rhs_core(u, lap_u, g1, g2, a, alpha))


def perturbation_F(u, a, alpha):
    """Lower-order gauge perturbation F(t, A, u), dealiased.

    F = alpha (A.grad u + (div A) u + A^2 u)
      + alpha (|A u|^2 u + 2 <grad u, A u> u)
      - u x (A.grad u + (div A) u + A^2 u),

    so that gauged_rhs(u, A) = [alpha(lap u + |grad u|^2 u) - u x lap u] + F.
    """
    if a is None:
        return np.zeros_like(u)
    g1, g2 = fields.spectral_grad(u)
    a1u = gauge.matvec(a.a1, u)
    a2u = gauge.matvec(a.a2, u)
    # lap_A u - lap u; the first-order part appears twice (A.grad + div(A u))
    core = 2.0 * (gauge.matvec(a.a1, g1) + gauge.matvec(a.a2, g2)) \
        + gauge.matvec(a.div(), u) + gauge.matvec(a.square(), u)
    au_sq = np.sum(a1u * a1u, axis=-1) + np.sum(a2u * a2u, axis=-1)
    mixed = np.sum(g1 * a1u, axis=-1) + np.sum(g2 * a2u, axis=-1)
    out = alpha * (core + (au_sq + 2.0 * mixed)[..., None] * u) - fields.cross(u, core)
    return fields.dealias(out)


def perturbation_bound_terms(u, a):
    """Pointwise |A|^2, |div A| and |A||grad u| entering the bound on |F|."""
    g1, g2 = fields.spectral_grad(u)
    amag = np.sqrt(np.sum(a.a1 ** 2, axis=(-2, -1)) + np.sum(a.a2 ** 2, axis=(-2, -1)))
    diva = fields.spectral_div(a.a1, a.a2, rank=2)
    divmag = np.sqrt(np.sum(diva ** 2, axis=(-2, -1)))
    gradmag = np.sqrt(np.sum(g1 ** 2 + g2 ** 2, axis=-1))
    return amag ** 2, divmag, amag * gradmag


# ---------------------------------------------------------------------------
# steppers
# ---------------------------------------------------------------------------

class _SpectralWorkspace:
    """Per-(N, dt, alpha) spectral multipliers shared by the steppers.

    Uses the real transform (rfft2 over the spatial axes, components kept)
    and extracts (lap, d1, d2) in one batched inverse transform.
    """

    def __init__(self, n, dt, alpha):
        _, _, ksq, d1, d2, mask = fields.wavenumbers(n)
        half = n // 2 + 1
        self.n = n
        self.ksq = ksq[:, :half][..., None]
        self.mask = mask[:, :half][..., None]
        self.ifac = np.exp(-alpha * ksq * dt)[:, :half][..., None]
        self.id1 = (1j * d1)[:, :half][..., None]
        self.id2 = (1j * d2)[:, :half][..., None]

    def fft(self, f):
        return _sfft.rfft2(f, axes=(-3, -2), workers=fields._workers())

    def ifft(self, fh):
        return _sfft.irfft2(fh, axes=(-3, -2), s=(self.n, self.n),
                            workers=fields._workers())

    def derivatives(self, fh):
        """(lap, d1, d2) in physical space from the transform of a vector field."""
        buf = np.empty((3,) + fh.shape, dtype=fh.dtype)
        np.multiply(fh, -self.ksq, out=buf[0])
        np.multiply(fh, self.id1, out=buf[1])
        np.multiply(fh, self.id2, out=buf[2])
        out = self.ifft(buf)
        return out[0], out[1], out[2]


class DriftStepper:
    """One deterministic step of the (possibly gauged) Gilbert-form drift.

    semi_implicit: Lawson/integrating-factor Heun, the alpha*lap term is
    integrated exactly in Fourier space; explicit: plain Heun.  The
    nonlinear stage is dealiased; the state is projected to the sphere by
    the caller.
    """

    def __init__(self, params):
        self.params = params
        self.ws = _SpectralWorkspace(params.n, params.dt, params.alpha)

    def _stage(self, u, uh, a):
        lap, g1, g2 = self.ws.derivatives(uh)
        rhs = _rhs_core(u, lap, g1, g2, a, self.params.alpha)
        return rhs, lap

    def step(self, u, a_start=None, a_end=None, stage_observer=None):
        dt = self.params.dt
        alpha = self.params.alpha
        ws = self.ws
        mask = ws.mask
        uh = ws.fft(u)
        if self.params.stepping == "semi_implicit":
            e = ws.ifac
            lap0, g1, g2 = ws.derivatives(uh)
            if stage_observer is not None:
                stage_observer(u, lap0, g1, g2)
            rhs0 = _rhs_core(u, lap0, g1, g2, a_start, alpha)
            n0h = mask * ws.fft(rhs0 - alpha * lap0)
            pred_h = e * (uh + dt * n0h)
            pred = ws.ifft(pred_h)
            rhs1, lap1 = self._stage(pred, pred_h, a_end if a_end is not None else a_start)
            n1h = mask * ws.fft(rhs1 - alpha * lap1)
            out_h = e * uh + 0.5 * dt * (e * n0h + n1h)
            return ws.ifft(out_h)
        rhs0, _ = self._stage(u, uh, a_start)
        r0h = mask * ws.fft(rhs0)
        pred = u + dt * ws.ifft(r0h)
        rhs1, _ = self._stage(pred, ws.fft(pred), a_end if a_end is not None else a_start)
        r1h = mask * ws.fft(rhs1)
        return u + 0.5 * dt * ws.ifft(r0h + r1h)


def noise_substep(m, basis, dw, kind="exp", dt=None):
    """Advance the pure-noise subflow dm = (m x dW-field) o dW by one step.

    `dw` has shape (..., J) (leading axes batch over paths).
    """
    w = noise.wiener_field(basis, dw)
    if kind == "exp":
        return gauge.rotate_by_angle_field(w, m)
    if kind == "heun":
        a = fields.cross(m, w)
        return m + a + 0.5 * fields.cross(a, w)
    if kind == "ito":
        if dt is None:
            raise ValueError("ito noise substep needs dt for the correction term")
        return m + fields.cross(m, w) + dt * noise.stratonovich_correction(basis, m)
    raise ValueError(f"unknown noise substep {kind!r}")


class DirectStepper:
    """Noise substep followed by a drift substep, then sphere projection."""

    def __init__(self, params, basis):
        self.params = params
        self.basis = basis
        self.drift = DriftStepper(params)
        self.max_pre_projection_defect = 0.0

    def step(self, m, dw):
        if dw is not None and not self.basis.is_zero():
            m = noise_substep(m, self.basis, dw, kind=self.params.noise_stepping,
                              dt=self.params.dt)
        m = self.drift.step(m)
        self.max_pre_projection_defect = max(
            self.max_pre_projection_defect, fields.max_norm_defect(m))
        return fields.project_sphere(m)


class TransformedStepper:
    """Deterministic step of the gauged equation with the connection frozen
    at the stage times."""

    def __init__(self, params):
        self.params = params
        self.drift = DriftStepper(params)
        self.max_pre_projection_defect = 0.0

    def step(self, u, a_start, a_end=None):
        u = self.drift.step(u, a_start, a_end)
        self.max_pre_projection_defect = max(
            self.max_pre_projection_defect, fields.max_norm_defect(u))
        return fields.project_sphere(u)


def step_direct(m, basis, dw, params):
    """One step of the direct Stratonovich route (convenience wrapper)."""
    return DirectStepper(params, basis).step(m, dw)


def step_transformed(u, a_start, a_end, params):
    """One step of the transformed route with frozen-path connection."""
    return TransformedStepper(params).step(u, a_start, a_end)


# ---------------------------------------------------------------------------
# trajectory driver
# ---------------------------------------------------------------------------

def run(params, basis, initial, seed=None, path=None, gauge_method="lie",
        record_gauge_trace=None, store_rotation=True):
    """Advance a full trajectory under either scheme.

    The Brownian path is sampled from `seed` unless an explicit `path` is
    supplied (refinement studies reuse one seed across resolutions).  For
    the transformed route the rotation field is integrated stepwise on the
    identical increments and the connection is evaluated at the step
    endpoints; when the basis is exactly zero the rotation stays at the
    identity and the gauge terms are skipped, which makes the zero-noise
    limits of the two routes bit-identical.

    On a step failure (pointwise norm collapse) the run aborts cleanly,
    recording the failure time and the local energy density of the last
    valid state as the diagnostic payload.
    """
    from .trajio import basis_digest

    m0 = np.asarray(initial, dtype=float)
    defect = fields.max_norm_defect(m0)
    if defect > params.initial_norm_tol:
        raise ValueError(
            f"initial data violates |m|=1 by {defect:.3e} > "
            f"{params.initial_norm_tol:.1e}; refusing to project silently"
        )
    n_steps = params.n_steps
    if path is None:
        if n_steps > 0:
            path = noise.sample_path(basis, params.t_end, n_steps, seed if seed is not None else 0)
    else:
        if path.n_steps < n_steps:
            raise ValueError("supplied path is shorter than the run horizon")
        if abs(path.dt - params.dt) > 1e-12 * max(1.0, params.dt):
            raise ValueError("supplied path has a different dt than params")

    initial_grad_sq = 2.0 * fields.dirichlet_energy(m0)
    traj = Trajectory(
        times=np.array([0.0]), states=m0[None].copy(), params=params, seed=seed,
        scheme=params.scheme, basis_hash=basis_digest(basis),
        initial_grad_sq=initial_grad_sq,
    )
    if n_steps == 0:
        return traj

    transformed = params.scheme == "transformed_gauge"
    zero_noise = basis.is_zero()
    if record_gauge_trace is None:
        record_gauge_trace = transformed

    snap_times = [0.0]
    snaps = [m0.copy()]
    state = m0.copy()

    y_int = None
    a_curr = None
    gauged_energy = None
    gtrace = gauge.GaugeTrace() if (transformed and record_gauge_trace) else None
    if transformed and not zero_noise:
        y_int = gauge.YIntegrator(basis, path, method=gauge_method)
        a_curr = gauge.gauge_potential(y_int.values)
        gauged_energy = [fields.dirichlet_energy(m0, a_curr)]
        if gtrace is not None:
            gtrace.record(0.0, a_curr)

    stepper = TransformedStepper(params) if transformed else DirectStepper(params, basis)
    completed = 0

    try:
        for k in range(n_steps):
            t_next = (k + 1) * params.dt
            if transformed:
                if zero_noise:
                    state = stepper.step(state, None, None)
                else:
                    y_int.step()
                    a_next = gauge.gauge_potential(y_int.values)
                    state = stepper.step(state, a_curr, a_next)
                    a_curr = a_next
                    if gtrace is not None:
                        gtrace.record(t_next, a_curr)
            else:
                dw = path.increments[:, k]
                state = stepper.step(state, dw)
            completed = k + 1
            if (k + 1) % params.stride == 0 or (k + 1) == n_steps:
                snap_times.append(t_next)
                snaps.append(state.copy())
                if gauged_energy is not None:
                    gauged_energy.append(fields.dirichlet_energy(state, a_curr))
    except StepFailureError as failure:
        traj.failed = True
        traj.failure_time = (k + 1) * params.dt
        traj.failure_payload = fields.energy_density(snaps[-1] if snaps else m0)
        failure.time = traj.failure_time
        failure.payload = traj.failure_payload

    traj.times = np.asarray(snap_times)
    traj.states = np.stack(snaps)
    traj.gauge_trace = gtrace
    traj.stats = {
        "max_pre_projection_defect": stepper.max_pre_projection_defect,
        "n_steps_completed": completed,
    }
    if gauged_energy is not None:
        traj.stats["gauged_energy"] = np.asarray(gauged_energy)
    if y_int is not None:
        traj.stats["max_reorth_correction"] = y_int.max_reorth_correction
        if store_rotation:
            traj.final_rotation = y_int.values
    return traj
