"""Energy processes, well-posedness horizon, and the bubbling detector.

Three families of diagnostics:

* Energy traces: global and gauged Dirichlet energy along a trajectory,
  plus the sup over ball centers of the local energy at configured radii
  (evaluated for all centers at once by circular convolution).

* Horizon machinery: the increasing functional h(t) built from the
  connection norms and the initial gradient, and the first time tau_h
  with h(t) t >= eps^2/(4c).  Up to tau_h the local-smallness hypothesis
  is guaranteed, so tau_h is a certified well-posedness horizon.

* Concentration (bubbling) detector: near a blow-up time the flow parks
  at least 4*pi of energy in arbitrarily small balls around isolated
  points.  The detector scans a trailing time window for ball energies
  >= beta * 4*pi persisting across a shrinking radius list and clusters
  hits into distinct centers.  Any finite grid has a smallest resolvable
  concentration scale (about two cells), which every report carries.

The Monte Carlo energy-balance check verifies the mean Ito energy
identity for single-mode noise g = f h:

    E(m(t)) - E(m(0)) + alpha int_0^t |lap m + |grad m|^2 m|^2 ds
        = martingale + (1/2) int_0^t |m x grad g|^2 ds,

whose martingale part averages to zero; the residual of the means is
compared against 3 standard errors plus a measured time-discretisation
bias (coupled dt-halving on a path subset).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import dynamics, fields, gauge, noise

FOUR_PI = 4.0 * np.pi

#: default smallness threshold: eps^2 = 0.1 * 4*pi (the quantum is 4*pi,
#: but the hypothesis constant is not numerically sharp)
DEFAULT_EPSILON = float(np.sqrt(0.1 * FOUR_PI))
#: default analysis constant in the horizon threshold eps^2/(4c)
DEFAULT_C = 1.0
#: default detector threshold factor: fire at beta * 4*pi
DEFAULT_BETA = 0.9


@dataclass
class ConcentrationEvent:
    """A detected energy concentration (candidate bubble)."""

    time: float
    center: tuple
    radius: float
    energy_in_ball: float

    @property
    def threshold_multiple(self):
        return self.energy_in_ball / FOUR_PI

    def as_dict(self):
        return {
            "time": self.time, "center": [int(self.center[0]), int(self.center[1])],
            "radius": self.radius, "energy_in_ball": self.energy_in_ball,
            "threshold_multiple": self.threshold_multiple,
        }


@dataclass
class EnergyTrace:
    """Time series of the energy diagnostics of one trajectory."""

    times: np.ndarray
    global_energy: np.ndarray
    gauged_energy: np.ndarray | None
    sup_local: dict
    tau_h: float
    events: list
    smallest_resolvable_scale: float
    grad_sq: np.ndarray = None

    def __post_init__(self):
        if self.grad_sq is None:
            self.grad_sq = 2.0 * np.asarray(self.global_energy)


# ---------------------------------------------------------------------------
# horizon machinery
# ---------------------------------------------------------------------------

def horizon_h(times, h1, h2, u0_grad_sq, r0):
    """The increasing functional h(t) evaluated at the stored times.

    h(t) = (1 + |grad u0|^2 + int_0^t |A|_{H1}^4 ds) * exp(int_0^t |A|_{H2}^2 ds)
           * (r0^-2 + sup_{s<=t} |A(s)|_{H2}^2) + 1 + sup_{s<=t} |A(s)|_{H1}^4,

    with time integrals by the trapezoid rule over the stored snapshots
    and running suprema over the stored snapshots.  The single initial
    datum replaces the supremum over an approximating sequence.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ValueError("horizon_h needs a non-empty connection trace")
    if not 0.0 < r0 < 1.0:
        raise ValueError(f"r0 must lie in (0, 1); got {r0}")
    h1 = np.asarray(h1, dtype=float)
    h2 = np.asarray(h2, dtype=float)
    if times.size == 1:
        i4 = np.zeros(1)
        i2 = np.zeros(1)
    else:
        i4 = cumulative_trapezoid(h1 ** 4, times, initial=0.0)
        i2 = cumulative_trapezoid(h2 ** 2, times, initial=0.0)
    m2 = np.maximum.accumulate(h2 ** 2)
    m1 = np.maximum.accumulate(h1 ** 4)
    return (1.0 + u0_grad_sq + i4) * np.exp(i2) * (r0 ** -2 + m2) + 1.0 + m1


def zero_connection_h(times, u0_grad_sq, r0):
    """h(t) for a vanishing connection: constant (1 + |grad u0|^2) r0^-2 + 1."""
    times = np.asarray(times, dtype=float)
    return np.full(times.shape, (1.0 + u0_grad_sq) * r0 ** -2 + 1.0)


def horizon_tau(times, h_values, epsilon, c_const, t_end=None):
    """First stored time with h(t) t >= eps^2 / (4c); t_end if never reached.

    h(t) t is increasing on the discrete trace, so the first crossing is
    found by bisection (searchsorted).
    """
    if epsilon <= 0 or c_const <= 0:
        raise ValueError("epsilon and c must be positive")
    times = np.asarray(times, dtype=float)
    g = times * np.asarray(h_values, dtype=float)
    threshold = epsilon * epsilon / (4.0 * c_const)
    idx = int(np.searchsorted(g, threshold))
    if idx >= len(times):
        return float(t_end if t_end is not None else times[-1])
    return float(times[idx])


def gronwall_envelope(times, div_plus_sq, linf, u0_grad_sq, alpha, c_const=None):
    """Upper envelope for |grad u(t)|^2 from the local energy inequality:

    (|grad u0|^2 + c int |div A + A^2|^2 ds) * exp(c int |A|_inf^2 ds),

    with c calibrated once at 4 (1 + 1/alpha).
    """
    if c_const is None:
        c_const = 4.0 * (1.0 + 1.0 / alpha)
    times = np.asarray(times, dtype=float)
    dps = np.asarray(div_plus_sq, dtype=float)
    linf = np.asarray(linf, dtype=float)
    if times.size == 1:
        return np.full(1, u0_grad_sq)
    i_src = cumulative_trapezoid(dps ** 2, times, initial=0.0)
    i_exp = cumulative_trapezoid(linf ** 2, times, initial=0.0)
    return (u0_grad_sq + c_const * i_src) * np.exp(c_const * i_exp)


def envelope_check(traj, tolerance=0.05, c_const=None):
    """Check |grad u(t)|^2 against the Gronwall envelope along a run.

    Requires a transformed-route trajectory carrying a gauge trace; a
    violation beyond `tolerance` flags scheme instability.
    """
    gt = traj.gauge_trace
    if gt is None or len(gt) == 0:
        raise ValueError("envelope_check needs a trajectory with a gauge trace")
    times, _, _, linf, dps = gt.as_arrays()
    env = gronwall_envelope(times, dps, linf, traj.initial_grad_sq,
                            traj.params.alpha, c_const)
    grad_sq = np.array([2.0 * fields.dirichlet_energy(s) for s in traj.states])
    env_at_snaps = np.interp(traj.times, times, env)
    ratio = grad_sq / env_at_snaps
    worst = float(np.max(ratio))
    return {
        "max_ratio": worst,
        "passed": bool(worst <= 1.0 + tolerance),
        "times": traj.times,
        "grad_sq": grad_sq,
        "envelope": env_at_snaps,
    }


# ---------------------------------------------------------------------------
# smallness scan and bubbling detector
# ---------------------------------------------------------------------------

def smallness_scan(v, a, r, epsilon):
    """Scan sup over centers of |grad v|^2_{L2(B_2r)} + |A|^2_{L2(B_2r)}.

    Returns the sup, the attaining center, and all centers exceeding
    epsilon^2 (the local-smallness hypothesis fails there).
    """
    n = v.shape[-2]
    h = fields.grid_spacing(n)
    if r < 2.0 * h:
        raise ValueError(f"radius {r:.4f} is below the resolvable scale {2 * h:.4f}")
    dens = 2.0 * fields.energy_density(v)
    if a is not None:
        dens = dens + np.sum(a.a1 ** 2, axis=(-2, -1)) + np.sum(a.a2 ** 2, axis=(-2, -1))
    sums = fields.ball_sums(dens, 2.0 * r) * h * h
    idx = np.unravel_index(int(np.argmax(sums)), sums.shape)
    violators = np.argwhere(sums > epsilon * epsilon)
    return {
        "sup": float(sums[idx]),
        "argmax_center": (int(idx[0]), int(idx[1])),
        "violators": [tuple(int(i) for i in row) for row in violators],
        "epsilon_sq": epsilon * epsilon,
        "radius": r,
        "smallest_resolvable_scale": fields.smallest_resolvable_scale(n),
    }


def _cluster_candidates(candidates, n, cluster_distance):
    """Greedy clustering of (time, center, energy) hits by periodic distance."""
    h = fields.grid_spacing(n)
    clusters = []
    for time, center, energy in sorted(candidates, key=lambda c: -c[2]):
        placed = False
        for cl in clusters:
            d1 = abs(center[0] - cl["center"][0])
            d1 = min(d1, n - d1)
            d2 = abs(center[1] - cl["center"][1])
            d2 = min(d2, n - d2)
            if np.hypot(d1, d2) * h <= cluster_distance:
                cl["time"] = max(cl["time"], time)
                placed = True
                break
        if not placed:
            clusters.append({"time": time, "center": center, "energy": energy})
    return clusters


def detect_bubbling(traj, radii, window=0.1, beta=DEFAULT_BETA, cluster_factor=4.0):
    """Detect quantised energy concentrations in a trailing time window.

    For each stored snapshot in the trailing `window` fraction of the
    trajectory, the ball energy around every grid center is evaluated at
    every radius; a center is a candidate when the energy meets
    beta * 4*pi at all radii (shrinking-radius persistence).  Candidates
    are clustered into distinct centers separated by more than
    cluster_factor * max(radii); one event per cluster is returned.
    """
    radii = sorted(float(r) for r in radii)
    states = traj.states
    times = traj.times
    n = states.shape[-2]
    h = fields.grid_spacing(n)
    n_snap = len(times)
    n_window = max(1, int(np.ceil(window * n_snap)))
    candidates = []
    for i in range(n_snap - n_window, n_snap):
        dens = fields.energy_density(states[i])
        per_radius = [fields.ball_sums(dens, r) * h * h for r in radii]
        # threshold must hold at every radius; the smallest is binding
        mask = np.ones_like(per_radius[0], dtype=bool)
        for sums in per_radius:
            mask &= sums >= beta * FOUR_PI
        if not mask.any():
            continue
        smallest = per_radius[0]
        for row in np.argwhere(mask):
            c = (int(row[0]), int(row[1]))
            candidates.append((float(times[i]), c, float(smallest[c])))
    clusters = _cluster_candidates(candidates, n, cluster_factor * max(radii))
    return [
        ConcentrationEvent(time=cl["time"], center=cl["center"],
                           radius=radii[0], energy_in_ball=cl["energy"])
        for cl in clusters
    ]


def energy_budget_check(pre_trajectories, events_per_restart, epsilon, tol=1e-6):
    """Certified energy drop across manual excision restarts.

    For each restart boundary, checks
        E_after <= sup_{pre-blow-up} E - (eps^2/2) * (number of excised bubbles)
    within quadrature tolerance.  `pre_trajectories` is the list of
    trajectories (the restart initial data is the first snapshot of the
    next trajectory); `events_per_restart[i]` are the events excised
    between trajectory i and i+1.
    """
    rows = []
    for i in range(len(pre_trajectories) - 1):
        pre = pre_trajectories[i]
        post = pre_trajectories[i + 1]
        sup_pre = max(fields.dirichlet_energy(s) for s in pre.states)
        e_after = fields.dirichlet_energy(post.states[0])
        n_excised = len(events_per_restart[i])
        required = 0.5 * epsilon * epsilon * n_excised
        drop = sup_pre - e_after
        rows.append({
            "restart": i,
            "sup_pre": sup_pre,
            "e_after": e_after,
            "drop": drop,
            "required_drop": required,
            "n_excised": n_excised,
            "satisfied": bool(e_after <= sup_pre - required + tol),
        })
    return {"restarts": rows, "satisfied": all(r["satisfied"] for r in rows)}


def excise_bubble(state, center, radius):
    """Replace the interior of a ball with a constant extension.

    Hand tool for excision-restart experiments: the ball interior is
    overwritten with the field value just outside the ball boundary, then
    re-projected.  Choosing the radius where the field is already constant
    (beyond the glue of a synthetic bubble) makes the extension continuous.
    """
    n = state.shape[-2]
    h = fields.grid_spacing(n)
    mask = fields.ball_mask(n, center, radius)
    out = state.copy()
    boundary = state[(center[0] + int(radius / h) + 1) % n, center[1]]
    out[mask] = boundary
    return fields.project_sphere(out)


# ---------------------------------------------------------------------------
# energy trace assembly
# ---------------------------------------------------------------------------

def compute_energy_trace(traj, radii=(), epsilon=DEFAULT_EPSILON, c_const=DEFAULT_C,
                         r0=0.5, beta=DEFAULT_BETA, window=0.1):
    """Assemble the EnergyTrace of a trajectory.

    The horizon tau_h uses the recorded connection trace when present
    (transformed route) and the vanishing-connection formula otherwise.
    """
    n = traj.grid_size
    h = fields.grid_spacing(n)
    energies = np.array([fields.dirichlet_energy(s) for s in traj.states])
    sup_local = {}
    for r in radii:
        vals = []
        for s in traj.states:
            sums = fields.ball_sums(fields.energy_density(s), r) * h * h
            vals.append(float(sums.max()))
        sup_local[float(r)] = np.asarray(vals)
    gt = traj.gauge_trace
    if gt is not None and len(gt) > 0:
        t_a, h1, h2, _, _ = gt.as_arrays()
        h_vals = horizon_h(t_a, h1, h2, traj.initial_grad_sq, r0)
        tau = horizon_tau(t_a, h_vals, epsilon, c_const,
                          t_end=traj.params.t_end if traj.params else t_a[-1])
    else:
        h_vals = zero_connection_h(traj.times, traj.initial_grad_sq, r0)
        tau = horizon_tau(traj.times, h_vals, epsilon, c_const,
                          t_end=traj.params.t_end if traj.params else traj.times[-1])
    events = detect_bubbling(traj, radii, window=window, beta=beta) if radii else []
    gauged = traj.stats.get("gauged_energy")
    return EnergyTrace(
        times=traj.times,
        global_energy=energies,
        gauged_energy=None if gauged is None else np.asarray(gauged),
        sup_local=sup_local,
        tau_h=tau,
        events=events,
        smallest_resolvable_scale=fields.smallest_resolvable_scale(n),
    )


# ---------------------------------------------------------------------------
# Monte Carlo energy balance
# ---------------------------------------------------------------------------

def _path_increments(seed, path_index, steps, dt, refine=False):
    """Increments of one path; refine=True bridges them to 2*steps at dt/2."""
    coarse = np.random.default_rng([seed, int(path_index)]).normal(
        0.0, np.sqrt(dt), size=steps)
    if not refine:
        return coarse
    xi = np.random.default_rng([seed, int(path_index), 1]).normal(
        0.0, np.sqrt(dt / 4.0), size=steps)
    fine = np.empty(2 * steps)
    fine[0::2] = 0.5 * coarse + xi
    fine[1::2] = 0.5 * coarse - xi
    return fine


def _balance_chunk(params, basis, path_indices, t, seed, initial, grad_g,
                   refine=False):
    """Integrate one chunk of paths; returns per-path (lhs, corr, excluded)."""
    coarse_steps = int(round(t / (params.dt * 2 if refine else params.dt)))
    inc = np.stack([
        _path_increments(seed, p, coarse_steps,
                         params.dt * 2 if refine else params.dt, refine=refine)
        for p in path_indices
    ])
    return _balance_chunk_with_increments(params, basis, inc, initial, grad_g)


def energy_balance_mc(params, basis, n_paths, t, seed=0, initial=None, chunk=128,
                      bias_paths=None, max_excluded_fraction=0.1):
    """Monte Carlo residual of the mean Ito energy identity.

    Requires single-mode noise (J = 1).  Runs `n_paths` independent paths
    (one seed per path, deterministic reduction in path order), excludes
    paths that fail before `t`, and measures the time-discretisation bias
    by a coupled dt-halving rerun on a path subset.  The estimate is
    invalid when more than `max_excluded_fraction` of the paths fail.
    """
    if basis.n_modes != 1:
        raise ValueError("the energy balance check is defined for single-mode noise")
    if initial is None:
        raise ValueError("supply the initial spin field")
    g = basis.modes[0]
    grad_g = fields.spectral_grad(g)
    order = np.arange(n_paths)
    lhs = np.empty(n_paths)
    corr = np.empty(n_paths)
    excluded = np.zeros(n_paths, dtype=bool)
    for lo in range(0, n_paths, chunk):
        sl = order[lo:lo + chunk]
        l, c, x = _balance_chunk(params, basis, sl, t, seed, initial, grad_g)
        lhs[lo:lo + chunk] = l
        corr[lo:lo + chunk] = c
        excluded[lo:lo + chunk] = x
    keep = ~excluded
    n_excluded = int(excluded.sum())
    valid = n_excluded <= max_excluded_fraction * n_paths
    diff = lhs[keep] - corr[keep]
    if len(diff) == 0:
        return {
            "residual": float("nan"), "signed_mean": float("nan"), "se": 0.0,
            "bias": 0.0, "n_paths": n_paths, "n_excluded": n_excluded,
            "valid": False, "passed": False,
            "mean_lhs": float("nan"), "mean_correction": float("nan"),
        }
    residual = float(abs(diff.mean()))
    signed = float(diff.mean())
    se = float(diff.std(ddof=1) / np.sqrt(len(diff))) if len(diff) > 1 else 0.0

    # coupled dt-halving on a subset for the bias allowance
    if bias_paths is None:
        bias_paths = max(min(n_paths, 256), n_paths // 10)
    bias_paths = min(bias_paths, n_paths)
    sub = order[:bias_paths]
    half = dynamics.LlgParams(
        alpha=params.alpha, dt=params.dt / 2.0, t_end=params.t_end, n=params.n,
        scheme=params.scheme, stepping=params.stepping,
        noise_stepping=params.noise_stepping, stride=params.stride)
    lhs_h = np.empty(bias_paths)
    corr_h = np.empty(bias_paths)
    excl_h = np.zeros(bias_paths, dtype=bool)
    for lo in range(0, bias_paths, chunk):
        sl = sub[lo:lo + chunk]
        l, c, x = _balance_chunk(half, basis, sl, t, seed, initial, grad_g, refine=True)
        lhs_h[lo:lo + chunk] = l
        corr_h[lo:lo + chunk] = c
        excl_h[lo:lo + chunk] = x
    keep_b = ~(excluded[:bias_paths] | excl_h)
    coarse = (lhs[:bias_paths] - corr[:bias_paths])[keep_b]
    fine = (lhs_h - corr_h)[keep_b]
    # first-order Richardson: bias(dt) ~ 2 (R(dt) - R(dt/2))
    bias = float(2.0 * abs((coarse - fine).mean())) if len(fine) else 0.0

    passed = valid and residual <= 3.0 * se + bias
    return {
        "residual": residual,
        "signed_mean": signed,
        "se": se,
        "bias": bias,
        "n_paths": n_paths,
        "n_excluded": n_excluded,
        "valid": bool(valid),
        "passed": bool(passed),
        "mean_lhs": float(lhs[keep].mean()),
        "mean_correction": float(corr[keep].mean()),
    }


def _balance_chunk_with_increments(params, basis, inc, initial, grad_g):
    steps = inc.shape[1]
    dt = params.dt
    n = params.n
    h2 = fields.grid_spacing(n) ** 2
    b = inc.shape[0]
    m = np.broadcast_to(initial, (b, n, n, 3)).copy()
    drift = dynamics.DriftStepper(params)
    dg1, dg2 = grad_g
    tens_acc = np.zeros(b)
    corr_acc = np.zeros(b)
    alive = np.ones(b, dtype=bool)
    store = {}

    dg_sq = float(np.sum(dg1 ** 2 + dg2 ** 2) * h2)

    def observer(u, lap, g1, g2):
        gsq = np.sum(g1 * g1, axis=-1) + np.sum(g2 * g2, axis=-1)
        tension = lap + gsq[..., None] * u
        store["tens"] = np.sum(tension ** 2, axis=(-3, -2, -1)) * h2
        # |u x dg|^2 = |dg|^2 - (u . dg)^2 pointwise for unit u
        d1 = np.sum(u * dg1, axis=-1)
        d2 = np.sum(u * dg2, axis=-1)
        store["corr"] = dg_sq - np.sum(d1 ** 2 + d2 ** 2, axis=(-2, -1)) * h2

    e0 = fields.dirichlet_energy(np.asarray(initial))
    for k in range(steps):
        m = dynamics.noise_substep(m, basis, inc[:, k][:, None],
                                   kind=params.noise_stepping, dt=dt)
        m = drift.step(m, stage_observer=observer)
        weight = 0.5 * dt if k == 0 else dt
        tens_acc += np.where(alive, weight * store["tens"], 0.0)
        corr_acc += np.where(alive, weight * store["corr"], 0.0)
        norms = np.linalg.norm(m, axis=-1)
        mins = norms.min(axis=(-2, -1))
        newly_dead = alive & (mins < 0.5)
        if newly_dead.any():
            alive &= ~newly_dead
            m[newly_dead] = np.array([0.0, 0.0, 1.0])
            norms[newly_dead] = 1.0
        m = m / norms[..., None]
    uh = drift.ws.fft(m)
    lap, g1, g2 = drift.ws.derivatives(uh)
    observer(m, lap, g1, g2)
    tens_acc += np.where(alive, 0.5 * dt * store["tens"], 0.0)
    corr_acc += np.where(alive, 0.5 * dt * store["corr"], 0.0)
    e1 = 0.5 * (np.sum(g1 ** 2, axis=(-3, -2, -1)) + np.sum(g2 ** 2, axis=(-3, -2, -1))) * h2
    lhs = e1 - e0 + params.alpha * tens_acc
    return lhs, 0.5 * corr_acc, ~alive
