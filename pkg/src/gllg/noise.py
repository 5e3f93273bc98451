"""Truncated cylindrical Wiener process and its multiplication operators.

The driving noise is W(t) = sum_j W_j(t) g_j with independent scalar
Brownian motions W_j and fixed vector fields g_j on the torus.  The
per-mode operators are G_j v = v x g_j (pointwise cross product), the
Stratonovich correction is S(v) = (1/2) sum_j G_j^2 v, and the Sobolev
noise strength is q(sigma)^2 = sum_j |g_j|_{H^sigma}^2.

The concrete basis here is trigonometric: g_j = amp * (1+lambda_j)^(-s/2)
e_j h_j with e_j the real Laplacian eigenfunctions (1, cos kx, sin kx)
sorted by eigenvalue and h_j cycling through the coordinate axes.  The
polynomial decay makes q(sigma) finite for every sigma < s - 1 and the
trace of the covariance exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fields


@dataclass(frozen=True)
class NoiseBasis:
    """Immutable truncated noise basis {g_j}.

    modes: (J, N, N, 3) array of real periodic vector fields.
    sobolev_order: the order sigma the basis is meant to be summable at
        (bookkeeping only; norms are computed on demand).
    """

    modes: np.ndarray
    sobolev_order: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "modes", np.asarray(self.modes, dtype=float))
        if self.modes.ndim != 4 or self.modes.shape[-1] != 3:
            raise ValueError("modes must have shape (J, N, N, 3)")
        self.modes.setflags(write=False)

    @property
    def n_modes(self):
        return self.modes.shape[0]

    @property
    def grid_size(self):
        return self.modes.shape[1]

    def is_zero(self):
        return not np.any(self.modes)


@dataclass
class BrownianPath:
    """Per-mode Gaussian increments of the truncated Wiener process.

    increments: (J, steps) array, each entry ~ Normal(0, dt).
    Refinement-consistent: refine() halves dt with a child stream derived
    from (seed, level); consecutive pairs of fine increments sum exactly
    to the coarse ones, so convergence studies reuse one seed.
    """

    increments: np.ndarray
    dt: float
    seed: int
    level: int = 0

    @property
    def n_steps(self):
        return self.increments.shape[1]

    @property
    def n_modes(self):
        return self.increments.shape[0]

    @property
    def t_end(self):
        return self.dt * self.n_steps

    def cumulative(self):
        """W_j at step times, shape (J, steps + 1), starting from 0."""
        j = self.increments.shape[0]
        out = np.zeros((j, self.n_steps + 1))
        np.cumsum(self.increments, axis=1, out=out[:, 1:])
        return out


def _eigenfunction_table(n):
    """Real trig Laplacian eigenfunctions sorted ascending by eigenvalue.

    Enumerates k = 0 plus the canonical half-plane representatives with
    |k_i| < N/2 (Nyquist line excluded), each contributing a cosine and a
    sine.  Returns a list of (eigenvalue, kind, k1, k2) with kind 0 for
    the constant, 1 cosine, 2 sine.
    """
    kmax = n // 2 - 1
    entries = [(0.0, 0, 0, 0)]
    for k1 in range(0, kmax + 1):
        for k2 in range(-kmax, kmax + 1):
            if k1 == 0 and k2 <= 0:
                continue
            lam = float(k1 * k1 + k2 * k2)
            entries.append((lam, 1, k1, k2))
            entries.append((lam, 2, k1, k2))
    entries.sort(key=lambda e: (e[0], e[2], e[3], e[1]))
    return entries


def available_modes(n):
    """Number of distinct trig eigenmodes make_trig_basis can produce."""
    return len(_eigenfunction_table(n))


def make_trig_basis(n, j, s, amplitude):
    """Trigonometric noise basis with polynomial spectral decay.

    g_j = amplitude * (1 + lambda_j)^(-s/2) * e_j(x) * h_j, where e_j are
    the real trig eigenfunctions of -Laplace sorted by eigenvalue and h_j
    cycles through the three coordinate axes.
    """
    if s <= 0:
        raise ValueError(f"decay exponent s must be positive; got {s}")
    table = _eigenfunction_table(n)
    if j > len(table):
        raise ValueError(
            f"J={j} exceeds the {len(table)} distinct eigenmodes available at N={n}"
        )
    if j < 0:
        raise ValueError("J must be non-negative")
    x1, x2 = fields.grid(n)
    modes = np.zeros((j, n, n, 3))
    for idx in range(j):
        lam, kind, k1, k2 = table[idx]
        if kind == 0:
            e = np.ones((n, n))
        elif kind == 1:
            e = np.cos(k1 * x1 + k2 * x2)
        else:
            e = np.sin(k1 * x1 + k2 * x2)
        weight = amplitude * (1.0 + lam) ** (-s / 2.0)
        modes[idx, :, :, idx % 3] = weight * e
    return NoiseBasis(modes=modes, sobolev_order=max(0.0, s - 1.0))


def single_mode_basis(profile, axis):
    """Basis with a single mode g = profile(x) * axis (axis a constant 3-vector)."""
    profile = np.asarray(profile, dtype=float)
    axis = np.asarray(axis, dtype=float)
    mode = profile[..., None] * axis
    return NoiseBasis(modes=mode[None], sobolev_order=2.0)


def q_sigma(basis, sigma):
    """Sobolev noise strength q(sigma) = sqrt(sum_j |g_j|_{H^sigma}^2)."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative; got {sigma}")
    total = 0.0
    for g in basis.modes:
        total += fields.sobolev_norm(g, sigma) ** 2
    return float(np.sqrt(total))


def trace_q(basis):
    """Trace of the covariance operator: sum_j |g_j|^2_{L2}."""
    return float(sum(fields.l2_norm(g) ** 2 for g in basis.modes))


def gram_matrix(basis):
    """Gram matrix M_jk = <g_j, g_k>_{L2} of the basis fields."""
    j = basis.n_modes
    n = basis.grid_size
    h = fields.grid_spacing(n)
    flat = basis.modes.reshape(j, -1)
    return (flat @ flat.T) * h * h


def _check_same_grid(basis, v):
    if v.shape[-3] != basis.grid_size or v.shape[-2] != basis.grid_size:
        raise ValueError(
            f"field grid {v.shape[-3]}x{v.shape[-2]} does not match basis grid "
            f"{basis.grid_size}"
        )


def stratonovich_correction(basis, v):
    """S(v) = (1/2) sum_j (v x g_j) x g_j pointwise."""
    v = np.asarray(v, dtype=float)
    _check_same_grid(basis, v)
    out = np.zeros(np.broadcast_shapes(v.shape, basis.modes.shape[1:]))
    for g in basis.modes:
        out += np.cross(np.cross(v, g), g)
    return 0.5 * out


def wiener_field(basis, coeffs):
    """Assemble sum_j c_j g_j.  coeffs (..., J) -> field (..., N, N, 3)."""
    coeffs = np.asarray(coeffs, dtype=float)
    return np.einsum("...j,jxyc->...xyc", coeffs, basis.modes)


def apply_g(basis, v, coeffs):
    """G(v) applied to coefficient vector: sum_j c_j (v x g_j) = v x (sum c_j g_j)."""
    return np.cross(v, wiener_field(basis, coeffs))


def sample_path(basis, t_end, steps, seed):
    """Sample the per-mode increments on [0, t_end] with `steps` steps.

    Deterministic under `seed`; variance of each increment is dt = t_end/steps.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    dt = t_end / steps
    rng = np.random.default_rng(seed)
    inc = rng.normal(0.0, np.sqrt(dt), size=(basis.n_modes, steps))
    return BrownianPath(increments=inc, dt=dt, seed=int(seed), level=0)


def refine_path(path):
    """Halve dt by a sum-preserving (Brownian bridge) split of every increment.

    The bridge midpoints use a child stream derived from (seed, level+1),
    so the refined path is itself reproducible and consecutive pairs of
    fine increments sum exactly to the coarse increments.
    """
    j, steps = path.increments.shape
    rng = np.random.default_rng([path.seed, path.level + 1])
    xi = rng.normal(0.0, np.sqrt(path.dt / 4.0), size=(j, steps))
    half = 0.5 * path.increments
    fine = np.empty((j, 2 * steps))
    fine[:, 0::2] = half + xi
    fine[:, 1::2] = half - xi
    return BrownianPath(increments=fine, dt=path.dt / 2.0, seed=path.seed,
                        level=path.level + 1)


def refine_path_to(path, target_steps):
    """Refine repeatedly until the path has `target_steps` (a power-of-2 multiple)."""
    out = path
    while out.n_steps < target_steps:
        out = refine_path(out)
    if out.n_steps != target_steps:
        raise ValueError(
            f"target {target_steps} is not a power-of-two multiple of {path.n_steps}"
        )
    return out
