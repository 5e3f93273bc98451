import numpy as np
import pytest

from gllg import initial


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def resolved_spinfield(n, seed, amp=0.6, kmax=2):
    """Unit field from band-limited angles: analytic, fully resolved spectra."""
    theta = initial.band_limited_scalar(n, seed, kmax=kmax, amp=amp)
    phi = initial.band_limited_scalar(n, seed + 1000, kmax=kmax, amp=amp)
    return initial.sphere_from_angles(theta, phi)


def analytic_rotation_field(n, w_amp=0.8, seed=11):
    from gllg import gauge
    w = initial.band_limited_scalar(n, seed, kmax=2, amp=w_amp)
    axis = initial.sphere_from_angles(
        initial.band_limited_scalar(n, seed + 31, kmax=1, amp=0.6),
        initial.band_limited_scalar(n, seed + 32, kmax=1, amp=0.6))
    return gauge.rodrigues(w, axis)
