"""Binary persistence: Brownian paths and trajectories.

Path file ("GLLGPATH"): little-endian header
    magic 8s | J uint32 | steps uint32 | dt float64 | seed uint64
followed by the J*steps float64 increments, row-major.

Trajectory file ("GLLGTRAJ"): little-endian header
    magic 8s | version uint32 | N uint32 | alpha float64 | dt float64 |
    stride uint32 | seed uint64 | scheme 24s | basis-hash 32s
followed by per-snapshot records (time float64, then 3*N^2 float64
values).  The snapshot count is implied by the file length; a trailing
partial record is reported as corruption with its byte offset.  A
human-readable sidecar (<file>.meta.json) mirrors the run configuration.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from . import __version__
from .noise import BrownianPath

PATH_MAGIC = b"GLLGPATH"
TRAJ_MAGIC = b"GLLGTRAJ"
TRAJ_VERSION = 1

_PATH_HEADER = struct.Struct("<8sIIdQ")
_TRAJ_HEADER = struct.Struct("<8sIIddIQ24s32s")


class FileFormatError(RuntimeError):
    """Raised for bad magic numbers, version mismatches or truncation."""


def basis_digest(basis):
    """Hex sha256 of the basis mode arrays (identifies the noise model)."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(basis.modes).tobytes())
    h.update(struct.pack("<d", float(basis.sobolev_order)))
    return h.hexdigest()


def config_digest(config_dict):
    """Hex sha256 of a canonical JSON rendering of a config mapping."""
    blob = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def write_path(path, filename):
    """Dump a BrownianPath for replay."""
    j, steps = path.increments.shape
    with open(filename, "wb") as fh:
        fh.write(_PATH_HEADER.pack(PATH_MAGIC, j, steps, path.dt, path.seed & (2**64 - 1)))
        fh.write(np.ascontiguousarray(path.increments, dtype="<f8").tobytes())


def read_path(filename):
    with open(filename, "rb") as fh:
        head = fh.read(_PATH_HEADER.size)
        if len(head) < _PATH_HEADER.size:
            raise FileFormatError(
                f"path file truncated inside the header at offset {len(head)}")
        magic, j, steps, dt, seed = _PATH_HEADER.unpack(head)
        if magic != PATH_MAGIC:
            raise FileFormatError(f"bad magic {magic!r}; expected {PATH_MAGIC!r}")
        data = fh.read()
    expected = j * steps * 8
    if len(data) != expected:
        raise FileFormatError(
            f"path file truncated at offset {_PATH_HEADER.size + len(data)}; "
            f"expected {expected} data bytes")
    inc = np.frombuffer(data, dtype="<f8").reshape(j, steps).copy()
    return BrownianPath(increments=inc, dt=dt, seed=int(seed))


def write_trajectory(traj, filename, config_dict=None):
    """Write snapshots in the trajectory format plus the metadata sidecar."""
    params = traj.params
    n = traj.grid_size
    scheme = traj.scheme.encode()[:24].ljust(24, b"\0")
    bhash = bytes.fromhex(traj.basis_hash)[:32].ljust(32, b"\0") if traj.basis_hash else b"\0" * 32
    seed = 0 if traj.seed is None else int(traj.seed) & (2**64 - 1)
    with open(filename, "wb") as fh:
        fh.write(_TRAJ_HEADER.pack(
            TRAJ_MAGIC, TRAJ_VERSION, n,
            params.alpha if params else 0.0,
            params.dt if params else 0.0,
            params.stride if params else 1,
            seed, scheme, bhash,
        ))
        for t, state in zip(traj.times, traj.states):
            fh.write(struct.pack("<d", float(t)))
            fh.write(np.ascontiguousarray(state, dtype="<f8").tobytes())
    meta = {
        "code_version": __version__,
        "format_version": TRAJ_VERSION,
        "n": int(n),
        "scheme": traj.scheme,
        "seed": traj.seed,
        "basis_hash": traj.basis_hash,
        "failed": bool(traj.failed),
        "failure_time": traj.failure_time,
        "n_snapshots": int(len(traj.times)),
        "initial_grad_sq": float(traj.initial_grad_sq),
        # scalar stats only; array-valued entries live in the energy trace
        "stats": {k: float(v) for k, v in traj.stats.items()
                  if isinstance(v, (int, float, np.floating, np.integer))},
    }
    if params is not None:
        meta["params"] = {
            "alpha": params.alpha, "dt": params.dt, "t_end": params.t_end,
            "n": params.n, "scheme": params.scheme, "stepping": params.stepping,
            "noise_stepping": params.noise_stepping, "stride": params.stride,
        }
    if config_dict is not None:
        meta["config"] = config_dict
        meta["config_hash"] = config_digest(config_dict)
    with open(str(filename) + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return meta


def read_trajectory(filename):
    """Read a trajectory file; returns (header dict, times, states)."""
    with open(filename, "rb") as fh:
        head = fh.read(_TRAJ_HEADER.size)
        if len(head) < _TRAJ_HEADER.size:
            raise FileFormatError(
                f"trajectory file truncated inside the header at offset {len(head)}")
        magic, version, n, alpha, dt, stride, seed, scheme, bhash = _TRAJ_HEADER.unpack(head)
        if magic != TRAJ_MAGIC:
            raise FileFormatError(f"bad magic {magic!r}; expected {TRAJ_MAGIC!r}")
        if version != TRAJ_VERSION:
            raise FileFormatError(f"unsupported trajectory version {version}")
        data = fh.read()
    record = 8 + 3 * n * n * 8
    n_rec, rem = divmod(len(data), record)
    if rem:
        offset = _TRAJ_HEADER.size + n_rec * record
        raise FileFormatError(
            f"trajectory file truncated at offset {offset}: trailing partial "
            f"record of {rem} bytes (record size {record})")
    times = np.empty(n_rec)
    states = np.empty((n_rec, n, n, 3))
    for i in range(n_rec):
        chunk = data[i * record:(i + 1) * record]
        times[i] = struct.unpack("<d", chunk[:8])[0]
        states[i] = np.frombuffer(chunk[8:], dtype="<f8").reshape(n, n, 3)
    header = {
        "version": version, "n": n, "alpha": alpha, "dt": dt,
        "stride": stride, "seed": seed,
        "scheme": scheme.rstrip(b"\0").decode(),
        "basis_hash": bhash.hex(),
    }
    return header, times, states
