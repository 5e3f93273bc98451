"""Binary formats: Brownian-path and trajectory files, hashes, sidecar."""

import json

import numpy as np
import pytest

from gllg import dynamics, initial, noise, trajio
from gllg.dynamics import LlgParams
from gllg.trajio import FileFormatError

from conftest import resolved_spinfield


def small_trajectory(n=16, steps=8):
    params = LlgParams(alpha=1.0, dt=1e-3, t_end=steps * 1e-3, n=n, stride=2)
    basis = noise.make_trig_basis(n, 2, 5.0, 0.4)
    return dynamics.run(params, basis, resolved_spinfield(n, 1), seed=5), params


class TestPathFile:
    def test_roundtrip(self, tmp_path):
        basis = noise.make_trig_basis(16, 3, 4.0, 1.0)
        path = noise.sample_path(basis, 0.5, 64, seed=42)
        f = tmp_path / "path.gllg"
        trajio.write_path(path, f)
        back = trajio.read_path(f)
        assert np.array_equal(back.increments, path.increments)
        assert back.dt == path.dt and back.seed == 42

    def test_bad_magic(self, tmp_path):
        f = tmp_path / "bad.gllg"
        f.write_bytes(b"NOTMAGIC" + b"\0" * 64)
        with pytest.raises(FileFormatError, match="magic"):
            trajio.read_path(f)

    def test_truncation_reports_offset(self, tmp_path):
        basis = noise.make_trig_basis(16, 2, 4.0, 1.0)
        path = noise.sample_path(basis, 0.5, 16, seed=1)
        f = tmp_path / "path.gllg"
        trajio.write_path(path, f)
        blob = f.read_bytes()
        f.write_bytes(blob[:-5])
        with pytest.raises(FileFormatError, match="offset"):
            trajio.read_path(f)


class TestTrajectoryFile:
    def test_roundtrip_bit_exact(self, tmp_path):
        traj, params = small_trajectory()
        f = tmp_path / "traj.gllg"
        trajio.write_trajectory(traj, f, config_dict={"n": 16})
        header, times, states = trajio.read_trajectory(f)
        assert header["n"] == 16
        assert header["scheme"] == "direct_stratonovich"
        assert header["alpha"] == params.alpha
        assert header["dt"] == params.dt
        assert header["basis_hash"] == traj.basis_hash
        assert np.array_equal(times, traj.times)
        assert np.array_equal(states, traj.states)

    def test_sidecar_metadata(self, tmp_path):
        traj, _ = small_trajectory()
        f = tmp_path / "traj.gllg"
        cfg = {"n": 16, "alpha": 1.0}
        trajio.write_trajectory(traj, f, config_dict=cfg)
        meta = json.loads((tmp_path / "traj.gllg.meta.json").read_text())
        assert meta["config"] == cfg
        assert meta["config_hash"] == trajio.config_digest(cfg)
        assert meta["code_version"]
        assert meta["n_snapshots"] == len(traj.times)

    def test_transformed_run_sidecar_serialisable(self, tmp_path):
        n = 16
        params = LlgParams(alpha=1.0, dt=1e-3, t_end=5e-3, n=n,
                           scheme="transformed_gauge", stride=1)
        basis = noise.make_trig_basis(n, 2, 5.0, 0.4)
        traj = dynamics.run(params, basis, resolved_spinfield(n, 2), seed=3)
        f = tmp_path / "traj.gllg"
        trajio.write_trajectory(traj, f, config_dict={"n": n})
        meta = json.loads((tmp_path / "traj.gllg.meta.json").read_text())
        assert meta["scheme"] == "transformed_gauge"
        assert "max_pre_projection_defect" in meta["stats"]

    def test_truncation_reports_offset(self, tmp_path):
        traj, _ = small_trajectory()
        f = tmp_path / "traj.gllg"
        trajio.write_trajectory(traj, f)
        blob = f.read_bytes()
        f.write_bytes(blob[:-17])
        with pytest.raises(FileFormatError) as err:
            trajio.read_trajectory(f)
        assert "offset" in str(err.value)
        # the reported offset is the start of the bad record
        record = 8 + 3 * 16 * 16 * 8
        header = len(blob) - record * len(traj.times)
        expect = header + (len(traj.times) - 1) * record
        assert str(expect) in str(err.value)

    def test_bad_magic(self, tmp_path):
        f = tmp_path / "bad.gllg"
        f.write_bytes(b"WRONGMAG" + b"\0" * 100)
        with pytest.raises(FileFormatError, match="magic"):
            trajio.read_trajectory(f)


class TestDigests:
    def test_basis_digest_distinguishes(self):
        b1 = noise.make_trig_basis(16, 2, 4.0, 1.0)
        b2 = noise.make_trig_basis(16, 2, 4.0, 0.9)
        assert trajio.basis_digest(b1) != trajio.basis_digest(b2)
        assert trajio.basis_digest(b1) == trajio.basis_digest(
            noise.make_trig_basis(16, 2, 4.0, 1.0))

    def test_config_digest_canonical(self):
        assert trajio.config_digest({"a": 1, "b": 2}) == \
            trajio.config_digest({"b": 2, "a": 1})
        assert trajio.config_digest({"a": 1}) != trajio.config_digest({"a": 2})
