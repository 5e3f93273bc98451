"""Run configuration and the command-line entry points."""

import json
import os

import numpy as np
import pytest

from gllg import cli, report, trajio
from gllg.config import ConfigError, DiagnosticsConfig, InitialConfig, NoiseConfig, RunConfig
from gllg.fields import DOMAIN_LENGTH as L


def write_config(tmp_path, **overrides):
    base = dict(
        n=32, alpha=1.0, dt=5e-4, t_end=0.01, scheme="direct_stratonovich",
        noise=NoiseConfig(j=2, s=6.0, amplitude=0.3, seed=7),
        initial=InitialConfig(kind="random_smooth", options={"seed": 3, "amp": 0.6}),
        diagnostics=DiagnosticsConfig(radii=[L / 8, L / 16], stride=5),
        output_dir=str(tmp_path / "out"),
    )
    base.update(overrides)
    cfg = RunConfig(**base).validate()
    path = tmp_path / "config.json"
    cfg.save(path)
    return cfg, str(path)


class TestRunConfig:
    def test_roundtrip_lossless(self, tmp_path):
        cfg, path = write_config(tmp_path)
        back = RunConfig.load(path)
        assert back.to_dict() == cfg.to_dict()
        assert back.dumps() == cfg.dumps()

    def test_validation_errors(self):
        with pytest.raises(ConfigError):
            RunConfig(scheme="nope").validate()
        with pytest.raises(ConfigError):
            RunConfig(alpha=-1.0).validate()
        with pytest.raises(ConfigError):
            RunConfig(initial=InitialConfig(kind="unknown")).validate()
        with pytest.raises(ConfigError):
            RunConfig(diagnostics=DiagnosticsConfig(r0=1.5)).validate()
        with pytest.raises(ConfigError):
            RunConfig.loads("{not json")

    def test_builders(self, tmp_path):
        cfg, _ = write_config(tmp_path)
        params = cfg.build_params()
        assert params.n == 32 and params.dt == 5e-4
        basis = cfg.build_basis()
        assert basis.n_modes == 2
        m0 = cfg.build_initial()
        assert m0.shape == (32, 32, 3)

    def test_zero_amplitude_basis_is_zero(self, tmp_path):
        cfg, _ = write_config(tmp_path, noise=NoiseConfig(j=3, amplitude=0.0))
        assert cfg.build_basis().is_zero()

    def test_initial_file_kind(self, tmp_path):
        arr = np.zeros((16, 16, 3))
        arr[..., 2] = 1.0
        f = tmp_path / "init.npy"
        np.save(f, arr)
        cfg = RunConfig(n=16, initial=InitialConfig(kind="file",
                                                    options={"path": str(f)}))
        assert np.array_equal(cfg.build_initial(), arr)


class TestSimulateCli:
    def test_constant_zero_noise_exit0_zero_energy(self, tmp_path, capsys):
        cfg, path = write_config(
            tmp_path, noise=NoiseConfig(j=1, amplitude=0.0),
            initial=InitialConfig(kind="constant"))
        code = cli.main(["simulate", "--config", path])
        assert code == 0
        out = tmp_path / "out"
        meta, samples, events = report.read_trace_jsonl(out / "energy_trace.jsonl")
        assert events == []
        assert all(rec["energy"] <= 1e-15 for rec in samples)
        for name in ("trajectory.gllg", "trajectory.gllg.meta.json",
                     "summary.txt", "energy_trace.png", "local_energy_map.png"):
            assert (out / name).exists()
        assert meta["config_hash"]

    def test_invalid_scheme_exit1(self, tmp_path, capsys):
        _, path = write_config(tmp_path)
        blob = json.loads(open(path).read())
        blob["scheme"] = "not_a_scheme"
        open(path, "w").write(json.dumps(blob))
        assert cli.main(["simulate", "--config", path]) == 1

    def test_missing_config_exit1(self, tmp_path):
        assert cli.main(["simulate", "--config", str(tmp_path / "nope.json")]) == 1

    def test_blowup_exit2_with_event(self, tmp_path, capsys):
        # bubble below the instability scale, zero noise: the first step
        # explodes, the run aborts cleanly and the stored concentration is
        # reported (empirical experiment, not a certified threshold)
        cfg, path = write_config(
            tmp_path, n=96, dt=5e-4, t_end=0.01,
            noise=NoiseConfig(j=1, amplitude=0.0),
            initial=InitialConfig(kind="bubble", options={"rho": L / 256}),
            diagnostics=DiagnosticsConfig(radii=[L / 8, L / 16], stride=5,
                                          window=1.0))
        code = cli.main(["simulate", "--config", path])
        assert code == 2
        _, _, events = report.read_trace_jsonl(tmp_path / "out" / "energy_trace.jsonl")
        assert len(events) >= 1
        assert events[0]["threshold_multiple"] >= 0.9

    def test_bit_for_bit_reproducible(self, tmp_path):
        cfg, path = write_config(tmp_path)
        assert cli.main(["simulate", "--config", path,
                         "--out", str(tmp_path / "a")]) == 0
        assert cli.main(["simulate", "--config", path,
                         "--out", str(tmp_path / "b")]) == 0
        for name in ("trajectory.gllg", "energy_trace.jsonl", "summary.txt"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()


class TestReplayCli:
    def test_replay_reproduces_trace(self, tmp_path):
        cfg, path = write_config(tmp_path)
        assert cli.main(["simulate", "--config", path]) == 0
        out = tmp_path / "out"
        code = cli.main(["replay", "--traj", str(out / "trajectory.gllg"),
                         "--config", path, "--out", str(tmp_path / "replayed")])
        assert code == 0
        orig = (out / "energy_trace.jsonl").read_text().splitlines()
        rep = (tmp_path / "replayed" / "energy_trace.jsonl").read_text().splitlines()
        # sample records are bit-identical; meta lines may differ in failure flags
        assert orig[1:] == rep[1:]

    def test_replay_radii_subset(self, tmp_path):
        # a stricter radius list (superset of radii) can only shrink the
        # event set: events must persist at every radius
        cfg, path = write_config(
            tmp_path, n=96, dt=5e-4, t_end=0.01,
            noise=NoiseConfig(j=1, amplitude=0.0),
            initial=InitialConfig(kind="bubble", options={"rho": L / 256}),
            diagnostics=DiagnosticsConfig(radii=[L / 8], stride=5, window=1.0))
        cli.main(["simulate", "--config", path])
        traj_file = str(tmp_path / "out" / "trajectory.gllg")
        cfg2 = RunConfig.load(path)
        cfg2.diagnostics.radii = [L / 8, L / 16]
        p2 = tmp_path / "config2.json"
        cfg2.save(p2)
        cli.main(["replay", "--traj", traj_file, "--config", path,
                  "--out", str(tmp_path / "r1")])
        cli.main(["replay", "--traj", traj_file, "--config", str(p2),
                  "--out", str(tmp_path / "r2")])
        _, _, ev1 = report.read_trace_jsonl(tmp_path / "r1" / "energy_trace.jsonl")
        _, _, ev2 = report.read_trace_jsonl(tmp_path / "r2" / "energy_trace.jsonl")
        centers1 = {tuple(e["center"]) for e in ev1}
        centers2 = {tuple(e["center"]) for e in ev2}
        assert centers2 <= centers1

    def test_truncated_trajectory_exit1(self, tmp_path, capsys):
        cfg, path = write_config(tmp_path)
        cli.main(["simulate", "--config", path])
        f = tmp_path / "out" / "trajectory.gllg"
        blob = f.read_bytes()
        f.write_bytes(blob[:-9])
        code = cli.main(["replay", "--traj", str(f), "--config", path])
        assert code == 1
        captured = capsys.readouterr()
        assert "offset" in captured.err


class TestVerifyCli:
    def test_unknown_suite_exit1(self, capsys):
        assert cli.main(["verify", "--suite", "nonsense"]) == 1

    def test_quick_equivalence_suite(self, capsys):
        assert cli.main(["verify", "--suite", "equivalence", "--quick"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "measured" in out
