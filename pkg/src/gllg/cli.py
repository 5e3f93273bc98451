"""Command-line entry points: simulate, verify, replay.

simulate --config <path>   run a trajectory, write the trajectory file,
                           the JSONL energy trace, a summary table and the
                           report figures.  Exit 0 on completion, 2 on a
                           detected blow-up (clean abort with diagnostics),
                           1 on a configuration error.
verify --suite <name>      run a named verification suite at desk scale
                           and print a measured-vs-tolerance table; exit 0
                           iff every check passes (--quick shrinks the
                           Monte Carlo sizes; not acceptance-grade).
replay --traj <path> --config <path>
                           recompute diagnostics from a stored trajectory
                           without re-simulation.

The GLLG_THREADS environment variable bounds FFT worker threads.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import __version__, diagnostics, dynamics, report, trajio, verify
from .config import ConfigError, RunConfig


def _write_artifacts(cfg, traj, outdir):
    os.makedirs(outdir, exist_ok=True)
    cfg_dict = cfg.to_dict()
    cfg_hash = trajio.config_digest(cfg_dict)
    traj_file = os.path.join(outdir, "trajectory.gllg")
    trajio.write_trajectory(traj, traj_file, config_dict=cfg_dict)
    trace = diagnostics.compute_energy_trace(
        traj, radii=cfg.diagnostics.radii, epsilon=cfg.diagnostics.epsilon,
        c_const=cfg.diagnostics.c, r0=cfg.diagnostics.r0,
        beta=cfg.diagnostics.beta, window=cfg.diagnostics.window)
    report.write_trace_jsonl(trace, os.path.join(outdir, "energy_trace.jsonl"),
                             config_hash=cfg_hash,
                             extra_meta={"failed": bool(traj.failed),
                                         "failure_time": traj.failure_time})
    summary = report.summary_table(trace, traj)
    header = (f"# gllg {__version__}  config_hash={cfg_hash}\n")
    with open(os.path.join(outdir, "summary.txt"), "w") as fh:
        fh.write(header + summary)
    report.render_figures(trace, traj, outdir, config_hash=cfg_hash)
    return trace, summary


def cmd_simulate(args):
    try:
        cfg = RunConfig.load(args.config)
        params = cfg.build_params()
        basis = cfg.build_basis()
        m0 = cfg.build_initial()
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    outdir = args.out or cfg.output_dir
    traj = dynamics.run(params, basis, m0, seed=cfg.noise.seed)
    trace, summary = _write_artifacts(cfg, traj, outdir)
    print(summary, end="")
    if traj.failed:
        print(f"blow-up detected: clean abort at t={traj.failure_time:.6g} "
              f"with {len(trace.events)} concentration event(s)")
        return 2
    return 0


def cmd_verify(args):
    try:
        rows = verify.run_suite(args.suite, quick=args.quick)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    ok = verify.print_rows(rows, f"suite {args.suite}"
                           + (" (quick)" if args.quick else ""))
    return 0 if ok else 1


def cmd_replay(args):
    try:
        cfg = RunConfig.load(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        header, times, states = trajio.read_trajectory(args.traj)
    except trajio.FileFormatError as exc:
        print(f"trajectory error: {exc}", file=sys.stderr)
        return 1
    traj = dynamics.Trajectory.from_states(times, states, scheme=header["scheme"],
                                           seed=header["seed"],
                                           basis_hash=header["basis_hash"])
    outdir = args.out or (cfg.output_dir + "_replay")
    _, summary = _write_artifacts(cfg, traj, outdir)
    print(summary, end="")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gllg",
        description="Pseudospectral stochastic Landau-Lifshitz-Gilbert simulator "
                    "on the 2-torus with a rotating-frame route and bubbling "
                    "diagnostics.")
    parser.add_argument("--version", action="version", version=f"gllg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a trajectory from a config file")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", default=None, help="override the output directory")
    p_sim.set_defaults(func=cmd_simulate)

    p_ver = sub.add_parser("verify", help="run a named verification suite")
    p_ver.add_argument("--suite", required=True)
    p_ver.add_argument("--quick", action="store_true",
                       help="reduced sizes (not acceptance-grade)")
    p_ver.set_defaults(func=cmd_verify)

    p_rep = sub.add_parser("replay", help="recompute diagnostics from a trajectory")
    p_rep.add_argument("--traj", required=True)
    p_rep.add_argument("--config", required=True)
    p_rep.add_argument("--out", default=None)
    p_rep.set_defaults(func=cmd_replay)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
