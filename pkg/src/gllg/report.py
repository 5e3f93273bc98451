"""Structured reports: JSONL energy-trace records, summary table, figures.

The trace file carries one JSON object per line so external tools can
stream it: a `meta` record first, then `sample` records (time, energies,
sup-local values), then `event` records for detected concentrations.
Figures are rendered with the Agg backend next to the delimited output:
the energy traces with the horizon and event markers, and the local
energy density map of the final (or failing) state.
"""

from __future__ import annotations

import json
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import __version__, diagnostics, fields


def write_trace_jsonl(trace, filename, config_hash="", extra_meta=None):
    meta = {
        "type": "meta",
        "code_version": __version__,
        "config_hash": config_hash,
        "tau_h": trace.tau_h,
        "smallest_resolvable_scale": trace.smallest_resolvable_scale,
        "radii": sorted(trace.sup_local),
        "n_events": len(trace.events),
    }
    if extra_meta:
        meta.update(extra_meta)
    with open(filename, "w") as fh:
        fh.write(json.dumps(meta, sort_keys=True) + "\n")
        for i, t in enumerate(trace.times):
            rec = {
                "type": "sample",
                "time": float(t),
                "energy": float(trace.global_energy[i]),
                "sup_local": {f"{r:.6g}": float(trace.sup_local[r][i])
                              for r in sorted(trace.sup_local)},
            }
            if trace.gauged_energy is not None:
                rec["gauged_energy"] = float(trace.gauged_energy[i])
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
        for ev in trace.events:
            rec = {"type": "event"}
            rec.update(ev.as_dict())
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_trace_jsonl(filename):
    meta = None
    samples = []
    events = []
    with open(filename) as fh:
        for line in fh:
            rec = json.loads(line)
            if rec["type"] == "meta":
                meta = rec
            elif rec["type"] == "sample":
                samples.append(rec)
            elif rec["type"] == "event":
                events.append(rec)
    return meta, samples, events


def summary_table(trace, traj=None):
    """Human-readable run summary."""
    lines = []
    lines.append(f"{'time span':28s} [{trace.times[0]:.6g}, {trace.times[-1]:.6g}]")
    lines.append(f"{'snapshots':28s} {len(trace.times)}")
    lines.append(f"{'energy initial / final':28s} {trace.global_energy[0]:.6g} / "
                 f"{trace.global_energy[-1]:.6g}")
    lines.append(f"{'energy max':28s} {np.max(trace.global_energy):.6g}")
    for r in sorted(trace.sup_local):
        lines.append(f"{'sup-local energy r=%.4g' % r:28s} "
                     f"{np.max(trace.sup_local[r]):.6g}")
    lines.append(f"{'well-posedness horizon':28s} {trace.tau_h:.6g}")
    lines.append(f"{'smallest resolvable scale':28s} "
                 f"{trace.smallest_resolvable_scale:.6g}")
    lines.append(f"{'concentration events':28s} {len(trace.events)}")
    for ev in trace.events:
        lines.append(f"  event t={ev.time:.6g} center={ev.center} "
                     f"E={ev.energy_in_ball:.4g} ({ev.threshold_multiple:.3f} x 4pi)")
    if traj is not None:
        lines.append(f"{'step failure':28s} "
                     f"{'at t=%.6g' % traj.failure_time if traj.failed else 'none'}")
        pre = traj.stats.get("max_pre_projection_defect")
        if pre is not None:
            lines.append(f"{'max pre-projection defect':28s} {pre:.3e}")
    return "\n".join(lines) + "\n"


def render_figures(trace, traj, outdir, config_hash=""):
    """Render the report figures; returns the list of files written."""
    os.makedirs(outdir, exist_ok=True)
    written = []
    stamp = f"gllg {__version__}" + (f"  cfg {config_hash[:12]}" if config_hash else "")

    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.plot(trace.times, trace.global_energy, label="E(m)", lw=1.6)
    if trace.gauged_energy is not None:
        ax.plot(trace.times, trace.gauged_energy, "--", label="E(u, A)", lw=1.2)
    for r in sorted(trace.sup_local):
        ax.plot(trace.times, trace.sup_local[r], lw=0.9,
                label=f"sup-ball E, r={r:.3g}")
    ax.axhline(diagnostics.FOUR_PI, color="gray", ls=":", lw=0.8, label=r"4$\pi$")
    if 0 < trace.tau_h <= trace.times[-1]:
        ax.axvline(trace.tau_h, color="tab:red", ls="--", lw=0.9,
                   label=r"horizon $\tau_h$")
    for ev in trace.events:
        ax.plot([ev.time], [ev.energy_in_ball], "rv", ms=7)
    if traj is not None and traj.failed:
        ax.axvline(traj.failure_time, color="k", lw=0.8, ls="-.",
                   label="step failure")
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.legend(fontsize=8, loc="best")
    fig.text(0.995, 0.005, stamp, ha="right", va="bottom", fontsize=6, color="gray")
    fig.tight_layout()
    f1 = os.path.join(outdir, "energy_trace.png")
    fig.savefig(f1, dpi=130)
    plt.close(fig)
    written.append(f1)

    if traj is not None:
        density = traj.failure_payload if traj.failed \
            else fields.energy_density(traj.states[-1])
        fig, ax = plt.subplots(figsize=(5.2, 4.4))
        im = ax.imshow(density.T, origin="lower", cmap="inferno",
                       extent=[0, fields.DOMAIN_LENGTH, 0, fields.DOMAIN_LENGTH])
        for ev in trace.events:
            h = fields.grid_spacing(traj.grid_size)
            ax.plot([ev.center[0] * h], [ev.center[1] * h], "c+", ms=12, mew=2)
        fig.colorbar(im, ax=ax, label=r"$\frac{1}{2}|\nabla m|^2$")
        ax.set_title("local energy density"
                     + (" at failure" if traj.failed else " (final)"))
        fig.text(0.995, 0.005, stamp, ha="right", va="bottom", fontsize=6,
                 color="gray")
        fig.tight_layout()
        f2 = os.path.join(outdir, "local_energy_map.png")
        fig.savefig(f2, dpi=130)
        plt.close(fig)
        written.append(f2)
    return written
