"""Report figures rendered alongside the delimited output files."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .experiment import ExperimentReport


def _by_policy(reports: list[ExperimentReport]) -> dict[str, list[ExperimentReport]]:
    grouped: dict[str, list[ExperimentReport]] = defaultdict(list)
    for r in reports:
        grouped[r.policy].append(r)
    return dict(sorted(grouped.items()))


def render_figures(reports: list[ExperimentReport], outdir: str | Path) -> list[Path]:
    """Render the standard run figures (PNG) into outdir."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    grouped = _by_policy(reports)
    written = []

    fig, ax = plt.subplots(figsize=(7, 4))
    for policy, runs in grouped.items():
        traces = np.array([r.group_trace for r in runs], dtype=float)
        mean = traces.mean(axis=0)
        ax.plot(np.arange(1, traces.shape[1] + 1), mean, label=policy)
    ax.set_xlabel("tasks seen")
    ax.set_ylabel("groups (mean over seeds)")
    ax.set_title("Group count over the stream")
    ax.legend()
    fig.tight_layout()
    path = outdir / "group_trace.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    names = list(grouped)
    means = [np.mean([r.a_last for r in grouped[p]]) for p in names]
    errs = [np.std([r.a_last for r in grouped[p]]) / max(1, np.sqrt(len(grouped[p])))
            for p in names]
    ax.bar(names, means, yerr=errs, capsize=4, color="#4878a8")
    ax.set_ylabel("last accuracy")
    ax.set_title("Last accuracy by policy (mean +/- s.e.)")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    path = outdir / "last_accuracy.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    if any(r.ari is not None for r in reports):
        fig, ax = plt.subplots(figsize=(6, 4))
        width = 0.35
        xs = np.arange(len(names))
        aris = [np.mean([r.ari for r in grouped[p] if r.ari is not None])
                for p in names]
        nmis = [np.mean([r.nmi for r in grouped[p] if r.nmi is not None])
                for p in names]
        ax.bar(xs - width / 2, aris, width, label="ARI", color="#4878a8")
        ax.bar(xs + width / 2, nmis, width, label="NMI", color="#a85448")
        ax.set_xticks(xs, names)
        ax.set_ylim(0, 1.05)
        ax.set_title("Grouping quality vs hidden truth")
        ax.legend()
        fig.tight_layout()
        path = outdir / "grouping_quality.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
