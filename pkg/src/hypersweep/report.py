"""Render history figures for the report command.

One figure, two panels: the best-so-far curve over completions, and the
raw per-job scores.  Output format follows the file extension (png, pdf,
svg).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .tracking import Store


def render_history_figure(store: Store, eid: int, out_path: str | Path) -> Path:
    """Plot the experiment's search progress to ``out_path``."""
    series = store.export_series(eid)
    target = store.export_series_doc(eid)["target"]
    finished = [
        j for j in store.jobs(eid) if j.status == "finished" and j.score is not None
    ]
    finished.sort(key=lambda j: (j.end_time if j.end_time is not None else 0, j.jid))

    fig, (ax_best, ax_scores) = plt.subplots(
        2, 1, figsize=(7, 6), sharex=True, constrained_layout=True
    )
    if series:
        idx = [i for i, _ in series]
        best = [s for _, s in series]
        ax_best.step(idx, best, where="post", color="tab:blue")
    ax_best.set_ylabel(f"best score ({target})")
    ax_best.set_title(f"experiment {eid}: search progress")
    ax_best.grid(True, alpha=0.3)

    if finished:
        ax_scores.plot(
            range(1, len(finished) + 1),
            [j.score for j in finished],
            ".",
            color="tab:gray",
            alpha=0.7,
        )
    ax_scores.set_xlabel("completed jobs")
    ax_scores.set_ylabel("job score")
    ax_scores.grid(True, alpha=0.3)

    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
