"""Report rendering: delimited metric files, human-readable tables, and
matplotlib figures written next to them.

PNG output strips the writer metadata so identical runs produce identical
bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .training import read_loss_log  # noqa: E402

_PNG_KW = dict(dpi=110, metadata={"Software": None})


def _save(fig, path: str) -> None:
    fig.savefig(path, **_PNG_KW)
    plt.close(fig)


def render_loss_curves(log_path: str, out_png: str) -> None:
    """Per-level reconstruction, decomposition, and total curves with stage marks."""
    rows = read_loss_log(log_path)
    if not rows:
        return
    iters = [r["iteration"] for r in rows]
    recon_keys = sorted(k for k in rows[0] if k.startswith("recon_"))
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for k in recon_keys:
        ax.plot(iters, [r[k] for r in rows], lw=0.8, label=k)
    ax.plot(iters, [r["hie"] for r in rows], lw=0.8, label="decomposition")
    ax.plot(iters, [r["total"] for r in rows], lw=1.2, color="black", label="objective")
    prev = rows[0]["stage"]
    for r in rows:
        if r["stage"] != prev:
            ax.axvline(r["iteration"], color="gray", lw=0.6, ls="--")
            prev = r["stage"]
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss (batch mean)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, out_png)


def render_metric_figure(shape_rows: list, label_names: dict, out_png: str) -> None:
    """Histograms of per-shape CD / IoU plus a per-label IoU bar chart.

    shape_rows: dicts with keys shape_id, cd, iou (leaf level).
    label_names: {label id: (name, iou)} or {} when segmentation was not scored.
    """
    n_panels = 3 if label_names else 2
    fig, axes = plt.subplots(1, n_panels, figsize=(4 * n_panels, 3.2))
    cds = [r["cd"] for r in shape_rows if r["cd"] == r["cd"]]
    ious = [r["iou"] for r in shape_rows]
    axes[0].hist(cds, bins=20, color="#4878a8")
    axes[0].set_xlabel("Chamfer distance (x1000)")
    axes[0].set_ylabel("shapes")
    axes[1].hist(ious, bins=20, range=(0, 1), color="#6aa56a")
    axes[1].set_xlabel("volumetric IoU")
    if label_names:
        labels = sorted(label_names)
        names = [label_names[k][0] for k in labels]
        vals = [label_names[k][1] for k in labels]
        axes[2].bar(range(len(labels)), vals, color="#a8684a")
        axes[2].set_xticks(range(len(labels)), names, rotation=20)
        axes[2].set_ylim(0, 1)
        axes[2].set_ylabel("per-label IoU")
    fig.tight_layout()
    _save(fig, out_png)


def write_metrics_csv(path: str, rows: list) -> None:
    """Machine-readable metrics keyed by (category, metric, level)."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("category,metric,level,value\n")
        for cat, metric, level, value in rows:
            f.write(f"{cat},{metric},{level},{value:.9g}\n")


def write_metrics_table(path: str, rows: list, title: str) -> None:
    """The same rows as a fixed-width text table."""
    lines = [title, "-" * len(title)]
    lines.append(f"{'category':<10} {'metric':<22} {'level':>5} {'value':>12}")
    for cat, metric, level, value in rows:
        lines.append(f"{cat:<10} {metric:<22} {level:>5} {value:>12.6f}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def write_shape_csv(path: str, shape_rows: list) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("shape_id,level,cd,iou\n")
        for r in shape_rows:
            f.write(f"{r['shape_id']},{r['level']},{r['cd']:.9g},{r['iou']:.9g}\n")


def render_svr_loss(log_path: str, out_png: str) -> None:
    with open(log_path, "r", encoding="utf-8") as f:
        pts = [
            (float(a), float(b))
            for a, b in (
                line.strip().split(",") for line in f if not line.startswith("#")
            )
        ]
    if not pts:
        return
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot([p[0] for p in pts], [p[1] for p in pts], lw=0.8)
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("latent MSE")
    fig.tight_layout()
    _save(fig, out_png)
