"""Log-log plots of report rows, one curve per (variant, weight)."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {"natural": "-", "meshdep": "--", "none": ":"}


def curves(rows, field):
    out = {}
    for r in rows:
        if r.status == "ok":
            out.setdefault((r.variant, r.weight), []).append((r.delta, getattr(r, field)))
    return {k: sorted(v) for k, v in out.items()}


def loglog(rows, field, title, path, xlabel="delta"):
    fig, ax = plt.subplots(figsize=(5, 4))
    for (variant, w), pts in sorted(curves(rows, field).items()):
        x, y = zip(*pts)
        ax.loglog(x, y, STYLE[variant], marker="o", ms=3, label=f"{variant} {w:g}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(field)
    ax.set_title(title)
    ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
