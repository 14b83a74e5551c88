"""Figures for sweep tables, written next to the CSV output."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "UnawareUSI": dict(color="tab:red", marker="o", linestyle="--"),
    "UnawareCSI": dict(color="tab:orange", marker="s", linestyle="--"),
    "AwareUSI": dict(color="tab:blue", marker="o", linestyle="-"),
    "AwareCSI": dict(color="tab:green", marker="s", linestyle="-"),
}
XLABEL = {"subspace_dim": "subspace dimension D", "side_info": "side information size M"}


def plot_table(table, path, title=None):
    """Mean code length against the swept value, one line per case."""
    fig, ax = plt.subplots(figsize=(6, 4))
    cases = []
    for row in table.rows:
        if row["case"] not in cases:
            cases.append(row["case"])
    for case in cases:
        rows = [r for r in table.rows if r["case"] == case]
        xs = [r["sweep_value"] for r in rows]
        ys = [r["mean_length"] for r in rows]
        err = [r["std_length"] for r in rows]
        ax.errorbar(xs, ys, yerr=err, capsize=3, label=case, **STYLE.get(case, {}))
    ax.set_xlabel(XLABEL.get(table.sweep_name, table.sweep_name))
    ax.set_ylabel("average index code length")
    ax.grid(True, alpha=0.3)
    ax.legend(frameon=False)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
