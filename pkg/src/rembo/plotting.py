"""Vector-graphic learning-curve panels from aggregate CSVs."""

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

AGGREGATE_COLUMNS = ("algo", "step", "metric", "median", "q25", "q75")
PANELS = (
    ("Social welfare", ("reward",)),
    ("IC deviation", ("exact_ic", "ic_loss")),
    ("IR deviation", ("exact_ir", "ir_loss")),
)


class CsvFormatError(ValueError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


def read_aggregate(path):
    """Parse and validate an aggregate CSV, reporting the offending line on error."""
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CsvFormatError(path, 1, "empty file")
        missing = [c for c in AGGREGATE_COLUMNS if c not in header]
        if missing:
            raise CsvFormatError(path, 1, f"missing columns {', '.join(missing)}")
        idx = {c: header.index(c) for c in AGGREGATE_COLUMNS}
        for line, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise CsvFormatError(path, line, f"expected {len(header)} fields, got {len(rec)}")
            try:
                rows.append(
                    (rec[idx["algo"]], int(rec[idx["step"]]), rec[idx["metric"]])
                    + tuple(float(rec[idx[c]]) for c in ("median", "q25", "q75"))
                )
            except ValueError as exc:
                raise CsvFormatError(path, line, str(exc)) from None
    if not rows:
        raise CsvFormatError(path, 2, "no data rows")
    return pd.DataFrame(rows, columns=list(AGGREGATE_COLUMNS))


def plot_aggregate(frame, out_path, title=None):
    """Three panels (welfare, IC, IR), one median curve plus quartile band per algorithm."""
    out_path = Path(out_path)
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.6))
    algos = list(dict.fromkeys(frame["algo"]))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for ax, (label, candidates) in zip(axes, PANELS):
        present = [m for m in candidates if m in set(frame["metric"])]
        ax.set_title(label)
        ax.set_xlabel("training step")
        if not present:
            ax.text(0.5, 0.5, "no data", ha="center", va="center", transform=ax.transAxes)
            continue
        metric = present[0]
        for k, algo in enumerate(algos):
            sub = frame[(frame["algo"] == algo) & (frame["metric"] == metric)].sort_values("step")
            if sub.empty:
                continue
            c = colors[k % len(colors)]
            ax.plot(sub["step"], sub["median"], color=c, label=algo)
            ax.fill_between(sub["step"], sub["q25"], sub["q75"], color=c, alpha=0.25, linewidth=0)
        ax.set_ylabel(metric)
    axes[0].legend(loc="best", fontsize="small")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return out_path


def plot_csv(csv_path, out_path=None):
    frame = read_aggregate(csv_path)
    csv_path = Path(csv_path)
    if out_path is None:
        out_path = csv_path.with_suffix(".svg")
    elif Path(out_path).suffix.lower() != ".svg":
        out_path = Path(out_path) / (csv_path.stem + ".svg")
    return plot_aggregate(frame, out_path, title=csv_path.parent.name)
