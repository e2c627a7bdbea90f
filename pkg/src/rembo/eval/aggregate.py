"""Across-seed aggregation of metric streams."""

import numpy as np
import pandas as pd

EWMA_ALPHA = 0.25


class RaggedStreams(ValueError):
    pass


def aggregate(streams, metrics=None, alpha=EWMA_ALPHA):
    """Median and quartiles over seeds per step, then EWMA-smoothed along steps.

    ``streams`` is a list of frames with a ``step`` column, one per seed, all
    on the same evaluation grid. Returns a long frame with columns
    ``step, metric, median, q25, q75``.
    """
    if not streams:
        raise ValueError("need at least one stream")
    steps = streams[0]["step"].to_numpy()
    for s in streams[1:]:
        if not np.array_equal(s["step"].to_numpy(), steps):
            raise RaggedStreams("streams do not share the evaluation grid")
    if metrics is None:
        metrics = [c for c in streams[0].columns if c not in ("step", "seed")]
    parts = []
    for m in metrics:
        vals = np.stack([s[m].to_numpy(dtype=np.float64) for s in streams], axis=1)
        q = np.quantile(vals, [0.5, 0.25, 0.75], axis=1, method="linear")
        frame = pd.DataFrame({"median": q[0], "q25": q[1], "q75": q[2]})
        frame = frame.ewm(alpha=alpha).mean()
        frame.insert(0, "metric", m)
        frame.insert(0, "step", steps)
        parts.append(frame)
    return pd.concat(parts, ignore_index=True)
