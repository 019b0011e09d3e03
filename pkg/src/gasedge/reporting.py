"""Report writers: RFC-4180 CSV, JSON summaries, and figure rendering.

All writers go through a temp-file-plus-rename so an interrupted run
never leaves partial files at the final paths. Floats are serialized with
repr (shortest round-trip), which keeps byte-identical reruns possible.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path


def _atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _format_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")  # RFC 4180 line endings
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format_cell(c) for c in row])
    _atomic_write(path, buf.getvalue().encode("utf-8"))


def write_json(path, obj) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default)
    _atomic_write(path, (text + "\n").encode("utf-8"))


def _json_default(obj):
    import numpy as np

    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------

def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def save_density_figure(path, grid_x, rho, reference=None, label="density"):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(grid_x, rho, lw=1.4, label=label)
    if reference is not None:
        ax.plot(grid_x, reference, "--", lw=1.0, label="reference")
        ax.legend()
    ax.set_xlabel("x")
    ax.set_ylabel("rho(x)")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_slope_figure(path, log_n, neg_log_p, slope, target, ylabel="-log p"):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(log_n, neg_log_p, "o", ms=4, label="estimates")
    import numpy as np

    xs = np.array([min(log_n), max(log_n)])
    yb = np.mean(neg_log_p) if len(neg_log_p) else 0.0
    xb = np.mean(log_n)
    ax.plot(xs, yb + slope * (xs - xb), "-", lw=1.0, label=f"fit slope {slope:.3f}")
    ax.plot(xs, yb + target * (xs - xb), ":", lw=1.0, label=f"target {target:.3f}")
    ax.set_xlabel("log N")
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_counts_figure(path, counts, mass):
    plt = _pyplot()
    from scipy import stats as sps
    import numpy as np

    counts = np.asarray(counts)
    kmax = int(counts.max()) + 1
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ks = np.arange(kmax + 1)
    emp = np.bincount(counts, minlength=kmax + 1)[: kmax + 1] / counts.size
    ax.bar(ks - 0.2, emp, width=0.4, label="observed")
    ax.bar(ks + 0.2, sps.poisson.pmf(ks, mass), width=0.4, label=f"Poisson({mass:.3g})")
    ax.set_xlabel("window count")
    ax.set_ylabel("frequency")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_scan_figure(path, xs, ys, xlabel, ylabel, ref=None, ref_label=None):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(xs, ys, "o-", ms=4)
    if ref is not None:
        ax.plot(xs, ref, "--", lw=1.0, label=ref_label or "reference")
        ax.legend()
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
