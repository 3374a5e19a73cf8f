"""Histograms of student/teacher cosine similarities over time."""
import csv

import numpy as np

from .errors import ConfigError
from .overlaps import OverlapState
from .trajectory import fmt


def cosines(state):
    """``M_jr / sqrt(Q_jj P_rr)`` (p x k); zero-norm students give 0."""
    if not isinstance(state, OverlapState):
        raise ConfigError("cosines need full overlap snapshots (Q, M, P)")
    qd = np.diag(state.Q)
    pd = np.diag(state.P)
    denom = np.sqrt(np.outer(qd, pd))
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(denom > 0, state.M / np.where(denom > 0, denom, 1.0), 0.0)
    return np.clip(c, -1.0, 1.0)


def nearest_snapshots(traj, times):
    if not traj.snapshots:
        raise ConfigError("trajectory carries no overlap snapshots; rerun with snapshots enabled")
    out = []
    for t in times:
        i = int(np.argmin(np.abs(traj.times - t)))
        out.append((float(traj.times[i]), traj.snapshots[i]))
    return out


def cosine_histograms(traj, times, bins=20):
    """Rows ``(t, teacher, bin_lo, bin_hi, count, density)`` for each requested time."""
    edges = np.linspace(-1.0, 1.0, bins + 1)
    rows = []
    for t, st in nearest_snapshots(traj, times):
        c = cosines(st)
        for r in range(c.shape[1]):
            counts, _ = np.histogram(c[:, r], bins=edges)
            dens = counts / (counts.sum() * np.diff(edges)) if counts.sum() else counts * 0.0
            for b in range(bins):
                rows.append((t, r, edges[b], edges[b + 1], int(counts[b]), float(dens[b])))
    return rows


def write_histograms(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "teacher", "bin_lo", "bin_hi", "count", "density"])
        for t, r, lo, hi, n, dens in rows:
            w.writerow([fmt(t), r, fmt(lo), fmt(hi), n, fmt(dens)])
