"""Time-indexed records of risk and overlaps, with CSV/JSON serialization.

CSV layout: a header row, then ``t``, ``risk``, any extra scalar columns, then
the flattened overlaps (``Q_i_j`` for ``i <= j`` and ``M_i_r`` for full
states, ``M_i_r`` and ``q_i`` for reduced states).  Numbers carry 17
significant digits so files round-trip bit-exactly.  The CSV carries no
timestamp; provenance lives in the JSON meta block.
"""
import csv
import datetime
import json
import os
import subprocess
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError
from .overlaps import OverlapState, ReducedMFState

JSON_SCHEMA_VERSION = 1


def fmt(v):
    return format(float(v), ".17g")


def provenance():
    """``odyn <version>`` plus the short commit hash when run from a git checkout."""
    from . import __version__

    rev = "nogit"
    try:
        here = os.path.dirname(os.path.abspath(__file__))
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0:
            rev = out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return f"odyn {__version__} ({rev})"


def flatten_state(state):
    p, k = state.p, state.k
    if isinstance(state, OverlapState):
        names = [f"Q_{i}_{j}" for i in range(p) for j in range(i, p)]
        vals = [state.Q[i, j] for i in range(p) for j in range(i, p)]
    else:
        names, vals = [], []
    names += [f"M_{i}_{r}" for i in range(p) for r in range(k)]
    vals += list(state.M.ravel())
    if isinstance(state, ReducedMFState):
        names += [f"q_{i}" for i in range(p)]
        vals += list(state.q)
    return names, np.array(vals, dtype=float)


@dataclass
class Trajectory:
    times: np.ndarray
    risks: np.ndarray
    snapshots: Optional[list] = None
    meta: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    # flattened overlaps when loaded from CSV (no P available there)
    flat_names: Optional[list] = None
    flat_values: Optional[np.ndarray] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.risks = np.asarray(self.risks, dtype=float)
        n = len(self.times)
        if len(self.risks) != n:
            raise ValueError("times and risks differ in length")
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.snapshots is not None and len(self.snapshots) != n:
            raise ValueError("snapshot count differs from time count")
        for name, col in self.extra.items():
            if len(col) != n:
                raise ValueError(f"extra column {name} has wrong length")

    def __len__(self):
        return len(self.times)

    @property
    def terminal_risk(self):
        return float(self.risks[-1])

    def flat(self):
        """Column names and ``(n_times, n_cols)`` matrix of flattened overlaps (or ``None``)."""
        if self.snapshots:
            names = flatten_state(self.snapshots[0])[0]
            return names, np.array([flatten_state(s)[1] for s in self.snapshots])
        if self.flat_names:
            return self.flat_names, self.flat_values
        return None, None

    # ---- CSV ----
    def to_csv(self, path, include_overlaps=True):
        names, vals = self.flat() if include_overlaps else (None, None)
        header = ["t", "risk"] + list(self.extra)
        if names:
            header += names
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for n in range(len(self)):
                row = [fmt(self.times[n]), fmt(self.risks[n])]
                row += [fmt(self.extra[c][n]) for c in self.extra]
                if names:
                    row += [fmt(v) for v in vals[n]]
                w.writerow(row)

    @classmethod
    def from_csv(cls, path, extra_names=("max_Q_diag",)):
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        if not rows or rows[0][:2] != ["t", "risk"]:
            raise ConfigError(f"{path}: not a trajectory CSV (header must start with t,risk)")
        header = rows[0]
        data = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, len(header))
        extra = {c: data[:, i] for i, c in enumerate(header) if c in extra_names}
        ov = [i for i, c in enumerate(header) if c[:2] in ("Q_", "M_", "q_")]
        return cls(data[:, 0], data[:, 1], extra=extra,
                   flat_names=[header[i] for i in ov] or None,
                   flat_values=data[:, ov] if ov else None)

    # ---- JSON ----
    def to_json(self, path, timestamp=True):
        meta = dict(self.meta)
        meta.setdefault("provenance", provenance())
        if timestamp:
            meta["generated"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
        obj = {
            "schema_version": JSON_SCHEMA_VERSION,
            "meta": meta,
            "times": [float(v) for v in self.times],
            "risks": [float(v) for v in self.risks],
            "extra": {k: [float(v) for v in col] for k, col in self.extra.items()},
            "snapshots": None if self.snapshots is None else [s.to_dict() for s in self.snapshots],
        }
        if self.snapshots is None and self.flat_names:
            obj["flat"] = {"names": self.flat_names, "values": self.flat_values.tolist()}
        with open(path, "w") as fh:
            json.dump(obj, fh, indent=1)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            obj = json.load(fh)
        if obj.get("schema_version") != JSON_SCHEMA_VERSION or "times" not in obj:
            raise ConfigError(f"{path}: unsupported trajectory schema")
        snaps = obj.get("snapshots")
        if snaps is not None:
            snaps = [OverlapState.from_dict(s) if "Q" in s else ReducedMFState.from_dict(s)
                     for s in snaps]
        flat = obj.get("flat")
        return cls(obj["times"], obj["risks"], snaps, obj.get("meta", {}),
                   {k: np.asarray(v) for k, v in obj.get("extra", {}).items()},
                   flat["names"] if flat else None,
                   np.asarray(flat["values"]) if flat else None)

    @classmethod
    def load(cls, path):
        if str(path).endswith(".json"):
            return cls.from_json(path)
        return cls.from_csv(path)


def output_stem(tag, seed, regime):
    return f"{tag}_seed{seed}_{regime}"


def write_trajectory(traj, out_dir, tag, seed, regime, formats=("csv", "json"), timestamp=True):
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.join(out_dir, output_stem(tag, seed, regime))
    paths = []
    if "csv" in formats:
        traj.to_csv(stem + ".csv")
        paths.append(stem + ".csv")
    if "json" in formats:
        traj.to_json(stem + ".json", timestamp=timestamp)
        paths.append(stem + ".json")
    return paths
