"""Deterministic file formats and experiment bundles.

Every artifact is a pair of files sharing a stem: a JSON header carrying
the configuration, seeds and content digests, and a CSV body with a fixed
column order (see FORMATS.md).  Headers record the SHA-256 of their own
body and of every input they were derived from, so a bundle is fully
reproducible and verifiable byte by byte.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import ModelParams
from .sensor import CountRecord
from .smoother import SmoothedTimeline
from .trajectory import JumpEvent, JumpKind, TrajectoryRecord

__all__ = [
    "RunConfig",
    "derive_seed",
    "sha256_file",
    "write_trajectory",
    "read_trajectory",
    "write_counts",
    "read_counts",
    "write_timeline",
    "read_timeline",
    "write_report",
    "read_report",
]

# component indices of the seed-derivation scheme
SEED_STREAM_TRAJECTORY = 0
SEED_STREAM_SENSOR = 1

_FLOAT_FMT = "%.17g"  # round-trips float64 exactly


def derive_seed(root_seed: int, stream: int) -> int:
    """Derive a component seed from the root seed.

    Uses ``numpy.random.SeedSequence(root_seed, spawn_key=(stream,))``;
    stream 0 feeds the trajectory sampler and stream 1 the sensor, so the
    two noise sources are independent yet fully determined by the root.
    """
    ss = np.random.SeedSequence(root_seed, spawn_key=(stream,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sha256_file(path: Path | str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: Path, obj: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _params_dict(params: ModelParams) -> dict:
    return dataclasses.asdict(params)


def _params_from_dict(d: dict) -> ModelParams:
    return ModelParams(**d)


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI run needs: physics, duration, seed and options.

    Serializes losslessly to JSON (floats via repr-exact formatting).
    """

    params: ModelParams
    duration: float
    seed: int
    threshold: float = 0.5
    grid_min: float = 3.5
    grid_max: float = 6.5
    grid_size: int = 60
    n_inner: int = 5
    n_outer: int = 5
    guess_gamma_down: float | None = None
    guess_gamma_up: float | None = None

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("duration must be >= 0")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if self.grid_size < 1 or self.grid_max < self.grid_min:
            raise ValueError("invalid candidate grid")

    def omega_grid(self) -> np.ndarray:
        if self.grid_size == 1:
            return np.array([self.grid_min])
        return np.linspace(self.grid_min, self.grid_max, self.grid_size)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["params"] = _params_dict(self.params)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        d["params"] = _params_from_dict(d["params"])
        return cls(**d)


# ---------------------------------------------------------------------------
# trajectory files


def write_trajectory(stem: Path | str, traj: TrajectoryRecord) -> tuple[Path, Path]:
    """Write ``<stem>.csv`` (t_us, n, p_up) and ``<stem>.json`` header."""
    stem = Path(stem)
    csv_path = stem.with_suffix(".csv")
    json_path = stem.with_suffix(".json")
    times = traj.times
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("t_us,n,p_up\n")
        for t, n, pu in zip(times, traj.n, traj.p_up):
            fh.write(f"{_FLOAT_FMT % t},{int(n)},{_FLOAT_FMT % pu}\n")
    header = {
        "format": "spindot-trajectory/1",
        "params": _params_dict(traj.params),
        "seed": traj.seed,
        "duration_us": traj.duration,
        "events": [{"time_us": e.time, "kind": e.kind.name} for e in traj.events],
        "body_digest": sha256_file(csv_path),
    }
    _write_json(json_path, header)
    return json_path, csv_path


def read_trajectory(stem: Path | str) -> TrajectoryRecord:
    stem = Path(stem)
    with open(stem.with_suffix(".json"), encoding="utf-8") as fh:
        header = json.load(fh)
    if header.get("format") != "spindot-trajectory/1":
        raise ValueError(f"not a trajectory header: {stem}")
    data = np.genfromtxt(stem.with_suffix(".csv"), delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    if data.size == 0:
        n = np.zeros(1, np.int8)
        p_up = np.zeros(1)
    else:
        n = data[:, 1].astype(np.int8)
        p_up = data[:, 2]
    events = tuple(JumpEvent(time=e["time_us"], kind=JumpKind[e["kind"]])
                   for e in header["events"])
    return TrajectoryRecord(params=_params_from_dict(header["params"]),
                            seed=header["seed"],
                            duration=header["duration_us"],
                            events=events, p_up=p_up, n=n)


# ---------------------------------------------------------------------------
# count-record files


def write_counts(stem: Path | str, record: CountRecord,
                 source_digest: str | None = None) -> tuple[Path, Path]:
    """Write ``<stem>.csv`` (bin_index, count) and ``<stem>.json`` header."""
    stem = Path(stem)
    csv_path = stem.with_suffix(".csv")
    json_path = stem.with_suffix(".json")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("bin_index,count\n")
        for k, m in enumerate(record.counts):
            fh.write(f"{k},{int(m)}\n")
    header = {
        "format": "spindot-counts/1",
        "bin_dt_us": record.bin_dt,
        "r0_per_us": record.r0,
        "r1_per_us": record.r1,
        "seed": record.seed,
        "duration_us": record.duration,
        "n_bins": record.n_bins,
        "source_digest": source_digest,
        "body_digest": sha256_file(csv_path),
    }
    _write_json(json_path, header)
    return json_path, csv_path


def read_counts(stem: Path | str) -> CountRecord:
    stem = Path(stem)
    with open(stem.with_suffix(".json"), encoding="utf-8") as fh:
        header = json.load(fh)
    if header.get("format") != "spindot-counts/1":
        raise ValueError(f"not a count-record header: {stem}")
    data = np.genfromtxt(stem.with_suffix(".csv"), delimiter=",", skip_header=1,
                         dtype=np.int64)
    data = np.atleast_2d(data)
    counts = data[:, 1] if data.size else np.zeros(0, np.int64)
    return CountRecord(bin_dt=header["bin_dt_us"], counts=counts,
                       r0=header["r0_per_us"], r1=header["r1_per_us"],
                       seed=header["seed"], duration=header["duration_us"])


# ---------------------------------------------------------------------------
# timeline files


def write_timeline(stem: Path | str, timeline: SmoothedTimeline,
                   threshold: float, source_digest: str | None = None,
                   params: ModelParams | None = None) -> tuple[Path, Path]:
    """Write ``<stem>.csv`` (t_us, p_filter, p_pqs, assigned_state)."""
    stem = Path(stem)
    csv_path = stem.with_suffix(".csv")
    json_path = stem.with_suffix(".json")
    assigned = timeline.assigned_state(threshold)
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("t_us,p_filter,p_pqs,assigned_state\n")
        for t, pf, pq, a in zip(timeline.times, timeline.p_filter,
                                timeline.p_pqs, assigned):
            fh.write(f"{_FLOAT_FMT % t},{_FLOAT_FMT % pf},"
                     f"{_FLOAT_FMT % pq},{int(a)}\n")
    header = {
        "format": "spindot-timeline/1",
        "threshold": threshold,
        "n_bins": int(timeline.p_pqs.shape[0]),
        "params": _params_dict(params) if params is not None else None,
        "source_digest": source_digest,
        "body_digest": sha256_file(csv_path),
    }
    _write_json(json_path, header)
    return json_path, csv_path


def read_timeline(stem: Path | str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (times, p_filter, p_pqs) from a timeline CSV."""
    stem = Path(stem)
    data = np.genfromtxt(stem.with_suffix(".csv"), delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    if data.size == 0:
        z = np.zeros(0)
        return z, z.copy(), z.copy()
    return data[:, 0], data[:, 1], data[:, 2]


# ---------------------------------------------------------------------------
# estimation reports


def write_report(path: Path | str, report: dict) -> Path:
    path = Path(path)
    _write_json(path, report)
    return path


def read_report(path: Path | str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
