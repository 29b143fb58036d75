"""Electrode layouts: named scalp positions in millimetres.

The shipped 59-channel layout is an idealised extended 10-10 arrangement
on an 85 mm spherical head (vertex +z, nasion +y, right ear +x). Midline
and outer-ring electrodes sit at 18-degree arc steps; in-between rows are
placed by spherical interpolation between their midline anchor and the
outer-ring electrode of the same row, which is how the labelled positions
are defined on an idealised head.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from gaitdecode.errors import ConfigurationError, DataFormatError

HEAD_RADIUS_MM = 85.0

# outer ring (72 degrees from vertex), azimuth measured from the nasion,
# positive toward the right ear
_RING_AZIMUTH = {
    "Fp1": -18, "Fp2": 18,
    "AF7": -36, "AF8": 36,
    "F7": -54, "F8": 54,
    "FT7": -72, "FT8": 72,
    "T7": -90, "T8": 90,
    "TP7": -108, "TP8": 108,
    "P7": -126, "P8": 126,
    "PO7": -144, "PO8": 144,
    "O1": -162, "O2": 162,
    "Oz": 180,
}

# midline anchors: polar angle from vertex, positive toward the nasion
_MIDLINE_ANGLE = {
    "AFz": 54, "Fz": 36, "FCz": 18, "Cz": 0,
    "CPz": -18, "Pz": -36, "POz": -54,
}

# (midline anchor, left ring edge, row labels toward the edge, arc fractions)
_ROWS = [
    ("AFz", "AF7", ["AF3"], [0.5]),
    ("Fz", "F7", ["F1", "F3", "F5"], [0.25, 0.5, 0.75]),
    ("FCz", "FT7", ["FC1", "FC3", "FC5"], [0.25, 0.5, 0.75]),
    ("Cz", "T7", ["C1", "C3", "C5"], [0.25, 0.5, 0.75]),
    ("CPz", "TP7", ["CP1", "CP3", "CP5"], [0.25, 0.5, 0.75]),
    ("Pz", "P7", ["P1", "P3", "P5"], [0.25, 0.5, 0.75]),
    ("POz", "PO7", ["PO3"], [0.5]),
]

# FCz is the recording reference and excluded from the shipped layout
_EXCLUDED = {"FCz"}

BENCHMARK_16 = [
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8",
    "FC1", "FC2", "C3", "Cz", "C4", "CPz", "P3", "Pz", "P4",
]


@dataclass(frozen=True)
class ElectrodeLayout:
    """Named electrodes with 3-D scalp coordinates in millimetres."""

    names: tuple[str, ...]
    positions: np.ndarray  # (C, 3)

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ConfigurationError("electrode names must be unique")
        if not np.all(np.isfinite(self.positions)):
            raise ConfigurationError("electrode positions must be finite")
        if self.positions.shape != (len(self.names), 3):
            raise ConfigurationError(
                f"positions shape {self.positions.shape} does not match "
                f"{len(self.names)} electrode names"
            )

    @property
    def n_channels(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ConfigurationError(f"unknown electrode {name!r}") from None

    def subset(self, names) -> "ElectrodeLayout":
        idx = [self.index_of(n) for n in names]
        return ElectrodeLayout(tuple(names), self.positions[idx].copy())

    def pairwise_distances(self) -> np.ndarray:
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        return np.sqrt((diff**2).sum(axis=-1))


def _slerp(u: np.ndarray, v: np.ndarray, t: float) -> np.ndarray:
    omega = math.acos(float(np.clip(np.dot(u, v), -1.0, 1.0)))
    if omega < 1e-12:
        return u
    return (
        math.sin((1.0 - t) * omega) * u + math.sin(t * omega) * v
    ) / math.sin(omega)


def _polar_front(angle_deg: float) -> np.ndarray:
    a = math.radians(angle_deg)
    return np.array([0.0, math.sin(a), math.cos(a)])


def _ring_point(azimuth_deg: float) -> np.ndarray:
    az = math.radians(azimuth_deg)
    s = math.sin(math.radians(72.0))
    return np.array([s * math.sin(az), s * math.cos(az), math.cos(math.radians(72.0))])


def _mirror(p: np.ndarray) -> np.ndarray:
    return p * np.array([-1.0, 1.0, 1.0])


def builtin_layout() -> ElectrodeLayout:
    """The shipped 59-channel idealised 10-10 layout (85 mm sphere)."""
    points: dict[str, np.ndarray] = {}
    for name, az in _RING_AZIMUTH.items():
        points[name] = _ring_point(az)
    for name, ang in _MIDLINE_ANGLE.items():
        points[name] = _polar_front(ang)
    for anchor, edge, labels, fractions in _ROWS:
        u = points[anchor]
        v = points[edge]
        for label, t in zip(labels, fractions):
            left = _slerp(u, v, t)
            points[label] = left
            right = label[:-1] + str(int(label[-1]) + 1)
            points[right] = _mirror(left)
    for name in _EXCLUDED:
        points.pop(name, None)
    names = tuple(sorted(points))
    positions = np.stack([points[n] for n in names]) * HEAD_RADIUS_MM
    return ElectrodeLayout(names, positions)


def benchmark_layout() -> ElectrodeLayout:
    """16-channel subset used by the synthetic benchmark."""
    return builtin_layout().subset(BENCHMARK_16)


def load_montage_csv(path) -> ElectrodeLayout:
    """Read a montage file with header ``name,x_mm,y_mm,z_mm``."""
    path = Path(path)
    names: list[str] = []
    rows: list[list[float]] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["name", "x_mm", "y_mm", "z_mm"]:
            raise DataFormatError(
                f"{path}: expected header 'name,x_mm,y_mm,z_mm', got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise DataFormatError(f"{path}:{lineno}: expected 4 columns")
            names.append(row[0])
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
    return ElectrodeLayout(tuple(names), np.array(rows))


def write_montage_csv(layout: ElectrodeLayout, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "x_mm", "y_mm", "z_mm"])
        for name, pos in zip(layout.names, layout.positions):
            writer.writerow([name] + [f"{v:.6f}" for v in pos])


def resolve_layout(spec: str) -> ElectrodeLayout:
    """Map a config montage string to a layout.

    ``builtin:59`` and ``builtin:16`` name the shipped layouts; anything
    else is treated as a montage CSV path.
    """
    if spec == "builtin:59":
        return shipped_layout()
    if spec == "builtin:16":
        return shipped_layout().subset(BENCHMARK_16)
    return load_montage_csv(spec)


def shipped_layout() -> ElectrodeLayout:
    """Load the packaged montage CSV (falls back to the generator)."""
    try:
        ref = resources.files("gaitdecode").joinpath("assets/montage_10_10_59.csv")
        with resources.as_file(ref) as p:
            if p.exists():
                return load_montage_csv(p)
    except (FileNotFoundError, ModuleNotFoundError):
        pass
    return builtin_layout()
