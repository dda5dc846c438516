"""Chaotic-orbit point clouds labeled by the dynamics parameter.

Each sample is an orbit of the planar recurrence

    x_{n+1} = (x_n + r * y_n * (1 - y_n)) mod 1
    y_{n+1} = (y_n + r * x_{n+1} * (1 - x_{n+1})) mod 1

where the second update already uses the new x.  The qualitative shape of
the orbit (voids, bands, near-uniform fill) depends strongly on r, which is
what makes these clouds a good benchmark for topological classifiers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .seeds import make_rng

#: Parameter values defining the five classes.
CLASS_R_VALUES = (2.5, 3.5, 4.0, 4.1, 4.3)


@dataclass(frozen=True)
class OrbitSpec:
    """One orbit: dynamics parameter, length, seed, optional fixed start."""

    r: float
    n_points: int
    seed: int = 0
    start: Optional[tuple[float, float]] = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.r) and self.r > 0):
            raise ValueError(f"dynamics parameter r must be a positive real, got {self.r!r}")
        if self.n_points < 1:
            raise ValueError(f"n_points must be >= 1, got {self.n_points}")
        if self.start is not None:
            x0, y0 = self.start
            if not (0.0 <= x0 <= 1.0 and 0.0 <= y0 <= 1.0):
                raise ValueError(f"start must lie in the unit square, got {self.start}")


@dataclass
class LabeledDataset:
    """Point clouds plus integer class labels indexing into class_params."""

    clouds: list[np.ndarray]
    labels: np.ndarray
    class_params: tuple[float, ...] = CLASS_R_VALUES
    seed: int = 0
    n_points: int = 0
    per_class: int = 0

    def __len__(self) -> int:
        return len(self.clouds)


def _mod1(value: float) -> float:
    # value - floor(value); exact for the magnitudes this map produces
    return value - math.floor(value)


def generate_orbit(spec: OrbitSpec) -> np.ndarray:
    """Generate one orbit as an (n_points, 2) float64 array in [0, 1)^2.

    The first row is the start position (reduced mod 1).  A missing start is
    drawn uniformly from [0,1)^2 on the Philox stream keyed by spec.seed.
    """
    if spec.start is None:
        rng = make_rng(spec.seed)
        x, y = (float(v) for v in rng.random(2))
    else:
        x, y = float(spec.start[0]), float(spec.start[1])
    x = _mod1(x)
    y = _mod1(y)
    pts = np.empty((spec.n_points, 2), dtype=np.float64)
    pts[0, 0] = x
    pts[0, 1] = y
    r = float(spec.r)
    for n in range(1, spec.n_points):
        x = _mod1(x + r * y * (1.0 - y))
        y = _mod1(y + r * x * (1.0 - x))
        pts[n, 0] = x
        pts[n, 1] = y
    return pts


def generate_dataset(
    per_class: int,
    n_points: int,
    seed: int,
    class_params: Sequence[float] = CLASS_R_VALUES,
) -> LabeledDataset:
    """Generate per_class orbits for every parameter value in class_params.

    Starts are uniform on [0,1)^2.  Sample k of class c draws its start from
    the Philox stream keyed by (seed, c * per_class + k), so any sample can be
    regenerated alone and parallel generation order cannot matter.
    """
    if per_class < 1:
        raise ValueError(f"per_class must be >= 1, got {per_class}")
    if n_points < 1:
        raise ValueError(f"n_points must be >= 1, got {n_points}")
    clouds: list[np.ndarray] = []
    labels = np.empty(len(class_params) * per_class, dtype=np.int64)
    for label, r in enumerate(class_params):
        for k in range(per_class):
            sample_id = label * per_class + k
            rng = make_rng(seed, sample_id)
            x0, y0 = (float(v) for v in rng.random(2))
            spec = OrbitSpec(r=r, n_points=n_points, seed=seed, start=(x0, y0))
            clouds.append(generate_orbit(spec))
            labels[sample_id] = label
    return LabeledDataset(
        clouds=clouds,
        labels=labels,
        class_params=tuple(float(r) for r in class_params),
        seed=seed,
        n_points=n_points,
        per_class=per_class,
    )
