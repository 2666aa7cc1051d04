"""Oriented meshes over the supported base manifolds: S^1, T^n grids, intervals.

Closed kinds carry one replica row of vertices at origin + period per axis;
cells tile exactly one fundamental domain, so every transversal crossing is
counted once.  Meshes are immutable; the seeded boundary-shift retry produces
a new mesh with a shifted origin.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class BaseMesh:
    kind: str                 # "circle" | "torus" | "interval"
    resolution: tuple         # cells per axis
    orientation: int = 1
    origin: tuple = (0.0,)
    lengths: tuple = (1.0,)   # per-axis extent; the period for closed kinds

    def __post_init__(self):
        if self.kind not in ("circle", "torus", "interval"):
            raise ValueError(f"unknown mesh kind {self.kind!r}")
        if self.orientation not in (-1, 1):
            raise ValueError("orientation must be +1 or -1")
        if self.kind in ("circle", "interval") and self.dim != 1:
            raise ValueError(f"{self.kind} mesh must be one-dimensional")
        if self.kind == "torus" and self.dim < 2:
            raise ValueError("torus mesh needs at least two axes")
        if any(r < 2 for r in self.resolution):
            raise ValueError("need at least 2 cells per axis")

    @property
    def dim(self):
        return len(self.resolution)

    @property
    def periodic(self):
        return self.kind in ("circle", "torus")

    def spacing(self, axis):
        return self.lengths[axis] / self.resolution[axis]

    def axis_coords(self, axis):
        return self.origin[axis] + self.lengths[axis] * np.linspace(
            0.0, 1.0, self.resolution[axis] + 1
        )

    def vertex_indices(self):
        return itertools.product(*(range(r + 1) for r in self.resolution))

    def vertex_coord(self, vidx):
        return np.array(
            [self.origin[a] + vidx[a] * self.spacing(a) for a in range(self.dim)]
        )

    def cell_indices(self):
        return itertools.product(*(range(r) for r in self.resolution))

    def cell_corners(self, cidx):
        """Corner vertex indices in binary-offset order ((0,..,0) first)."""
        offsets = itertools.product(*([(0, 1)] * self.dim))
        return [tuple(c + o for c, o in zip(cidx, off)) for off in offsets]

    def cell_bounds(self, cidx):
        lo = self.vertex_coord(cidx)
        hi = lo + np.array([self.spacing(a) for a in range(self.dim)])
        return lo, hi

    def edges(self):
        """Axis-forward vertex pairs covering every mesh edge once."""
        for vidx in self.vertex_indices():
            for a in range(self.dim):
                if vidx[a] < self.resolution[a]:
                    widx = tuple(v + (1 if b == a else 0) for b, v in enumerate(vidx))
                    yield vidx, widx, a

    def shifted(self, fractions):
        """New mesh with origin moved by the given per-axis cell fractions."""
        origin = tuple(
            o + f * self.spacing(a) for a, (o, f) in enumerate(zip(self.origin, fractions))
        )
        return replace(self, origin=origin)

    def wrap(self, coords):
        """Reduce coordinates to the fundamental domain on closed axes."""
        coords = np.asarray(coords, dtype=float).copy()
        if self.periodic:
            for a in range(self.dim):
                coords[a] = coords[a] % self.lengths[a]
        return coords


def circle_mesh(resolution, period=1.0, orientation=1, origin=0.0):
    return BaseMesh(
        kind="circle",
        resolution=(int(resolution),),
        orientation=orientation,
        origin=(float(origin),),
        lengths=(float(period),),
    )


def torus_mesh(resolution, periods=None, orientation=1, origin=None):
    resolution = tuple(int(r) for r in resolution)
    periods = (1.0,) * len(resolution) if periods is None else tuple(map(float, periods))
    origin = (0.0,) * len(resolution) if origin is None else tuple(map(float, origin))
    return BaseMesh(
        kind="torus",
        resolution=resolution,
        orientation=orientation,
        origin=origin,
        lengths=periods,
    )


def interval_mesh(a, b, resolution, orientation=1):
    if not b > a:
        raise ValueError("interval needs b > a")
    return BaseMesh(
        kind="interval",
        resolution=(int(resolution),),
        orientation=orientation,
        origin=(float(a),),
        lengths=(float(b - a),),
    )
