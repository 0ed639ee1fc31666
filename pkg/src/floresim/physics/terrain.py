"""Heightfield terrains: flat, slope, stairs, discrete blocks and friction patches."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TERRAIN_KINDS = ("flat", "slope", "stairs", "discrete", "friction-patch")
MAX_RISER = 0.15


class TerrainError(ValueError):
    pass


@dataclass(frozen=True)
class Terrain:
    """Uniform height grid. ``heights[i, j]`` sits at ``(x0 + i*resolution, y0 + j*resolution)``."""

    kind: str
    heights: np.ndarray
    friction: np.ndarray
    resolution: float
    x0: float
    y0: float
    seed: int = 0
    params: dict = field(default_factory=dict)

    @property
    def extent(self) -> tuple[float, float, float, float]:
        nx, ny = self.heights.shape
        return (self.x0, self.x0 + (nx - 1) * self.resolution,
                self.y0, self.y0 + (ny - 1) * self.resolution)

    def arrays(self):
        """Flat argument tuple consumed by the dynamics kernels."""
        return self.heights, self.friction, self.x0, self.y0, self.resolution


_DEFAULTS = {
    "flat": {},
    "slope": {"angle_deg": 10.0, "start": 1.0},
    "stairs": {"riser": 0.15, "tread": 0.30, "start": 1.0, "steps": 8},
    "discrete": {"max_block": 0.08, "block_size": 0.4, "start": 1.0},
    "friction-patch": {"patch_size": 1.0, "low": 0.6, "high": 2.0},
}


def make_terrain(kind: str, params: dict | None = None, seed: int = 0, *,
                 half_size: float = 20.0, resolution: float = 0.05) -> Terrain:
    """Build a terrain over the square arena ``[-half_size, half_size]^2``.

    Generation is deterministic given ``seed``.
    """
    if kind not in TERRAIN_KINDS:
        raise TerrainError(f"unknown terrain kind {kind!r}")
    p = dict(_DEFAULTS[kind])
    p.update(params or {})
    n = int(round(2 * half_size / resolution)) + 1
    x0 = y0 = -half_size
    xs = x0 + resolution * np.arange(n)
    X = np.repeat(xs[:, None], n, axis=1)
    heights = np.zeros((n, n))
    friction = np.ones((n, n))
    rng = np.random.default_rng(seed)

    if kind == "slope":
        angle = math.radians(p["angle_deg"])
        if not -80.0 < p["angle_deg"] < 80.0:
            raise TerrainError("slope angle must lie in (-80, 80) degrees")
        heights = np.maximum(X - p["start"], 0.0) * math.tan(angle)
    elif kind == "stairs":
        riser, tread = float(p["riser"]), float(p["tread"])
        if riser > MAX_RISER + 1e-12:
            raise TerrainError(f"riser height {riser} m exceeds {MAX_RISER} m")
        if riser < 0 or tread <= 0 or int(p["steps"]) < 1:
            raise TerrainError("stairs need riser >= 0, tread > 0 and steps >= 1")
        steps = np.floor((X - p["start"]) / tread + 1e-9)
        heights = riser * np.clip(steps, 0, int(p["steps"]))
    elif kind == "discrete":
        max_block, block = float(p["max_block"]), float(p["block_size"])
        if max_block < 0 or block <= 0:
            raise TerrainError("discrete terrain needs max_block >= 0 and block_size > 0")
        nb = int(math.ceil(2 * half_size / block)) + 1
        blocks = rng.uniform(0.0, max_block, size=(nb, nb))
        idx = np.floor((xs - x0) / block + 1e-9).astype(int)
        heights = blocks[np.ix_(idx, idx)]
        heights[X < p["start"]] = 0.0
    elif kind == "friction-patch":
        lo, hi, size = float(p["low"]), float(p["high"]), float(p["patch_size"])
        if not 0 < lo <= hi or size <= 0:
            raise TerrainError("friction patches need 0 < low <= high and patch_size > 0")
        nb = int(math.ceil(2 * half_size / size)) + 1
        patches = rng.uniform(lo, hi, size=(nb, nb))
        idx = np.floor((xs - x0) / size + 1e-9).astype(int)
        friction = patches[np.ix_(idx, idx)]

    heights = np.ascontiguousarray(heights, dtype=np.float64)
    friction = np.ascontiguousarray(friction, dtype=np.float64)
    return Terrain(kind, heights, friction, float(resolution), float(x0), float(y0), int(seed), p)


def height_at(terrain: Terrain, x: float, y: float) -> tuple[float, bool]:
    """Bilinear height at ``(x, y)``; second value flags a query clamped to the arena."""
    nx, ny = terrain.heights.shape
    fx = (x - terrain.x0) / terrain.resolution
    fy = (y - terrain.y0) / terrain.resolution
    clamped = not (0.0 <= fx <= nx - 1 and 0.0 <= fy <= ny - 1)
    fx = min(max(fx, 0.0), nx - 1.0)
    fy = min(max(fy, 0.0), ny - 1.0)
    i = min(int(math.floor(fx)), nx - 2)
    j = min(int(math.floor(fy)), ny - 2)
    tx, ty = fx - i, fy - j
    h = terrain.heights
    value = ((1 - tx) * (1 - ty) * h[i, j] + tx * (1 - ty) * h[i + 1, j]
             + (1 - tx) * ty * h[i, j + 1] + tx * ty * h[i + 1, j + 1])
    return float(value), clamped


def export_csv(terrain: Terrain, path: str | Path, stride: int = 1) -> Path:
    """Write ``x_index, y_index, height, friction`` rows."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x_index", "y_index", "height", "friction"])
        nx, ny = terrain.heights.shape
        for i in range(0, nx, stride):
            for j in range(0, ny, stride):
                writer.writerow([i, j, repr(float(terrain.heights[i, j])),
                                 repr(float(terrain.friction[i, j]))])
    return path
