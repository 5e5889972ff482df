"""Binary PPM (P6) rasters of node sets on 2-torus grids, one pixel per box."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .boxgraph import BoxGrid

BACKGROUND = (255, 255, 255)
PALETTE = [(0, 0, 0), (200, 30, 30), (30, 90, 200), (20, 150, 60), (230, 160, 0)]


def render(grid: BoxGrid, layers: Sequence[tuple[Iterable[int], tuple[int, int, int]]]) -> bytes:
    """Paint layers in order (later ones on top); y grows upward in the image."""
    if grid.dimension != 2:
        raise ValueError("rasters need a 2-dimensional grid")
    n = grid.resolution
    img = np.empty((n, n, 3), dtype=np.uint8)
    img[:] = BACKGROUND
    for nodes, color in layers:
        nodes = np.fromiter((int(v) for v in nodes), dtype=np.int64)
        if nodes.size == 0:
            continue
        ix, iy = np.unravel_index(nodes, grid.shape)
        img[n - 1 - iy, ix] = color
    return b"P6\n%d %d\n255\n" % (n, n) + img.tobytes()


def write_ppm(path: str | Path, grid: BoxGrid, layers) -> None:
    Path(path).write_bytes(render(grid, layers))


def read_ppm(data: bytes) -> np.ndarray:
    """Decode a P6 image written by :func:`render` into an (h, w, 3) array."""
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a P6 image")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)
