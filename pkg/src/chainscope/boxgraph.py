"""Box-grid transition digraphs: the discrete carrier of (eps, T)-pseudo-orbits.

Node ids are C-order ravelled box indices. Every edge carries the lattice
displacement gained by flowing a sample point of the source box for time T
and then jumping (distance < eps in the sup metric) into a lift of the
target box, so summing displacements along a path gives the homology class
of the corresponding pseudo-orbit.
"""

from __future__ import annotations

import itertools
import json
import struct
import warnings
import zlib
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .flowsys import VectorField, integrate_many

MAGIC = b"CSGR"
VERSION = 1
DEFAULT_MAX_EDGES = 20_000_000


class GraphFormatError(ValueError):
    """Corrupt, truncated or incompatible graph file."""


class FingerprintMismatchWarning(UserWarning):
    code = "W101"


@dataclass(frozen=True)
class BoxGrid:
    dimension: int
    resolution: int

    def __post_init__(self):
        if self.resolution < 2:
            raise ValueError("grid resolution must be >= 2")
        if self.dimension < 1:
            raise ValueError("grid dimension must be >= 1")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.resolution,) * self.dimension

    @property
    def box_count(self) -> int:
        return self.resolution**self.dimension

    @property
    def side(self) -> float:
        return 1.0 / self.resolution

    def box_id(self, index: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(int(i) for i in index), self.shape))

    def box_index(self, node: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(int(node), self.shape))

    def locate(self, point: Sequence[float]) -> int:
        """Node id of the box containing a (base or lifted) point."""
        idx = np.floor(np.mod(np.asarray(point, dtype=float), 1.0) * self.resolution).astype(int)
        idx = np.minimum(idx, self.resolution - 1)
        return self.box_id(idx)

    def centers(self) -> np.ndarray:
        idx = np.indices(self.shape).reshape(self.dimension, -1).T
        return (idx + 0.5) / self.resolution


@dataclass(frozen=True, eq=False)
class TransitionGraph:
    """Immutable edge list with per-edge integer displacement and common duration T.

    Use :meth:`from_edges` for hand-made fixtures; ``grid`` is ``None`` then.
    """

    num_nodes: int
    src: np.ndarray
    dst: np.ndarray
    disp: np.ndarray
    T: float = 1.0
    epsilon: float = 0.0
    grid: BoxGrid | None = None
    fingerprint: bytes = field(default=bytes(32), repr=False)
    step: float | None = None
    samples_per_box: int | None = None

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.src.shape != self.dst.shape or self.disp.shape[0] != self.src.shape[0]:
            raise ValueError("edge arrays have inconsistent lengths")
        if self.src.size and (self.src.min() < 0 or max(self.src.max(), self.dst.max()) >= self.num_nodes
                              or self.dst.min() < 0):
            raise ValueError("edge endpoint out of range")

    @classmethod
    def from_edges(cls, num_nodes: int, edges, T: float = 1.0, dimension: int | None = None,
                   epsilon: float = 0.0) -> "TransitionGraph":
        """``edges`` is an iterable of (src, dst, displacement-vector)."""
        edges = list(edges)
        if dimension is None:
            dimension = len(edges[0][2]) if edges else 1
        src = np.array([e[0] for e in edges], dtype=np.int64)
        dst = np.array([e[1] for e in edges], dtype=np.int64)
        disp = np.array([list(e[2]) for e in edges], dtype=np.int64).reshape(len(edges), dimension)
        src, dst, disp = _canonical_edges(src, dst, disp)
        return cls(int(num_nodes), src, dst, disp, float(T), float(epsilon))

    @property
    def dimension(self) -> int:
        return int(self.disp.shape[1])

    @property
    def num_edges(self) -> int:
        return int(self.src.shape[0])

    def edge(self, e: int) -> tuple[int, int, tuple[int, ...]]:
        return int(self.src[e]), int(self.dst[e]), tuple(int(v) for v in self.disp[e])

    def __eq__(self, other) -> bool:
        if not isinstance(other, TransitionGraph):
            return NotImplemented
        return (self.num_nodes == other.num_nodes and self.T == other.T
                and self.epsilon == other.epsilon and self.grid == other.grid
                and self.fingerprint == other.fingerprint
                and np.array_equal(self.src, other.src) and np.array_equal(self.dst, other.dst)
                and np.array_equal(self.disp, other.disp))

    __hash__ = object.__hash__

    # -- cached structure shared by the analyses ---------------------------

    @cached_property
    def scc(self) -> np.ndarray:
        """Strong component label per node (scipy's component numbering)."""
        adj = coo_matrix((np.ones(self.num_edges), (self.src, self.dst)),
                         shape=(self.num_nodes, self.num_nodes)).tocsr()
        _, labels = connected_components(adj, directed=True, connection="strong")
        return labels.astype(np.int64)

    @cached_property
    def intra(self) -> np.ndarray:
        """Mask of edges whose endpoints share a strong component."""
        return self.scc[self.src] == self.scc[self.dst]

    @cached_property
    def scc_levels(self) -> np.ndarray:
        """Longest condensation-path length from each component to a sink component."""
        ncomp = int(self.scc.max()) + 1 if self.num_nodes else 0
        cs, cd = self.scc[self.src[~self.intra]], self.scc[self.dst[~self.intra]]
        order = _topological_components(ncomp, cs, cd)
        level = np.zeros(ncomp, dtype=np.int64)
        succ: list[list[int]] = [[] for _ in range(ncomp)]
        for a, b in zip(cs.tolist(), cd.tolist()):
            succ[a].append(b)
        for c in reversed(order):
            if succ[c]:
                level[c] = 1 + max(level[s] for s in succ[c])
        return level

    @cached_property
    def out_adjacency(self) -> list[list[int]]:
        """Per-node list of outgoing edge ids."""
        out: list[list[int]] = [[] for _ in range(self.num_nodes)]
        for e, s in enumerate(self.src.tolist()):
            out[s].append(e)
        return out

    def subgraph_edges(self, mask: np.ndarray) -> "TransitionGraph":
        """Same nodes, only the masked edges."""
        return TransitionGraph(self.num_nodes, self.src[mask], self.dst[mask], self.disp[mask],
                               self.T, self.epsilon, self.grid, self.fingerprint,
                               self.step, self.samples_per_box)

    def walk_displacement(self, walk: Sequence[int]) -> np.ndarray:
        walk = np.asarray(walk, dtype=np.int64)
        return self.disp[walk].sum(axis=0) if walk.size else np.zeros(self.dimension, dtype=np.int64)


def _canonical_edges(src, dst, disp):
    """Sort lexicographically by (src, dst, disp) and drop duplicates."""
    if src.size == 0:
        return src, dst, disp
    stacked = np.column_stack([src, dst, disp]).astype(np.int64)
    stacked = np.unique(stacked, axis=0)
    return (np.ascontiguousarray(stacked[:, 0]), np.ascontiguousarray(stacked[:, 1]),
            np.ascontiguousarray(stacked[:, 2:]))


def _topological_components(ncomp: int, cs: np.ndarray, cd: np.ndarray) -> list[int]:
    indeg = np.bincount(cd, minlength=ncomp) if cd.size else np.zeros(ncomp, dtype=np.int64)
    succ: list[list[int]] = [[] for _ in range(ncomp)]
    for a, b in zip(cs.tolist(), cd.tolist()):
        succ[a].append(b)
    indeg = indeg.tolist()
    stack = [c for c in range(ncomp) if indeg[c] == 0]
    order = []
    while stack:
        c = stack.pop()
        order.append(c)
        for s in succ[c]:
            indeg[s] -= 1
            if indeg[s] == 0:
                stack.append(s)
    return order


# -- construction -----------------------------------------------------------------


def sample_offsets(dimension: int, samples_per_box: int | None, seed: int = 0) -> np.ndarray:
    """Box-relative sample positions in [0,1]^d: center, corners, then Latin-hypercube interior points."""
    base = [np.full(dimension, 0.5)]
    base += [np.array(c, dtype=float) for c in itertools.product((0.0, 1.0), repeat=dimension)]
    offsets = np.array(base)
    if samples_per_box is None:
        return offsets
    if samples_per_box < 1:
        raise ValueError("samples_per_box must be >= 1")
    if samples_per_box <= len(offsets):
        return offsets[:samples_per_box]
    extra = samples_per_box - len(offsets)
    rng = np.random.default_rng(seed)
    lhs = np.empty((extra, dimension))
    for axis in range(dimension):
        lhs[:, axis] = (rng.permutation(extra) + rng.random(extra)) / extra
    return np.vstack([offsets, lhs])


def build_transition_graph(fld: VectorField, n: int, T: float = 1.0, epsilon: float | None = None,
                           samples_per_box: int | None = None, step: float | None = None,
                           max_edges: int = DEFAULT_MAX_EDGES) -> TransitionGraph:
    """Sample each box, flow for time T, and connect to every box meeting the open eps-ball.

    ``epsilon`` defaults to the box side 1/n (sup metric); ``step`` to T/64.
    """
    grid = BoxGrid(fld.dimension, n)
    if T <= 0:
        raise ValueError("T must be positive")
    eps = grid.side if epsilon is None else float(epsilon)
    if eps < grid.side * (1 - 1e-12):
        raise ValueError(f"epsilon {eps} smaller than box side {grid.side}")
    step = T / 64.0 if step is None else float(step)
    d = grid.dimension

    offsets = sample_offsets(d, samples_per_box)
    boxes = np.indices(grid.shape).reshape(d, -1).T  # node id order
    starts = (boxes[:, None, :] + offsets[None, :, :]) / n
    ends = integrate_many(fld, starts.reshape(-1, d), T, step)
    src_nodes = np.repeat(np.arange(grid.box_count, dtype=np.int64), len(offsets))

    # Lift boxes k meeting the open ball: (y - eps) n - 1 < k < (y + eps) n.
    lo = np.floor((ends - eps) * n).astype(np.int64)
    hi = (np.ceil((ends + eps) * n) - 1).astype(np.int64)
    width = int((hi - lo).max()) + 1
    est = len(ends) * width**d
    if est > 4 * max_edges:
        raise ValueError(f"edge count estimate {est} exceeds cap {max_edges}")
    srcs, dsts, disps = [], [], []
    for shift in itertools.product(range(width), repeat=d):
        k = lo + np.asarray(shift, dtype=np.int64)
        ok = np.all(k <= hi, axis=1)
        kk = k[ok]
        srcs.append(src_nodes[ok])
        dsts.append(np.ravel_multi_index(tuple(np.mod(kk, n).T), grid.shape).astype(np.int64))
        disps.append(np.floor_divide(kk, n))
    src, dst, disp = _canonical_edges(np.concatenate(srcs), np.concatenate(dsts), np.concatenate(disps))
    if src.size > max_edges:
        raise ValueError(f"edge count {src.size} exceeds cap {max_edges}")
    return TransitionGraph(grid.box_count, src, dst, disp.astype(np.int64), float(T), eps, grid,
                           fld.fingerprint(), step, len(offsets))


def refine(fld: VectorField, graph: TransitionGraph) -> TransitionGraph:
    """Rebuild at twice the resolution and half the jump radius."""
    if graph.grid is None:
        raise ValueError("only grid graphs can be refined")
    if graph.fingerprint != fld.fingerprint():
        warnings.warn(FingerprintMismatchWarning(
            f"{FingerprintMismatchWarning.code}: refining with a different field"))
    return build_transition_graph(fld, graph.grid.resolution * 2, graph.T, graph.epsilon / 2,
                                  graph.samples_per_box, graph.step)


# -- persistence ------------------------------------------------------------------

_HEADER = struct.Struct("<4sHBIdd32sQ")


def _edge_dtype(d: int) -> np.dtype:
    return np.dtype([("src", "<u8"), ("dst", "<u8"), ("disp", "<i4", (d,))])


def to_bytes(graph: TransitionGraph) -> bytes:
    if graph.grid is None:
        raise GraphFormatError("binary format stores grid graphs only; use JSON export")
    d = graph.dimension
    header = _HEADER.pack(MAGIC, VERSION, d, graph.grid.resolution, graph.T, graph.epsilon,
                          graph.fingerprint, graph.num_edges)
    rec = np.empty(graph.num_edges, dtype=_edge_dtype(d))
    rec["src"], rec["dst"], rec["disp"] = graph.src, graph.dst, graph.disp
    body = header + rec.tobytes()
    return body + struct.pack("<I", zlib.crc32(body))


def from_bytes(data: bytes) -> TransitionGraph:
    if len(data) < _HEADER.size + 4:
        raise GraphFormatError("file too short")
    magic, version, d, n, T, eps, fp, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise GraphFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise GraphFormatError(f"unsupported version {version}")
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != crc:
        raise GraphFormatError("checksum mismatch")
    dt = _edge_dtype(d)
    if len(data) != _HEADER.size + count * dt.itemsize + 4:
        raise GraphFormatError("edge payload length mismatch")
    rec = np.frombuffer(data, dtype=dt, count=count, offset=_HEADER.size)
    grid = BoxGrid(d, n)
    return TransitionGraph(grid.box_count, rec["src"].astype(np.int64), rec["dst"].astype(np.int64),
                           rec["disp"].astype(np.int64).reshape(count, d), T, eps, grid, bytes(fp))


def save(graph: TransitionGraph, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(graph))


def load(path: str | Path, fld: VectorField | None = None) -> TransitionGraph:
    """Read a CSGR file; warns with code W101 if ``fld`` does not match the stored fingerprint."""
    graph = from_bytes(Path(path).read_bytes())
    if fld is not None and fld.fingerprint() != graph.fingerprint:
        warnings.warn(FingerprintMismatchWarning(
            f"{FingerprintMismatchWarning.code}: graph {path} was built from a different field"),
            stacklevel=2)
    return graph


def to_json(graph: TransitionGraph) -> dict:
    return {
        "format": "CSGR",
        "version": VERSION,
        "dimension": graph.dimension,
        "n": graph.grid.resolution if graph.grid else None,
        "num_nodes": graph.num_nodes,
        "T": graph.T,
        "epsilon": graph.epsilon,
        "fingerprint": graph.fingerprint.hex(),
        "edges": [[int(s), int(t), [int(v) for v in h]]
                  for s, t, h in zip(graph.src, graph.dst, graph.disp)],
    }


def from_json(doc: dict) -> TransitionGraph:
    if doc.get("format") != "CSGR":
        raise GraphFormatError("not a CSGR JSON document")
    if doc.get("version") != VERSION:
        raise GraphFormatError(f"unsupported version {doc.get('version')}")
    d = int(doc["dimension"])
    grid = BoxGrid(d, int(doc["n"])) if doc.get("n") else None
    edges = doc["edges"]
    src = np.array([e[0] for e in edges], dtype=np.int64)
    dst = np.array([e[1] for e in edges], dtype=np.int64)
    disp = np.array([e[2] for e in edges], dtype=np.int64).reshape(len(edges), d)
    return TransitionGraph(int(doc["num_nodes"]), src, dst, disp, float(doc["T"]), float(doc["epsilon"]),
                           grid, bytes.fromhex(doc["fingerprint"]))


def save_json(graph: TransitionGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(to_json(graph)))


def load_any(path: str | Path, fld: VectorField | None = None) -> TransitionGraph:
    path = Path(path)
    if path.suffix == ".json":
        return from_json(json.loads(path.read_text()))
    return load(path, fld)


def displacement_bound(fld: VectorField, T: float) -> np.ndarray:
    return np.ceil(T * fld.speed_bound()).astype(np.int64) + 1


def box_diameter(grid: BoxGrid) -> float:
    """Sup-metric diameter of a box."""
    return grid.side


def path_realization_slack(graph: TransitionGraph) -> float:
    """Jump size bound of a realized path: eps plus the sampling slack of one box."""
    return graph.epsilon + (graph.grid.side if graph.grid else 0.0)
