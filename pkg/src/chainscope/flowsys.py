"""Vector fields on the d-torus and RK4 integration on the universal cover.

Points are carried as lifts in R^d so that the homology displacement of an
orbit arc is simply ``end.lift - start.lift``; nothing is reduced mod 1
during integration.
"""

from __future__ import annotations

import ast
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi
GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


class FieldError(ValueError):
    """Bad field definition, dimension mismatch or non-finite evaluation."""


@dataclass(frozen=True)
class TorusPoint:
    coords: tuple[float, ...]

    def __post_init__(self):
        if len(self.coords) < 1:
            raise FieldError("torus point needs dimension >= 1")
        if any(not (0.0 <= c < 1.0) for c in self.coords):
            raise FieldError(f"coordinates must lie in [0,1): {self.coords}")

    @property
    def dimension(self) -> int:
        return len(self.coords)


@dataclass(frozen=True)
class LiftedPoint:
    lift: tuple[float, ...]

    @classmethod
    def of(cls, *coords: float) -> "LiftedPoint":
        return cls(tuple(float(c) for c in coords))

    @property
    def base(self) -> TorusPoint:
        reduced = (c - math.floor(c) for c in self.lift)
        return TorusPoint(tuple(0.0 if r >= 1.0 else float(r) for r in reduced))

    @property
    def dimension(self) -> int:
        return len(self.lift)


@dataclass(frozen=True)
class FlowSegment:
    start: LiftedPoint
    end: LiftedPoint
    duration: float

    @property
    def displacement(self) -> np.ndarray:
        return np.asarray(self.end.lift) - np.asarray(self.start.lift)


# -- trigonometric polynomials ------------------------------------------------


@dataclass(frozen=True)
class TrigTerm:
    """``coef * sin(2 pi (freq . x + phase))``, ``cos(...)``, or a constant."""

    kind: str  # "const" | "sin" | "cos"
    coef: float
    freq: tuple[int, ...] = ()
    phase: float = 0.0

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "const":
            return np.full(x.shape[0], self.coef)
        arg = TWO_PI * (x @ np.asarray(self.freq, dtype=float) + self.phase)
        return self.coef * (np.sin(arg) if self.kind == "sin" else np.cos(arg))

    def to_text(self) -> str:
        if self.kind == "const":
            return repr(self.coef)
        lin = " + ".join(f"{a}*x{i}" for i, a in enumerate(self.freq) if a)
        if self.phase:
            lin = f"{lin} + {self.phase!r}" if lin else repr(self.phase)
        return f"{self.coef!r}*{self.kind}(2*pi*({lin or '0'}))"


class _ExprParser:
    """Turns a restricted Python expression into a list of TrigTerm.

    Accepted: sums/differences of constants and ``c*sin(2*pi*(a.x+b))`` /
    ``c*cos(...)`` terms, where ``a`` is an integer vector over variables
    ``x0..x{d-1}`` (``x``, ``y``, ``z`` are aliases for the first three).
    """

    ALIASES = {"x": 0, "y": 1, "z": 2}

    def __init__(self, dimension: int):
        self.d = dimension

    def parse(self, text: str) -> list[TrigTerm]:
        try:
            tree = ast.parse(text.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise FieldError(f"cannot parse component {text!r}: {exc}") from None
        return self._terms(tree.body)

    def _var(self, name: str) -> int | None:
        if name in self.ALIASES:
            idx = self.ALIASES[name]
        elif name.startswith("x") and name[1:].isdigit():
            idx = int(name[1:])
        else:
            return None
        if idx >= self.d:
            raise FieldError(f"variable {name} exceeds dimension {self.d}")
        return idx

    def _const(self, node) -> float | None:
        """Value of a variable-free arithmetic node, else None."""
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = self._const(node.operand)
            if v is None:
                return None
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp):
            a, b = self._const(node.left), self._const(node.right)
            if a is None or b is None:
                return None
            if isinstance(node.op, ast.Add):
                return a + b
            if isinstance(node.op, ast.Sub):
                return a - b
            if isinstance(node.op, ast.Mult):
                return a * b
            if isinstance(node.op, ast.Div):
                return a / b
            if isinstance(node.op, ast.Pow):
                return a**b
        return None

    def _linear(self, node) -> tuple[np.ndarray, float]:
        c = self._const(node)
        if c is not None:
            return np.zeros(self.d), c
        if isinstance(node, ast.Name):
            idx = self._var(node.id)
            if idx is None:
                raise FieldError(f"unknown name {node.id!r}")
            vec = np.zeros(self.d)
            vec[idx] = 1.0
            return vec, 0.0
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v, b = self._linear(node.operand)
            return (-v, -b) if isinstance(node.op, ast.USub) else (v, b)
        if isinstance(node, ast.BinOp):
            if isinstance(node.op, (ast.Add, ast.Sub)):
                v1, b1 = self._linear(node.left)
                v2, b2 = self._linear(node.right)
                s = 1.0 if isinstance(node.op, ast.Add) else -1.0
                return v1 + s * v2, b1 + s * b2
            if isinstance(node.op, ast.Mult):
                cl, cr = self._const(node.left), self._const(node.right)
                if cl is not None:
                    v, b = self._linear(node.right)
                    return cl * v, cl * b
                if cr is not None:
                    v, b = self._linear(node.left)
                    return cr * v, cr * b
            if isinstance(node.op, ast.Div):
                cr = self._const(node.right)
                if cr is not None:
                    v, b = self._linear(node.left)
                    return v / cr, b / cr
        raise FieldError("trig argument must be linear in the coordinates")

    def _terms(self, node) -> list[TrigTerm]:
        c = self._const(node)
        if c is not None:
            return [TrigTerm("const", c)]
        if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.Add, ast.Sub)):
            right = self._terms(node.right)
            if isinstance(node.op, ast.Sub):
                right = [_scaled(t, -1.0) for t in right]
            return self._terms(node.left) + right
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            s = -1.0 if isinstance(node.op, ast.USub) else 1.0
            return [_scaled(t, s) for t in self._terms(node.operand)]
        if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.Mult, ast.Div)):
            cr = self._const(node.right)
            if cr is not None:
                s = cr if isinstance(node.op, ast.Mult) else 1.0 / cr
                return [_scaled(t, s) for t in self._terms(node.left)]
            cl = self._const(node.left)
            if cl is not None and isinstance(node.op, ast.Mult):
                return [_scaled(t, cl) for t in self._terms(node.right)]
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
            name = node.func.id
            if name not in ("sin", "cos") or len(node.args) != 1:
                raise FieldError(f"unsupported call {name!r}")
            vec, b = self._linear(node.args[0])
            a = vec / TWO_PI
            freq = np.rint(a)
            if not np.allclose(a, freq, atol=1e-9):
                raise FieldError("frequencies must be integer multiples of 2*pi")
            return [TrigTerm(name, 1.0, tuple(int(f) for f in freq), b / TWO_PI)]
        raise FieldError(f"unsupported expression node {ast.dump(node)[:60]}")


def _scaled(t: TrigTerm, s: float) -> TrigTerm:
    return TrigTerm(t.kind, t.coef * s, t.freq, t.phase)


# -- vector fields --------------------------------------------------------------


@dataclass(frozen=True)
class VectorField:
    """A 1-periodic vector field on R^d.

    ``kind`` is one of ``linear``, ``circle_slow``, ``figure_one`` or
    ``expression``. Catalog kinds other than ``linear`` are stored as
    trigonometric polynomials too, so evaluation has one code path.
    """

    dimension: int
    kind: str
    slope: tuple[float, ...] = ()
    components: tuple[tuple[TrigTerm, ...], ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise FieldError("dimension must be >= 1")
        if self.kind == "linear":
            if len(self.slope) != self.dimension:
                raise FieldError("slope length must equal dimension")
        elif len(self.components) != self.dimension:
            raise FieldError("need one component per axis")

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at an (m, d) array of lifted points."""
        x = np.asarray(points, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.dimension:
            raise FieldError(f"expected dimension {self.dimension}, got {x.shape[1]}")
        if self.kind == "linear":
            return np.broadcast_to(np.asarray(self.slope), x.shape).copy()
        x = np.mod(x, 1.0)
        out = np.zeros_like(x)
        for i, terms in enumerate(self.components):
            for t in terms:
                out[:, i] += t.evaluate(x)
        return out

    def speed_bound(self) -> np.ndarray:
        """Per-axis upper bound on |X_i|."""
        if self.kind == "linear":
            return np.abs(np.asarray(self.slope))
        return np.array([sum(abs(t.coef) for t in terms) for terms in self.components])

    def canonical(self) -> dict:
        """Canonical JSON-able description (also the fingerprint input)."""
        if self.kind == "linear":
            return {"kind": "linear", "dimension": self.dimension, "slope": list(self.slope)}
        return {
            "kind": self.kind,
            "dimension": self.dimension,
            "components": [" + ".join(t.to_text() for t in terms) or "0"
                           for terms in self.components],
        }

    def fingerprint(self) -> bytes:
        """SHA-256 over the canonical description."""
        payload = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).digest()


def linear(slope: Sequence[float]) -> VectorField:
    slope = tuple(float(s) for s in slope)
    if not any(slope):
        raise FieldError("linear flow needs a non-zero direction")
    return VectorField(len(slope), "linear", slope=slope)


def circle_slow() -> VectorField:
    """v(x) = sin^2(pi x) on the circle: one fixed point at 0, increasing elsewhere."""
    terms = (TrigTerm("const", 0.5), TrigTerm("cos", -0.5, (1,)))
    return VectorField(1, "circle_slow", components=(terms,))


def catalog_figure_one() -> VectorField:
    """Field on T^2 with fixed points p=(0,0), q=(1/2,1/2) and a p->q diagonal orbit.

    In u = x+y, w = x-y coordinates the field reads
    du/dt = -sin^2(pi u), dw/dt = -sin(pi w) cos(pi u). Zeros are the integer
    (u, w) points; along u in Z the flow runs in w from q-type to p-type points
    (the orbits q -> p-(0,1) and q -> p-(1,0)), along w in Z it runs in u from
    p towards q, and u decreases strictly everywhere else.
    """
    q = 0.25
    common = (TrigTerm("const", -q), TrigTerm("cos", q, (1, 1)))
    fx = common + (TrigTerm("sin", -q, (1, 0)), TrigTerm("sin", q, (0, 1)))
    # same term order under x <-> y, so the diagonal stays exactly invariant in floating point
    fy = common + (TrigTerm("sin", -q, (0, 1)), TrigTerm("sin", q, (1, 0)))
    return VectorField(2, "figure_one", components=(fx, fy))


def expression_field(components: Sequence[str], dimension: int | None = None) -> VectorField:
    d = len(components) if dimension is None else int(dimension)
    if len(components) != d:
        raise FieldError(f"{len(components)} components for dimension {d}")
    parser = _ExprParser(d)
    comps = tuple(tuple(parser.parse(c)) for c in components)
    return VectorField(d, "expression", components=comps)


def load_expression(path: str | Path) -> VectorField:
    doc = json.loads(Path(path).read_text())
    try:
        return expression_field(doc["components"], doc["dimension"])
    except KeyError as exc:
        raise FieldError(f"expression document missing key {exc}") from None


def parse_flow(text: str) -> VectorField:
    """Parse a ``--flow`` argument: ``linear:1,1.618``, ``circle``, ``figure1`` or a JSON path."""
    name, _, arg = text.partition(":")
    name = name.strip().lower()
    if name == "linear":
        if not arg:
            raise FieldError("linear flow needs a slope, e.g. linear:1,1.618")
        return linear([float(s) for s in arg.split(",")])
    if name in ("circle", "circle_slow", "circleslow"):
        return circle_slow()
    if name in ("figure1", "figure_one", "figureone"):
        return catalog_figure_one()
    if Path(text).suffix == ".json" or Path(text).exists():
        return load_expression(text)
    raise FieldError(f"unknown flow {text!r}")


# -- integration ---------------------------------------------------------------


def evaluate_field(fld: VectorField, p: TorusPoint | Sequence[float]) -> np.ndarray:
    coords = p.coords if isinstance(p, TorusPoint) else tuple(p)
    if len(coords) != fld.dimension:
        raise FieldError(f"point has dimension {len(coords)}, field has {fld.dimension}")
    return fld(np.asarray(coords, dtype=float))[0]


def integrate_many(fld: VectorField, lifts: np.ndarray, duration: float, step: float) -> np.ndarray:
    """Classical RK4 over an (m, d) batch of lifts; returns the end lifts."""
    if duration <= 0 or step <= 0:
        raise FieldError("duration and step must be positive")
    y = np.array(lifts, dtype=float, copy=True)
    if y.ndim == 1:
        y = y[None, :]
    nsteps = max(1, math.ceil(duration / step - 1e-12))
    h = duration / nsteps
    if fld.kind == "linear":
        return y + duration * np.asarray(fld.slope)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(nsteps):
            k1 = fld(y)
            k2 = fld(y + 0.5 * h * k1)
            k3 = fld(y + 0.5 * h * k2)
            k4 = fld(y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(y)):
        raise FieldError("non-finite value encountered during integration")
    return y


def integrate(fld: VectorField, start: LiftedPoint, duration: float, step: float) -> FlowSegment:
    if start.dimension != fld.dimension:
        raise FieldError("start point dimension mismatch")
    end = integrate_many(fld, np.asarray(start.lift)[None, :], duration, step)[0]
    return FlowSegment(start, LiftedPoint(tuple(float(v) for v in end)), float(duration))


def trajectory(fld: VectorField, start: Sequence[float], duration: float, step: float) -> np.ndarray:
    """Lifted positions at every RK4 step, shape (nsteps + 1, d)."""
    nsteps = max(1, math.ceil(duration / step - 1e-12))
    h = duration / nsteps
    out = np.empty((nsteps + 1, fld.dimension))
    out[0] = start
    y = np.asarray(start, dtype=float)[None, :]
    for i in range(nsteps):
        y = integrate_many(fld, y, h, h)
        out[i + 1] = y[0]
    return out
