"""Uniform-grid fields over an inflated bounding box, with finite differences.

The sampled box is the user domain inflated by ``margin`` on every axis.
Derivatives and mollification consume margin; ``valid_margin`` tracks how much
of the inflated band still carries trustworthy samples.  Norms only ever read
grid points inside the user domain, which requires ``valid_margin >= 0``.

Matrix fields store the d(d+1)/2 independent entries of a symmetric matrix
(pair order (0,0), (0,1), ..., (1,1), ...), so symmetry is structural.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field as dc_field, replace
from itertools import combinations_with_replacement
from typing import Callable, Sequence

import numpy as np
from scipy.signal import fftconvolve

from .errors import MarginExhausted

_EPS = 1e-9

#: default finite-difference accuracy order (2 or 4)
DEFAULT_FD_ORDER = 4

# first-derivative stencils as antisymmetric pairs (shift, coefficient):
# out = sum_s c_s (f(x + s h) - f(x - s h)) / h, exact zero on constants
_STENCILS = {
    2: ((1, 0.5),),
    4: ((1, 2.0 / 3.0), (2, -1.0 / 12.0)),
}

# compact second-derivative stencils as symmetric pairs (shift, coefficient):
# out = sum_s c_s ((f(x + s h) - f(x)) + (f(x - s h) - f(x))) / h^2
_STENCILS2 = {
    2: ((1, 1.0),),
    4: ((1, 4.0 / 3.0), (2, -1.0 / 12.0)),
}


def stencil_reach(order: int) -> int:
    """Points of margin consumed by one first-derivative application."""
    if order not in _STENCILS:
        raise ValueError(f"unsupported stencil order {order}; use 2 or 4")
    return order // 2


@dataclass(frozen=True)
class GridSpec:
    """Geometry of the sampled box.

    ``box_lo``/``box_hi`` delimit the *sampled* (inflated) box; the user
    domain is ``[box_lo + margin, box_hi - margin]`` per axis.  Spacing is
    identical on all axes, which requires equal extents.
    """

    dim: int
    box_lo: tuple[float, ...]
    box_hi: tuple[float, ...]
    points_per_axis: int
    margin: float

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dimension must be >= 2")
        if self.points_per_axis < 9:
            raise ValueError("need at least 9 points per axis for 4th-order stencils")
        if self.margin < 0:
            raise ValueError("margin must be nonnegative")
        if len(self.box_lo) != self.dim or len(self.box_hi) != self.dim:
            raise ValueError("box bounds must have one entry per axis")
        extents = [hi - lo for lo, hi in zip(self.box_lo, self.box_hi)]
        if any(e <= 0 for e in extents):
            raise ValueError("box must have positive extent")
        if max(extents) - min(extents) > _EPS * max(extents):
            raise ValueError("spacing must be identical on all axes: equal extents required")
        if 2 * self.margin >= extents[0]:
            raise ValueError("margin swallows the whole box")

    @classmethod
    def for_domain(
        cls,
        domain_lo: Sequence[float],
        domain_hi: Sequence[float],
        points_per_axis: int,
        margin: float,
        snap_margin: bool = True,
    ) -> "GridSpec":
        """Build the spec for a user domain, inflating the box by ``margin``.

        With ``snap_margin`` the margin is rounded up to a whole number of
        grid cells, so the domain endpoints are themselves grid points.
        """
        extent = float(domain_hi[0]) - float(domain_lo[0])
        if snap_margin and margin > 0:
            cells = int(np.ceil(margin * (points_per_axis - 1) / (extent + 2 * margin) - _EPS))
            if points_per_axis - 1 - 2 * cells < 1:
                raise ValueError("margin swallows the whole box")
            margin = cells * extent / (points_per_axis - 1 - 2 * cells)
        lo = tuple(float(x) - margin for x in domain_lo)
        hi = tuple(float(x) + margin for x in domain_hi)
        return cls(len(lo), lo, hi, points_per_axis, margin)

    @property
    def h(self) -> float:
        return (self.box_hi[0] - self.box_lo[0]) / (self.points_per_axis - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.box_lo[axis] + self.h * np.arange(self.points_per_axis)

    def coords(self) -> list[np.ndarray]:
        """Meshgrid coordinate arrays (ij indexing), one per axis."""
        return list(np.meshgrid(*[self.axis_coords(a) for a in range(self.dim)], indexing="ij"))

    @property
    def domain_slices(self) -> tuple[slice, ...]:
        """Index slices covering the grid points inside the user domain."""
        skip = int(np.ceil(self.margin / self.h - _EPS))
        stop = self.points_per_axis - skip
        return (slice(skip, stop),) * self.dim


def sym_pairs(d: int) -> list[tuple[int, int]]:
    """Stored entry order of a symmetric matrix field (0-based, i <= j)."""
    return list(combinations_with_replacement(range(d), 2))


def sym_entry_index(d: int, i: int, j: int) -> int:
    if i > j:
        i, j = j, i
    # position of (i, j) in the lexicographic i<=j pair list
    return i * d - i * (i - 1) // 2 + (j - i)


@dataclass
class Field:
    """Common storage: components-first data array plus margin bookkeeping."""

    spec: GridSpec
    data: np.ndarray
    valid_margin: float

    RANK = -1

    def __post_init__(self):
        if self.valid_margin > self.spec.margin + _EPS:
            raise ValueError("valid_margin cannot exceed the grid margin")
        if self.valid_margin < -_EPS:
            raise MarginExhausted(0.0, self.valid_margin, "field construction")

    @property
    def ncomp(self) -> int:
        return 1 if self.data.ndim == self.spec.dim else self.data.shape[0]

    def comps(self) -> np.ndarray:
        """View of the data with an explicit leading component axis."""
        if self.data.ndim == self.spec.dim:
            return self.data[np.newaxis]
        return self.data

    def copy(self) -> "Field":
        return replace(self, data=self.data.copy())

    def _check_compatible(self, other: "Field"):
        if self.spec != other.spec:
            raise ValueError("fields live on different grids")
        if type(self) is not type(other):
            raise TypeError(f"cannot combine {type(self).__name__} with {type(other).__name__}")

    def __add__(self, other: "Field") -> "Field":
        self._check_compatible(other)
        return replace(self, data=self.data + other.data,
                       valid_margin=min(self.valid_margin, other.valid_margin))

    def __sub__(self, other: "Field") -> "Field":
        self._check_compatible(other)
        return replace(self, data=self.data - other.data,
                       valid_margin=min(self.valid_margin, other.valid_margin))

    def __neg__(self) -> "Field":
        return replace(self, data=-self.data)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return replace(self, data=self.data * float(other))
        if isinstance(other, ScalarField):
            if self.spec != other.spec:
                raise ValueError("fields live on different grids")
            return replace(self, data=self.comps() * other.data if self.data.ndim != self.spec.dim
                           else self.data * other.data,
                           valid_margin=min(self.valid_margin, other.valid_margin))
        return NotImplemented

    __rmul__ = __mul__


class ScalarField(Field):
    RANK = 0

    @classmethod
    def sample(cls, spec: GridSpec, fn: Callable[..., np.ndarray]) -> "ScalarField":
        out = np.asarray(fn(*spec.coords()), dtype=np.float64)
        return cls(spec, np.broadcast_to(out, spec.shape).astype(np.float64), spec.margin)

    @classmethod
    def zeros(cls, spec: GridSpec) -> "ScalarField":
        return cls(spec, np.zeros(spec.shape), spec.margin)

    @classmethod
    def full(cls, spec: GridSpec, value: float) -> "ScalarField":
        return cls(spec, np.full(spec.shape, float(value)), spec.margin)


class VectorField(Field):
    RANK = 1

    @classmethod
    def sample(cls, spec: GridSpec, fns: Sequence[Callable[..., np.ndarray]]) -> "VectorField":
        coords = spec.coords()
        comps = [np.broadcast_to(np.asarray(fn(*coords), dtype=np.float64), spec.shape)
                 for fn in fns]
        return cls(spec, np.stack(comps).astype(np.float64), spec.margin)

    @classmethod
    def zeros(cls, spec: GridSpec, k: int) -> "VectorField":
        return cls(spec, np.zeros((k,) + spec.shape), spec.margin)

    def component(self, n: int) -> ScalarField:
        return ScalarField(self.spec, self.data[n], self.valid_margin)

    def set_component(self, n: int, f: ScalarField):
        """In-place update of one component; margin drops to the min."""
        self.data[n] = f.data
        self.valid_margin = min(self.valid_margin, f.valid_margin)


class SymmField(Field):
    RANK = 2

    @classmethod
    def zeros(cls, spec: GridSpec) -> "SymmField":
        npairs = spec.dim * (spec.dim + 1) // 2
        return cls(spec, np.zeros((npairs,) + spec.shape), spec.margin)

    @classmethod
    def from_constant(cls, spec: GridSpec, matrix: np.ndarray) -> "SymmField":
        matrix = np.asarray(matrix, dtype=np.float64)
        comps = [np.full(spec.shape, matrix[i, j]) for i, j in sym_pairs(spec.dim)]
        return cls(spec, np.stack(comps), spec.margin)

    @classmethod
    def sample(cls, spec: GridSpec, fn: Callable[..., np.ndarray]) -> "SymmField":
        """Sample a callable returning a (d, d, *grid) symmetric array."""
        full = np.asarray(fn(*spec.coords()), dtype=np.float64)
        comps = [np.broadcast_to(full[i, j], spec.shape) for i, j in sym_pairs(spec.dim)]
        return cls(spec, np.stack(comps).astype(np.float64), spec.margin)

    def entry(self, i: int, j: int) -> ScalarField:
        return ScalarField(self.spec, self.data[sym_entry_index(self.spec.dim, i, j)],
                           self.valid_margin)

    def as_matrices(self) -> np.ndarray:
        """Dense (d, d, *grid) array; used by tests and small-grid diagnostics."""
        d = self.spec.dim
        out = np.empty((d, d) + self.spec.shape)
        for idx, (i, j) in enumerate(sym_pairs(d)):
            out[i, j] = self.data[idx]
            out[j, i] = self.data[idx]
        return out


def _consume(f: Field, amount: float, what: str) -> float:
    remaining = f.valid_margin - amount
    if remaining < -_EPS:
        raise MarginExhausted(amount, f.valid_margin, what)
    return max(remaining, 0.0)


def _diff_array(arr: np.ndarray, axis: int, h: float, order: int) -> np.ndarray:
    """First derivative along one grid axis; outer band left zero (invalid)."""
    reach = stencil_reach(order)
    out = np.zeros_like(arr)
    n = arr.shape[axis]
    core = tuple(slice(None) if a != axis else slice(reach, n - reach)
                 for a in range(arr.ndim))
    acc = np.zeros(out[core].shape)
    for shift, coef in _STENCILS[order]:
        plus = tuple(slice(None) if a != axis else slice(reach + shift, n - reach + shift)
                     for a in range(arr.ndim))
        minus = tuple(slice(None) if a != axis else slice(reach - shift, n - reach - shift)
                      for a in range(arr.ndim))
        acc += coef * (arr[plus] - arr[minus])
    out[core] = acc / h
    return out


def diff(f: Field, axis: int, order: int = DEFAULT_FD_ORDER) -> Field:
    """Centered first derivative along ``axis``; consumes one stencil reach."""
    cost = stencil_reach(order) * f.spec.h
    vm = _consume(f, cost, f"d/dx{axis}")
    ax = axis if f.data.ndim == f.spec.dim else axis + 1
    return replace(f, data=_diff_array(f.data, ax, f.spec.h, order), valid_margin=vm)


def _diff2_array(arr: np.ndarray, axis: int, h: float, order: int) -> np.ndarray:
    reach = stencil_reach(order)
    out = np.zeros_like(arr)
    n = arr.shape[axis]
    core = tuple(slice(None) if a != axis else slice(reach, n - reach)
                 for a in range(arr.ndim))
    center = arr[core]
    acc = np.zeros(center.shape)
    for shift, coef in _STENCILS2[order]:
        plus = tuple(slice(None) if a != axis else slice(reach + shift, n - reach + shift)
                     for a in range(arr.ndim))
        minus = tuple(slice(None) if a != axis else slice(reach - shift, n - reach - shift)
                      for a in range(arr.ndim))
        acc += coef * ((arr[plus] - center) + (arr[minus] - center))
    out[core] = acc / h ** 2
    return out


def diff2(f: Field, axis: int, order: int = DEFAULT_FD_ORDER) -> Field:
    """Compact centered second derivative along ``axis``."""
    cost = stencil_reach(order) * f.spec.h
    vm = _consume(f, cost, f"d2/dx{axis}2")
    ax = axis if f.data.ndim == f.spec.dim else axis + 1
    return replace(f, data=_diff2_array(f.data, ax, f.spec.h, order), valid_margin=vm)


def derive(f: Field, axes: Sequence[int], order: int = DEFAULT_FD_ORDER) -> Field:
    """Repeated first derivatives, one per entry of ``axes`` (total order <= 4)."""
    if len(axes) > 4:
        raise ValueError("derivative order capped at 4")
    out = f
    for axis in sorted(axes):
        out = diff(out, axis, order)
    return out


def gradient(f: ScalarField, order: int = DEFAULT_FD_ORDER) -> VectorField:
    comps = [diff(f, a, order) for a in range(f.spec.dim)]
    return VectorField(f.spec, np.stack([c.data for c in comps]), comps[0].valid_margin)


def hessian(f: ScalarField, order: int = DEFAULT_FD_ORDER) -> SymmField:
    """Second-derivative matrix: compact stencils on the diagonal, composed
    first differences for mixed partials."""
    comps = [diff2(f, i, order) if i == j else derive(f, (i, j), order)
             for i, j in sym_pairs(f.spec.dim)]
    vm = min(c.valid_margin for c in comps)
    return SymmField(f.spec, np.stack([c.data for c in comps]), vm)


def sym_grad(w: VectorField, order: int = DEFAULT_FD_ORDER) -> SymmField:
    """Symmetric part of the Jacobian of a d-component vector field."""
    d = w.spec.dim
    if w.ncomp != d:
        raise ValueError("sym_grad needs a d-component field")
    parts = {}
    vm = w.valid_margin
    for i, j in sym_pairs(d):
        di_wj = diff(w.component(j), i, order)
        dj_wi = diff(w.component(i), j, order)
        parts[(i, j)] = 0.5 * (di_wj.data + dj_wi.data)
        vm = min(vm, di_wj.valid_margin)
    data = np.stack([parts[p] for p in sym_pairs(d)])
    return SymmField(w.spec, data, vm)


def sym_outer(u: VectorField, v: VectorField) -> SymmField:
    """Pointwise sym(u (x) v); no derivatives, no margin cost."""
    d = u.spec.dim
    if u.ncomp != d or v.ncomp != d:
        raise ValueError("sym_outer needs d-component fields")
    data = np.stack([0.5 * (u.data[i] * v.data[j] + u.data[j] * v.data[i])
                     for i, j in sym_pairs(d)])
    return SymmField(u.spec, data, min(u.valid_margin, v.valid_margin))


def metric_product(v: VectorField, order: int = DEFAULT_FD_ORDER) -> SymmField:
    """(grad v)^T (grad v) for a field with any number of components."""
    d = v.spec.dim
    acc = None
    vm = v.valid_margin
    for n in range(v.ncomp):
        g = gradient(v.component(n), order)
        vm = min(vm, g.valid_margin)
        term = np.stack([g.data[i] * g.data[j] for i, j in sym_pairs(d)])
        acc = term if acc is None else acc + term
    return SymmField(v.spec, acc, vm)


def sup_norm(f: Field) -> float:
    """Max absolute entry over grid points inside the user domain."""
    if f.valid_margin < -_EPS:
        raise MarginExhausted(0.0, f.valid_margin, "sup_norm")
    sl = (slice(None),) + f.spec.domain_slices if f.data.ndim != f.spec.dim \
        else f.spec.domain_slices
    return float(np.max(np.abs(f.data[sl])))


def cm_norm(f: Field, m: int, order: int = DEFAULT_FD_ORDER) -> float:
    """Max over derivative orders 0..m of the sup norms of all partials."""
    if m > 4:
        raise ValueError("cm_norm capped at m = 4")
    best = sup_norm(f)
    for total in range(1, m + 1):
        for axes in combinations_with_replacement(range(f.spec.dim), total):
            best = max(best, sup_norm(derive(f, axes, order)))
    return best


def holder_seminorm(f: Field, alpha: float, sample_budget: int = 2_000_000,
                    seed: int = 0) -> float:
    """Lower estimate of sup |f(x)-f(y)| / |x-y|^alpha over the user domain.

    Scans axis-aligned pairs at dyadic separations (plus the maximal
    separation); if the pair count for a lag exceeds the budget, base points
    are subsampled with the given seed.  Deterministic for fixed inputs.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    region = f.comps()[(slice(None),) + f.spec.domain_slices]
    h = f.spec.h
    n = region.shape[1]
    lags = []
    lag = 1
    while lag < n:
        lags.append(lag)
        lag *= 2
    if n - 1 not in lags and n > 1:
        lags.append(n - 1)
    rng = np.random.default_rng(seed)
    best = 0.0
    for axis in range(f.spec.dim):
        arr = np.moveaxis(region, axis + 1, 1)
        for lag in lags:
            a = arr[:, lag:]
            b = arr[:, :-lag]
            diffs = np.abs(a - b)
            if diffs.size > sample_budget:
                flat = diffs.reshape(-1)
                idx = rng.choice(flat.size, size=sample_budget, replace=False)
                dmax = float(flat[idx].max())
            else:
                dmax = float(diffs.max()) if diffs.size else 0.0
            best = max(best, dmax / (lag * h) ** alpha)
    return best


@dataclass(frozen=True)
class Mollifier:
    """Polynomial bump kernel (1 - |x/l|^2)^3 on |x| < l, discretely normalized."""

    spec: GridSpec
    radius: float
    weights: np.ndarray = dc_field(compare=False, default=None)

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("mollifier radius must be positive")
        if self.radius > self.spec.margin + _EPS:
            raise MarginExhausted(self.radius, self.spec.margin, "mollifier construction")
        h, d = self.spec.h, self.spec.dim
        reach = max(int(np.ceil(self.radius / h - _EPS)) - 1, 0)
        offs = np.arange(-reach, reach + 1)
        grids = np.meshgrid(*([offs] * d), indexing="ij")
        r2 = sum((g * h) ** 2 for g in grids) / self.radius ** 2
        w = np.where(r2 < 1.0, (1.0 - np.minimum(r2, 1.0)) ** 3, 0.0)
        w /= w.sum()
        object.__setattr__(self, "weights", w)

    @property
    def kernel(self) -> np.ndarray:
        """Kernel samples; their sum times h^d equals 1 exactly."""
        return self.weights / self.spec.h ** self.spec.dim

    def apply(self, f: Field) -> Field:
        vm = _consume(f, self.radius, f"mollification l={self.radius:.4g}")
        comps = f.comps()
        out = np.stack([fftconvolve(comps[i], self.weights, mode="same")
                        for i in range(comps.shape[0])])
        if f.data.ndim == f.spec.dim:
            out = out[0]
        return replace(f, data=out, valid_margin=vm)


def mollify(f: Field, l: float) -> Field:
    return Mollifier(f.spec, l).apply(f)


def commutator_defect(f: ScalarField, g: ScalarField, l: float, m: int,
                      order: int = DEFAULT_FD_ORDER) -> float:
    """Measured sup norm of grad^(m)[(fg)*phi_l - (f*phi_l)(g*phi_l)], m in {0, 1}."""
    if m not in (0, 1):
        raise ValueError("commutator defect measured for m in {0, 1} only")
    lhs = mollify(f * g, l) - mollify(f, l) * mollify(g, l)
    if m == 0:
        return sup_norm(lhs)
    return max(sup_norm(diff(lhs, a, order)) for a in range(f.spec.dim))


_MAGIC = b"MAFIELD1"


def save_field(f: Field, path: str):
    """Binary dump: header (magic, d, rank, k, points, box, margins) + f64 samples."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<4q", f.spec.dim, f.RANK, f.ncomp, f.spec.points_per_axis))
        fh.write(struct.pack(f"<{f.spec.dim}d", *f.spec.box_lo))
        fh.write(struct.pack(f"<{f.spec.dim}d", *f.spec.box_hi))
        fh.write(struct.pack("<2d", f.spec.margin, f.valid_margin))
        fh.write(np.ascontiguousarray(f.comps(), dtype="<f8").tobytes())


def load_field(path: str) -> Field:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError(f"not a MAFIELD1 file: magic {magic!r}")
        d, rank, k, points = struct.unpack("<4q", fh.read(32))
        box_lo = struct.unpack(f"<{d}d", fh.read(8 * d))
        box_hi = struct.unpack(f"<{d}d", fh.read(8 * d))
        margin, valid_margin = struct.unpack("<2d", fh.read(16))
        spec = GridSpec(d, box_lo, box_hi, points, margin)
        raw = np.frombuffer(fh.read(), dtype="<f8").reshape((k,) + spec.shape).copy()
    if rank == 0:
        return ScalarField(spec, raw[0], valid_margin)
    if rank == 1:
        return VectorField(spec, raw, valid_margin)
    if rank == 2:
        return SymmField(spec, raw, valid_margin)
    raise ValueError(f"unknown field rank {rank}")


def field_to_csv(f: Field, path: str, component: int = 0):
    """CSV export of one component for d = 2 fields: columns x, y, value."""
    if f.spec.dim != 2:
        raise ValueError("CSV export is defined for d = 2 slices")
    xs = f.spec.axis_coords(0)
    ys = f.spec.axis_coords(1)
    comp = f.comps()[component]
    with open(path, "w") as fh:
        fh.write("x,y,value\n")
        for i, x in enumerate(xs):
            for j, y in enumerate(ys):
                fh.write(f"{float(x)!r},{float(y)!r},{float(comp[i, j])!r}\n")
