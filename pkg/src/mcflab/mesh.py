"""Structured grids and masked finite-difference calculus.

Four grid kinds are supported:

``line``
    1D Cartesian line (graphs of curves, e.g. the grim reaper).
``radial``
    1D radial coordinate with the axis ``r = 0`` as first node.
``cartesian2d``
    2D Cartesian grid, axes ``(x, y)``.
``axisym_rz``
    Meridian half-plane of a rotationally symmetric 3D field, axes
    ``(r, z)``; the axis ``r = 0`` is the first grid line.

On axis-carrying grids, scalar fields are extended evenly across ``r = 0``
(ghost value at ``-dr`` equals the value at ``+dr``), so the radial
derivative vanishes on the axis and the second radial difference becomes
``2 (u_1 - u_0) / dr**2``.

All difference operators are second-order central differences.  Nodes are
flagged interior / boundary / outside through an integer mask.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

OUTSIDE = 0
INTERIOR = 1
BOUNDARY = 2

MASK_NAMES = {OUTSIDE: "outside", INTERIOR: "interior", BOUNDARY: "boundary"}
MASK_CODES = {v: k for k, v in MASK_NAMES.items()}

GRID_KINDS = ("line", "radial", "cartesian2d", "axisym_rz")
AXIS_KINDS = ("radial", "axisym_rz")


class StencilError(ValueError):
    """A difference stencil touches a node flagged outside."""

    def __init__(self, node, message: str = "stencil touches an outside node"):
        self.node = tuple(int(i) for i in node)
        super().__init__(f"{message} at node {self.node}")


@dataclass(frozen=True)
class Grid:
    """Uniform structured grid.

    ``shape``, ``spacing`` and ``origin`` are per-axis tuples; node ``i`` on
    axis ``a`` sits at ``origin[a] + i * spacing[a]``.
    """

    kind: str
    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in GRID_KINDS:
            raise ValueError(f"unknown grid kind {self.kind!r}")
        ndim = 1 if self.kind in ("line", "radial") else 2
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        object.__setattr__(self, "spacing", tuple(float(h) for h in self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        if not (len(self.shape) == len(self.spacing) == len(self.origin) == ndim):
            raise ValueError(f"{self.kind} grids need {ndim} axes")
        if any(n < 1 for n in self.shape):
            raise ValueError("node counts must be positive")
        if any(not h > 0 for h in self.spacing):
            raise ValueError("grid spacings must be strictly positive")
        if self.kind in AXIS_KINDS and self.origin[0] != 0.0:
            raise ValueError("axis grids must start at r = 0")

    @classmethod
    def from_extents(cls, kind: str, lower: Sequence[float], upper: Sequence[float],
                     shape: Sequence[int]) -> "Grid":
        spacing = tuple((hi - lo) / (n - 1) for lo, hi, n in zip(lower, upper, shape))
        return cls(kind, tuple(shape), spacing, tuple(lower))

    @classmethod
    def with_spacing(cls, kind: str, lower: Sequence[float], upper: Sequence[float],
                     h: float) -> "Grid":
        """Grid with equal spacing ``h`` on every axis covering ``[lower, upper]``."""
        shape = tuple(int(np.ceil((hi - lo) / h - 1e-9)) + 1 for lo, hi in zip(lower, upper))
        return cls(kind, shape, (h,) * len(shape), tuple(lower))

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def has_axis(self) -> bool:
        return self.kind in AXIS_KINDS

    @property
    def h(self) -> float:
        """Coarsest spacing, the resolution scale used by tolerances."""
        return max(self.spacing)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing[axis] * np.arange(self.shape[axis])

    def coords(self) -> tuple[np.ndarray, ...]:
        """Per-node coordinate arrays with ``indexing='ij'``."""
        return tuple(np.meshgrid(*(self.axis_coords(a) for a in range(self.ndim)),
                                 indexing="ij"))

    def node_position(self, node: Sequence[int]) -> tuple[float, ...]:
        return tuple(self.origin[a] + self.spacing[a] * node[a] for a in range(self.ndim))

    def nearest_node(self, point: Sequence[float]) -> tuple[int, ...]:
        idx = []
        for a in range(self.ndim):
            i = int(round((point[a] - self.origin[a]) / self.spacing[a]))
            idx.append(min(max(i, 0), self.shape[a] - 1))
        return tuple(idx)

    def cell_measure(self) -> np.ndarray:
        """Volume element attached to every node.

        Cartesian kinds use the plain cell volume.  Axis kinds integrate over
        the revolution: ``2 pi r dr`` (radial) and ``2 pi r dr dz``
        (axisym), with the half cell ``pi (dr/2)**2`` on the axis.
        """
        if self.kind == "line":
            return np.full(self.shape, self.spacing[0])
        if self.kind == "cartesian2d":
            return np.full(self.shape, self.spacing[0] * self.spacing[1])
        r = self.coords()[0]
        dr = self.spacing[0]
        area = 2.0 * np.pi * r * dr
        area = np.where(r == 0.0, np.pi * (dr / 2.0) ** 2, area)
        if self.kind == "axisym_rz":
            area = area * self.spacing[1]
        return area

    def to_dict(self) -> dict:
        return {"kind": self.kind, "shape": list(self.shape),
                "spacing": list(self.spacing), "origin": list(self.origin)}


@dataclass(frozen=True)
class ScalarField:
    """Node values plus an interior/boundary/outside mask."""

    grid: Grid
    values: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {self.grid.shape}")
        mask = self.mask
        if mask is None:
            mask = np.full(self.grid.shape, INTERIOR, dtype=np.int8)
        mask = np.array(mask, dtype=np.int8)
        if mask.shape != self.grid.shape:
            raise ValueError("mask shape does not match grid")
        if not np.isin(mask, (OUTSIDE, INTERIOR, BOUNDARY)).all():
            raise ValueError("mask codes must be outside/interior/boundary")
        if not np.isfinite(values[mask != OUTSIDE]).all():
            raise ValueError("field values must be finite on interior and boundary nodes")
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values, self.mask)

    @property
    def interior(self) -> np.ndarray:
        return self.mask == INTERIOR

    @property
    def boundary(self) -> np.ndarray:
        return self.mask == BOUNDARY


# ---------------------------------------------------------------------------
# vectorised stencils


def _padded(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Pad by one node per side; even reflection across the axis."""
    pad = np.pad(values, 1, mode="edge")
    if grid.has_axis:
        if grid.ndim == 1:
            pad[0] = values[1] if values.shape[0] > 1 else values[0]
        else:
            pad[0, 1:-1] = values[1] if values.shape[0] > 1 else values[0]
            pad[0, 0] = pad[0, 1]
            pad[0, -1] = pad[0, -2]
    return pad


def _shift(pad: np.ndarray, offset: Sequence[int]) -> np.ndarray:
    sl = tuple(slice(1 + o, pad.shape[a] - 1 + o) for a, o in enumerate(offset))
    return pad[sl]


def stencil_ok(mask: np.ndarray, grid: Grid, strict: bool = False) -> np.ndarray:
    """Interior nodes whose full 3**d stencil avoids outside nodes.

    With ``strict`` the stencil must consist of interior nodes only, which
    keeps derivatives clear of Dirichlet data.  Nodes on the outer edge of
    the array (other than the reflected axis) never qualify.
    """
    inside = ((mask == INTERIOR) if strict else (mask != OUTSIDE)).astype(np.int8)
    pad = np.pad(inside, 1, mode="constant", constant_values=0)
    if grid.has_axis:
        if grid.ndim == 1:
            pad[0] = inside[1] if inside.shape[0] > 1 else 0
        else:
            pad[0, 1:-1] = inside[1] if inside.shape[0] > 1 else 0
    ok = mask == INTERIOR
    for offset in itertools.product((-1, 0, 1), repeat=grid.ndim):
        ok &= _shift(pad, offset).astype(bool)
    return ok


def gradient_field(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Central-difference gradient at every node, shape ``(ndim, *shape)``.

    Entries at nodes without a valid stencil are meaningless; combine with
    :func:`stencil_ok`.
    """
    pad = _padded(np.asarray(values, dtype=float), grid)
    out = np.empty((grid.ndim,) + grid.shape)
    for a in range(grid.ndim):
        e = [0] * grid.ndim
        e[a] = 1
        minus = [-x for x in e]
        out[a] = (_shift(pad, e) - _shift(pad, minus)) / (2.0 * grid.spacing[a])
    return out


def hessian_field(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Central second differences at every node, shape ``(ndim, ndim, *shape)``."""
    pad = _padded(np.asarray(values, dtype=float), grid)
    center = _shift(pad, (0,) * grid.ndim)
    out = np.empty((grid.ndim, grid.ndim) + grid.shape)
    for a in range(grid.ndim):
        e = [0] * grid.ndim
        e[a] = 1
        minus = [-x for x in e]
        out[a, a] = (_shift(pad, e) - 2.0 * center + _shift(pad, minus)) / grid.spacing[a] ** 2
    if grid.ndim == 2:
        mixed = (_shift(pad, (1, 1)) - _shift(pad, (1, -1))
                 - _shift(pad, (-1, 1)) + _shift(pad, (-1, -1)))
        mixed /= 4.0 * grid.spacing[0] * grid.spacing[1]
        out[0, 1] = mixed
        out[1, 0] = mixed
    return out


# ---------------------------------------------------------------------------
# pointwise operators


def _check_node(field: ScalarField, node: Sequence[int], full: bool) -> tuple[int, ...]:
    grid = field.grid
    node = tuple(int(i) for i in node)
    if len(node) != grid.ndim or any(not 0 <= i < n for i, n in zip(node, grid.shape)):
        raise IndexError(f"node {node} outside grid of shape {grid.shape}")
    if field.mask[node] != INTERIOR:
        raise StencilError(node, "node is not interior")
    offsets = itertools.product((-1, 0, 1), repeat=grid.ndim)
    for off in offsets:
        if not full and sum(abs(o) for o in off) != 1:
            continue
        nb = [i + o for i, o in zip(node, off)]
        if grid.has_axis and nb[0] == -1:
            nb[0] = 1
        if any(not 0 <= i < n for i, n in zip(nb, grid.shape)):
            raise StencilError(node, "stencil leaves the grid")
        if field.mask[tuple(nb)] == OUTSIDE:
            raise StencilError(node)
    return node


def _value(field: ScalarField, node: Sequence[int]) -> float:
    nb = list(node)
    if field.grid.has_axis and nb[0] == -1:
        nb[0] = 1
    return float(field.values[tuple(nb)])


def gradient(field: ScalarField, node: Sequence[int]) -> np.ndarray:
    """Central-difference gradient of ``field`` at an interior node."""
    node = _check_node(field, node, full=False)
    grid = field.grid
    out = np.empty(grid.ndim)
    for a in range(grid.ndim):
        up = list(node)
        dn = list(node)
        up[a] += 1
        dn[a] -= 1
        out[a] = (_value(field, up) - _value(field, dn)) / (2.0 * grid.spacing[a])
    return out


def hessian(field: ScalarField, node: Sequence[int]) -> np.ndarray:
    """Symmetric central-difference Hessian at an interior node."""
    node = _check_node(field, node, full=True)
    grid = field.grid
    c = _value(field, node)
    out = np.empty((grid.ndim, grid.ndim))
    for a in range(grid.ndim):
        up = list(node)
        dn = list(node)
        up[a] += 1
        dn[a] -= 1
        out[a, a] = (_value(field, up) - 2.0 * c + _value(field, dn)) / grid.spacing[a] ** 2
    if grid.ndim == 2:
        i, j = node
        mixed = (_value(field, (i + 1, j + 1)) - _value(field, (i + 1, j - 1))
                 - _value(field, (i - 1, j + 1)) + _value(field, (i - 1, j - 1)))
        mixed /= 4.0 * grid.spacing[0] * grid.spacing[1]
        out[0, 1] = out[1, 0] = mixed
    return out


# ---------------------------------------------------------------------------
# serialisation

CSV_HEADER = ("axis0", "axis1", "value", "mask")


def write_field_csv(field: ScalarField, path: str | Path) -> Path:
    """Write ``axis0,axis1,value,mask`` rows in row-major node order.

    1D fields write ``axis1 = 0``.  Floats are written with ``repr`` so a
    read/write round trip is exact.
    """
    path = Path(path)
    grid = field.grid
    coords = grid.coords()
    a0 = coords[0].ravel()
    a1 = coords[1].ravel() if grid.ndim == 2 else np.zeros_like(a0)
    vals = field.values.ravel()
    mask = field.mask.ravel()
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for x, y, v, m in zip(a0, a1, vals, mask):
            writer.writerow((repr(float(x)), repr(float(y)), repr(float(v)), MASK_NAMES[int(m)]))
    return path


def read_field_csv(path: str | Path, kind: str | None = None) -> ScalarField:
    """Read a field written by :func:`write_field_csv`.

    The grid kind is not stored in the file; it defaults to ``cartesian2d``
    for two-axis data and ``line`` otherwise.
    """
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected header {header!r}")
        rows = list(reader)
    a0 = np.array([float(r[0]) for r in rows])
    a1 = np.array([float(r[1]) for r in rows])
    vals = np.array([float(r[2]) for r in rows])
    mask = np.array([MASK_CODES[r[3]] for r in rows], dtype=np.int8)
    u0 = np.unique(a0)
    u1 = np.unique(a1)
    if kind is None:
        kind = "cartesian2d" if len(u1) > 1 else "line"
    if kind in ("line", "radial"):
        shape = (len(u0),)
        spacing = (_spacing(u0),)
        origin = (float(u0[0]),)
    else:
        shape = (len(u0), len(u1))
        spacing = (_spacing(u0), _spacing(u1))
        origin = (float(u0[0]), float(u1[0]))
    grid = Grid(kind, shape, spacing, origin)
    if vals.size != grid.size:
        raise ValueError("row count does not match a full structured grid")
    return ScalarField(grid, vals.reshape(shape), mask.reshape(shape))


def _spacing(coords: np.ndarray) -> float:
    if len(coords) < 2:
        return 1.0
    return float((coords[-1] - coords[0]) / (len(coords) - 1))


def node_list(mask: np.ndarray) -> list[tuple[int, ...]]:
    return [tuple(int(i) for i in idx) for idx in np.argwhere(mask)]


def iter_nodes(grid: Grid) -> Iterable[tuple[int, ...]]:
    return itertools.product(*(range(n) for n in grid.shape))
