"""Grids, parameterised snapshot sets, min-max scaling and snapshot file I/O."""

from __future__ import annotations

import csv
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "Grid",
    "SnapshotSet",
    "MinMaxScaler",
    "SnapshotFormatError",
    "fit_scaler",
    "global_scaler",
    "scale",
    "unscale",
    "load_snapshots",
    "save_snapshots",
    "split_train_test",
]


class SnapshotFormatError(ValueError):
    """Malformed snapshot file (bad header, ragged rows, non-finite values)."""


@dataclass(frozen=True, eq=False)
class Grid:
    """Node coordinates shared by every snapshot.

    ``coords`` has shape ``(n, dim)``. 2D grids are structured: ``coords`` is
    the row-major tensor product of per-axis node vectors, so a field of
    length ``n`` reshapes to ``shape = (nx, ny)`` with x varying slowest.
    """

    coords: np.ndarray
    bounds: np.ndarray
    shape: tuple[int, ...]

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        bounds = np.asarray(self.bounds, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        n, dim = coords.shape
        if dim not in (1, 2):
            raise ValueError(f"grid dim must be 1 or 2, got {dim}")
        if n < 2:
            raise ValueError("a grid needs at least 2 nodes")
        if bounds.shape != (dim, 2) or np.any(bounds[:, 0] > bounds[:, 1]):
            raise ValueError(f"bad bounds {bounds.tolist()} for dim {dim}")
        if len(self.shape) != dim or int(np.prod(self.shape)) != n:
            raise ValueError(f"shape {self.shape} inconsistent with {n} nodes in {dim}D")
        if not np.all(np.isfinite(coords)):
            raise ValueError("grid coordinates must be finite")
        tol = 1e-12 * max(1.0, float(np.abs(bounds).max()))
        if np.any(coords < bounds[:, 0] - tol) or np.any(coords > bounds[:, 1] + tol):
            raise ValueError("grid coordinates lie outside bounds")

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    def axis_nodes(self, axis: int) -> np.ndarray:
        """Node vector along one axis of the structured grid."""
        full = self.coords[:, axis].reshape(self.shape)
        index = [0] * self.dim
        index[axis] = slice(None)
        return full[tuple(index)]

    @classmethod
    def line(cls, nodes, bounds=None) -> "Grid":
        nodes = np.asarray(nodes, dtype=float).ravel()
        if bounds is None:
            bounds = (nodes.min(), nodes.max())
        return cls(nodes[:, None], np.asarray(bounds, dtype=float), (nodes.size,))

    @classmethod
    def tensor(cls, x_nodes, y_nodes, bounds=None) -> "Grid":
        x_nodes = np.asarray(x_nodes, dtype=float).ravel()
        y_nodes = np.asarray(y_nodes, dtype=float).ravel()
        xx, yy = np.meshgrid(x_nodes, y_nodes, indexing="ij")
        coords = np.column_stack([xx.ravel(), yy.ravel()])
        if bounds is None:
            bounds = [(x_nodes.min(), x_nodes.max()), (y_nodes.min(), y_nodes.max())]
        return cls(coords, np.asarray(bounds, dtype=float), (x_nodes.size, y_nodes.size))

    @classmethod
    def from_coords(cls, coords, bounds=None) -> "Grid":
        """Rebuild a grid from a coordinate table, inferring the structured shape."""
        coords = np.asarray(coords, dtype=float)
        if coords.ndim == 1 or coords.shape[1] == 1:
            return cls.line(coords.ravel(), bounds)
        xs = np.unique(coords[:, 0])
        ys = np.unique(coords[:, 1])
        grid = cls.tensor(xs, ys, bounds)
        if grid.coords.shape != coords.shape or not np.array_equal(grid.coords, coords):
            raise SnapshotFormatError("2D grid coordinates are not a row-major tensor product")
        return grid

    def same_as(self, other: "Grid") -> bool:
        return self.shape == other.shape and np.array_equal(self.coords, other.coords)


@dataclass(frozen=True, eq=False)
class SnapshotSet:
    """Fields sampled over a grid, one row per parameter vector."""

    grid: Grid
    params: np.ndarray  # (N_s, p)
    fields: np.ndarray  # (N_s, n)
    field_name: str = "u"

    def __post_init__(self):
        params = np.asarray(self.params, dtype=float)
        if params.ndim == 1:
            params = params[:, None]
        fields = np.asarray(self.fields, dtype=float)
        if fields.ndim == 1:
            fields = fields[None, :]
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "fields", fields)
        if params.shape[0] != fields.shape[0]:
            raise ValueError(f"{params.shape[0]} parameter rows vs {fields.shape[0]} field rows")
        if fields.shape[1] != self.grid.n:
            raise ValueError(f"field length {fields.shape[1]} != grid size {self.grid.n}")
        if params.shape[0] and len(np.unique(params, axis=0)) != params.shape[0]:
            raise ValueError("parameter vectors must be pairwise distinct")
        if not re.fullmatch(r"[A-Za-z][A-Za-z0-9_]*", self.field_name):
            raise ValueError(f"field name {self.field_name!r} must be an identifier")

    def __len__(self) -> int:
        return self.fields.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        """Snapshot matrix with one column per snapshot, shape ``(n, N_s)``."""
        return self.fields.T

    def subset(self, indices) -> "SnapshotSet":
        indices = np.asarray(indices, dtype=int)
        return SnapshotSet(self.grid, self.params[indices], self.fields[indices], self.field_name)

    def with_fields(self, fields) -> "SnapshotSet":
        return SnapshotSet(self.grid, self.params, fields, self.field_name)


# Scaling ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MinMaxScaler:
    """Componentwise affine map of ``[min, max]`` onto ``[0, 1]``.

    A scaler fitted with :func:`global_scaler` has a single component that is
    broadcast over vectors of any length.
    """

    mins: np.ndarray
    maxs: np.ndarray

    @property
    def degenerate_mask(self) -> np.ndarray:
        return self.maxs == self.mins

    @property
    def span(self) -> np.ndarray:
        return np.where(self.degenerate_mask, 1.0, self.maxs - self.mins)

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.mins.size != 1 and x.shape[-1] != self.mins.size:
            raise ValueError(f"length {x.shape[-1]} does not match scaler length {self.mins.size}")
        return x

    def transform(self, x) -> np.ndarray:
        x = self._check(x)
        return np.where(self.degenerate_mask, 0.0, (x - self.mins) / self.span)

    def inverse(self, y) -> np.ndarray:
        y = self._check(y)
        return np.where(self.degenerate_mask, self.mins, y * self.span + self.mins)


def fit_scaler(data) -> MinMaxScaler:
    """Per-component min/max over the snapshot (row) index.

    ``data`` is a :class:`SnapshotSet` or any 2D array with one sample per row.
    """
    rows = data.fields if isinstance(data, SnapshotSet) else np.asarray(data, dtype=float)
    if rows.ndim == 1:
        rows = rows[:, None]
    if rows.size == 0:
        raise ValueError("cannot fit a scaler on empty data")
    return MinMaxScaler(rows.min(axis=0), rows.max(axis=0))


def global_scaler(values) -> MinMaxScaler:
    """One min/max over every entry, broadcast to any field length."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot fit a scaler on empty data")
    return MinMaxScaler(np.array([values.min()]), np.array([values.max()]))


def scale(s: MinMaxScaler, x) -> np.ndarray:
    return s.transform(x)


def unscale(s: MinMaxScaler, y) -> np.ndarray:
    return s.inverse(y)


# Splitting -------------------------------------------------------------------


def split_train_test(
    data: SnapshotSet,
    strategy: str = "alternating",
    fraction: float = 0.5,
    seed: int = 0,
    keep_in_train: Sequence[int] = (),
) -> tuple[SnapshotSet, SnapshotSet, np.ndarray, np.ndarray]:
    """Partition snapshots into train and test sets.

    ``alternating`` spreads the training indices evenly through the set
    (fraction 0.5 gives the even indices); ``random`` draws a seeded
    permutation. Indices in ``keep_in_train`` are forced into the training
    set by swapping them with the nearest (by index) drawn training index.

    Returns ``(train, test, train_idx, test_idx)``.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    n = len(data)
    n_train = int(round(fraction * n))
    if n_train < 1 or n_train >= n:
        raise ValueError(f"fraction {fraction} leaves an empty split for {n} snapshots")
    if strategy == "alternating":
        train = np.unique(np.floor(np.arange(n_train) / fraction).astype(int))
    elif strategy == "random":
        train = np.sort(np.random.default_rng(seed).permutation(n)[:n_train])
    else:
        raise ValueError(f"unknown split strategy {strategy!r}")
    train = list(train)
    for k in keep_in_train:
        if not 0 <= k < n:
            raise ValueError(f"index {k} out of range")
        if k not in train:
            movable = [t for t in train if t not in keep_in_train]
            if not movable:
                raise ValueError("keep_in_train does not fit in the training split")
            dist = [abs(t - k) - 0.5 * (t > k) for t in movable]  # ties go to the later index
            train.remove(movable[int(np.argmin(dist))])
            train.append(k)
    train = np.sort(np.asarray(train, dtype=int))
    test = np.setdiff1d(np.arange(n), train)
    return data.subset(train), data.subset(test), train, test


# File I/O --------------------------------------------------------------------

_MAGIC = b"SROM"
_VERSION = 1
_HEADER = struct.Struct("<4sIIIIIII")  # magic, version, dim, n, p, N_s, shape0, shape1


def _fmt(v: float) -> str:
    return repr(float(v))


def save_snapshots(data: SnapshotSet, path, fmt: str | None = None) -> Path:
    """Write a snapshot set.

    ``fmt="csv"`` writes ``grid.csv`` and ``snapshots.csv`` into the directory
    ``path``; ``fmt="binary"`` writes a single little-endian container file.
    Without ``fmt`` the format follows the suffix (``.srom`` is binary).
    """
    path = Path(path)
    fmt = fmt or ("binary" if path.suffix else "csv")
    grid = data.grid
    if fmt == "binary":
        path.parent.mkdir(parents=True, exist_ok=True)
        name = data.field_name.encode()
        shape = tuple(grid.shape) + (1,) * (2 - grid.dim)
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, _VERSION, grid.dim, grid.n,
                                  data.params.shape[1], len(data), *shape))
            fh.write(struct.pack("<I", len(name)) + name)
            for arr in (grid.bounds, grid.coords, data.params, data.fields):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return path
    if fmt != "csv":
        raise ValueError(f"unknown snapshot format {fmt!r}")
    path.mkdir(parents=True, exist_ok=True)
    axes = [f"x{k}" for k in range(grid.dim)]
    with open(path / "grid.csv", "w", newline="") as fh:
        fh.write("# bounds: " + " ".join(_fmt(b) for b in grid.bounds.ravel()) + "\n")
        w = csv.writer(fh)
        w.writerow(axes)
        w.writerows([[_fmt(c) for c in row] for row in grid.coords])
    p = data.params.shape[1]
    with open(path / "snapshots.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"mu{k}" for k in range(p)] + [f"{data.field_name}_{j}" for j in range(grid.n)])
        for mu, row in zip(data.params, data.fields):
            w.writerow([_fmt(v) for v in mu] + [_fmt(v) for v in row])
    return path


def _read_table(path: Path) -> tuple[list[str], np.ndarray, list[str]]:
    comments, rows = [], []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                comments.append(line[1:].strip())
            elif line.strip():
                rows.append(line)
    if not rows:
        raise SnapshotFormatError(f"{path}: no header row")
    table = list(csv.reader(rows))
    header = [h.strip() for h in table[0]]
    body = table[1:]
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise SnapshotFormatError(
                f"{path}: row {lineno} has {len(row)} columns, header has {len(header)}"
            )
    try:
        values = np.array(body, dtype=float).reshape(len(body), len(header))
    except ValueError as exc:
        raise SnapshotFormatError(f"{path}: non-numeric entry ({exc})") from None
    if not np.all(np.isfinite(values)):
        r, c = np.argwhere(~np.isfinite(values))[0]
        raise SnapshotFormatError(f"{path}: non-finite value in column {header[c]!r}, row {r + 2}")
    return header, values, comments


def load_snapshots(path, fmt: str | None = None) -> SnapshotSet:
    """Read a snapshot set written by :func:`save_snapshots`."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"snapshot path does not exist: {path}")
    fmt = fmt or ("csv" if path.is_dir() else "binary")
    if fmt == "binary":
        return _load_binary(path)
    if fmt != "csv":
        raise ValueError(f"unknown snapshot format {fmt!r}")

    g_header, coords, comments = _read_table(path / "grid.csv")
    if not 1 <= len(g_header) <= 2 or g_header != [f"x{k}" for k in range(len(g_header))]:
        raise SnapshotFormatError(f"grid.csv header must be x0[,x1], got {g_header}")
    bounds = None
    for c in comments:
        if c.startswith("bounds:"):
            bounds = np.array(c.split(":", 1)[1].split(), dtype=float).reshape(-1, 2)
    grid = Grid.from_coords(coords, bounds)

    header, values, _ = _read_table(path / "snapshots.csv")
    mu_cols = [h for h in header if re.fullmatch(r"mu\d+", h)]
    p = len(mu_cols)
    for k in range(max(p, 1)):
        if k >= len(header) or header[k] != f"mu{k}":
            raise SnapshotFormatError(f"snapshots.csv: missing param column 'mu{k}'")
    field_cols = header[p:]
    if len(field_cols) != grid.n:
        raise SnapshotFormatError(
            f"snapshots.csv: {len(field_cols)} field columns but grid has {grid.n} nodes"
        )
    m = re.fullmatch(r"(.+)_0", field_cols[0])
    if m is None:
        raise SnapshotFormatError(f"snapshots.csv: bad field column {field_cols[0]!r}")
    name = m.group(1)
    for j, col in enumerate(field_cols):
        if col != f"{name}_{j}":
            raise SnapshotFormatError(f"snapshots.csv: missing field column '{name}_{j}'")
    return SnapshotSet(grid, values[:, :p], values[:, p:], name)


def _load_binary(path: Path) -> SnapshotSet:
    raw = path.read_bytes()
    if len(raw) < _HEADER.size + 4:
        raise SnapshotFormatError(f"{path}: truncated header")
    magic, version, dim, n, p, ns, s0, s1 = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise SnapshotFormatError(f"{path}: unsupported version {version}")
    off = _HEADER.size
    (name_len,) = struct.unpack_from("<I", raw, off)
    off += 4
    name = raw[off:off + name_len].decode()
    off += name_len
    sizes = [dim * 2, n * dim, ns * p, ns * n]
    if len(raw) != off + 8 * sum(sizes):
        raise SnapshotFormatError(f"{path}: payload size does not match header")
    blocks = []
    for size in sizes:
        blocks.append(np.frombuffer(raw, dtype="<f8", count=size, offset=off).astype(float))
        off += 8 * size
    bounds, coords, params, fields = blocks
    if not (np.all(np.isfinite(fields)) and np.all(np.isfinite(params))):
        raise SnapshotFormatError(f"{path}: non-finite values in payload")
    shape = (s0,) if dim == 1 else (s0, s1)
    grid = Grid(coords.reshape(n, dim), bounds.reshape(dim, 2), shape)
    return SnapshotSet(grid, params.reshape(ns, p), fields.reshape(ns, n), name)
