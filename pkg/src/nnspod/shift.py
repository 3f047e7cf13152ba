"""Learned shift operator: InterpNet/ShiftNet training, transport of snapshots
to the reference frame and back, and regridding onto the physical grid.

Conventions
-----------
All networks work in scaled units: coordinates and parameters are min-max
scaled per axis, field values with one global min/max. For snapshot ``i`` the
shift ``T(x, mu_i)`` is defined so that ``u_i(x) ~= u_ref(x - T(x, mu_i))``;
for a pure translation by ``d`` the optimum is ``T = d``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import neuralnet as nn
from ._container import ModelFormatError, pack, unpack
from .snapshots import Grid, MinMaxScaler, SnapshotSet, fit_scaler, global_scaler

__all__ = [
    "NetPreset",
    "ShiftModel",
    "TransformedSet",
    "RegridWarning",
    "fit_shift_scalers",
    "interp_loss",
    "shift_loss",
    "train_interpnet",
    "train_shiftnet",
    "train_shift_model",
    "centroid_shifts",
    "regrid",
    "apply_shift_to_reference",
    "inverse_shift",
    "transform_to_reference_by_interpolation",
    "fixed_shift_baseline",
]

log = logging.getLogger(__name__)


class RegridWarning(UserWarning):
    """Shifted coordinates along a grid line were not monotone."""


@dataclass(frozen=True)
class NetPreset:
    """Architecture and stopping rule for one network."""

    layers: tuple[int, ...]
    activation: str
    lr: float
    threshold: float
    max_epochs: int = 20000

    def config(self, seed: int) -> nn.TrainConfig:
        return nn.TrainConfig(self.lr, self.threshold, self.max_epochs, seed)


@dataclass(frozen=True)
class TransformedSet:
    snapshots: SnapshotSet
    shifts: np.ndarray  # (N_s, n, dim), physical units


def fit_shift_scalers(train: SnapshotSet) -> tuple[MinMaxScaler, MinMaxScaler, MinMaxScaler]:
    """Coordinate (per axis), parameter (per component) and global field scalers."""
    return fit_scaler(train.grid.coords), fit_scaler(train.params), global_scaler(train.fields)


def _mask(shift_axes, dim: int) -> np.ndarray:
    if len(shift_axes) != dim:
        raise ValueError(f"shift_axes has {len(shift_axes)} entries for a {dim}D grid")
    mask = np.asarray(shift_axes, dtype=bool).copy()
    if not mask.any():
        raise ValueError("at least one axis must be shifted")
    return mask


# Losses ----------------------------------------------------------------------


def interp_loss(net: nn.MLP, xs: np.ndarray, us: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Mean squared error of the interpolation net against reference values."""
    y, cache = nn.forward(net, xs, return_cache=True)
    r = y - us.reshape(-1, 1)
    grads, _ = nn.backward(net, cache, 2.0 * r / r.size)
    return float(np.mean(r**2)), grads


def _shift_inputs(xs: np.ndarray, mus: np.ndarray, idx: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
    """Stack (coords, param) rows for every snapshot; returns inputs and node index."""
    n_snap = mus.shape[0]
    if idx is None:
        idx = np.broadcast_to(np.arange(xs.shape[0]), (n_snap, xs.shape[0]))
    rows = np.concatenate([xs[idx.ravel()], np.repeat(mus, idx.shape[1], axis=0)], axis=1)
    return rows, idx


def shift_loss(
    shift_net: nn.MLP,
    interp_net: nn.MLP,
    xs: np.ndarray,
    mus: np.ndarray,
    us: np.ndarray,
    mask: np.ndarray,
    idx: np.ndarray | None = None,
) -> tuple[float, list[np.ndarray]]:
    """Mismatch between each snapshot and the interpolation net evaluated at
    the shifted coordinates, averaged over nodes and snapshots.

    ``xs`` (n, dim) and ``mus`` (N, p) are scaled; ``us`` (N, n) scaled
    fields. ``idx`` (N, m) optionally selects the nodes used per snapshot.
    Shifted coordinates are clamped to the unit box, matching the edge fill
    used when regridding; clamped entries carry no gradient.
    """
    rows, idx = _shift_inputs(xs, mus, idx)
    target = np.take_along_axis(us, idx, axis=1).reshape(-1, 1)
    t, s_cache = nn.forward(shift_net, rows, return_cache=True)
    shifted = xs[idx.ravel()].copy()
    shifted[:, mask] -= t
    inside = (shifted >= 0.0) & (shifted <= 1.0)
    np.clip(shifted, 0.0, 1.0, out=shifted)
    y, i_cache = nn.forward(interp_net, shifted, return_cache=True)
    r = y - target
    _, dx = nn.backward(interp_net, i_cache, 2.0 * r / r.size)
    dt = -(dx * inside)[:, mask]
    grads, _ = nn.backward(shift_net, s_cache, dt)
    return float(np.mean(r**2)), grads


# Shift model -----------------------------------------------------------------


@dataclass(eq=False)
class ShiftModel:
    """Trained interpolation and shift networks plus everything needed to
    evaluate the learned shift on the physical grid."""

    interp_net: nn.MLP
    shift_net: nn.MLP
    shift_axes: np.ndarray
    ref_index: int
    ref_param: np.ndarray
    grid: Grid
    ref_field: np.ndarray
    coord_scaler: MinMaxScaler
    param_scaler: MinMaxScaler
    field_scaler: MinMaxScaler
    report: dict = field(default_factory=dict)

    def __post_init__(self):
        self.shift_axes = _mask(self.shift_axes, self.grid.dim)
        if self.shift_net.output_dim != int(self.shift_axes.sum()):
            raise ValueError("shift net output width must equal the number of shifted axes")

    def scaled_coords(self) -> np.ndarray:
        return self.coord_scaler.transform(self.grid.coords)

    def shifts(self, params) -> np.ndarray:
        """Physical shift at every grid node, shape ``(N, n, dim)``."""
        params = np.atleast_2d(np.asarray(params, dtype=float))
        if params.shape[1] != self.ref_param.size:
            params = params.reshape(-1, self.ref_param.size)
        xs = self.scaled_coords()
        mus = self.param_scaler.transform(params)
        rows, _ = _shift_inputs(xs, mus, None)
        t = nn.forward(self.shift_net, rows).reshape(len(params), self.grid.n, -1)
        out = np.zeros((len(params), self.grid.n, self.grid.dim))
        out[:, :, self.shift_axes] = t * self.coord_scaler.span[self.shift_axes]
        return out

    def interp_values(self, coords) -> np.ndarray:
        """Reference field predicted by the interpolation net at physical
        coordinates (clamped to the grid box), in physical field units."""
        xs = np.clip(self.coord_scaler.transform(np.atleast_2d(coords)), 0.0, 1.0)
        return self.field_scaler.inverse(nn.forward(self.interp_net, xs)[:, 0])

    # serialisation
    def state(self, prefix: str = "shift") -> tuple[dict, dict[str, np.ndarray]]:
        i_meta, arrays = nn.net_state(self.interp_net, f"{prefix}.interp")
        s_meta, s_arrays = nn.net_state(self.shift_net, f"{prefix}.shift")
        arrays.update(s_arrays)
        arrays.update({
            f"{prefix}.coords": self.grid.coords,
            f"{prefix}.bounds": self.grid.bounds,
            f"{prefix}.ref_param": self.ref_param,
            f"{prefix}.ref_field": self.ref_field,
        })
        for name in ("coord", "param", "field"):
            sc = getattr(self, f"{name}_scaler")
            arrays[f"{prefix}.{name}_min"] = sc.mins
            arrays[f"{prefix}.{name}_max"] = sc.maxs
        meta = {
            "interp": i_meta,
            "shift": s_meta,
            "shift_axes": [bool(a) for a in self.shift_axes],
            "ref_index": int(self.ref_index),
            "grid_shape": list(self.grid.shape),
            "report": self.report,
        }
        return meta, arrays

    @classmethod
    def from_state(cls, meta: dict, arrays: dict, prefix: str = "shift") -> "ShiftModel":
        grid = Grid(arrays[f"{prefix}.coords"], arrays[f"{prefix}.bounds"], tuple(meta["grid_shape"]))
        scalers = [
            MinMaxScaler(arrays[f"{prefix}.{n}_min"], arrays[f"{prefix}.{n}_max"])
            for n in ("coord", "param", "field")
        ]
        return cls(
            nn.net_from_state(meta["interp"], arrays, f"{prefix}.interp"),
            nn.net_from_state(meta["shift"], arrays, f"{prefix}.shift"),
            np.array(meta["shift_axes"]),
            meta["ref_index"],
            arrays[f"{prefix}.ref_param"],
            grid,
            arrays[f"{prefix}.ref_field"],
            *scalers,
            report=meta["report"],
        )

    def to_bytes(self) -> bytes:
        meta, arrays = self.state()
        return pack(b"NSFT", meta, arrays)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ShiftModel":
        meta, arrays = unpack(raw, b"NSFT")
        try:
            return cls.from_state(meta, arrays)
        except KeyError as exc:
            raise ModelFormatError(f"missing entry {exc}") from None


# Training --------------------------------------------------------------------


def _subsample(n: int, n_snap: int, cap: int | None, rng) -> np.ndarray | None:
    if cap is None or cap >= n:
        return None
    return np.stack([np.sort(rng.choice(n, cap, replace=False)) for _ in range(n_snap)])


def train_interpnet(
    train: SnapshotSet,
    ref_index: int,
    preset: NetPreset,
    seed: int = 0,
    scalers: tuple[MinMaxScaler, MinMaxScaler, MinMaxScaler] | None = None,
) -> nn.TrainResult:
    """Fit a net mapping scaled coordinates to the scaled reference field."""
    if not 0 <= ref_index < len(train):
        raise IndexError(f"ref_index {ref_index} outside training set of size {len(train)}")
    coord_sc, _, field_sc = scalers or fit_shift_scalers(train)
    xs = coord_sc.transform(train.grid.coords)
    us = field_sc.transform(train.fields[ref_index])
    net = nn.init_params([train.grid.dim, *preset.layers, 1], preset.activation, seed)
    return nn.fit(net, lambda m: interp_loss(m, xs, us), preset.config(seed), "InterpNet")


def centroid_shifts(data: SnapshotSet, ref_index: int, shift_axes) -> np.ndarray:
    """Per-snapshot translation estimate relative to the reference.

    Along each shifted axis, the centroid of the absolute field gradient
    (weighted by node position) is compared with that of the reference.
    Returns physical shifts of shape ``(N, n_shifted_axes)``.
    """
    grid = data.grid
    mask = _mask(shift_axes, grid.dim)
    fields = data.fields.reshape((len(data),) + grid.shape)
    cols = []
    for axis in np.flatnonzero(mask):
        nodes = grid.axis_nodes(axis)
        w = np.abs(np.gradient(fields, nodes, axis=axis + 1))
        pos = grid.coords[:, axis].reshape(grid.shape)
        total = w.reshape(len(data), -1).sum(axis=1)
        moment = (w * pos).reshape(len(data), -1).sum(axis=1)
        centre = np.where(total > 0, moment / np.where(total > 0, total, 1.0), pos.mean())
        cols.append(centre - centre[ref_index])
    return np.column_stack(cols)


def train_shiftnet(
    train: SnapshotSet,
    interp: nn.MLP,
    preset: NetPreset,
    shift_axes,
    ref_index: int,
    seed: int = 0,
    scalers: tuple[MinMaxScaler, MinMaxScaler, MinMaxScaler] | None = None,
    subsample: int | None = 4096,
    warm_start: str = "centroid",
) -> nn.TrainResult:
    """Fit one shift net jointly over all training snapshots.

    With ``warm_start="centroid"`` the net is first regressed onto the
    gradient-centroid translation estimates, then refined on the shift loss
    until it drops to the preset threshold. ``warm_start="none"`` starts the
    refinement from the random initialisation.
    """
    if not interp.trained:
        raise ValueError("interpolation net must be trained before the shift net")
    mask = _mask(shift_axes, train.grid.dim)
    coord_sc, param_sc, field_sc = scalers or fit_shift_scalers(train)
    xs = coord_sc.transform(train.grid.coords)
    mus = param_sc.transform(train.params)
    us = field_sc.transform(train.fields)
    rng = np.random.default_rng(seed)
    idx = _subsample(train.grid.n, len(train), subsample, rng)
    k = int(mask.sum())
    net = nn.init_params([train.grid.dim + mus.shape[1], *preset.layers, k], preset.activation, seed)

    pre_loss = None
    if warm_start == "centroid":
        target = centroid_shifts(train, ref_index, mask) / coord_sc.span[mask]
        pre_idx = _subsample(train.grid.n, len(train), 64, rng)
        rows, pidx = _shift_inputs(xs, mus, pre_idx)
        tgt = np.repeat(target, pidx.shape[1], axis=0)
        # a twentieth of a grid cell (scaled); refinement does the rest
        cell = min(1.0 / (s - 1) for s, m in zip(train.grid.shape, mask) if m)
        cfg = nn.TrainConfig(preset.lr, (0.05 * cell) ** 2, max(preset.max_epochs, 5000), seed)

        def pre(m):
            y, cache = nn.forward(m, rows, return_cache=True)
            r = y - tgt
            g, _ = nn.backward(m, cache, 2.0 * r / r.size)
            return float(np.mean(r**2)), g

        warm = nn.fit(net, pre, cfg, "ShiftNet warm start")
        net, pre_loss = warm.net, warm.loss
    elif warm_start != "none":
        raise ValueError(f"unknown warm_start {warm_start!r}")

    result = nn.fit(
        net,
        lambda m: shift_loss(m, interp, xs, mus, us, mask, idx),
        preset.config(seed),
        "ShiftNet",
    )
    log.info("ShiftNet: warm-start mse %s, final loss %.3g after %d epochs",
             pre_loss, result.loss, result.epochs)
    return result


def train_shift_model(
    train: SnapshotSet,
    ref_index: int,
    shift_axes,
    interp_preset: NetPreset,
    shift_preset: NetPreset,
    seed: int = 0,
    subsample: int | None = 4096,
    warm_start: str = "centroid",
) -> ShiftModel:
    """InterpNet then ShiftNet, bundled into a :class:`ShiftModel`."""
    scalers = fit_shift_scalers(train)
    ir = train_interpnet(train, ref_index, interp_preset, seed, scalers)
    sr = train_shiftnet(train, ir.net, shift_preset, shift_axes, ref_index, seed, scalers,
                        subsample, warm_start)
    report = {
        "interp_loss": ir.loss,
        "interp_epochs": ir.epochs,
        "interp_converged": ir.converged,
        "shift_loss": sr.loss,
        "shift_epochs": sr.epochs,
        "shift_converged": sr.converged,
    }
    return ShiftModel(ir.net, sr.net, shift_axes, ref_index, train.params[ref_index].copy(),
                      train.grid, train.fields[ref_index].copy(), *scalers, report=report)


# Regridding ------------------------------------------------------------------


def _regrid_line(nodes: np.ndarray, points: np.ndarray, values: np.ndarray) -> np.ndarray:
    if np.any(np.diff(points) < 0):
        warnings.warn("shifted coordinates are not monotone; sorting", RegridWarning, stacklevel=3)
        order = np.argsort(points, kind="stable")
        points, values = points[order], values[order]
    return np.interp(nodes, points, values)


def regrid(grid: Grid, points: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Resample a field known at displaced node positions back onto ``grid``.

    ``points`` (n, dim) are the displaced coordinates of each node and
    ``values`` (n,) the field carried by them. Displacement must be
    axis-aligned; each displaced axis is handled line by line with
    piecewise-linear interpolation, and queries beyond the displaced range
    take the nearest end value.
    """
    out = np.asarray(values, dtype=float).reshape(grid.shape)
    pts = np.asarray(points, dtype=float)
    for axis in range(grid.dim):
        moved = pts[:, axis].reshape(grid.shape)
        nodes = grid.axis_nodes(axis)
        base = grid.coords[:, axis].reshape(grid.shape)
        if np.array_equal(moved, base):
            continue
        moved_l = np.moveaxis(moved, axis, -1).reshape(-1, nodes.size)
        out_l = np.moveaxis(out, axis, -1)
        shape_l = out_l.shape
        out_l = out_l.reshape(-1, nodes.size)
        res = np.empty_like(out_l)
        for k in range(out_l.shape[0]):
            res[k] = _regrid_line(nodes, moved_l[k], out_l[k])
        out = np.moveaxis(res.reshape(shape_l), -1, axis)
    return out.reshape(-1)


def _transport(grid: Grid, fields: np.ndarray, shifts: np.ndarray, sign: float) -> np.ndarray:
    return np.stack([regrid(grid, grid.coords + sign * s, f) for f, s in zip(fields, shifts)])


def apply_shift_to_reference(model: ShiftModel, data: SnapshotSet) -> TransformedSet:
    """Move each snapshot's values to ``x - T(x, mu)`` and resample on the grid."""
    if not data.grid.same_as(model.grid):
        raise ValueError("snapshot grid does not match the shift model grid")
    shifts = model.shifts(data.params)
    fields = _transport(data.grid, data.fields, shifts, -1.0)
    return TransformedSet(data.with_fields(fields), shifts)


def inverse_shift(model: ShiftModel, field_ref, param) -> np.ndarray:
    """Carry a reference-frame field to the physical frame of ``param``."""
    field_ref = np.asarray(field_ref, dtype=float)
    if field_ref.shape != (model.grid.n,):
        raise ValueError(f"field length {field_ref.shape} != grid size {model.grid.n}")
    shift = model.shifts(np.asarray(param, dtype=float).reshape(1, -1))[0]
    return regrid(model.grid, model.grid.coords + shift, field_ref)


def transform_to_reference_by_interpolation(
    model: ShiftModel, data: SnapshotSet, source: str = "linear"
) -> TransformedSet:
    """Replace every snapshot by the reference field sampled at its shifted
    coordinates, then resample on the grid.

    ``source="linear"`` interpolates the stored reference snapshot along the
    shifted axes; ``source="interpnet"`` evaluates the interpolation net.
    Each result is the reference configuration up to edge fill, so the set is
    numerically close to rank one while the shifts are kept for the inverse.
    """
    if not data.grid.same_as(model.grid):
        raise ValueError("snapshot grid does not match the shift model grid")
    grid = model.grid
    shifts = model.shifts(data.params)
    out = []
    for s in shifts:
        pts = grid.coords - s
        if source == "interpnet":
            vals = model.interp_values(pts)
        elif source == "linear":
            vals = _sample_reference(grid, model.ref_field, pts)
        else:
            raise ValueError(f"unknown source {source!r}")
        out.append(regrid(grid, pts, vals))
    return TransformedSet(data.with_fields(np.stack(out)), shifts)


def _sample_reference(grid: Grid, ref: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Linear interpolation of ``ref`` at axis-aligned displaced nodes."""
    vals = ref.reshape(grid.shape)
    for axis in range(grid.dim):
        nodes = grid.axis_nodes(axis)
        q = np.moveaxis(pts[:, axis].reshape(grid.shape), axis, -1)
        v = np.moveaxis(vals, axis, -1)
        shape_l = v.shape
        q2, v2 = q.reshape(-1, nodes.size), v.reshape(-1, nodes.size)
        res = np.stack([np.interp(qq, nodes, vv) for qq, vv in zip(q2, v2)])
        vals = np.moveaxis(res.reshape(shape_l), -1, axis)
    return vals.reshape(-1)


def fixed_shift_baseline(data: SnapshotSet, velocity: Sequence[float] | float, ref_index: int = 0) -> TransformedSet:
    """Shift every snapshot by ``velocity * (t - t_ref)`` (first parameter is time)."""
    grid = data.grid
    b = np.broadcast_to(np.asarray(velocity, dtype=float), (grid.dim,))
    dt = data.params[:, 0] - data.params[ref_index, 0]
    shifts = np.broadcast_to((dt[:, None] * b)[:, None, :], (len(data), grid.n, grid.dim)).copy()
    fields = _transport(grid, data.fields, shifts, -1.0)
    return TransformedSet(data.with_fields(fields), shifts)
