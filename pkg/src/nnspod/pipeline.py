"""Offline pipeline shared by the CLI and the test-suite."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import ConfigError, PipelineConfig
from .rom import RomModel, build_rom, predict, rel_l2, spectrum_report
from .shift import TransformedSet, train_shift_model
from .snapshots import SnapshotSet, load_snapshots, split_train_test


def load_data(cfg: PipelineConfig) -> SnapshotSet:
    if cfg.generator == "file":
        return load_snapshots(cfg.snapshots)
    spec, gen = cfg.generator_spec()
    return gen(spec)


def split_data(cfg: PipelineConfig, data: SnapshotSet):
    """Train/test split that always trains on the reference snapshot and on
    the extremes of every parameter component, so test points are never
    extrapolated."""
    if not 0 <= cfg.ref_index < len(data):
        raise ConfigError(f"[shift] ref_index {cfg.ref_index} outside database of size {len(data)}")
    keep = [cfg.ref_index]
    for col in data.params.T:
        keep += [int(np.argmin(col)), int(np.argmax(col))]
    keep = list(dict.fromkeys(keep))
    return split_train_test(data, cfg.split_strategy, cfg.split_fraction, cfg.split_seed,
                            keep_in_train=keep)


@dataclass
class OfflineResult:
    model: RomModel
    data: SnapshotSet
    train_idx: np.ndarray
    test_idx: np.ndarray
    transformed: TransformedSet
    spectrum: np.ndarray  # rows (k, pod, nnspod)
    train_errors: np.ndarray
    timings: dict = field(default_factory=dict)

    @property
    def train(self) -> SnapshotSet:
        return self.data.subset(self.train_idx)

    @property
    def test(self) -> SnapshotSet:
        return self.data.subset(self.test_idx)


def split_errors(model: RomModel, data: SnapshotSet) -> tuple[np.ndarray, np.ndarray]:
    """Predictions and per-snapshot relative L2 errors."""
    pred = predict(model, data.params)
    return pred, np.array([rel_l2(u, up) for u, up in zip(data.fields, pred)])


def run_offline(cfg: PipelineConfig, data: SnapshotSet | None = None) -> OfflineResult:
    """Split, train both nets, transform, compress, fit the RBF map."""
    timings = {}
    t0 = time.perf_counter()
    data = load_data(cfg) if data is None else data
    train, _, train_idx, test_idx = split_data(cfg, data)
    ref_local = int(np.flatnonzero(train_idx == cfg.ref_index)[0])
    mask = cfg.axes_mask(data.grid.dim)
    timings["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    shift_model = train_shift_model(train, ref_local, mask, cfg.interpnet, cfg.shiftnet,
                                    cfg.seed, cfg.subsample or None, cfg.warm_start)
    timings["shift_training"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    provenance = {"config_hash": cfg.config_hash(), "seed": cfg.seed, "version": __version__}
    model, moved = build_rom(train, shift_model, cfg.mode, cfg.rank, cfg.energy, cfg.kernel,
                             cfg.epsilon, cfg.guard, provenance)
    timings["rom_build"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    _, errors = split_errors(model, train)
    timings["train_errors"] = time.perf_counter() - t0

    sc = shift_model.field_scaler
    spectrum = spectrum_report(sc.transform(train.fields).T, sc.transform(moved.snapshots.fields).T)
    return OfflineResult(model, data, train_idx, test_idx, moved, spectrum, errors, timings)
