"""Shift-augmented POD reduced order models driven by small neural networks.

Snapshots of a transport-dominated field are moved into the frame of a
reference snapshot by a learned shift, compressed with POD and regressed
over the parameter with radial basis functions.
"""

__version__ = "0.1.0"

from .neuralnet import MLP, DivergenceError, TrainConfig, fit, init_params
from .rom import (
    ExtrapolationWarning,
    PodBasis,
    RomModel,
    SingularSystemError,
    build_rom,
    fit_rbf,
    pod,
    predict,
    project,
    rel_l2,
    spectrum_report,
)
from .shift import (
    NetPreset,
    RegridWarning,
    ShiftModel,
    apply_shift_to_reference,
    fixed_shift_baseline,
    inverse_shift,
    train_shift_model,
    transform_to_reference_by_interpolation,
)
from .snapshots import Grid, MinMaxScaler, SnapshotSet, load_snapshots, save_snapshots, split_train_test

__all__ = [
    "__version__",
    "MLP", "DivergenceError", "TrainConfig", "fit", "init_params",
    "ExtrapolationWarning", "PodBasis", "RomModel", "SingularSystemError", "build_rom",
    "fit_rbf", "pod", "predict", "project", "rel_l2", "spectrum_report",
    "NetPreset", "RegridWarning", "ShiftModel", "apply_shift_to_reference",
    "fixed_shift_baseline", "inverse_shift", "train_shift_model",
    "transform_to_reference_by_interpolation",
    "Grid", "MinMaxScaler", "SnapshotSet", "load_snapshots", "save_snapshots", "split_train_test",
]
