"""POD-RBF reduced order model on the reference frame, with prediction back
in the physical frame through the learned shift."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as la

from ._container import ModelFormatError, pack, unpack
from .shift import (
    ShiftModel,
    TransformedSet,
    apply_shift_to_reference,
    inverse_shift,
    transform_to_reference_by_interpolation,
)
from .snapshots import SnapshotSet

__all__ = [
    "SingularSystemError",
    "PodBasis",
    "RbfMap",
    "RomModel",
    "ExtrapolationWarning",
    "pod",
    "energy_rank",
    "project",
    "fit_rbf",
    "build_rom",
    "predict",
    "rel_l2",
    "spectrum_report",
]


class SingularSystemError(np.linalg.LinAlgError):
    """The RBF interpolation system cannot be solved reliably."""


class ExtrapolationWarning(UserWarning):
    """Prediction requested outside the training parameter range."""


# POD -------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PodBasis:
    modes: np.ndarray  # (m, r), orthonormal columns
    singular_values: np.ndarray  # full spectrum, descending
    rank: int
    energy: float  # fraction of squared singular values kept

    def cumulative_energy(self) -> np.ndarray:
        s2 = self.singular_values**2
        total = s2.sum()
        return np.cumsum(s2) / total if total > 0 else np.ones_like(s2)


def energy_rank(singular_values, kappa: float) -> int:
    """Smallest ``r`` whose leading squared singular values reach ``kappa``."""
    if not 0.0 < kappa <= 1.0:
        raise ValueError(f"energy fraction must lie in (0, 1], got {kappa}")
    s2 = np.asarray(singular_values, dtype=float) ** 2
    total = s2.sum()
    if total == 0.0:
        return 1
    cum = np.cumsum(s2) / total
    # relative slack absorbs the round-off in cumsum for kappa close to 1
    r = int(np.argmax(cum >= kappa * (1.0 - 1e-12))) + 1
    return min(r, int(np.count_nonzero(s2)) or 1)


def _svd_gram(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Snapshot method: eigen-decompose the small Gram matrix ``X^T X``."""
    evals, V = la.eigh(X.T @ X)
    V = V[:, ::-1]
    B = X @ V
    s = np.linalg.norm(B, axis=0)
    order = np.argsort(-s, kind="stable")
    s, B = s[order], B[:, order]
    # re-orthonormalise so modes with tiny singular values stay orthogonal
    Q, R = np.linalg.qr(B)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs, s


def pod(
    X,
    rank: int | None = None,
    energy: float | None = None,
    method: str = "auto",
) -> PodBasis:
    """Thin SVD of a snapshot matrix with one column per snapshot.

    Exactly one of ``rank`` or ``energy`` picks the truncation; with neither,
    every mode is kept. ``method`` is ``"direct"``, ``"gram"`` or ``"auto"``
    (Gram matrix when there are at least ten times more rows than columns).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.size == 0:
        raise ValueError(f"need a non-empty 2D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("snapshot matrix contains NaN/Inf")
    if rank is not None and energy is not None:
        raise ValueError("give rank or energy, not both")
    m, n = X.shape
    if method == "auto":
        method = "gram" if m >= 10 * n else "direct"
    if method == "gram":
        U, s = _svd_gram(X)
    elif method == "direct":
        U, s, _ = la.svd(X, full_matrices=False)
    else:
        raise ValueError(f"unknown SVD method {method!r}")
    if rank is not None:
        if not 1 <= rank <= s.size:
            raise ValueError(f"rank must lie in [1, {s.size}], got {rank}")
        r = int(rank)
    elif energy is not None:
        r = energy_rank(s, energy)
    else:
        r = s.size
    total = float(np.sum(s**2))
    kept = float(np.sum(s[:r] ** 2) / total) if total > 0 else 1.0
    return PodBasis(np.ascontiguousarray(U[:, :r]), s, r, kept)


def project(basis: PodBasis, X) -> np.ndarray:
    """Modal coefficients ``U^T X``, shape ``(r, N)``."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] != basis.modes.shape[0]:
        raise ValueError(f"matrix has {X.shape[0]} rows, basis has {basis.modes.shape[0]}")
    return basis.modes.T @ X


# RBF -------------------------------------------------------------------------


def _kernel(name: str, eps: float):
    if name == "thin_plate":
        def phi(r):
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(r > 0.0, r * r * np.log(np.where(r > 0.0, r, 1.0)), 0.0)
    elif name == "gaussian":
        def phi(r):
            return np.exp(-((eps * r) ** 2))
    elif name == "multiquadric":
        def phi(r):
            return np.sqrt(1.0 + (eps * r) ** 2)
    else:
        raise ValueError(f"unknown RBF kernel {name!r}")
    return phi


@dataclass(frozen=True, eq=False)
class RbfMap:
    """Radial basis interpolant from parameter vectors to modal coefficients."""

    kernel: str
    epsilon: float
    centers: np.ndarray  # (N, p)
    weights: np.ndarray  # (N, r)
    poly: np.ndarray | None = None  # (p + 1, r) linear tail

    def __call__(self, mu) -> np.ndarray:
        mu = np.atleast_2d(np.asarray(mu, dtype=float))
        if mu.shape[1] != self.centers.shape[1]:
            mu = mu.reshape(-1, self.centers.shape[1])
        dist = np.linalg.norm(mu[:, None, :] - self.centers[None, :, :], axis=-1)
        out = _kernel(self.kernel, self.epsilon)(dist) @ self.weights
        if self.poly is not None:
            out += np.column_stack([np.ones(len(mu)), mu]) @ self.poly
        return out


def fit_rbf(
    params,
    C,
    kernel: str = "thin_plate",
    epsilon: float = 1.0,
    tail: bool | None = None,
) -> RbfMap:
    """Exact RBF interpolant with ``s(mu_i) = C[:, i]``.

    ``C`` has one column per center (``r x N``). The thin-plate kernel always
    carries a linear polynomial tail; for the others it is optional.
    """
    P = np.asarray(params, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    C = np.atleast_2d(np.asarray(C, dtype=float))
    N, p = P.shape
    if C.shape[1] != N:
        raise ValueError(f"coefficients have {C.shape[1]} columns for {N} centers")
    if N < 2:
        raise ValueError("need at least two centers")
    if len(np.unique(P, axis=0)) != N:
        raise SingularSystemError("singular RBF system: duplicate parameter values")
    tail = kernel == "thin_plate" if tail is None else tail
    if kernel == "thin_plate" and not tail:
        raise ValueError("thin-plate kernel requires the linear tail")
    phi = _kernel(kernel, epsilon)
    A = phi(np.linalg.norm(P[:, None, :] - P[None, :, :], axis=-1))
    rhs = C.T
    if tail:
        Q = np.column_stack([np.ones(N), P])
        q = Q.shape[1]
        A = np.block([[A, Q], [Q.T, np.zeros((q, q))]])
        rhs = np.vstack([rhs, np.zeros((q, rhs.shape[1]))])
    if np.linalg.cond(A) > 1e14:
        raise SingularSystemError("singular RBF system: kernel matrix is numerically singular")
    sol = la.solve(A, rhs)
    return RbfMap(kernel, float(epsilon), P, sol[:N], sol[N:] if tail else None)


# Reduced order model ---------------------------------------------------------


@dataclass(eq=False)
class RomModel:
    basis: PodBasis
    coefficients: np.ndarray  # (r, N_train)
    rbf: RbfMap
    shift_model: ShiftModel
    mode: str = "standard"  # or "interpolation"
    guard: float = 0.0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.coefficients.shape[0] != self.basis.rank:
            raise ValueError("coefficient rows must equal the POD rank")
        if self.basis.modes.shape[0] != self.shift_model.grid.n:
            raise ValueError("POD modes do not match the grid size")

    @property
    def grid(self):
        return self.shift_model.grid

    def save(self, path) -> Path:
        path = Path(path)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def load(cls, path) -> "RomModel":
        return cls.from_bytes(Path(path).read_bytes())

    def to_bytes(self) -> bytes:
        meta, arrays = self.shift_model.state("shift")
        meta = {
            "shift": meta,
            "rank": self.basis.rank,
            "energy": self.basis.energy,
            "kernel": self.rbf.kernel,
            "epsilon": self.rbf.epsilon,
            "tail": self.rbf.poly is not None,
            "mode": self.mode,
            "guard": self.guard,
            "provenance": self.provenance,
        }
        arrays.update({
            "pod.modes": self.basis.modes,
            "pod.singular_values": self.basis.singular_values,
            "rom.coefficients": self.coefficients,
            "rbf.centers": self.rbf.centers,
            "rbf.weights": self.rbf.weights,
        })
        if self.rbf.poly is not None:
            arrays["rbf.poly"] = self.rbf.poly
        return pack(b"NROM", meta, arrays)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "RomModel":
        meta, arrays = unpack(raw, b"NROM")
        try:
            shift_model = ShiftModel.from_state(meta["shift"], arrays, "shift")
            basis = PodBasis(arrays["pod.modes"], arrays["pod.singular_values"],
                             int(meta["rank"]), float(meta["energy"]))
            rbf = RbfMap(meta["kernel"], meta["epsilon"], arrays["rbf.centers"],
                         arrays["rbf.weights"], arrays.get("rbf.poly") if meta["tail"] else None)
            return cls(basis, arrays["rom.coefficients"], rbf, shift_model,
                       meta["mode"], meta["guard"], meta["provenance"])
        except (KeyError, ValueError) as exc:
            raise ModelFormatError(f"inconsistent model file ({exc})") from None


def transform(shift_model: ShiftModel, data: SnapshotSet, mode: str = "standard") -> TransformedSet:
    if mode == "standard":
        return apply_shift_to_reference(shift_model, data)
    if mode == "interpolation":
        return transform_to_reference_by_interpolation(shift_model, data)
    raise ValueError(f"unknown transform mode {mode!r}")


def build_rom(
    train: SnapshotSet,
    shift_model: ShiftModel,
    mode: str = "standard",
    rank: int | None = None,
    energy: float | None = 0.999,
    kernel: str = "thin_plate",
    epsilon: float = 1.0,
    guard: float = 0.0,
    provenance: dict | None = None,
) -> tuple[RomModel, TransformedSet]:
    """Transform the training set, compress it with POD and fit the RBF map.

    POD runs on field-scaled, reference-frame snapshots.
    """
    moved = transform(shift_model, train, mode)
    X = shift_model.field_scaler.transform(moved.snapshots.fields).T
    basis = pod(X, rank=rank, energy=None if rank is not None else energy)
    C = project(basis, X)
    rbf = fit_rbf(train.params, C, kernel, epsilon)
    return RomModel(basis, C, rbf, shift_model, mode, guard, dict(provenance or {})), moved


def predict(model: RomModel, mu) -> np.ndarray:
    """Physical-frame fields for one or more parameter vectors, shape ``(M, n)``.

    Parameters outside the training range widened by ``model.guard`` (as a
    fraction of the range) raise an :class:`ExtrapolationWarning`.
    """
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    p = model.rbf.centers.shape[1]
    if mu.shape[1] != p:
        mu = mu.reshape(-1, p)
    lo, hi = model.rbf.centers.min(axis=0), model.rbf.centers.max(axis=0)
    band = model.guard * (hi - lo)
    if np.any(mu < lo - band) or np.any(mu > hi + band):
        warnings.warn(f"parameters outside training range [{lo}, {hi}]", ExtrapolationWarning,
                      stacklevel=2)
    coeffs = model.rbf(mu)  # (M, r)
    ref_scaled = coeffs @ model.basis.modes.T
    ref = model.shift_model.field_scaler.inverse(ref_scaled)
    return np.stack([inverse_shift(model.shift_model, f, m) for f, m in zip(ref, mu)])


# Metrics ---------------------------------------------------------------------


def rel_l2(u, u_pred) -> float:
    """``||u - u_pred|| / ||u||``."""
    u = np.asarray(u, dtype=float).ravel()
    u_pred = np.asarray(u_pred, dtype=float).ravel()
    if u.shape != u_pred.shape:
        raise ValueError(f"length mismatch {u.shape} vs {u_pred.shape}")
    norm = np.linalg.norm(u)
    if norm == 0.0:
        raise ValueError("relative error undefined for a zero reference field")
    return float(np.linalg.norm(u - u_pred) / norm)


def spectrum_report(raw, transformed) -> np.ndarray:
    """Normalised singular values of both matrices as rows ``(k, pod, nnspod)``."""
    raw = np.asarray(raw, dtype=float)
    transformed = np.asarray(transformed, dtype=float)
    if raw.shape != transformed.shape:
        raise ValueError(f"shape mismatch {raw.shape} vs {transformed.shape}")
    s_raw = la.svd(raw, compute_uv=False)
    s_tr = la.svd(transformed, compute_uv=False)
    s_raw = s_raw / s_raw[0] if s_raw[0] > 0 else s_raw
    s_tr = s_tr / s_tr[0] if s_tr[0] > 0 else s_tr
    k = np.arange(1, s_raw.size + 1)
    return np.column_stack([k, s_raw, s_tr])
