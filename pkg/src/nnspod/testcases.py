"""Analytic snapshot databases: travelling Gaussian wave, convected
isentropic vortex density, and a moving smoothed step interface."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .snapshots import Grid, SnapshotSet

__all__ = [
    "GaussianWaveSpec",
    "VortexSpec",
    "StepInterfaceSpec",
    "gen_gaussian",
    "gen_vortex_density",
    "vortex_density",
    "vortex_center",
    "gen_step_interface",
    "GENERATORS",
]


def _default_wave_params():
    # every even index lands in the alternating training split; 3.25 is index 6
    return np.linspace(0.85, 8.45, 20)


@dataclass(frozen=True)
class GaussianWaveSpec:
    alpha: float = 1.0
    sigma: float = 0.25
    x_range: tuple[float, float] = (0.0, 10.25)
    n_nodes: int = 256
    params: np.ndarray = field(default_factory=_default_wave_params)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.n_nodes < 2:
            raise ValueError("n_nodes must be >= 2")
        if not self.x_range[0] < self.x_range[1]:
            raise ValueError("x_range must be increasing")


def gen_gaussian(spec: GaussianWaveSpec = GaussianWaveSpec()) -> SnapshotSet:
    """Rows ``alpha * exp(-(x - t)^2 / (2 sigma^2))`` for every ``t`` in ``spec.params``."""
    x = np.linspace(*spec.x_range, spec.n_nodes)
    t = np.asarray(spec.params, dtype=float).ravel()
    fields = spec.alpha * np.exp(-((x[None, :] - t[:, None]) ** 2) / (2.0 * spec.sigma**2))
    return SnapshotSet(Grid.line(x, spec.x_range), t[:, None], fields, "u")


def _default_vortex_times():
    return 0.625 * np.arange(1, 101)


@dataclass(frozen=True)
class VortexSpec:
    b: float = 0.5
    center0: tuple[float, float] = (5.0, 10.0)
    gamma: float = 1.4
    u_inf: float = 0.1
    v_inf: float = 0.0
    rho_inf: float = 1.0
    p_inf: float = 1.0
    domain: tuple[float, float, float, float] = (0.0, 40.0, 0.0, 20.0)
    cells: tuple[int, int] = (240, 120)
    times: np.ndarray = field(default_factory=_default_vortex_times)

    def __post_init__(self):
        if not self.gamma > 1:
            raise ValueError("gamma must exceed 1")
        if not self.b > 0:
            raise ValueError("vortex strength b must be positive")
        if min(self.cells) < 1:
            raise ValueError("cell counts must be positive")
        x0, x1, y0, y1 = self.domain
        if not (x0 < x1 and y0 < y1):
            raise ValueError("domain must be increasing on both axes")

    def grid(self) -> Grid:
        x0, x1, y0, y1 = self.domain
        nx, ny = self.cells
        dx, dy = (x1 - x0) / nx, (y1 - y0) / ny
        xc = x0 + dx * (np.arange(nx) + 0.5)
        yc = y0 + dy * (np.arange(ny) + 0.5)
        return Grid.tensor(xc, yc, [(x0, x1), (y0, y1)])


def vortex_center(spec: VortexSpec, t: float) -> tuple[float, float]:
    """Vortex centre after free-stream advection for time ``t``."""
    return spec.center0[0] + spec.u_inf * t, spec.center0[1] + spec.v_inf * t


def vortex_density(spec: VortexSpec, x, y, t: float) -> np.ndarray:
    xc, yc = vortex_center(spec, t)
    r2 = (np.asarray(x) - xc) ** 2 + (np.asarray(y) - yc) ** 2
    g = spec.gamma
    deficit = (g - 1.0) * spec.b**2 / (8.0 * g * np.pi**2) * np.exp(1.0 - r2)
    return spec.rho_inf * (1.0 - deficit) ** (1.0 / (g - 1.0))


def gen_vortex_density(spec: VortexSpec = VortexSpec()) -> SnapshotSet:
    """Exact convected-vortex density on cell centres, one row per time."""
    grid = spec.grid()
    t = np.asarray(spec.times, dtype=float).ravel()
    x, y = grid.coords[:, 0], grid.coords[:, 1]
    fields = np.stack([vortex_density(spec, x, y, ti) for ti in t])
    return SnapshotSet(grid, t[:, None], fields, "density")


def _default_step_times():
    return np.linspace(0.0, 1.0, 40)


@dataclass(frozen=True)
class StepInterfaceSpec:
    """Smoothed step ``0.5 (1 + tanh((h(t) - y) / sharpness))`` with
    ``h(t) = h0 + velocity * t`` on ``y`` in ``[0, 1]``.

    ``nx > 0`` extrudes the profile over ``x`` in ``[0, 1]`` to give a 2D grid
    whose interface moves along the second (y) axis.
    """

    h0: float = 0.2
    velocity: float = 0.6
    sharpness: float = 0.02
    n_nodes: int = 200
    nx: int = 0
    times: np.ndarray = field(default_factory=_default_step_times)

    def __post_init__(self):
        if not self.sharpness > 0:
            raise ValueError("sharpness must be positive")
        if self.n_nodes < 2 or self.nx < 0 or self.nx == 1:
            raise ValueError("need n_nodes >= 2 and nx == 0 or nx >= 2")
        h = self.interface(np.asarray(self.times, dtype=float))
        if np.any(h <= 0.0) or np.any(h >= 1.0):
            raise ValueError("interface position must stay inside (0, 1)")

    def interface(self, t):
        return self.h0 + self.velocity * np.asarray(t, dtype=float)


def gen_step_interface(spec: StepInterfaceSpec = StepInterfaceSpec()) -> SnapshotSet:
    y = np.linspace(0.0, 1.0, spec.n_nodes)
    if spec.nx:
        grid = Grid.tensor(np.linspace(0.0, 1.0, spec.nx), y, [(0.0, 1.0), (0.0, 1.0)])
        ycoord = grid.coords[:, 1]
    else:
        grid = Grid.line(y, (0.0, 1.0))
        ycoord = y
    t = np.asarray(spec.times, dtype=float).ravel()
    h = spec.interface(t)
    fields = 0.5 * (1.0 + np.tanh((h[:, None] - ycoord[None, :]) / spec.sharpness))
    return SnapshotSet(grid, t[:, None], fields, "alpha")


GENERATORS = {
    "gaussian": (GaussianWaveSpec, gen_gaussian),
    "vortex": (VortexSpec, gen_vortex_density),
    "step": (StepInterfaceSpec, gen_step_interface),
}
