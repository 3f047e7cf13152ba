"""Pipeline configuration: INI files with sections, presets, overrides."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .shift import NetPreset
from .testcases import GENERATORS

__all__ = ["ConfigError", "PipelineConfig", "PRESETS", "load_config"]


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


# Presets mirror the hyperparameter tables of the three test cases. Epoch
# caps are our own addition; the tables only give loss thresholds.
PRESETS: dict[str, dict[str, dict[str, str]]] = {
    "wave1d": {
        "case": {"generator": "gaussian"},
        "split": {"strategy": "alternating", "fraction": "0.5", "seed": "0"},
        "shift": {"ref_index": "6", "shift_axes": "x", "mode": "standard"},
        "interpnet": {"layers": "10,10", "activation": "softplus", "lr": "0.03",
                      "threshold": "1e-6", "max_epochs": "40000"},
        "shiftnet": {"layers": "10,4", "activation": "leakyrelu", "lr": "0.0023",
                     "threshold": "1e-2", "max_epochs": "5000"},
        "rom": {"energy": "0.999"},
    },
    "vortex2d": {
        "case": {"generator": "vortex"},
        "split": {"strategy": "random", "fraction": "0.8", "seed": "42"},
        "shift": {"ref_index": "0", "shift_axes": "x", "mode": "standard", "subsample": "1024"},
        "interpnet": {"layers": "40,40", "activation": "sigmoid", "lr": "0.0023",
                      "threshold": "1.5e-6", "max_epochs": "3000"},
        "shiftnet": {"layers": "10,4", "activation": "leakyrelu", "lr": "0.03",
                     "threshold": "0.0024", "max_epochs": "200"},
        "rom": {"energy": "0.999"},
    },
    "twophase": {
        "case": {"generator": "step", "nx": "16", "n_nodes": "100"},
        "split": {"strategy": "random", "fraction": "0.8", "seed": "42"},
        "shift": {"ref_index": "39", "shift_axes": "y", "mode": "interpolation"},
        "interpnet": {"layers": "30,30", "activation": "leakyrelu", "lr": "0.0023",
                      "threshold": "5e-7", "max_epochs": "5000"},
        "shiftnet": {"layers": "10,4", "activation": "leakyrelu", "lr": "0.03",
                     "threshold": "0.0005", "max_epochs": "2000"},
        "rom": {"rank": "1"},
    },
}

_AXES = {"x": 0, "y": 1}


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(" ", "").split(",") if v)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(" ", "").split(",") if v)


def _array(text: str) -> np.ndarray:
    """Comma list, or ``start:stop:count`` for evenly spaced values."""
    if ":" in text:
        a, b, n = text.split(":")
        return np.linspace(float(a), float(b), int(n))
    return np.array(_floats(text))


@dataclass(frozen=True)
class PipelineConfig:
    generator: str = "gaussian"
    snapshots: str = ""  # path to ingest when generator == "file"
    gen_options: tuple[tuple[str, str], ...] = ()
    split_strategy: str = "alternating"
    split_fraction: float = 0.5
    split_seed: int = 0
    ref_index: int = 0
    shift_axes: str = "x"
    mode: str = "standard"
    subsample: int = 4096
    warm_start: str = "centroid"
    interpnet: NetPreset = NetPreset((10, 10), "softplus", 0.03, 1e-6, 40000)
    shiftnet: NetPreset = NetPreset((10, 4), "leakyrelu", 0.0023, 1e-2, 5000)
    rank: int | None = None
    energy: float | None = 0.999
    kernel: str = "thin_plate"
    epsilon: float = 1.0
    guard: float = 0.0
    seed: int = 0
    output: str = ""

    # helpers ---------------------------------------------------------------
    def axes_mask(self, dim: int) -> list[bool]:
        mask = [False] * dim
        for name in self.shift_axes.replace(" ", "").split(","):
            if name not in _AXES or _AXES[name] >= dim:
                raise ConfigError(f"shift axis {name!r} not available on a {dim}D grid")
            mask[_AXES[name]] = True
        return mask

    def generator_spec(self):
        spec_cls, gen = GENERATORS[self.generator]
        fields = {f.name: f for f in dataclasses.fields(spec_cls)}
        kwargs = {}
        for key, text in self.gen_options:
            f = fields[key]
            default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
            try:
                if isinstance(default, np.ndarray):
                    kwargs[key] = _array(text)
                elif isinstance(default, tuple):
                    kwargs[key] = _floats(text) if isinstance(default[0], float) else _ints(text)
                elif isinstance(default, int):
                    kwargs[key] = int(text)
                else:
                    kwargs[key] = float(text)
            except ValueError as exc:
                raise ConfigError(f"[case] {key}: {exc}") from None
        try:
            return spec_cls(**kwargs), gen
        except ValueError as exc:
            raise ConfigError(f"[case] invalid generator options: {exc}") from None

    def to_ini(self) -> str:
        """Canonical text form; equal configs give identical text."""
        cp = configparser.ConfigParser()
        case = {"generator": self.generator}
        if self.snapshots:
            case["snapshots"] = self.snapshots
        case.update(dict(self.gen_options))
        cp["case"] = case
        cp["split"] = {"strategy": self.split_strategy, "fraction": repr(self.split_fraction),
                       "seed": str(self.split_seed)}
        cp["shift"] = {"ref_index": str(self.ref_index), "shift_axes": self.shift_axes,
                       "mode": self.mode, "subsample": str(self.subsample),
                       "warm_start": self.warm_start}
        for name in ("interpnet", "shiftnet"):
            p: NetPreset = getattr(self, name)
            cp[name] = {"layers": ",".join(map(str, p.layers)), "activation": p.activation,
                        "lr": repr(p.lr), "threshold": repr(p.threshold),
                        "max_epochs": str(p.max_epochs)}
        rom = {"kernel": self.kernel, "epsilon": repr(self.epsilon), "guard": repr(self.guard)}
        if self.rank is not None:
            rom["rank"] = str(self.rank)
        else:
            rom["energy"] = repr(self.energy)
        cp["rom"] = rom
        cp["run"] = {"seed": str(self.seed)}
        if self.output:
            cp["run"]["output"] = self.output
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def config_hash(self) -> str:
        text = self.to_ini()
        # output location does not change results
        text = "\n".join(l for l in text.splitlines() if not l.startswith("output ="))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


_KEYS = {
    "case": {"generator", "snapshots"},
    "split": {"strategy", "fraction", "seed"},
    "shift": {"ref_index", "shift_axes", "mode", "subsample", "warm_start"},
    "interpnet": {"layers", "activation", "lr", "threshold", "max_epochs"},
    "shiftnet": {"layers", "activation", "lr", "threshold", "max_epochs"},
    "rom": {"rank", "energy", "kernel", "epsilon", "guard"},
    "run": {"seed", "output"},
}


def _merge(sections: dict[str, dict[str, str]], source: dict[str, dict[str, str]]):
    for sec, items in source.items():
        sections.setdefault(sec, {}).update({k: str(v) for k, v in items.items()})


def load_config(
    path: str | Path | None = None,
    preset: str | None = None,
    overrides: list[str] | None = None,
) -> PipelineConfig:
    """Resolve preset, then file, then ``section.key=value`` overrides."""
    sections: dict[str, dict[str, str]] = {}
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        _merge(sections, PRESETS[preset])
    if path:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        cp = configparser.ConfigParser()
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        _merge(sections, {s: dict(cp[s]) for s in cp.sections()})
        # rank and energy are alternatives; the later source wins
        if cp.has_section("rom"):
            rom = cp["rom"]
            if "energy" in rom and "rank" not in rom:
                sections["rom"].pop("rank", None)
            if "rank" in rom and "energy" not in rom:
                sections["rom"].pop("energy", None)
    for item in overrides or []:
        key, sep, value = item.partition("=")
        sec, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        sections.setdefault(sec, {})[name] = value.strip()
        if sec == "rom" and name in ("rank", "energy"):
            sections["rom"].pop("energy" if name == "rank" else "rank", None)
    return _build(sections)


def _build(sections: dict[str, dict[str, str]]) -> PipelineConfig:
    for sec, items in sections.items():
        if sec not in _KEYS:
            raise ConfigError(f"unknown section [{sec}]")
        if sec == "case":
            continue
        unknown = set(items) - _KEYS[sec]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{sec}]: {', '.join(sorted(unknown))}")

    def get(sec, key, default, conv=str):
        if key not in sections.get(sec, {}):
            return default
        try:
            return conv(sections[sec][key])
        except ValueError as exc:
            raise ConfigError(f"[{sec}] {key}: {exc}") from None

    case = dict(sections.get("case", {}))
    generator = case.pop("generator", "gaussian")
    snapshots = case.pop("snapshots", "")
    if generator == "file":
        if case:
            raise ConfigError(f"unknown key(s) in [case]: {', '.join(sorted(case))}")
        if not snapshots:
            raise ConfigError("[case] generator = file needs a snapshots path")
    elif generator in GENERATORS:
        allowed = {f.name for f in dataclasses.fields(GENERATORS[generator][0])}
        unknown = set(case) - allowed
        if unknown:
            raise ConfigError(f"unknown key(s) in [case] for {generator}: {', '.join(sorted(unknown))}")
    else:
        raise ConfigError(f"unknown generator {generator!r}")

    def net(sec, default: NetPreset) -> NetPreset:
        try:
            return NetPreset(
                get(sec, "layers", default.layers, _ints),
                get(sec, "activation", default.activation),
                get(sec, "lr", default.lr, float),
                get(sec, "threshold", default.threshold, float),
                get(sec, "max_epochs", default.max_epochs, int),
            )
        except ValueError as exc:
            raise ConfigError(f"[{sec}] {exc}") from None

    base = PipelineConfig()
    rank = get("rom", "rank", None, int)
    cfg = PipelineConfig(
        generator=generator,
        snapshots=snapshots,
        gen_options=tuple(sorted(case.items())),
        split_strategy=get("split", "strategy", base.split_strategy),
        split_fraction=get("split", "fraction", base.split_fraction, float),
        split_seed=get("split", "seed", base.split_seed, int),
        ref_index=get("shift", "ref_index", base.ref_index, int),
        shift_axes=get("shift", "shift_axes", base.shift_axes),
        mode=get("shift", "mode", base.mode),
        subsample=get("shift", "subsample", base.subsample, int),
        warm_start=get("shift", "warm_start", base.warm_start),
        interpnet=net("interpnet", base.interpnet),
        shiftnet=net("shiftnet", base.shiftnet),
        rank=rank,
        energy=None if rank is not None else get("rom", "energy", base.energy, float),
        kernel=get("rom", "kernel", base.kernel),
        epsilon=get("rom", "epsilon", base.epsilon, float),
        guard=get("rom", "guard", base.guard, float),
        seed=get("run", "seed", base.seed, int),
        output=get("run", "output", base.output),
    )
    _validate(cfg)
    return cfg


def _validate(cfg: PipelineConfig):
    if cfg.split_strategy not in ("alternating", "random"):
        raise ConfigError(f"[split] strategy must be alternating or random, got {cfg.split_strategy!r}")
    if not 0.0 < cfg.split_fraction < 1.0:
        raise ConfigError("[split] fraction must lie in (0, 1)")
    if cfg.mode not in ("standard", "interpolation"):
        raise ConfigError(f"[shift] mode must be standard or interpolation, got {cfg.mode!r}")
    if cfg.warm_start not in ("centroid", "none"):
        raise ConfigError(f"[shift] warm_start must be centroid or none, got {cfg.warm_start!r}")
    for name in cfg.shift_axes.replace(" ", "").split(","):
        if name not in _AXES:
            raise ConfigError(f"[shift] unknown axis {name!r}")
    if cfg.kernel not in ("thin_plate", "gaussian", "multiquadric"):
        raise ConfigError(f"[rom] unknown kernel {cfg.kernel!r}")
    if cfg.rank is not None and cfg.rank < 1:
        raise ConfigError("[rom] rank must be >= 1")
    if cfg.energy is not None and not 0.0 < cfg.energy <= 1.0:
        raise ConfigError("[rom] energy must lie in (0, 1]")
    if cfg.subsample < 0:
        raise ConfigError("[shift] subsample must be >= 0 (0 disables)")
    if cfg.generator != "file":
        cfg.generator_spec()
