"""Run configuration: one flat ``key = value`` file covering scene, network,
training and detection settings."""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field, fields, replace

from .classical import DEFAULT_REG, METHODS
from .errors import ConfigError
from .kvfile import parse_kv
from .mtcnet import ArchConfig, TrainConfig
from .scene import SceneSpec

ALL_METHODS = METHODS + ("mtcnet",)


def _int(raw):
    return int(raw)


def _float(raw):
    return float(raw)


def _bool(raw):
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def _ints(n):
    def parse(raw):
        vals = tuple(int(x) for x in raw.split(","))
        if len(vals) != n:
            raise ValueError(raw)
        return vals

    parse.__name__ = f"{n} comma-separated integers"
    return parse


def _float_pair(raw):
    vals = tuple(float(x) for x in raw.split(","))
    if len(vals) == 1:
        vals = vals * 2
    if len(vals) != 2:
        raise ValueError(raw)
    return vals


def _methods(raw):
    names = tuple(x.strip() for x in raw.split(",") if x.strip())
    bad = [n for n in names if n not in ALL_METHODS]
    if bad or not names:
        raise ValueError(raw)
    return names


def _str(raw):
    return raw


_int.__name__ = "integer"
_float.__name__ = "real number"
_bool.__name__ = "boolean"
_float_pair.__name__ = "real or 'low, high' pair"
_methods.__name__ = f"comma-separated list of {'|'.join(ALL_METHODS)}"
_str.__name__ = "string"

# key -> (section, attribute, parser)
SCHEMA = {
    "height": ("scene", "height", _int),
    "width": ("scene", "width", _int),
    "bands": ("scene", "bands", _int),
    "n_endmembers": ("scene", "n_endmembers", _int),
    "segment_count": ("scene", "segment_count", _int),
    "gain_range": ("scene", "gain_range", _float_pair),
    "bias_range": ("scene", "bias_range", _float_pair),
    "illumination_amplitude": ("scene", "illumination_amplitude", _float),
    "noise_sigma": ("scene", "noise_sigma", _float),
    "anomaly_count": ("scene", "anomaly_count", _int),
    "anomaly_radius": ("scene", "anomaly_radius", _int),
    "seed": ("run", "seed", _int),
    "c1": ("arch", "c1", _int),
    "c2": ("arch", "c2", _int),
    "kernel": ("arch", "kernel", _ints(3)),
    "proj_dims": ("arch", "proj_dims", _ints(3)),
    "pred_dims": ("arch", "pred_dims", _ints(2)),
    "cbam_reduction": ("arch", "cbam_reduction", _int),
    "attention_kernel": ("arch", "attention_kernel", _ints(3)),
    "feature_stage": ("arch", "feature_stage", _str),
    "patch_size": ("run", "patch_size", _int),
    "epochs": ("train", "epochs", _int),
    "batch_size": ("train", "batch_size", _int),
    "base_lr": ("train", "base_lr", _float),
    "shuffle": ("train", "shuffle", _bool),
    "momentum": ("train", "momentum", _float),
    "weight_decay": ("train", "weight_decay", _float),
    "methods": ("run", "methods", _methods),
    "reg_eps": ("run", "reg_eps", _float),
    "usfa_iterations": ("run", "usfa_iterations", _int),
    "tile_size": ("run", "tile_size", _int),
    "align": ("run", "align", _bool),
    "time1": ("paths", "time1", _str),
    "time2": ("paths", "time2", _str),
    "mask": ("paths", "mask", _str),
    "checkpoint": ("paths", "checkpoint", _str),
    "out": ("paths", "out", _str),
}


@dataclass
class RunConfig:
    scene: SceneSpec = field(default_factory=SceneSpec)
    arch: ArchConfig = field(default_factory=ArchConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    methods: tuple = METHODS
    reg_eps: float = DEFAULT_REG
    usfa_iterations: int = 5
    tile_size: int = 0
    align: bool = True
    seed: int = 7
    paths: dict = field(default_factory=dict)

    @property
    def patch_size(self) -> int:
        return self.train.patch_size

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(
            self,
            seed=seed,
            scene=replace(self.scene, seed=seed),
            train=replace(self.train, seed=seed),
        )


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    """Build a RunConfig; absent keys keep their defaults (patch 31, 100 epochs,
    batch 128, learning rate 0.05 for training)."""
    kv = parse_kv(text, source)
    values = {"scene": {}, "arch": {}, "train": {}, "run": {}, "paths": {}}
    for key, (raw, lineno) in kv.items():
        if key not in SCHEMA:
            near = difflib.get_close_matches(key, SCHEMA, n=1)
            hint = f"; did you mean {near[0]!r}?" if near else ""
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}{hint}")
        section, attr, parse = SCHEMA[key]
        try:
            values[section][attr] = parse(raw)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: {key} expects a {parse.__name__}, got {raw!r}") from None

    run = values["run"]
    seed = run.pop("seed", RunConfig.seed)
    patch = run.pop("patch_size", TrainConfig.patch_size)
    try:
        scene = SceneSpec(**{**values["scene"], "seed": seed})
        arch = ArchConfig(**{**values["arch"], "patch_size": patch})
        train = TrainConfig(**{**values["train"], "seed": seed, "patch_size": patch})
    except ConfigError as e:
        raise ConfigError(f"{source}: {e}") from None
    return RunConfig(scene=scene, arch=arch, train=train, seed=seed, paths=values["paths"], **run)


def parse_config(path) -> RunConfig:
    with open(path) as f:
        return parse_config_text(f.read(), str(path))


def config_keys() -> list:
    return sorted(SCHEMA)


assert {a for s, a, _ in SCHEMA.values() if s == "scene"} <= {f.name for f in fields(SceneSpec)}
