"""Model checkpoint plus a plain-text sidecar describing the architecture."""

from __future__ import annotations

from dataclasses import fields

from ..autodiff import load_checkpoint, save_checkpoint
from ..errors import ConfigError
from ..kvfile import dump_kv, parse_kv
from .model import ArchConfig, MtcNetModel
from .train import TrainConfig


def sidecar_path(path) -> str:
    return str(path) + ".cfg"


def save_model(model: MtcNetModel, path, train_cfg: TrainConfig | None = None) -> None:
    save_checkpoint(path, model.state_arrays())
    items = {f"arch.{k}": v for k, v in model.arch.to_dict().items()}
    if train_cfg is not None:
        items.update({f"train.{k}": v for k, v in train_cfg.to_dict().items()})
    with open(sidecar_path(path), "w") as f:
        f.write(dump_kv(items))


def _coerce(raw: str, default):
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(default, tuple):
        return tuple(int(x) for x in raw.split(","))
    return type(default)(raw)


def load_model(path) -> tuple[MtcNetModel, TrainConfig | None]:
    with open(sidecar_path(path)) as f:
        kv = parse_kv(f.read(), sidecar_path(path))
    arch_kw, train_kw = {}, {}
    arch_defaults = ArchConfig()
    train_defaults = TrainConfig()
    for key, (raw, lineno) in kv.items():
        section, _, name = key.partition(".")
        target, defaults = {"arch": (arch_kw, arch_defaults), "train": (train_kw, train_defaults)}.get(
            section, (None, None)
        )
        if target is None or name not in {f.name for f in fields(defaults)}:
            raise ConfigError(f"{sidecar_path(path)}:{lineno}: unknown key {key!r}")
        try:
            target[name] = _coerce(raw, getattr(defaults, name))
        except ValueError:
            raise ConfigError(f"{sidecar_path(path)}:{lineno}: bad value {raw!r} for {key}") from None
    model = MtcNetModel(ArchConfig(**arch_kw))
    model.load_state_arrays(load_checkpoint(path))
    model.eval()
    return model, (TrainConfig(**train_kw) if train_kw else None)
