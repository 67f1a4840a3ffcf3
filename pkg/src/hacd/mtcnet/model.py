"""Siamese spatial-spectral network: residual 3-D blocks, attention, and heads.

Patches enter as [N, 1, bands, m, m]: the spectral axis is the convolution
depth so every kernel slides over space and wavelength together.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..errors import ConfigError, ShapeError


@dataclass(frozen=True)
class ArchConfig:
    c1: int = 8
    c2: int = 16
    kernel: tuple = (3, 3, 3)
    proj_dims: tuple = (256, 256, 128)
    pred_dims: tuple = (64, 128)
    cbam_reduction: int = 4
    attention_kernel: tuple = (3, 7, 7)
    patch_size: int = 31
    # where inference features are read: "cbam" (end of backbone) or "resnet2"
    feature_stage: str = "cbam"
    # spectral bands the model was trained on; 0 until training fixes it
    bands: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))
        object.__setattr__(self, "proj_dims", tuple(int(k) for k in self.proj_dims))
        object.__setattr__(self, "pred_dims", tuple(int(k) for k in self.pred_dims))
        object.__setattr__(self, "attention_kernel", tuple(int(k) for k in self.attention_kernel))
        if self.c1 < 1 or self.c2 < 1:
            raise ConfigError("c1 and c2 must be >= 1")
        if len(self.kernel) != 3 or any(k < 1 or k % 2 == 0 for k in self.kernel):
            raise ConfigError(f"kernel must be three odd extents, got {self.kernel}")
        if len(self.attention_kernel) != 3 or any(k < 1 or k % 2 == 0 for k in self.attention_kernel):
            raise ConfigError(f"attention_kernel must be three odd extents, got {self.attention_kernel}")
        if len(self.proj_dims) != 3 or len(self.pred_dims) != 2 or min(self.proj_dims + self.pred_dims) < 1:
            raise ConfigError("proj_dims needs three and pred_dims two positive widths")
        if self.pred_dims[1] != self.proj_dims[2]:
            raise ConfigError(
                f"predictor output width {self.pred_dims[1]} must equal projector output width {self.proj_dims[2]}"
            )
        if self.cbam_reduction < 1 or self.cbam_reduction > self.c2:
            raise ConfigError(f"cbam_reduction {self.cbam_reduction} must lie in [1, c2={self.c2}]")
        if self.patch_size % 2 == 0 or self.patch_size < max(self.kernel[1:]):
            raise ConfigError(f"patch_size must be odd and >= the kernel's spatial extent, got {self.patch_size}")
        if self.bands < 0:
            raise ConfigError("bands must be >= 0")
        if self.feature_stage not in ("cbam", "resnet2"):
            raise ConfigError("feature_stage must be 'cbam' or 'resnet2'")

    @classmethod
    def tiny(cls, **overrides) -> "ArchConfig":
        """Small widths for gradient checks and desk-scale runs."""
        base = dict(c1=4, c2=8, proj_dims=(32, 32, 16), pred_dims=(32, 16), cbam_reduction=2,
                    attention_kernel=(3, 3, 3), patch_size=7)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def padding(self) -> tuple:
        return tuple(k // 2 for k in self.kernel)

    @property
    def attention_padding(self) -> tuple:
        return tuple(k // 2 for k in self.attention_kernel)

    def backbone_radius(self) -> int:
        """Spatial reach (pixels) of the four residual-path convolutions."""
        return 4 * (self.kernel[1] // 2)

    def attention_radius(self) -> int:
        return self.attention_kernel[1] // 2


def _he(rng, shape, fan_in):
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


class MtcNetModel:
    """All parameters of the shared-weight encoder and the predictor.

    Both temporal branches call the same methods on the same instance, so
    they read the very same parameter arrays.
    """

    def __init__(self, arch: ArchConfig, seed: int = 0):
        self.arch = arch
        self.training = True
        self.params: dict[str, Tensor] = {}
        self.bn: dict[str, ad.BatchNormState] = {}
        rng = np.random.default_rng(seed)
        kd, kh, kw = arch.kernel
        kvol = kd * kh * kw
        c1, c2 = arch.c1, arch.c2

        self._weight("resnet1.conv1", _he(rng, (c1, 1, kd, kh, kw), kvol))
        self._bn("resnet1.bn1", c1)
        self._weight("resnet1.conv2", _he(rng, (c1, c1, kd, kh, kw), c1 * kvol))
        self._bn("resnet1.bn2", c1)
        if c1 != 1:
            self._weight("resnet1.shortcut", _he(rng, (c1, 1, 1, 1, 1), 1))

        self._weight("resnet2.conv1", _he(rng, (c2, c1, kd, kh, kw), c1 * kvol))
        self._bn("resnet2.bn1", c2)
        self._weight("resnet2.conv2", _he(rng, (c2, c2, kd, kh, kw), c2 * kvol))
        self._bn("resnet2.bn2", c2)
        self._weight("resnet2.shortcut", _he(rng, (c2, c1, 1, 1, 1), c1))

        hidden = max(c2 // arch.cbam_reduction, 1)
        self._weight("cbam.mlp1", _he(rng, (c2, hidden), c2))
        self._weight("cbam.mlp2", _he(rng, (hidden, c2), hidden))
        ad_, ah, aw = arch.attention_kernel
        self._weight("cbam.spatial", _he(rng, (1, 2, ad_, ah, aw), 2 * ad_ * ah * aw))

        widths = (c2,) + arch.proj_dims
        for i in range(3):
            self._weight(f"projector.fc{i + 1}", _he(rng, (widths[i], widths[i + 1]), widths[i]))
            self._bn(f"projector.bn{i + 1}", widths[i + 1])

        p_in, p_hid, p_out = arch.proj_dims[2], arch.pred_dims[0], arch.pred_dims[1]
        self._weight("predictor.fc1", _he(rng, (p_in, p_hid), p_in))
        self.params["predictor.fc1.bias"] = ad.parameter(np.zeros(p_hid), "predictor.fc1.bias")
        self._weight("predictor.fc2", _he(rng, (p_hid, p_out), p_hid))
        self.params["predictor.fc2.bias"] = ad.parameter(np.zeros(p_out), "predictor.fc2.bias")

    def _weight(self, name, data):
        self.params[name + ".weight"] = ad.parameter(data, name + ".weight")

    def _bn(self, name, ch):
        self.params[name + ".gamma"] = ad.parameter(np.ones(ch), name + ".gamma")
        self.params[name + ".beta"] = ad.parameter(np.zeros(ch), name + ".beta")
        self.bn[name] = ad.BatchNormState(ch)

    def parameters(self) -> list:
        return list(self.params.values())

    def train(self, mode: bool = True) -> "MtcNetModel":
        self.training = mode
        return self

    def eval(self) -> "MtcNetModel":
        return self.train(False)

    def __getitem__(self, name) -> Tensor:
        return self.params[name]

    # layers

    def _batchnorm(self, x, name):
        p = self.params
        return ad.batchnorm(x, p[name + ".gamma"], p[name + ".beta"], self.bn[name], self.training)

    def resnet1(self, x: Tensor) -> Tensor:
        """conv-BN-ReLU-conv-BN plus shortcut, then ReLU; all strides 1."""
        if x.ndim != 5 or x.shape[1] != 1:
            raise ShapeError(f"resnet1 expects [N, 1, bands, m, m], got {x.shape}")
        p, pad = self.params, self.arch.padding
        h = ad.relu(self._batchnorm(ad.conv3d(x, p["resnet1.conv1.weight"], 1, pad), "resnet1.bn1"))
        h = self._batchnorm(ad.conv3d(h, p["resnet1.conv2.weight"], 1, pad), "resnet1.bn2")
        short = ad.conv3d(x, p["resnet1.shortcut.weight"]) if "resnet1.shortcut.weight" in p else x
        return ad.relu(h + short)

    def resnet2(self, x: Tensor) -> Tensor:
        """Residual block halving the spectral depth; the shortcut is a
        spectrally strided 1x1x1 convolution."""
        if x.ndim != 5 or x.shape[1] != self.arch.c1:
            raise ShapeError(f"resnet2 expects [N, {self.arch.c1}, D, H, W], got {x.shape}")
        if x.shape[2] < 2:
            raise ShapeError("resnet2 needs a spectral depth of at least 2")
        p, pad = self.params, self.arch.padding
        h = ad.relu(self._batchnorm(ad.conv3d(x, p["resnet2.conv1.weight"], (2, 1, 1), pad), "resnet2.bn1"))
        h = self._batchnorm(ad.conv3d(h, p["resnet2.conv2.weight"], 1, pad), "resnet2.bn2")
        short = ad.conv3d(x, p["resnet2.shortcut.weight"], (2, 1, 1))
        return ad.relu(h + short)

    def channel_gate(self, avg: Tensor, mx: Tensor) -> Tensor:
        """sigmoid(MLP(avg) + MLP(max)) for pooled [N, ch] descriptors."""
        p = self.params
        mlp = lambda v: ad.relu(v @ p["cbam.mlp1.weight"]) @ p["cbam.mlp2.weight"]  # noqa: E731
        return ad.sigmoid(mlp(avg) + mlp(mx))

    def spatial_gate(self, x: Tensor) -> Tensor:
        pooled = ad.concat([ad.mean_over(x, 1, keepdims=True), ad.max_over(x, 1, keepdims=True)], axis=1)
        return ad.sigmoid(ad.conv3d(pooled, self.params["cbam.spatial.weight"], 1, self.arch.attention_padding))

    def cbam(self, x: Tensor) -> Tensor:
        """Channel attention followed by attention over (band, row, col) positions."""
        n, ch = x.shape[:2]
        gate = self.channel_gate(ad.mean_over(x, (2, 3, 4)), ad.max_over(x, (2, 3, 4)))
        x = x * ad.reshape(gate, (n, ch, 1, 1, 1))
        return x * self.spatial_gate(x)

    def backbone(self, x: Tensor) -> Tensor:
        """Feature volume used for change scoring ([N, c2, ceil(bands/2), H, W])."""
        h = self.resnet2(self.resnet1(x))
        return h if self.arch.feature_stage == "resnet2" else self.cbam(h)

    def project(self, feat: Tensor) -> Tensor:
        p = self.params
        h = ad.mean_over(feat, (2, 3, 4))
        for i in (1, 2, 3):
            h = self._batchnorm(h @ p[f"projector.fc{i}.weight"], f"projector.bn{i}")
            if i < 3:
                h = ad.relu(h)
        return h

    def encode(self, x: Tensor, return_features: bool = False):
        """Projected vector z for each patch (and the backbone volume if asked)."""
        feat = self.cbam(self.resnet2(self.resnet1(x)))
        z = self.project(feat)
        return (z, feat) if return_features else z

    def predict(self, z: Tensor) -> Tensor:
        p = self.params
        h = ad.relu(z @ p["predictor.fc1.weight"] + p["predictor.fc1.bias"])
        return h @ p["predictor.fc2.weight"] + p["predictor.fc2.bias"]

    # persistence

    def state_arrays(self) -> dict:
        out = {name: t.data.copy() for name, t in self.params.items()}
        for name, st in self.bn.items():
            out[name + ".running_mean"] = st.running_mean.copy()
            out[name + ".running_var"] = st.running_var.copy()
        return out

    def load_state_arrays(self, arrays: dict) -> None:
        expected = set(self.state_arrays())
        if set(arrays) != expected:
            missing = sorted(expected - set(arrays))
            extra = sorted(set(arrays) - expected)
            raise ShapeError(f"checkpoint does not match architecture (missing {missing}, unexpected {extra})")
        for name, t in self.params.items():
            if arrays[name].shape != t.shape:
                raise ShapeError(f"{name}: checkpoint shape {arrays[name].shape} != {t.shape}")
            t.data[...] = arrays[name]
        for name, st in self.bn.items():
            st.running_mean = np.array(arrays[name + ".running_mean"], dtype=np.float64)
            st.running_var = np.array(arrays[name + ".running_var"], dtype=np.float64)


def patches_to_input(patches: np.ndarray) -> Tensor:
    """[n, m, m, bands] patch blocks -> network input [n, 1, bands, m, m]."""
    patches = np.asarray(patches, dtype=np.float64)
    if patches.ndim != 4:
        raise ShapeError(f"expected [n, m, m, bands] patches, got {patches.shape}")
    return Tensor(np.ascontiguousarray(patches.transpose(0, 3, 1, 2))[:, None])


def cube_to_input(values: np.ndarray) -> np.ndarray:
    """[H, W, bands] cube -> [1, 1, bands, H, W]."""
    return np.ascontiguousarray(np.asarray(values, dtype=np.float64).transpose(2, 0, 1))[None, None]
