"""Per-pixel change intensity from backbone feature distances.

The backbone runs fully convolutionally over each whole cube; the score at
(r, c) is the L2 norm, over channels and spectral positions, of the
difference between the two feature volumes.

Large scenes can be processed in spatial tiles. Every tile is extended by a
halo covering the convolutions' reach so interior results equal the
whole-image run. The attention block's channel gate pools over the whole
image, so tiled inference makes two passes: one to accumulate the pooled
statistics, one to produce features.
"""

from __future__ import annotations

import math

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..errors import ShapeError
from ..hsio import HsiCube
from .model import MtcNetModel, cube_to_input


# cubes with more voxels than this are scored tile by tile unless told otherwise
AUTO_TILE_VOXELS = 1 << 21


def _check(model, X1, X2):
    if X1.shape != X2.shape:
        raise ShapeError(f"cube shapes differ: {X1.shape} vs {X2.shape}")
    if X1.bands < 2:
        raise ShapeError("inference needs at least 2 bands")
    if model.arch.bands and X1.bands != model.arch.bands:
        raise ShapeError(f"model was trained on {model.arch.bands} bands, cubes have {X1.bands}")


def auto_tile(cube: HsiCube) -> int | None:
    """Tile side keeping each tile near AUTO_TILE_VOXELS voxels, or None for small cubes."""
    if cube.height * cube.width * cube.bands <= AUTO_TILE_VOXELS:
        return None
    return max(16, math.isqrt(AUTO_TILE_VOXELS // cube.bands))


def backbone_features(model: MtcNetModel, cube: HsiCube) -> np.ndarray:
    """Whole-image feature volume [c2, D', H, W] in eval mode."""
    model.eval()
    with ad.no_grad():
        return model.backbone(Tensor(cube_to_input(cube.values))).data[0]


def _tiles(h, w, tile):
    for r0 in range(0, h, tile):
        for c0 in range(0, w, tile):
            yield r0, min(r0 + tile, h), c0, min(c0 + tile, w)


def _stage1(model, inp, r0, r1, c0, c1, halo):
    """resnet2(resnet1(.)) on the tile grown by ``halo``; returns (features, crop offsets)."""
    h, w = inp.shape[-2:]
    R0, R1 = max(r0 - halo, 0), min(r1 + halo, h)
    C0, C1 = max(c0 - halo, 0), min(c1 + halo, w)
    f = model.resnet2(model.resnet1(Tensor(inp[..., R0:R1, C0:C1]))).data
    return f, (r0 - R0, r1 - R0, c0 - C0, c1 - C0)


def _tiled_features(model: MtcNetModel, cube: HsiCube, tile: int):
    """Yield ((r0, r1, c0, c1), features [c2, D', r1-r0, c1-c0]) tile by tile."""
    arch = model.arch
    inp = cube_to_input(cube.values)
    h, w = cube.height, cube.width
    r_bb = arch.backbone_radius()
    use_cbam = arch.feature_stage == "cbam"

    gate = None
    if use_cbam:
        total, peak, count = None, None, 0
        for r0, r1, c0, c1 in _tiles(h, w, tile):
            f, (a, b, c, d) = _stage1(model, inp, r0, r1, c0, c1, r_bb)
            core = f[..., a:b, c:d]
            s = core.sum(axis=(2, 3, 4))
            mx = core.max(axis=(2, 3, 4))
            total = s if total is None else total + s
            peak = mx if peak is None else np.maximum(peak, mx)
            count += core[0, 0].size
        gate = model.channel_gate(Tensor(total / count), Tensor(peak)).data

    halo = r_bb + (arch.attention_radius() if use_cbam else 0)
    for r0, r1, c0, c1 in _tiles(h, w, tile):
        f, (a, b, c, d) = _stage1(model, inp, r0, r1, c0, c1, halo)
        if use_cbam:
            x = Tensor(f * gate[:, :, None, None, None])
            f = (x * model.spatial_gate(x)).data
        yield (r0, r1, c0, c1), f[0, :, :, a:b, c:d]


def infer_loss_map(model: MtcNetModel, X1: HsiCube, X2: HsiCube, tile: int | None = None) -> np.ndarray:
    """Score map [H, W]: L2 distance between the two cubes' backbone features.

    ``tile`` (pixels per side) bounds memory; results match the whole-image
    run up to floating-point summation order. ``None`` picks a tile size from
    the cube volume, ``0`` forces a single whole-image pass.
    """
    _check(model, X1, X2)
    if tile is None:
        tile = auto_tile(X1)
    if not tile or tile >= max(X1.height, X1.width):
        f1 = backbone_features(model, X1)
        f2 = backbone_features(model, X2)
        return np.sqrt(((f1 - f2) ** 2).sum(axis=(0, 1)))
    if tile < 0:
        raise ValueError("tile must be >= 0")
    model.eval()
    out = np.empty((X1.height, X1.width))
    with ad.no_grad():
        for (box, g1), (_, g2) in zip(_tiled_features(model, X1, tile), _tiled_features(model, X2, tile)):
            r0, r1, c0, c1 = box
            out[r0:r1, c0:c1] = np.sqrt(((g1 - g2) ** 2).sum(axis=(0, 1)))
    return out
