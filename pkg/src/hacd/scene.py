"""Seeded synthetic bi-temporal scenes with anomalous-change ground truth.

Time 1 is a Voronoi patchwork of two-endmember mixtures. Time 2 sees the same
ground through a per-band gain/bias, a smooth illumination field and fresh
noise, and has a few disk-shaped blobs whose material is swapped for an
endmember absent at that spot.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError, PlacementError
from .hsio import HsiCube

MAX_PLACEMENT_TRIES = 2000


@dataclass(frozen=True)
class SceneSpec:
    height: int = 64
    width: int = 64
    bands: int = 32
    n_endmembers: int = 5
    segment_count: int = 8
    gain_range: tuple = (0.8, 1.2)
    bias_range: tuple = (-0.05, 0.05)  # as a fraction of the mean signal
    illumination_amplitude: float = 0.1
    noise_sigma: float = 0.01
    anomaly_count: int = 6
    anomaly_radius: int = 2
    seed: int = 7

    def __post_init__(self):
        for name in ("height", "width", "bands", "n_endmembers", "segment_count"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.anomaly_count < 0 or self.anomaly_radius < 0:
            raise ConfigError("anomaly_count and anomaly_radius must be >= 0")
        if not 0 <= self.noise_sigma < 1:
            raise ConfigError("noise_sigma must lie in [0, 1)")
        for name in ("gain_range", "bias_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name} must be (low, high) with low <= high")
        if self.anomaly_count:
            side = 2 * self.anomaly_radius + 1
            if side > min(self.height, self.width):
                raise ConfigError("anomaly blobs do not fit inside the image")
            n_pos = self.anomaly_count * disk_offsets(self.anomaly_radius).shape[0]
            if n_pos > 0.05 * self.height * self.width:
                raise ConfigError(
                    f"{n_pos} anomaly pixels exceed 5% of the {self.height}x{self.width} image"
                )

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


def disk_offsets(radius: int) -> np.ndarray:
    """(dr, dc) offsets of the rasterized disk ``dr^2 + dc^2 <= radius^2``."""
    r = np.arange(-radius, radius + 1)
    dr, dc = np.meshgrid(r, r, indexing="ij")
    keep = dr**2 + dc**2 <= radius**2
    return np.stack([dr[keep], dc[keep]], axis=1)


def endmember_library(n: int, bands: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` smooth spectra, each a baseline plus Gaussian bumps over the band axis."""
    b = np.arange(bands, dtype=np.float64)
    centers = (np.arange(n) + 0.5) / n * bands
    width = max(bands / (2.0 * n), 1.0)
    lib = np.empty((n, bands))
    for k in range(n):
        base = rng.uniform(0.1, 0.3)
        amp = rng.uniform(0.6, 1.0)
        spec = base + amp * np.exp(-0.5 * ((b - centers[k]) / width) ** 2)
        # weaker secondary feature so spectra are not pure single bumps
        c2 = rng.uniform(0, bands)
        spec += 0.3 * amp * np.exp(-0.5 * ((b - c2) / (2 * width)) ** 2)
        lib[k] = spec
    return lib


def _smooth_field(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    """Low-frequency field scaled to [-1, 1]."""
    yy, xx = np.meshgrid(np.linspace(0, 1, h), np.linspace(0, 1, w), indexing="ij")
    f = np.zeros((h, w))
    for _ in range(3):
        fy, fx = rng.uniform(0.3, 1.5, size=2)
        py, px = rng.uniform(0, 2 * np.pi, size=2)
        f += np.sin(2 * np.pi * fy * yy + py) * np.cos(2 * np.pi * fx * xx + px)
    span = np.abs(f).max()
    return f / span if span > 0 else f


def generate_scene(spec: SceneSpec) -> tuple[HsiCube, HsiCube, np.ndarray]:
    """Build ``(time1, time2, mask)`` for ``spec``; deterministic in ``spec.seed``.

    ``mask`` is an (H, W) uint8 array with 1 on anomalous-change pixels.
    """
    rng = np.random.default_rng(spec.seed)
    h, w, nb, ne = spec.height, spec.width, spec.bands, spec.n_endmembers
    lib = endmember_library(ne, nb, rng)

    seeds = np.column_stack([rng.uniform(0, h, spec.segment_count), rng.uniform(0, w, spec.segment_count)])
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    d2 = (yy[..., None] - seeds[:, 0]) ** 2 + (xx[..., None] - seeds[:, 1]) ** 2
    segment = np.argmin(d2, axis=-1)

    # each segment mixes a dominant and (when available) a secondary endmember
    abund = np.zeros((spec.segment_count, ne))
    for s in range(spec.segment_count):
        major = rng.integers(ne)
        frac = rng.uniform(0.6, 1.0)
        abund[s, major] = frac
        if ne > 1:
            minor = (major + 1 + rng.integers(ne - 1)) % ne
            abund[s, minor] = 1.0 - frac
        else:
            abund[s, major] = 1.0
    pix_abund = abund[segment]  # (h, w, ne)
    signal1 = pix_abund @ lib
    level = signal1.mean()

    mask = np.zeros((h, w), dtype=np.uint8)
    signal2 = signal1.copy()
    if spec.anomaly_count:
        offs = disk_offsets(spec.anomaly_radius)
        r = spec.anomaly_radius
        placed = 0
        tries = 0
        while placed < spec.anomaly_count:
            tries += 1
            if tries > MAX_PLACEMENT_TRIES:
                raise PlacementError(
                    f"placed only {placed} of {spec.anomaly_count} anomaly blobs; "
                    "try a smaller anomaly_radius or anomaly_count"
                )
            cy = rng.integers(r, h - r)
            cx = rng.integers(r, w - r)
            ys, xs = cy + offs[:, 0], cx + offs[:, 1]
            # keep a one-pixel gap between blobs
            if mask[max(cy - r - 1, 0) : cy + r + 2, max(cx - r - 1, 0) : cx + r + 2].any():
                continue
            used = pix_abund[ys, xs].max(axis=0) > 0
            free = np.flatnonzero(~used)
            if free.size == 0:
                continue
            k = free[rng.integers(free.size)]
            signal2[ys, xs] = lib[k]
            mask[ys, xs] = 1
            placed += 1

    gain = rng.uniform(*spec.gain_range, size=nb)
    bias = rng.uniform(*spec.bias_range, size=nb) * level
    illum = 1.0 + spec.illumination_amplitude * _smooth_field(h, w, rng)
    noise_std = spec.noise_sigma * level
    noise1 = rng.standard_normal((h, w, nb)) * noise_std
    noise2 = rng.standard_normal((h, w, nb)) * noise_std

    time1 = signal1 + noise1
    time2 = (signal2 * gain + bias) * illum[..., None] + noise2
    return HsiCube(time1), HsiCube(time2), mask
