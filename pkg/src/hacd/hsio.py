"""Hyperspectral cube container, ENVI reader/writer, patching and map export."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    DegenerateError,
    FormatError,
    ShapeError,
    TruncationError,
    UnsupportedError,
)

# ENVI data type code -> numpy scalar type (byte order applied separately)
ENVI_DTYPES = {2: "i2", 4: "f4", 12: "u2"}
INTERLEAVES = ("bsq", "bil", "bip")
MANDATORY_KEYS = ("samples", "lines", "bands", "interleave", "data type", "byte order")


@dataclass(frozen=True)
class HsiCube:
    """A height x width x bands radiance grid.

    ``values`` is stored as a read-only float64 array indexed ``[row, col, band]``.
    """

    values: np.ndarray
    nodata: Optional[float] = None

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ShapeError(f"cube must be a non-empty 3-D array, got shape {arr.shape}")
        valid = arr if self.nodata is None else arr[arr != self.nodata]
        if not np.all(np.isfinite(valid)):
            raise ValueError("cube contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def bands(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def pixels(self) -> np.ndarray:
        """Return an (H*W, C) view of the values."""
        return self.values.reshape(-1, self.bands)


@dataclass
class EnviHeader:
    samples: int
    lines: int
    bands: int
    interleave: str = "bsq"
    data_type: int = 4
    byte_order: int = 0
    header_offset: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if min(self.samples, self.lines, self.bands) < 1:
            raise FormatError("samples, lines and bands must all be >= 1")
        self.interleave = self.interleave.lower()
        if self.interleave not in INTERLEAVES:
            raise UnsupportedError(f"unsupported interleave {self.interleave!r}")
        if self.data_type not in ENVI_DTYPES:
            raise UnsupportedError(
                f"unsupported data type {self.data_type} (supported: {sorted(ENVI_DTYPES)})"
            )
        if self.byte_order not in (0, 1):
            raise UnsupportedError(f"unsupported byte order {self.byte_order}")
        if self.header_offset < 0:
            raise FormatError("header offset must be >= 0")

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(("<" if self.byte_order == 0 else ">") + ENVI_DTYPES[self.data_type])

    @property
    def data_size(self) -> int:
        return self.samples * self.lines * self.bands * self.dtype.itemsize


def parse_envi_header(text: str) -> EnviHeader:
    """Parse the text of an ENVI ``.hdr`` file."""
    # join brace-delimited values that span several lines
    entries = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line or line.upper() == "ENVI" or line.startswith(";"):
            continue
        if "=" not in line:
            raise FormatError(f"header line {i}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        key = re.sub(r"\s+", " ", key.strip().lower())
        value = value.strip()
        if value.startswith("{"):
            while "}" not in value and i < len(lines):
                value += " " + lines[i].strip()
                i += 1
            if "}" not in value:
                raise FormatError(f"unterminated brace value for key {key!r}")
        if key in entries and key in MANDATORY_KEYS:
            raise FormatError(f"duplicate header key {key!r}")
        entries[key] = value

    missing = [k for k in MANDATORY_KEYS if k not in entries]
    if missing:
        raise FormatError(f"header is missing mandatory keys: {', '.join(missing)}")

    def as_int(key):
        try:
            return int(entries[key])
        except ValueError:
            raise FormatError(f"header key {key!r} must be an integer, got {entries[key]!r}") from None

    extra = {k: v for k, v in entries.items() if k not in MANDATORY_KEYS and k != "header offset"}
    return EnviHeader(
        samples=as_int("samples"),
        lines=as_int("lines"),
        bands=as_int("bands"),
        interleave=entries["interleave"],
        data_type=as_int("data type"),
        byte_order=as_int("byte order"),
        header_offset=as_int("header offset") if "header offset" in entries else 0,
        extra=extra,
    )


def load_envi(header_path, data_path) -> HsiCube:
    """Read an ENVI flat-binary cube.

    Integer data types are widened to float64 without scaling.
    """
    with open(header_path, "r", encoding="ascii", errors="replace") as f:
        hdr = parse_envi_header(f.read())
    size = os.path.getsize(data_path)
    need = hdr.header_offset + hdr.data_size
    if size < need:
        raise TruncationError(f"{data_path}: {size} bytes, header requires at least {need}")
    count = hdr.samples * hdr.lines * hdr.bands
    raw = np.fromfile(data_path, dtype=hdr.dtype, count=count, offset=hdr.header_offset)
    if hdr.interleave == "bsq":
        arr = raw.reshape(hdr.bands, hdr.lines, hdr.samples).transpose(1, 2, 0)
    elif hdr.interleave == "bil":
        arr = raw.reshape(hdr.lines, hdr.bands, hdr.samples).transpose(0, 2, 1)
    else:
        arr = raw.reshape(hdr.lines, hdr.samples, hdr.bands)
    nodata = hdr.extra.get("data ignore value")
    return HsiCube(arr.astype(np.float64), nodata=float(nodata) if nodata is not None else None)


def save_envi(cube: HsiCube, header_path, data_path, interleave: str = "bsq") -> None:
    """Write ``cube`` as little-endian float32 ENVI data plus header."""
    interleave = interleave.lower()
    if interleave not in INTERLEAVES:
        raise UnsupportedError(f"unsupported interleave {interleave!r}")
    v = cube.values.astype("<f4")
    if interleave == "bsq":
        out = v.transpose(2, 0, 1)
    elif interleave == "bil":
        out = v.transpose(0, 2, 1)
    else:
        out = v
    lines = [
        "ENVI",
        f"samples = {cube.width}",
        f"lines = {cube.height}",
        f"bands = {cube.bands}",
        "header offset = 0",
        "file type = ENVI Standard",
        "data type = 4",
        f"interleave = {interleave}",
        "byte order = 0",
    ]
    if cube.nodata is not None:
        lines.append(f"data ignore value = {cube.nodata!r}")
    with open(data_path, "wb") as f:
        f.write(np.ascontiguousarray(out).tobytes())
    with open(header_path, "w", encoding="ascii") as f:
        f.write("\n".join(lines) + "\n")


def radiometric_align(reference: HsiCube, target: HsiCube) -> HsiCube:
    """Match each band of ``target`` to the mean and std of ``reference``.

    Per band b: ``(t - mean_t) * std_r / std_t + mean_r``.
    """
    if reference.shape != target.shape:
        raise ShapeError(f"shape mismatch: reference {reference.shape} vs target {target.shape}")
    r = reference.pixels()
    t = target.pixels()
    mu_r, sd_r = r.mean(axis=0), r.std(axis=0)
    mu_t, sd_t = t.mean(axis=0), t.std(axis=0)
    flat = np.flatnonzero(sd_t == 0)
    if flat.size:
        raise DegenerateError(f"target band {int(flat[0])} has zero standard deviation")
    aligned = (target.values - mu_t) * (sd_r / sd_t) + mu_r
    # bands whose statistics already match are passed through bit-for-bit
    same = (mu_r == mu_t) & (sd_r == sd_t)
    aligned[..., same] = target.values[..., same]
    return HsiCube(aligned, nodata=target.nodata)


@dataclass(frozen=True)
class PatchGrid:
    patch_size: int
    rows: int
    cols: int
    origins: tuple

    def __len__(self):
        return len(self.origins)


def patch_grid(height: int, width: int, m: int) -> PatchGrid:
    if m < 1 or m > min(height, width):
        raise ShapeError(f"patch size {m} does not fit a {height}x{width} image")
    rows, cols = height // m, width // m
    origins = tuple((r * m, c * m) for r in range(rows) for c in range(cols))
    return PatchGrid(m, rows, cols, origins)


def extract_patches(cube: HsiCube, m: int) -> tuple[PatchGrid, np.ndarray]:
    """Cut ``cube`` into non-overlapping m x m patches in row-major order.

    Returns the grid and an array of shape ``(n, m, m, bands)``. Border
    pixels beyond ``m * floor(H / m)`` rows (and likewise columns) are dropped.
    """
    grid = patch_grid(cube.height, cube.width, m)
    v = cube.values[: grid.rows * m, : grid.cols * m]
    blocks = (
        v.reshape(grid.rows, m, grid.cols, m, cube.bands)
        .transpose(0, 2, 1, 3, 4)
        .reshape(-1, m, m, cube.bands)
    )
    return grid, blocks.copy()


def export_map(score_map, path, fmt: str = "pgm16") -> None:
    """Write a 2-D score map as a 16-bit binary PGM or as CSV."""
    arr = np.asarray(score_map, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"score map must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("score map contains non-finite values")
    if fmt == "csv":
        np.savetxt(path, arr, delimiter=",", fmt="%.17g")
    elif fmt == "pgm16":
        lo, hi = arr.min(), arr.max()
        if hi > lo:
            pix = np.rint((arr - lo) / (hi - lo) * 65535.0)
        else:
            pix = np.zeros_like(arr)
        h, w = arr.shape
        with open(path, "wb") as f:
            f.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
            f.write(pix.astype(">u2").tobytes())
    else:
        raise UnsupportedError(f"unknown map format {fmt!r} (use pgm16 or csv)")


def read_pgm16(path) -> np.ndarray:
    """Read back a binary 16-bit PGM written by :func:`export_map`."""
    with open(path, "rb") as f:
        data = f.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = re.compile(rb"\s*(#[^\n]*\n\s*)*(\S+)").match(data, pos)
        if m is None:
            raise FormatError(f"{path}: bad PGM header")
        tokens.append(m.group(2))
        pos = m.end()
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    dtype = ">u2" if maxval > 255 else "u1"
    pos += 1
    return np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).reshape(h, w)


def read_map_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
