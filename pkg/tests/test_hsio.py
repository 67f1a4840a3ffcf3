import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hacd.errors import DegenerateError, FormatError, ShapeError, TruncationError, UnsupportedError
from hacd.hsio import (
    HsiCube,
    export_map,
    extract_patches,
    load_envi,
    parse_envi_header,
    radiometric_align,
    read_map_csv,
    read_pgm16,
    save_envi,
)


def write_raw(tmp_path, header, payload, name="cube"):
    hdr = tmp_path / f"{name}.hdr"
    dat = tmp_path / f"{name}.img"
    hdr.write_text(header)
    dat.write_bytes(payload)
    return hdr, dat


def header(interleave="bsq", dtype=4, order=0, samples=4, lines=3, bands=2, extra=""):
    return (
        "ENVI\n"
        f"samples = {samples}\nlines = {lines}\nbands = {bands}\n"
        f"interleave = {interleave}\ndata type = {dtype}\nbyte order = {order}\n" + extra
    )


def test_bsq_counting_layout(tmp_path):
    hdr, dat = write_raw(tmp_path, header("bsq"), np.arange(24, dtype="<f4").tobytes())
    cube = load_envi(hdr, dat)
    assert cube.shape == (3, 4, 2)
    assert cube.values[0, 0, 0] == 0 and cube.values[0, 0, 1] == 12


def test_bip_counting_layout(tmp_path):
    hdr, dat = write_raw(tmp_path, header("bip"), np.arange(24, dtype="<f4").tobytes())
    cube = load_envi(hdr, dat)
    assert cube.values[0, 0, 0] == 0 and cube.values[0, 0, 1] == 1


def test_bil_counting_layout(tmp_path):
    # BIL: for each line, one run of samples per band
    hdr, dat = write_raw(tmp_path, header("bil"), np.arange(24, dtype="<f4").tobytes())
    v = load_envi(hdr, dat).values
    assert v[0, 0, 1] == 4
    assert v[1, 0, 0] == 8


def test_int_types_byte_order_and_offset(tmp_path):
    raw = np.arange(-12, 12, dtype=">i2")
    hdr, dat = write_raw(tmp_path, header("bsq", 2, 1, extra="header offset = 7\n"), b"\0" * 7 + raw.tobytes())
    v = load_envi(hdr, dat).values
    assert v[0, 0, 0] == -12 and v[2, 3, 1] == 11
    assert v.dtype == np.float64

    raw = np.arange(60000, 60024, dtype="<u2")
    hdr, dat = write_raw(tmp_path, header("bip", 12, 0), raw.tobytes(), name="u2")
    assert load_envi(hdr, dat).values.max() == 60023


def test_header_keys_case_insensitive_and_braces():
    text = "ENVI\nSAMPLES = 2\nLines=1\nbands = 1\nInterleave = BSQ\ndata type = 4\nbyte order = 0\n" \
        "wavelength = {400,\n 500}\ndescription = {multi\nline}\n"
    h = parse_envi_header(text)
    assert (h.samples, h.lines, h.bands, h.interleave) == (2, 1, 1, "bsq")


@pytest.mark.parametrize(
    "text, err",
    [
        (header().replace("bands = 2\n", ""), FormatError),
        (header() + "bands = 2\n", FormatError),
        (header(interleave="bsx"), UnsupportedError),
        (header(dtype=5), UnsupportedError),
        (header(order=3), UnsupportedError),
    ],
)
def test_header_errors(text, err):
    with pytest.raises(err):
        parse_envi_header(text)


def test_short_file_is_truncation(tmp_path):
    hdr, dat = write_raw(tmp_path, header(), np.arange(23, dtype="<f4").tobytes())
    with pytest.raises(TruncationError):
        load_envi(hdr, dat)


def test_save_single_value(tmp_path):
    save_envi(HsiCube(np.full((1, 1, 1), 5.0)), tmp_path / "a.hdr", tmp_path / "a.img")
    raw = (tmp_path / "a.img").read_bytes()
    assert raw == np.float32(5.0).tobytes() and len(raw) == 4
    assert (tmp_path / "a.hdr").read_text().startswith("ENVI")


@pytest.mark.parametrize("interleave", ["bsq", "bil", "bip"])
def test_round_trip_and_interleave_equivalence(tmp_path, interleave):
    cube = HsiCube(np.arange(24, dtype=float).reshape(3, 4, 2))
    save_envi(cube, tmp_path / "c.hdr", tmp_path / "c.img", interleave)
    back = load_envi(tmp_path / "c.hdr", tmp_path / "c.img")
    np.testing.assert_array_equal(back.values, cube.values)


def test_full_scale_round_trip(tmp_path):
    # 450 lines x 375 samples x 127 bands, float32 on disk
    vals = np.random.default_rng(0).standard_normal((450, 375, 127)).astype(np.float32)
    cube = HsiCube(vals)
    save_envi(cube, tmp_path / "p.hdr", tmp_path / "p.img")
    assert os.path.getsize(tmp_path / "p.img") == 450 * 375 * 127 * 4
    back = load_envi(tmp_path / "p.hdr", tmp_path / "p.img")
    np.testing.assert_array_equal(back.values, cube.values)


@settings(max_examples=25, deadline=None)
@given(
    h=st.integers(1, 5), w=st.integers(1, 5), c=st.integers(1, 4),
    interleave=st.sampled_from(["bsq", "bil", "bip"]), seed=st.integers(0, 2**16),
)
def test_round_trip_property(tmp_path_factory, h, w, c, interleave, seed):
    d = tmp_path_factory.mktemp("rt")
    vals = np.random.default_rng(seed).standard_normal((h, w, c)).astype(np.float32).astype(float)
    save_envi(HsiCube(vals), d / "x.hdr", d / "x.img", interleave)
    np.testing.assert_array_equal(load_envi(d / "x.hdr", d / "x.img").values, vals)


def test_cube_is_immutable():
    cube = HsiCube(np.zeros((2, 2, 1)))
    with pytest.raises(ValueError):
        cube.values[0, 0, 0] = 1.0
    with pytest.raises(ShapeError):
        HsiCube(np.zeros((2, 2)))


def test_nodata_allows_sentinel():
    v = np.ones((2, 2, 1))
    v[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        HsiCube(v)
    v[0, 0, 0] = -9999.0
    assert HsiCube(v, nodata=-9999.0).nodata == -9999.0


# -- radiometric alignment

def test_align_identity_exact(rng):
    ref = HsiCube(rng.random((6, 5, 3)))
    np.testing.assert_array_equal(radiometric_align(ref, ref).values, ref.values)


def test_align_inverts_affine(rng):
    ref = HsiCube(rng.random((6, 5, 3)))
    out = radiometric_align(ref, HsiCube(2 * ref.values + 3))
    np.testing.assert_allclose(out.values, ref.values, rtol=0, atol=1e-14)


def test_align_stats_against_two_pass_oracle(rng):
    ref = HsiCube(rng.random((8, 8, 4)) * 3 + 1)
    tgt = HsiCube(rng.random((8, 8, 4)) * 0.5 - 2)
    out = radiometric_align(ref, tgt).pixels()
    r = ref.pixels()
    for b in range(4):
        n = r.shape[0]
        mean_r = sum(r[:, b]) / n
        std_r = (sum((x - mean_r) ** 2 for x in r[:, b]) / n) ** 0.5
        mean_o = sum(out[:, b]) / n
        std_o = (sum((x - mean_o) ** 2 for x in out[:, b]) / n) ** 0.5
        assert abs(mean_o - mean_r) <= 1e-9 * abs(mean_r)
        assert abs(std_o - std_r) <= 1e-9 * std_r


def test_align_idempotent(rng):
    ref = HsiCube(rng.random((7, 7, 3)))
    once = radiometric_align(ref, HsiCube(rng.random((7, 7, 3)) * 4))
    twice = radiometric_align(ref, once)
    np.testing.assert_allclose(twice.values, once.values, rtol=1e-9)


def test_align_errors(rng):
    ref = HsiCube(rng.random((4, 4, 3)))
    flat = rng.random((4, 4, 3))
    flat[..., 1] = 2.0
    with pytest.raises(DegenerateError, match="band 1"):
        radiometric_align(ref, HsiCube(flat))
    with pytest.raises(ShapeError):
        radiometric_align(ref, HsiCube(rng.random((4, 5, 3))))


# -- patches

def test_full_scale_patch_count():
    grid, _ = extract_patches(HsiCube(np.zeros((450, 375, 1))), 31)
    assert (grid.rows, grid.cols, len(grid)) == (14, 12, 168)


def test_single_patch_is_whole_cube(rng):
    v = rng.random((5, 5, 2))
    _, blocks = extract_patches(HsiCube(v), 5)
    assert blocks.shape == (1, 5, 5, 2)
    np.testing.assert_array_equal(blocks[0], v)


def test_patches_hand_enumerated():
    v = np.arange(25, dtype=float).reshape(5, 5, 1)
    grid, blocks = extract_patches(HsiCube(v), 2)
    assert grid.origins == ((0, 0), (0, 2), (2, 0), (2, 2))
    expected = [0, 1, 5, 6, 2, 3, 7, 8, 10, 11, 15, 16, 12, 13, 17, 18]
    assert blocks.reshape(-1).tolist() == expected


def test_patch_too_large():
    with pytest.raises(ShapeError):
        extract_patches(HsiCube(np.zeros((4, 6, 1))), 5)


@settings(max_examples=40, deadline=None)
@given(h=st.integers(1, 20), w=st.integers(1, 20), m=st.integers(1, 20))
def test_patch_coverage_property(h, w, m):
    if m > min(h, w):
        return
    grid, blocks = extract_patches(HsiCube(np.zeros((h, w, 1))), m)
    cover = np.zeros((h, w), dtype=int)
    for r, c in grid.origins:
        assert r + m <= h and c + m <= w
        cover[r : r + m, c : c + m] += 1
    assert cover.max() == 1
    assert cover.sum() == (m * (h // m)) * (m * (w // m))
    assert len(blocks) == grid.rows * grid.cols


# -- map export

def test_pgm_endpoints_and_constant(tmp_path):
    export_map(np.array([[0.0, 1.0]]), tmp_path / "a.pgm", "pgm16")
    assert read_pgm16(tmp_path / "a.pgm").tolist() == [[0, 65535]]
    raw = (tmp_path / "a.pgm").read_bytes()
    assert raw.startswith(b"P5") and raw.endswith(b"\x00\x00\xff\xff")
    export_map(np.full((2, 3), 7.5), tmp_path / "c.pgm", "pgm16")
    assert not read_pgm16(tmp_path / "c.pgm").any()


def test_csv_round_trip(tmp_path):
    ramp = np.linspace(-1.3, 2.7, 9).reshape(3, 3)
    export_map(ramp, tmp_path / "r.csv", "csv")
    np.testing.assert_allclose(read_map_csv(tmp_path / "r.csv"), ramp, rtol=0, atol=1e-9)
    rows = (tmp_path / "r.csv").read_text().strip().splitlines()
    assert len(rows) == 3 and rows[0].count(",") == 2


def test_export_rejects_nonfinite(tmp_path):
    with pytest.raises(ValueError):
        export_map(np.array([[np.inf]]), tmp_path / "x.csv", "csv")
