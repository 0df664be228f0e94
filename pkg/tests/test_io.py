import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from illumseg import io
from illumseg.model import Codebook
from illumseg.palm import SolverConfig, solve
from illumseg.prox import PdhgConfig


def test_uint8_endpoints(tmp_path):
    Image.fromarray(np.array([[0, 255], [128, 255]], dtype=np.uint8)).save(tmp_path / "a.png")
    F = io.load_image(tmp_path / "a.png")
    assert F[0, 0] == 0.0 and F[0, 1] == 1.0
    assert F[1, 0] == pytest.approx(128 / 255)


def test_16bit_round_trip_within_half_step(tmp_path, rng):
    vol = rng.random((4, 9, 7))
    for target in (tmp_path / "v.raw", tmp_path / "slices"):
        io.save_image(vol, target, bits=16)
        back = io.load_image(target)
        assert back.shape == vol.shape
        # rounding to the nearest of 65536 levels
        assert np.max(np.abs(back - vol)) <= 0.5 / 65535 + 1e-15


def test_16bit_round_trip_on_seeded_volume(tmp_path):
    vol = np.random.default_rng(0).random((3, 16, 16))
    io.save_image(vol, tmp_path / "v.raw", bits=16)
    assert np.max(np.abs(io.load_image(tmp_path / "v.raw") - vol)) <= 2.0**-17


def test_png_16bit_2d(tmp_path, rng):
    img = rng.random((5, 6))
    (p,) = io.save_image(img, tmp_path / "img", bits=16)
    assert p.suffix == ".png"
    assert np.max(np.abs(io.load_image(p) - img)) <= 0.5 / 65535 + 1e-15


def test_slices_sorted_by_filename(tmp_path):
    d = tmp_path / "stack"
    d.mkdir()
    for name, v in (("b.png", 2), ("a.png", 1), ("c.png", 3)):
        Image.fromarray(np.full((2, 3), v, dtype=np.uint8)).save(d / name)
    vol = io.load_image(d)
    np.testing.assert_array_equal(vol[:, 0, 0] * 255, [1, 2, 3])


def test_inconsistent_slices(tmp_path):
    d = tmp_path / "stack"
    d.mkdir()
    Image.fromarray(np.zeros((2, 3), np.uint8)).save(d / "a.png")
    Image.fromarray(np.zeros((3, 3), np.uint8)).save(d / "b.png")
    with pytest.raises(ValueError, match="inconsistent"):
        io.load_image(d)


def test_missing_header_and_file(tmp_path):
    np.zeros(8, np.uint8).tofile(tmp_path / "x.raw")
    with pytest.raises(FileNotFoundError, match="metadata"):
        io.load_image(tmp_path / "x.raw")
    with pytest.raises(FileNotFoundError):
        io.load_image(tmp_path / "nope.png")


def test_raw_size_mismatch(tmp_path):
    io.write_raw(np.zeros((2, 2), np.uint8), tmp_path / "x.raw")
    (tmp_path / "x.hdr").write_text("shape = 3 3\ndtype = uint8\n")
    with pytest.raises(ValueError, match="header shape"):
        io.read_raw(tmp_path / "x.raw")


def test_big_endian_header(tmp_path):
    a = np.arange(6, dtype=">u2").reshape(2, 3)
    a.tofile(tmp_path / "b.raw")
    (tmp_path / "b.hdr").write_text("shape = 2 3\ndtype = uint16\nendian = big\n")
    np.testing.assert_array_equal(io.read_raw(tmp_path / "b.raw"), np.arange(6).reshape(2, 3))


def test_unreadable_and_color(tmp_path):
    (tmp_path / "bad.png").write_bytes(b"not an image")
    with pytest.raises(ValueError, match="cannot read"):
        io.load_image(tmp_path / "bad.png")
    Image.fromarray(np.zeros((2, 2, 3), np.uint8)).save(tmp_path / "rgb.png")
    with pytest.raises(ValueError, match="grayscale"):
        io.load_image(tmp_path / "rgb.png")


def test_to_log_examples():
    eps = 1 / 255
    assert io.to_log(np.array([0.0]))[0] == math.log(eps)
    assert io.to_log(np.array([1 - eps]))[0] == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        io.to_log(np.array([-0.1]))
    with pytest.raises(ValueError):
        io.to_log(np.array([0.5]), epsilon=0.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=30),
       st.floats(1e-4, 0.1))
def test_to_log_round_trip(values, eps):
    F = np.array(values)
    f = io.to_log(F, eps)
    assert np.all(np.isfinite(f))
    np.testing.assert_allclose(np.exp(f) - eps, F, atol=1e-12, rtol=0)


def _small_result(shape=(6, 7), K=3, outer=10, log_every=4):
    rng = np.random.default_rng(3)
    f = np.log(0.2 + 0.6 * rng.random(shape))
    cfg = SolverConfig(outer_iters=outer, log_every=log_every, init_sigma=2.0,
                       inner=PdhgConfig(inner_iters=5))
    return solve(f, K, cfg)


def test_emit_file_contract(tmp_path):
    res = _small_result(outer=10, log_every=4)
    truth = res.labels.copy()
    paths = io.emit_results(res, tmp_path, true_labels=truth)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert sorted(p.name for p in paths) == names
    masks = [n for n in names if n.startswith("mask_")]
    assert masks == ["mask_1.png", "mask_2.png", "mask_3.png"]
    assert "labels.png" in names
    np.testing.assert_array_equal(io.load_labels(tmp_path / "labels.png"), res.labels)
    for k in range(3):
        m = np.array(Image.open(tmp_path / masks[k]))
        np.testing.assert_array_equal(m == 255, res.labels == k)
    with open(tmp_path / "trace.csv") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) - 1 == math.ceil(10 / 4) + 1
    assert "count = 0" in (tmp_path / "misclassification.txt").read_text()
    l_back = io.read_raw(tmp_path / "illumination_log.raw")
    np.testing.assert_array_equal(l_back, res.l)
    rng_txt = (tmp_path / "illumination_range.txt").read_text()
    assert repr(float(np.exp(res.l).max())) in rng_txt


def test_codebook_text(tmp_path):
    res = _small_result(K=2)
    res.c = Codebook(np.array([0.0, math.log(2.0)]))
    io.emit_results(res, tmp_path)
    vals = [float(t) for t in (tmp_path / "codebook.txt").read_text().split()]
    assert vals == pytest.approx([1.0, 2.0], rel=1e-15)


def test_emit_3d(tmp_path):
    res = _small_result(shape=(3, 4, 5), K=2, outer=3, log_every=1)
    io.emit_results(res, tmp_path)
    assert (tmp_path / "labels.raw").exists() and (tmp_path / "labels.hdr").exists()
    assert (tmp_path / "mask_1.raw").exists() and (tmp_path / "mask_2.raw").exists()
    np.testing.assert_array_equal(io.load_labels(tmp_path / "labels.raw"), res.labels)


def test_trace_is_locale_independent(tmp_path, monkeypatch):
    res = _small_result()
    monkeypatch.setenv("LC_NUMERIC", "de_DE.UTF-8")
    io.emit_results(res, tmp_path)
    header, first = (tmp_path / "trace.csv").read_text().splitlines()[:2]
    assert header.split(",")[0] == "iteration"
    float(first.split(",")[1])
