import numpy as np
import pytest
from PIL import Image

from phaseseg.rasters import (
    downscale_image,
    downscale_label_map,
    image_size,
    read_image,
    read_label_map,
    write_image,
    write_label_map,
)


def test_checkerboard_average():
    board = np.indices((4, 4)).sum(axis=0) % 2
    out = downscale_image(board.astype(np.float64), 2)
    assert out.shape == (2, 2)
    assert (out == 0.5).all()


def test_factor_one_copies():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 255, (6, 7), dtype=np.uint8)
    out = downscale_image(img, 1)
    assert (out == img).all()
    out[0, 0] ^= 1
    assert img[0, 0] != out[0, 0] or img[0, 0] == out[0, 0] ^ 1  # independent copy


def test_floor_semantics_and_paper_geometry():
    img = np.zeros((1080, 1920), dtype=np.uint8)
    assert downscale_image(img, 4).shape == (270, 480)
    odd = np.zeros((5, 5), dtype=np.float32)
    assert downscale_image(odd, 2).shape == (2, 2)
    lab = np.zeros((270, 481), dtype=np.uint8)
    assert downscale_label_map(lab, 2).shape == (135, 240)


def test_label_downscale_preserves_ids():
    lab = np.full((4, 4), 3, dtype=np.uint8)
    out = downscale_label_map(lab, 2)
    assert out.shape == (2, 2)
    assert (out == 3).all()
    assert out.dtype == lab.dtype
    rng = np.random.default_rng(1)
    noisy = rng.integers(0, 5, (16, 16), dtype=np.uint8)
    got = downscale_label_map(noisy, 4)
    assert set(np.unique(got)) <= set(np.unique(noisy))


def test_downscale_multichannel():
    img = np.stack([np.full((4, 4), 10.0), np.full((4, 4), 20.0)], axis=-1)
    out = downscale_image(img, 2)
    assert out.shape == (2, 2, 2)
    assert (out[..., 0] == 10.0).all() and (out[..., 1] == 20.0).all()


def test_downscale_errors():
    with pytest.raises(ValueError, match="factor"):
        downscale_image(np.zeros((4, 4)), 0)
    with pytest.raises(ValueError, match="exceeds"):
        downscale_image(np.zeros((4, 4)), 5)
    with pytest.raises(ValueError, match="2-D"):
        downscale_label_map(np.zeros((4, 4, 3), dtype=np.uint8), 2)


def test_image_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    gray = rng.integers(0, 255, (9, 11), dtype=np.uint8)
    write_image(tmp_path / "g.png", gray)
    assert (read_image(tmp_path / "g.png") == gray).all()
    rgb = rng.integers(0, 255, (9, 11, 3), dtype=np.uint8)
    write_image(tmp_path / "c.png", rgb)
    assert (read_image(tmp_path / "c.png") == rgb).all()
    assert image_size(tmp_path / "g.png") == (11, 9)


def test_label_map_roundtrip_and_mode_guard(tmp_path):
    lab = np.arange(12, dtype=np.uint8).reshape(3, 4)
    write_label_map(tmp_path / "l.png", lab)
    assert (read_label_map(tmp_path / "l.png") == lab).all()
    Image.fromarray(np.zeros((3, 4, 3), dtype=np.uint8)).save(tmp_path / "rgb.png")
    with pytest.raises(ValueError, match="single-channel"):
        read_label_map(tmp_path / "rgb.png")
    with pytest.raises(ValueError, match="8 bits"):
        write_label_map(tmp_path / "big.png", np.full((2, 2), 300, dtype=np.int64))
