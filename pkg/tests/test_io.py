import struct

import numpy as np
import pytest

from candflow.io import (BadMagic, DimensionMismatch, FloError, TruncatedPayload, read_flo, read_image,
                         read_occlusion, unknown_mask, write_flo, write_image, write_occlusion)


def test_two_by_one_byte_layout(tmp_path):
    path = tmp_path / "a.flo"
    write_flo(np.array([[[1.0, 2.0], [3.0, 4.0]]]), path)
    data = path.read_bytes()
    assert len(data) == 28
    assert data == struct.pack("<f", 202021.25) + struct.pack("<ii", 2, 1) + struct.pack("<4f", 1, 2, 3, 4)
    assert data[:4] == b"PIEH"


def test_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    flow = (rng.normal(size=(7, 11, 2)) * 50).astype(np.float32)
    flow[0, 0] = (1e10, -1e10)
    write_flo(flow, tmp_path / "r.flo")
    back = read_flo(tmp_path / "r.flo")
    assert back.dtype == np.float32
    assert back.tobytes() == flow.tobytes()


def test_errors(tmp_path):
    good = tmp_path / "g.flo"
    write_flo(np.zeros((3, 4, 2)), good)
    raw = good.read_bytes()
    cases = {
        "magic.flo": (struct.pack("<f", 0.0) + raw[4:], BadMagic),
        "empty.flo": (b"", BadMagic),
        "header.flo": (raw[:8], TruncatedPayload),
        "payload.flo": (raw[:-4], TruncatedPayload),
        "trailing.flo": (raw + b"\0\0\0\0", DimensionMismatch),
        "negative.flo": (raw[:4] + struct.pack("<ii", -4, 3) + raw[12:], DimensionMismatch),
    }
    for name, (blob, exc) in cases.items():
        (tmp_path / name).write_bytes(blob)
        with pytest.raises(exc) as info:
            read_flo(tmp_path / name)
        assert isinstance(info.value, FloError) and isinstance(info.value, OSError)
    assert len({exc.code for _, exc in cases.values()}) == 3
    with pytest.raises(FileNotFoundError):
        read_flo(tmp_path / "missing.flo")
    with pytest.raises(ValueError):
        write_flo(np.zeros((3, 4)), tmp_path / "bad.flo")


def test_unknown_mask():
    f = np.zeros((2, 2, 2))
    f[0, 0, 0] = 1e9 + 1e3
    f[1, 1, 1] = np.nan
    f[0, 1, 1] = 1e9
    np.testing.assert_array_equal(unknown_mask(f), [[True, False], [False, True]])


def test_image_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    img = rng.integers(0, 256, (5, 6, 3)).astype(np.float64) / 255
    write_image(img, tmp_path / "i.png")
    np.testing.assert_allclose(read_image(tmp_path / "i.png"), img, atol=1e-12)
    write_image(img[..., 0], tmp_path / "g.png")
    g = read_image(tmp_path / "g.png")
    assert g.shape == (5, 6, 3) and np.allclose(g[..., 0], g[..., 2])


def test_occlusion_png(tmp_path):
    occ = np.array([[0, 1], [1, 0]], np.uint8)
    write_occlusion(occ, tmp_path / "o.png")
    np.testing.assert_array_equal(read_occlusion(tmp_path / "o.png"), occ)
