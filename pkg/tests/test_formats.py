import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from multilight.formats import FormatError, parse_pfm, read_pfm, read_png16, write_pfm, write_png16

finite32 = st.floats(-2.0 ** 100, 2.0 ** 100, width=32, allow_nan=False, allow_infinity=False, allow_subnormal=False)


def test_pfm_layout(tmp_path):
    img = np.arange(18, dtype=np.float32).reshape(2, 3, 3)
    write_pfm(img, tmp_path / "a.pfm")
    raw = (tmp_path / "a.pfm").read_bytes()
    header = b"PF\n3 2\n-1.0\n"
    assert raw[:len(header)] == header and len(header) == 12
    assert len(raw) == 12 + 72
    # rows are stored bottom to top, little-endian
    assert np.frombuffer(raw[12:24], "<f4").tolist() == [9.0, 10.0, 11.0]


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.sampled_from([1, 3]), st.data())
def test_pfm_bit_exact(tmp_path_factory, h, w, c, data):
    shape = (h, w) if c == 1 else (h, w, 3)
    img = data.draw(arrays(np.float32, shape, elements=finite32)).astype(np.float64)
    path = tmp_path_factory.mktemp("pfm") / "x.pfm"
    write_pfm(img, path)
    back = read_pfm(path)
    assert back.shape == shape
    assert back.astype(np.float32).tobytes() == img.astype(np.float32).tobytes()


def test_pfm_errors():
    with pytest.raises(FormatError, match="zero dimension"):
        parse_pfm(b"PF\n0 0\n-1.0\n")
    with pytest.raises(FormatError, match="byte offset 0"):
        parse_pfm(b"P6\n1 1\n255\n")
    with pytest.raises(FormatError, match="byte offset 3"):
        parse_pfm(b"PF\nx 1\n-1.0\n")
    with pytest.raises(FormatError, match="truncated payload at byte offset 18"):
        parse_pfm(b"PF\n1 1\n-1.0\n" + b"\0" * 6)
    with pytest.raises(FormatError, match="trailing data at byte offset 24"):
        parse_pfm(b"PF\n1 1\n-1.0\n" + b"\0" * 13)
    with pytest.raises(FormatError, match="missing newline"):
        parse_pfm(b"PF")
    with pytest.raises(FormatError, match="zero scale"):
        parse_pfm(b"Pf\n1 1\n0\n" + b"\0" * 4)


def test_pfm_big_endian_read():
    data = b"Pf\n2 1\n1.0\n" + np.array([1.5, -2.0], ">f4").tobytes()
    np.testing.assert_array_equal(parse_pfm(data), [[1.5, -2.0]])


def test_pfm_write_rejects():
    with pytest.raises(ValueError):
        write_pfm(np.full((2, 2), np.inf), "/dev/null")
    with pytest.raises(ValueError):
        write_pfm(np.zeros((2, 2, 2)), "/dev/null")


def test_png16_roundtrip(tmp_path):
    g = np.random.default_rng(0)
    rgb = g.uniform(0, 1, (5, 7, 3))
    gray = g.uniform(0, 1, (5, 7))
    write_png16(rgb, tmp_path / "rgb.png")
    write_png16(gray, tmp_path / "g.png")
    assert np.max(np.abs(read_png16(tmp_path / "rgb.png") - rgb)) <= 0.5 / 65535 + 1e-12
    back = read_png16(tmp_path / "g.png")
    assert back.shape == (5, 7)
    assert np.max(np.abs(back - gray)) <= 0.5 / 65535 + 1e-12
    raw = (tmp_path / "rgb.png").read_bytes()
    assert raw[:8] == b"\x89PNG\r\n\x1a\n"
    # IHDR: bit depth 16, no interlace
    assert raw[24] == 16 and raw[28] == 0


def test_png16_bad_file(tmp_path):
    (tmp_path / "x.png").write_bytes(b"not a png")
    with pytest.raises(FormatError):
        read_png16(tmp_path / "x.png")
