import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from texclass.raster import (
    ANGULAR_TO_SQUARE_8, SQUARE_8, LabelMask, PgmHeaderError, PgmTruncatedError, Raster,
    RasterError, Rect, UnsupportedMagicError, crop, geometry, load_mask, load_pgm, load_raw,
    read_rects, sample_circular, save_mask, save_pgm, write_rects,
)


def write(path, data: bytes):
    path.write_bytes(data)
    return path


class TestRasterType:
    def test_values_checked_against_depth(self):
        with pytest.raises(RasterError):
            Raster(np.array([[256]]), depth=8)
        assert Raster(np.array([[65535]]), depth=16).maxval == 65535

    def test_unsupported_depth(self):
        with pytest.raises(RasterError):
            Raster(np.zeros((2, 2)), depth=12)

    def test_pixels_are_read_only(self):
        r = Raster(np.zeros((2, 3)))
        assert (r.width, r.height) == (3, 2)
        with pytest.raises(ValueError):
            r.pixels[0, 0] = 1

    def test_label_mask(self):
        m = LabelMask(np.array([[0, 1], [3, 2]]))
        assert m.num_classes == 3
        with pytest.raises(RasterError):
            LabelMask(np.array([[300]]))


class TestPgm:
    def test_two_by_two_bytes(self, tmp_path):
        p = write(tmp_path / "a.pgm", b"P5\n2 2\n255\n" + bytes([0, 85, 170, 255]))
        r = load_pgm(p)
        assert r.depth == 8 and (r.width, r.height) == (2, 2)
        assert r.pixels.ravel().tolist() == [0, 85, 170, 255]

    def test_sixteen_bit_is_big_endian(self, tmp_path):
        p = write(tmp_path / "b.pgm", b"P5\n1 1\n65535\n" + bytes([0x01, 0x00]))
        r = load_pgm(p)
        assert r.depth == 16 and int(r.pixels[0, 0]) == 256

    def test_color_magic_rejected(self, tmp_path):
        p = write(tmp_path / "c.ppm", b"P6\n1 1\n255\n" + bytes(3))
        with pytest.raises(UnsupportedMagicError, match="unsupported magic"):
            load_pgm(p)

    def test_comments_in_header(self, tmp_path):
        p = write(tmp_path / "d.pgm", b"P5 # made by hand\n# another\n3 1\n255\n" + bytes([1, 2, 3]))
        assert load_pgm(p).pixels.tolist() == [[1, 2, 3]]

    def test_truncated_payload(self, tmp_path):
        p = write(tmp_path / "e.pgm", b"P5\n4 4\n255\n" + bytes(10))
        with pytest.raises(PgmTruncatedError):
            load_pgm(p)

    @pytest.mark.parametrize("data", [b"P5\n4\n", b"P5\nx 4\n255\n", b"P5\n0 4\n255\n",
                                      b"P5\n1 1\n70000\n\0\0", b"hello"])
    def test_malformed_header(self, tmp_path, data):
        with pytest.raises(PgmHeaderError):
            load_pgm(write(tmp_path / "f.pgm", data))

    def test_save_writes_maxval_255(self, tmp_path):
        save_pgm(Raster(np.array([[1, 2]])), tmp_path / "g.pgm")
        assert (tmp_path / "g.pgm").read_bytes().startswith(b"P5\n2 1\n255\n")

    def test_save_unwritable(self, tmp_path):
        with pytest.raises(OSError):
            save_pgm(Raster(np.zeros((1, 1))), tmp_path / "missing" / "x.pgm")

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 9), st.integers(1, 9), st.sampled_from([8, 16]), st.data())
    def test_round_trip(self, tmp_path_factory, w, h, depth, data):
        top = (1 << depth) - 1
        px = np.array(data.draw(st.lists(st.integers(0, top), min_size=w * h, max_size=w * h)))
        r = Raster(px.reshape(h, w), depth)
        path = tmp_path_factory.mktemp("rt") / "x.pgm"
        save_pgm(r, path)
        assert load_pgm(path) == r

    def test_mask_round_trip(self, tmp_path):
        m = LabelMask(np.array([[0, 1, 2], [5, 4, 3]]))
        save_mask(m, tmp_path / "m.pgm")
        assert load_mask(tmp_path / "m.pgm") == m

    def test_raw_sixteen_bit(self, tmp_path):
        p = write(tmp_path / "r.raw", bytes([0, 1, 1, 0]))
        assert load_raw(p, 2, 1, 16).pixels.tolist() == [[1, 256]]
        with pytest.raises(PgmTruncatedError):
            load_raw(p, 3, 1, 16)


class TestCropAndRects:
    def test_full_extent_is_identity(self):
        r = Raster(np.arange(12).reshape(3, 4))
        assert crop(r, Rect(0, 0, 4, 3)) == r

    def test_single_pixel(self):
        r = Raster(np.arange(12).reshape(3, 4))
        assert crop(r, Rect(2, 1, 1, 1)).pixels.tolist() == [[6]]

    def test_out_of_bounds(self):
        with pytest.raises(RasterError):
            crop(Raster(np.zeros((3, 4))), Rect(1, 0, 4, 1))

    def test_rect_file_round_trip(self, tmp_path):
        rects = [(1, Rect(0, 0, 5, 5)), (2, Rect(3, 4, 6, 7))]
        write_rects(tmp_path / "r.txt", rects)
        assert read_rects(tmp_path / "r.txt") == rects

    def test_rect_file_errors(self, tmp_path):
        (tmp_path / "bad.txt").write_text("# header\n1 2 3\n")
        with pytest.raises(ValueError, match=":2:"):
            read_rects(tmp_path / "bad.txt")


class TestSampling:
    def test_flat(self):
        r = Raster(np.full((9, 9), 7))
        for P, R in [(8, 1), (16, 2), (24, 3), (12, 2.5)]:
            assert np.all(sample_circular(r, 4, 4, P, R) == 7)

    def test_three_by_three_order(self):
        patch = np.array([[1, 2, 3], [8, 0, 4], [7, 6, 5]])
        assert sample_circular(Raster(patch), 1, 1, 8, 1).tolist() == [1, 2, 3, 4, 5, 6, 7, 8]

    def test_mapping_table(self):
        # angular sample p of an 8-point circle sits on SQUARE_8[ANGULAR_TO_SQUARE_8[p]]
        for p, q in enumerate(ANGULAR_TO_SQUARE_8):
            a = 2 * math.pi * p / 8
            dy, dx = SQUARE_8[q]
            assert (np.sign(round(math.sin(a), 9)), np.sign(round(math.cos(a), 9))) == (dy, dx)

    def test_ramp_is_reproduced(self):
        x = np.tile(np.arange(20), (20, 1))
        s = sample_circular(Raster(x), 10, 10, 16, 2)
        want = [10 + 2 * math.cos(2 * math.pi * p / 16) for p in range(16)]
        assert np.allclose(s, want, atol=1e-9, rtol=0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 20), st.integers(-3, 3), st.integers(-3, 3), st.integers(-1, 1),
           st.sampled_from([(16, 2), (24, 3), (12, 2.5), (6, 1.5)]))
    def test_bilinear_functions_exact(self, a, b, c, d, scale):
        P, R = scale
        y, x = np.mgrid[0:11, 0:11]
        f = a + b * x + c * y + d * x * y + 200
        s = sample_circular(Raster(f, 16), 5, 5, P, R)
        for p in range(P):
            ang = 2 * math.pi * p / P
            xx, yy = 5 + R * math.cos(ang), 5 + R * math.sin(ang)
            assert abs(s[p] - (a + b * xx + c * yy + d * xx * yy + 200)) < 1e-9

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31), st.integers(0, 100), st.sampled_from([(8, 1), (16, 2), (24, 3)]))
    def test_constant_shift(self, seed, c, scale):
        img = np.random.default_rng(seed).integers(0, 150, (9, 9))
        a = sample_circular(Raster(img), 4, 4, *scale)
        b = sample_circular(Raster(img + c), 4, 4, *scale)
        assert np.allclose(b - a, c, atol=1e-9, rtol=0)

    def test_matches_oracle(self):
        img = np.random.default_rng(5).integers(0, 256, (15, 15))
        rows = img.tolist()
        for P, R in [(8, 1), (16, 2), (24, 3), (10, 1.5)]:
            got = sample_circular(Raster(img), 7, 7, P, R)
            assert np.allclose(got, oracles.circle_samples(rows, 7, 7, P, R), atol=1e-9, rtol=0)

    def test_circle_must_fit(self):
        with pytest.raises(RasterError):
            sample_circular(Raster(np.zeros((5, 5))), 1, 2, 16, 2)

    def test_bad_scale(self):
        with pytest.raises(RasterError):
            geometry(3, 1)
        with pytest.raises(RasterError):
            geometry(8, 0.5)
