import struct

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from pyraflow.core import FlowField
from pyraflow.errors import FormatError, InputError
from pyraflow.io import (FLO_MAGIC, colorize_flow, decode_kitti, encode_kitti, make_colorwheel,
                         mask_path_for, read_flo, read_flow, read_image, read_kitti_png,
                         read_scalar_map, write_flo, write_flow, write_image, write_kitti_png)


class TestFlo:
    def test_round_trip_is_bit_exact(self, tmp_path, rng):
        f = rng.normal(scale=20, size=(7, 9, 2)).astype(np.float32)
        write_flo(tmp_path / "a.flo", f)
        np.testing.assert_array_equal(read_flo(tmp_path / "a.flo"), f)

    def test_layout(self, tmp_path):
        write_flo(tmp_path / "a.flo", np.array([[[1.0, 2.0], [3.0, 4.0]]]))
        raw = (tmp_path / "a.flo").read_bytes()
        assert struct.unpack("<fii", raw[:12]) == (FLO_MAGIC, 2, 1)
        assert struct.unpack("<4f", raw[12:]) == (1.0, 2.0, 3.0, 4.0)

    def test_wrong_magic(self, tmp_path):
        (tmp_path / "a.flo").write_bytes(struct.pack("<fii", 1.0, 1, 1) + bytes(8))
        with pytest.raises(FormatError, match="magic"):
            read_flo(tmp_path / "a.flo")

    def test_truncated_payload_reports_offset(self, tmp_path):
        write_flo(tmp_path / "a.flo", np.zeros((3, 3, 2)))
        raw = (tmp_path / "a.flo").read_bytes()
        (tmp_path / "b.flo").write_bytes(raw[:-5])
        with pytest.raises(FormatError, match=f"byte offset {len(raw) - 5}"):
            read_flo(tmp_path / "b.flo")

    def test_trailing_bytes(self, tmp_path):
        write_flo(tmp_path / "a.flo", np.zeros((2, 2, 2)))
        with open(tmp_path / "a.flo", "ab") as fh:
            fh.write(b"x")
        with pytest.raises(FormatError, match="trailing"):
            read_flo(tmp_path / "a.flo")

    @settings(max_examples=200, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(head=st.binary(max_size=40), w=st.integers(-5, 1 << 22), h=st.integers(-5, 1 << 22),
           tail=st.binary(max_size=64))
    def test_malformed_files_raise_format_error(self, tmp_path, head, w, h, tail):
        path = tmp_path / "fuzz.flo"
        for raw in (head, struct.pack("<fii", FLO_MAGIC, w, h) + tail):
            path.write_bytes(raw)
            try:
                out = read_flo(path)
            except FormatError:
                continue
            assert out.shape == (h, w, 2) and out.dtype == np.float32

    def test_bad_shape(self, tmp_path):
        with pytest.raises(InputError):
            write_flo(tmp_path / "a.flo", np.zeros((2, 2, 3)))


class TestKitti:
    def test_zero_flow(self):
        np.testing.assert_array_equal(encode_kitti(np.zeros((2, 2, 2))), np.full((2, 2, 3), [32768, 32768, 1]))

    def test_example_value(self):
        assert tuple(encode_kitti(np.array([[[1.5, -2.0]]]))[0, 0]) == (32864, 32640, 1)

    def test_invalid_pixels(self):
        enc = encode_kitti(np.full((1, 2, 2), 3.0), np.array([[True, False]]))
        assert tuple(enc[0, 1]) == (32768, 32768, 0)

    def test_out_of_range(self):
        with pytest.raises(InputError):
            encode_kitti(np.full((1, 1, 2), 512.0))

    def test_png_round_trip(self, tmp_path, rng):
        f = rng.uniform(-300, 300, size=(6, 8, 2))
        valid = rng.uniform(size=(6, 8)) > 0.3
        write_kitti_png(tmp_path / "k.png", f, valid)
        back = read_kitti_png(tmp_path / "k.png")
        np.testing.assert_array_equal(back.mask(), valid)
        assert np.abs(back.data[valid] - f[valid]).max() <= 1 / 64
        np.testing.assert_array_equal(encode_kitti(back.data, back.mask()), encode_kitti(f, valid))

    def test_decode_rejects_8bit(self):
        with pytest.raises(FormatError):
            decode_kitti(np.zeros((2, 2, 3), np.uint8))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_kitti_png(tmp_path / "nope.png")


class TestDispatch:
    def test_flo_with_mask_sibling(self, tmp_path, rng):
        f = rng.normal(size=(4, 5, 2))
        valid = rng.uniform(size=(4, 5)) > 0.5
        write_flow(tmp_path / "p.flo", f, valid)
        assert (tmp_path / "p_valid.png").exists()
        assert mask_path_for("x/p.flo") == "x/p_valid.png"
        back = read_flow(tmp_path / "p.flo")
        np.testing.assert_array_equal(back.mask(), valid)
        np.testing.assert_array_equal(back.data, f.astype(np.float32))

    def test_flo_without_mask_is_dense(self, tmp_path):
        write_flow(tmp_path / "p.flo", FlowField(np.ones((2, 3, 2))))
        assert read_flow(tmp_path / "p.flo").mask().all()

    def test_png(self, tmp_path):
        write_flow(tmp_path / "p.png", np.ones((2, 3, 2)))
        np.testing.assert_array_equal(read_flow(tmp_path / "p.png").data, 1.0)

    def test_unknown_extension(self, tmp_path):
        with pytest.raises(FormatError):
            read_flow(tmp_path / "p.npy")


class TestImages:
    def test_image_round_trip(self, tmp_path, rng):
        rgb = rng.integers(0, 256, size=(4, 5, 3)).astype(np.uint8)
        write_image(tmp_path / "i.png", rgb)
        np.testing.assert_allclose(read_image(tmp_path / "i.png"), rgb / 255.0)

    def test_scalar_map_from_npy(self, tmp_path, rng):
        m = rng.uniform(size=(3, 4))
        np.save(tmp_path / "c.npy", m)
        np.testing.assert_array_equal(read_scalar_map(tmp_path / "c.npy"), m)


class TestColorize:
    def test_wheel_size(self):
        assert make_colorwheel().shape == (55, 3)

    def test_zero_flow_is_white(self):
        np.testing.assert_array_equal(colorize_flow(np.zeros((2, 2, 2)), 1.0), 255)

    @pytest.mark.parametrize("direction,rgb", [
        ((1, 0), (255, 0, 0)),      # first entry: pure red
        ((-1, 0), (0, 209, 255)),   # third entry of the cyan-blue ramp
        ((0, 1), (255, 230, 0)),    # halfway between red-yellow entries 13 and 14
        ((0, -1), (88, 0, 255)),    # halfway between blue-magenta entries 4 and 5
    ])
    def test_axis_anchors(self, direction, rgb):
        f = np.array(direction, float).reshape(1, 1, 2)
        assert tuple(colorize_flow(f, 1.0)[0, 0]) == rgb

    def test_saturation(self):
        f = np.array([[[2.0, 0.0], [5.0, 0.0], [1.0, 0.0]]])
        c = colorize_flow(f, 2.0)
        np.testing.assert_array_equal(c[0, 0], c[0, 1])
        assert not np.array_equal(c[0, 2], c[0, 0])

    def test_bad_max(self):
        with pytest.raises(InputError):
            colorize_flow(np.zeros((1, 1, 2)), 0.0)
