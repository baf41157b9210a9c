import struct

import numpy as np
import pytest

from qbench import Volume, VolumeFormatError, load_volume, read_container, read_pgm_stack, write_container
from conftest import volume_from


def write_pgm(path, image, maxval=65535):
    image = np.asarray(image)
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n{maxval}\n".encode()
    if maxval > 255:
        payload = image.astype(">u2").tobytes()
    else:
        payload = image.astype("u1").tobytes()
    path.write_bytes(header + payload)


class TestContainerRoundTrip:
    def test_u16_round_trip_byte_identical(self, tmp_path):
        vol = volume_from(np.array([[[0.0, 1.0], [3.0, 0.0]]]), voxel=(1.0, 1.0, 2.5))
        path = tmp_path / "vol.qvol"
        write_container(path, vol, dtype="u16")
        loaded = read_container(path)
        assert loaded.intensity_max == 3.0
        assert np.array_equal(loaded.data, vol.data)
        assert loaded.voxel_size == vol.voxel_size
        again = tmp_path / "again.qvol"
        write_container(again, loaded, dtype="u16")
        assert path.read_bytes() == again.read_bytes()

    def test_f32_round_trip_byte_identical(self, tmp_path):
        rng = np.random.default_rng(3)
        vol = volume_from(rng.random((4, 6, 5)).astype(np.float32).astype(np.float64) * 100)
        path = tmp_path / "vol.qvol"
        write_container(path, vol, dtype="f32")
        loaded = read_container(path)
        again = tmp_path / "again.qvol"
        write_container(again, loaded, dtype="f32")
        assert path.read_bytes() == again.read_bytes()

    def test_header_contents(self, tmp_path):
        vol = volume_from(np.zeros((2, 3, 4)), voxel=(0.5, 1.0, 2.0))
        path = tmp_path / "vol.qvol"
        write_container(path, vol, dtype="u16")
        header = path.read_bytes().split(b"\n", 1)[0].decode()
        assert header == "QVOL1 dims=4,3,2 voxel_size_mm=0.5,1.0,2.0 dtype=u16 byteorder=le"

    def test_u16_requires_integral_values(self, tmp_path):
        vol = volume_from(np.array([[[0.5]]]))
        with pytest.raises(ValueError, match="integral"):
            write_container(tmp_path / "x.qvol", vol, dtype="u16")
        big = volume_from(np.array([[[70000.0]]]))
        with pytest.raises(ValueError):
            write_container(tmp_path / "y.qvol", big, dtype="u16")


class TestContainerErrors:
    def good_bytes(self):
        header = b"QVOL1 dims=2,2,1 voxel_size_mm=1.0,1.0,1.0 dtype=u16 byteorder=le\n"
        payload = struct.pack("<4H", 0, 1, 3, 0)
        return header + payload

    def test_example_decode(self, tmp_path):
        path = tmp_path / "ok.qvol"
        path.write_bytes(self.good_bytes())
        vol = read_container(path)
        assert vol.shape == (1, 2, 2)
        assert vol.intensity_max == 3.0

    def test_short_payload(self, tmp_path):
        path = tmp_path / "short.qvol"
        path.write_bytes(self.good_bytes()[:-1])
        with pytest.raises(VolumeFormatError, match="payload"):
            read_container(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.qvol"
        path.write_bytes(b"QVOL9" + self.good_bytes()[5:])
        with pytest.raises(VolumeFormatError, match="magic"):
            read_container(path)

    def test_bad_dtype(self, tmp_path):
        path = tmp_path / "bad.qvol"
        path.write_bytes(self.good_bytes().replace(b"dtype=u16", b"dtype=i32"))
        with pytest.raises(VolumeFormatError, match="dtype"):
            read_container(path)

    def test_missing_header_key(self, tmp_path):
        path = tmp_path / "bad.qvol"
        path.write_bytes(self.good_bytes().replace(b" byteorder=le", b""))
        with pytest.raises(VolumeFormatError, match="header keys"):
            read_container(path)

    def test_negative_f32_rejected(self, tmp_path):
        header = b"QVOL1 dims=2,1,1 voxel_size_mm=1.0,1.0,1.0 dtype=f32 byteorder=le\n"
        payload = struct.pack("<2f", 1.0, -2.0)
        path = tmp_path / "neg.qvol"
        path.write_bytes(header + payload)
        with pytest.raises(VolumeFormatError, match="negative"):
            read_container(path)

    def test_nonfinite_f32_rejected(self, tmp_path):
        header = b"QVOL1 dims=2,1,1 voxel_size_mm=1.0,1.0,1.0 dtype=f32 byteorder=le\n"
        payload = struct.pack("<2f", 1.0, float("nan"))
        path = tmp_path / "nan.qvol"
        path.write_bytes(header + payload)
        with pytest.raises(VolumeFormatError, match="non-finite"):
            read_container(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(VolumeFormatError, match="no such file"):
            load_volume(tmp_path / "absent.qvol")

    def test_no_temp_files_left_behind(self, tmp_path):
        vol = volume_from(np.zeros((1, 2, 2)))
        write_container(tmp_path / "v.qvol", vol)
        assert sorted(p.name for p in tmp_path.iterdir()) == ["v.qvol"]


class TestPgmStack:
    def test_stack_import(self, tmp_path):
        rng = np.random.default_rng(9)
        slices = (rng.random((8, 10)) * 1000).astype(int)
        for i in range(3):
            write_pgm(tmp_path / f"slice_{i:03d}.pgm", slices + i)
        with pytest.warns(UserWarning, match="voxel size"):
            vol = read_pgm_stack(tmp_path)
        assert vol.shape == (3, 8, 10)
        assert vol.voxel_size == (1.0, 1.0, 1.0)
        assert np.array_equal(vol.data[0], slices.astype(float))

    def test_lexicographic_order(self, tmp_path):
        write_pgm(tmp_path / "b.pgm", np.full((2, 2), 2))
        write_pgm(tmp_path / "a.pgm", np.full((2, 2), 1))
        with pytest.warns(UserWarning):
            vol = read_pgm_stack(tmp_path)
        assert vol.data[0, 0, 0] == 1.0 and vol.data[1, 0, 0] == 2.0

    def test_eight_bit_pgm(self, tmp_path):
        write_pgm(tmp_path / "only.pgm", np.arange(4).reshape(2, 2), maxval=255)
        with pytest.warns(UserWarning):
            vol = read_pgm_stack(tmp_path)
        assert vol.intensity_max == 3.0

    def test_dimension_mismatch(self, tmp_path):
        write_pgm(tmp_path / "a.pgm", np.zeros((2, 2)))
        write_pgm(tmp_path / "b.pgm", np.zeros((3, 3)))
        with pytest.raises(VolumeFormatError, match="expected"):
            read_pgm_stack(tmp_path)

    def test_empty_directory(self, tmp_path):
        with pytest.raises(VolumeFormatError, match="no .pgm"):
            read_pgm_stack(tmp_path)

    def test_load_volume_dispatches_to_directory(self, tmp_path):
        write_pgm(tmp_path / "s0.pgm", np.ones((4, 4)))
        with pytest.warns(UserWarning):
            vol = load_volume(tmp_path)
        assert isinstance(vol, Volume)
        assert vol.n_slices == 1

    def test_comment_in_header(self, tmp_path):
        img = np.full((2, 2), 7)
        header = b"P5\n# scanner export\n2 2\n65535\n"
        (tmp_path / "c.pgm").write_bytes(header + img.astype(">u2").tobytes())
        with pytest.warns(UserWarning):
            vol = read_pgm_stack(tmp_path)
        assert np.all(vol.data == 7.0)
