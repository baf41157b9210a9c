"""Volume file formats: the QVOL1 container and 16-bit PGM slice stacks.

QVOL1 is a minimal bit-exact container: one ASCII header line followed by the
raw little-endian pixel payload, slice-major then row-major:

    QVOL1 dims=W,H,N voxel_size_mm=X,Y,Z dtype=u16 byteorder=le\\n
    <W*H*N samples, u16 or f32, little-endian>

Floats in the header are written in repr form, which round-trips exactly;
files written by :func:`write_container` re-serialize byte-identically after
a load. PGM stacks are directories of binary (P5) PGM files, imported in
lexicographic filename order with a default voxel size of 1 mm isotropic.
"""

from __future__ import annotations

import os
import tempfile
import warnings
from pathlib import Path

import numpy as np

from .volume import Volume

__all__ = ["VolumeFormatError", "read_container", "write_container", "read_pgm_stack", "load_volume"]

_MAGIC = "QVOL1"
_DTYPES = {"u16": np.dtype("<u2"), "f32": np.dtype("<f4")}
_HEADER_LIMIT = 4096


class VolumeFormatError(ValueError):
    """Malformed or inconsistent volume file."""


def _format_float(v: float) -> str:
    return repr(float(v))


def _parse_header(line: bytes, path: Path) -> tuple[tuple[int, int, int], tuple[float, ...], str]:
    try:
        text = line.decode("ascii").rstrip("\n")
    except UnicodeDecodeError as exc:
        raise VolumeFormatError(f"{path}: header is not ASCII") from exc
    tokens = text.split(" ")
    if not tokens or tokens[0] != _MAGIC:
        raise VolumeFormatError(f"{path}: bad magic, expected {_MAGIC!r}")
    fields = {}
    for tok in tokens[1:]:
        key, sep, value = tok.partition("=")
        if not sep or key in fields:
            raise VolumeFormatError(f"{path}: malformed header token {tok!r}")
        fields[key] = value
    required = {"dims", "voxel_size_mm", "dtype", "byteorder"}
    if set(fields) != required:
        raise VolumeFormatError(f"{path}: header keys {sorted(fields)} != {sorted(required)}")
    try:
        dims = tuple(int(v) for v in fields["dims"].split(","))
        voxel = tuple(float(v) for v in fields["voxel_size_mm"].split(","))
    except ValueError as exc:
        raise VolumeFormatError(f"{path}: unparsable dims/voxel_size_mm") from exc
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise VolumeFormatError(f"{path}: dims must be three positive integers, got {fields['dims']!r}")
    if len(voxel) != 3 or any(v <= 0 for v in voxel):
        raise VolumeFormatError(f"{path}: voxel_size_mm must be three positive reals")
    if fields["dtype"] not in _DTYPES:
        raise VolumeFormatError(f"{path}: dtype must be one of {sorted(_DTYPES)}")
    if fields["byteorder"] != "le":
        raise VolumeFormatError(f"{path}: byteorder must be 'le'")
    return dims, voxel, fields["dtype"]


def read_container(path) -> Volume:
    """Load a QVOL1 container."""
    path = Path(path)
    raw = path.read_bytes()
    nl = raw.find(b"\n", 0, _HEADER_LIMIT)
    if nl < 0:
        raise VolumeFormatError(f"{path}: missing header line")
    (w, h, n), voxel, dtype = _parse_header(raw[: nl + 1], path)
    payload = raw[nl + 1 :]
    expected = w * h * n * _DTYPES[dtype].itemsize
    if len(payload) != expected:
        raise VolumeFormatError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    samples = np.frombuffer(payload, dtype=_DTYPES[dtype]).astype(np.float64)
    if dtype == "f32":
        if not np.all(np.isfinite(samples)):
            raise VolumeFormatError(f"{path}: f32 payload contains non-finite values")
        if samples.size and samples.min() < 0:
            raise VolumeFormatError(f"{path}: f32 payload contains negative values")
    return Volume.from_array(samples.reshape(n, h, w), voxel)


def _write_atomic(path: Path, blob: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_container(path, volume: Volume, dtype: str = "f32") -> None:
    """Write a QVOL1 container atomically (temp file + rename).

    dtype 'u16' requires every pixel to be an integer in [0, 65535]; 'f32'
    stores the values rounded to single precision.
    """
    path = Path(path)
    if dtype not in _DTYPES:
        raise ValueError(f"dtype must be one of {sorted(_DTYPES)}")
    data = volume.data
    if dtype == "u16":
        if not np.array_equal(data, np.rint(data)) or data.max() > 65535:
            raise ValueError("u16 container requires integral pixel values in [0, 65535]")
        payload = data.astype("<u2").tobytes()
    else:
        payload = data.astype("<f4").tobytes()
    n, h, w = volume.shape
    header = "{} dims={},{},{} voxel_size_mm={} dtype={} byteorder=le\n".format(
        _MAGIC, w, h, n, ",".join(_format_float(v) for v in volume.voxel_size), dtype
    )
    _write_atomic(path, header.encode("ascii") + payload)


def _read_pgm(path: Path) -> np.ndarray:
    """Binary (P5) PGM; samples are big-endian 16-bit when maxval > 255."""
    raw = path.read_bytes()
    pos = 0

    def token() -> bytes:
        nonlocal pos
        while pos < len(raw):
            if raw[pos : pos + 1].isspace():
                pos += 1
            elif raw[pos : pos + 1] == b"#":
                while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                    pos += 1
            else:
                break
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise VolumeFormatError(f"{path}: truncated PGM header")
        return raw[start:pos]

    if token() != b"P5":
        raise VolumeFormatError(f"{path}: not a binary (P5) PGM file")
    try:
        width, height, maxval = int(token()), int(token()), int(token())
    except ValueError as exc:
        raise VolumeFormatError(f"{path}: unparsable PGM header") from exc
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise VolumeFormatError(f"{path}: invalid PGM dimensions or maxval")
    pos += 1  # single whitespace after maxval
    sample = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = width * height * sample.itemsize
    payload = raw[pos : pos + expected]
    if len(payload) != expected:
        raise VolumeFormatError(f"{path}: PGM payload is {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype=sample).astype(np.float64).reshape(height, width)


def read_pgm_stack(directory) -> Volume:
    """Load a directory of PGM slices, ordered by filename."""
    directory = Path(directory)
    paths = sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() == ".pgm")
    if not paths:
        raise VolumeFormatError(f"{directory}: no .pgm files found")
    images = [_read_pgm(p) for p in paths]
    shape = images[0].shape
    for p, img in zip(paths, images):
        if img.shape != shape:
            raise VolumeFormatError(
                f"{p}: slice is {img.shape[1]}x{img.shape[0]}, expected {shape[1]}x{shape[0]}"
            )
    warnings.warn("PGM stacks carry no voxel size; defaulting to 1 mm isotropic", stacklevel=2)
    return Volume.from_array(np.stack(images), (1.0, 1.0, 1.0))


def load_volume(path) -> Volume:
    """Load either a QVOL1 container file or a directory of PGM slices."""
    path = Path(path)
    if path.is_dir():
        return read_pgm_stack(path)
    if not path.exists():
        raise VolumeFormatError(f"{path}: no such file")
    return read_container(path)
