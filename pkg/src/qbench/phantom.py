"""Synthetic magnitude volumes with complex Gaussian noise.

Ground-truth phantoms for calibrating and testing the estimators: a noiseless
template (uniform background plus painted objects, identical across slices)
whose pixel values act as the real channel of a complex signal, corrupted by
independent zero-mean Gaussian noise on both channels. The magnitude of the
result is Rician per pixel, Rayleigh where the template is zero.

Determinism contract: the noise stream comes from numpy's PCG64 bit generator
seeded with the spec seed, drawing the full real-channel block first and the
imaginary block second, each in C order over (slice, row, column). Identical
(spec, seed) therefore reproduce volumes bit-exactly on the same numpy build.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import Volume

__all__ = [
    "PhantomObject",
    "PhantomSpec",
    "render_template",
    "add_complex_gaussian",
    "quantize",
    "generate",
]


@dataclass(frozen=True)
class PhantomObject:
    """One painted object: a disk (size = radius) or an axis-aligned rect
    (size = (width, height)), centered at (cx, cy) in pixel coordinates."""

    shape: str
    center: tuple[float, float]
    size: float | tuple[float, float]
    value: float

    def __post_init__(self):
        if self.shape not in ("disk", "rect"):
            raise ValueError("object shape must be 'disk' or 'rect'")
        if self.value < 0:
            raise ValueError("object value must be >= 0")
        if self.shape == "disk":
            if not np.isscalar(self.size) or self.size <= 0:
                raise ValueError("disk size is a positive radius")
            object.__setattr__(self, "size", float(self.size))
        else:
            try:
                w, h = (float(v) for v in self.size)
            except (TypeError, ValueError):
                raise ValueError("rect size is a positive (width, height) pair") from None
            if w <= 0 or h <= 0:
                raise ValueError("rect size is a positive (width, height) pair")
            object.__setattr__(self, "size", (w, h))
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def bounds(self) -> tuple[float, float, float, float]:
        """(x_min, x_max, y_min, y_max) of the painted extent."""
        cx, cy = self.center
        if self.shape == "disk":
            r = float(self.size)
            return cx - r, cx + r, cy - r, cy + r
        w, h = self.size
        return cx - w / 2, cx + w / 2, cy - h / 2, cy + h / 2

    def to_dict(self) -> dict:
        d = {"shape": self.shape, "center": list(self.center), "value": self.value}
        if self.shape == "disk":
            d["radius"] = float(self.size)
        else:
            d["size"] = [float(self.size[0]), float(self.size[1])]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomObject":
        shape = d["shape"]
        size = d["radius"] if shape == "disk" else tuple(d["size"])
        return cls(shape=shape, center=tuple(d["center"]), size=size, value=float(d["value"]))


@dataclass(frozen=True)
class PhantomSpec:
    """Complete description of a reproducible synthetic volume."""

    width: int
    height: int
    n_slices: int
    voxel_size: tuple[float, float, float] = (1.0, 1.0, 1.0)
    background_value: float = 0.0
    objects: tuple[PhantomObject, ...] = ()
    sigma: float = 0.0
    seed: int = 0
    quantize: bool = False

    def __post_init__(self):
        if self.width < 1 or self.height < 1 or self.n_slices < 1:
            raise ValueError("width, height and n_slices must be positive")
        if self.background_value < 0:
            raise ValueError("background_value must be >= 0")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "objects", tuple(self.objects))
        for obj in self.objects:
            x0, x1, y0, y1 = obj.bounds()
            if x0 < 0 or y0 < 0 or x1 > self.width - 1 or y1 > self.height - 1:
                raise ValueError(f"object {obj} extends beyond the {self.width}x{self.height} image")

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "n_slices": self.n_slices,
            "voxel_size_mm": list(self.voxel_size),
            "background_value": self.background_value,
            "objects": [o.to_dict() for o in self.objects],
            "sigma": self.sigma,
            "seed": self.seed,
            "quantize": self.quantize,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        return cls(
            width=int(d["width"]),
            height=int(d["height"]),
            n_slices=int(d["n_slices"]),
            voxel_size=tuple(d.get("voxel_size_mm", (1.0, 1.0, 1.0))),
            background_value=float(d.get("background_value", 0.0)),
            objects=tuple(PhantomObject.from_dict(o) for o in d.get("objects", ())),
            sigma=float(d.get("sigma", 0.0)),
            seed=int(d.get("seed", 0)),
            quantize=bool(d.get("quantize", False)),
        )


def render_template(spec: PhantomSpec) -> Volume:
    """Noiseless volume: background value with objects painted over it."""
    yy, xx = np.mgrid[0 : spec.height, 0 : spec.width]
    image = np.full((spec.height, spec.width), float(spec.background_value))
    for obj in spec.objects:
        cx, cy = obj.center
        if obj.shape == "disk":
            mask = (xx - cx) ** 2 + (yy - cy) ** 2 <= float(obj.size) ** 2
        else:
            w, h = obj.size
            mask = (np.abs(xx - cx) <= w / 2) & (np.abs(yy - cy) <= h / 2)
        image[mask] = obj.value
    data = np.broadcast_to(image, (spec.n_slices, spec.height, spec.width))
    return Volume.from_array(data, spec.voxel_size)


def add_complex_gaussian(volume: Volume, sigma: float, seed: int) -> Volume:
    """Magnitude of the input (as real channel) plus two-channel Gaussian noise.

    Output pixel = sqrt((A + g_r)^2 + g_i^2) with A the input pixel and
    g_r, g_i independent N(0, sigma) draws from the seeded stream described
    in the module docstring. sigma == 0 returns the input unchanged.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return volume
    rng = np.random.Generator(np.random.PCG64(seed))
    shape = volume.shape
    real = volume.data + sigma * rng.standard_normal(shape)
    imag = sigma * rng.standard_normal(shape)
    return Volume.from_array(np.hypot(real, imag), volume.voxel_size)


def quantize(volume: Volume) -> Volume:
    """Round every pixel to the nearest integer, mimicking scanner output."""
    return Volume.from_array(np.rint(volume.data), volume.voxel_size)


def generate(spec: PhantomSpec) -> Volume:
    """Render the template, add noise, optionally quantize."""
    vol = add_complex_gaussian(render_template(spec), spec.sigma, spec.seed)
    return quantize(vol) if spec.quantize else vol
