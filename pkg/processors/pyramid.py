import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterator, List, Tuple

import numpy as np
from scipy.special import factorial

logger = logging.getLogger(__name__)

BOUNDARY_MODES = ('mirror',)


class PyramidSizeError(ValueError):
    pass


@dataclass(frozen=True)
class PyramidConfig:
    levels: int = 2
    orientations: int = 6
    boundary: str = 'mirror'

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError(f"Pyramid needs at least one level, got {self.levels}")
        if self.orientations < 2:
            raise ValueError(f"Pyramid needs at least two orientations, got {self.orientations}")
        if self.boundary not in BOUNDARY_MODES:
            raise ValueError(f"Unsupported boundary rule: {self.boundary}")

    @property
    def min_side(self) -> int:
        return 4 * 2 ** self.levels

    @classmethod
    def from_settings(cls, settings: dict) -> 'PyramidConfig':
        return cls(
            levels=int(settings.get('pyramid_levels', 2)),
            orientations=int(settings.get('pyramid_orientations', 6)),
        )


def default_pyramid_config(side: int, orientations: int = 6) -> PyramidConfig:
    """Deepest ladder rung (at most 3 levels) a side of this length can carry."""
    if side >= 32:
        levels = 3
    elif side >= 16:
        levels = 2
    else:
        levels = 1
    return PyramidConfig(levels=levels, orientations=orientations)


@dataclass(frozen=True)
class ComplexPyramid:
    """Oriented complex subbands keyed by (level, orientation) plus the real lowpass residual.

    Arrays keep any leading batch axes of the decomposed input.
    """
    config: PyramidConfig
    subbands: Dict[Tuple[int, int], np.ndarray] = field(repr=False)
    residual_lowpass: np.ndarray = field(repr=False)

    def bands(self) -> Iterator[Tuple[Tuple[int, int], np.ndarray]]:
        for key in sorted(self.subbands):
            yield key, self.subbands[key]

    def band_shape(self, level: int) -> Tuple[int, int]:
        return self.subbands[(level, 0)].shape[-2:]


def _log_radius_and_angle(height: int, width: int) -> Tuple[np.ndarray, np.ndarray]:
    xramp = (np.arange(width) - width // 2) / (width / 2)
    yramp = (np.arange(height) - height // 2) / (height / 2)
    x, y = np.meshgrid(xramp, yramp)
    angle = np.arctan2(y, x)
    rad = np.sqrt(x ** 2 + y ** 2)
    rad[height // 2, width // 2] = rad[height // 2, width // 2 - 1]
    return np.log2(rad), angle


def _raised_cosine(log_rad: np.ndarray, low_edge: float) -> Tuple[np.ndarray, np.ndarray]:
    """High and low halves of a one-octave raised-cosine transition starting at low_edge."""
    t = np.clip(log_rad - low_edge, 0.0, 1.0)
    high = np.cos(np.pi / 2 * (1.0 - t))
    low = np.sin(np.pi / 2 * (1.0 - t))
    return high, low


def _angular_window(angle: np.ndarray, orientation: int, orientations: int) -> np.ndarray:
    order = orientations - 1
    const = (2 ** (2 * order)) * factorial(order) ** 2 / (orientations * factorial(2 * order))
    delta = np.mod(angle - np.pi * orientation / orientations + np.pi, 2 * np.pi) - np.pi
    window = 2 * np.sqrt(const) * np.cos(delta) ** order
    return window * (np.abs(delta) < np.pi / 2)


@dataclass(frozen=True)
class _LevelFilters:
    bands: Tuple[np.ndarray, ...]
    lowpass: np.ndarray
    crop: Tuple[slice, slice]
    scale: float


@lru_cache(maxsize=64)
def _filter_bank(height: int, width: int, levels: int, orientations: int):
    """Frequency masks (fftshifted layout) for a pyramid over an extended height x width grid."""
    log_rad, angle = _log_radius_and_angle(height, width)
    _, lo0mask = _raised_cosine(log_rad, -1.0)
    lo0mask.flags.writeable = False

    phase = (-1j) ** (orientations - 1)
    level_filters: List[_LevelFilters] = []
    low_edge = -1.0
    for _ in range(levels):
        low_edge -= 1.0
        himask, _ = _raised_cosine(log_rad, low_edge)
        bands = []
        for b in range(orientations):
            mask = phase * _angular_window(angle, b, orientations) * himask
            mask.flags.writeable = False
            bands.append(mask)

        h, w = log_rad.shape
        new_h, new_w = (h + 1) // 2, (w + 1) // 2
        top = int(np.ceil((h + 0.5) / 2) - np.ceil((new_h + 0.5) / 2))
        left = int(np.ceil((w + 0.5) / 2) - np.ceil((new_w + 0.5) / 2))
        crop = (slice(top, top + new_h), slice(left, left + new_w))
        log_rad = log_rad[crop]
        angle = angle[crop]
        _, lomask = _raised_cosine(log_rad, low_edge)
        lomask.flags.writeable = False
        level_filters.append(_LevelFilters(tuple(bands), lomask, crop, (new_h * new_w) / (h * w)))
    return lo0mask, tuple(level_filters)


class SteerablePyramid:
    """Frequency-domain complex steerable pyramid over mirror-extended input.

    The input is reflected to twice its size on both axes before the FFT so the
    periodic extension has no seams; every subband is then cropped back to the
    region covering the original samples, halving (rounding down) per level.
    """

    def __init__(self, config: PyramidConfig):
        self.config = config

    def check_size(self, height: int, width: int) -> None:
        if min(height, width) < self.config.min_side:
            raise PyramidSizeError(
                f"Input {width}x{height} too small for {self.config.levels} level(s); "
                f"need a side of at least {self.config.min_side}"
            )

    def extend(self, image: np.ndarray) -> np.ndarray:
        height, width = image.shape[-2:]
        pad = [(0, 0)] * (image.ndim - 2) + [(0, height), (0, width)]
        return np.pad(image, pad, mode='symmetric')

    def level0_masks(self, height: int, width: int) -> List[np.ndarray]:
        """Full frequency responses of the finest subbands on the extended grid."""
        lo0mask, levels = _filter_bank(2 * height, 2 * width, self.config.levels, self.config.orientations)
        return [lo0mask * band for band in levels[0].bands]

    def build(self, image) -> ComplexPyramid:
        image = np.asarray(image, dtype=np.float64)
        if image.ndim < 2:
            raise PyramidSizeError(f"Pyramid input must be at least 2-D, got shape {image.shape}")
        height, width = image.shape[-2:]
        self.check_size(height, width)

        extended = np.ascontiguousarray(self.extend(image))
        lo0mask, levels = _filter_bank(2 * height, 2 * width, self.config.levels, self.config.orientations)

        axes = (-2, -1)
        lodft = np.fft.fftshift(np.fft.fft2(extended, axes=axes), axes=axes) * lo0mask
        subbands = {}
        for level, filters in enumerate(levels):
            rows, cols = height >> level, width >> level
            for b, mask in enumerate(filters.bands):
                band = np.fft.ifft2(np.fft.ifftshift(lodft * mask, axes=axes), axes=axes)
                band = np.ascontiguousarray(band[..., :rows, :cols])
                band.flags.writeable = False
                subbands[(level, b)] = band
            lodft = lodft[(Ellipsis,) + filters.crop] * filters.lowpass * filters.scale

        residual = np.fft.ifft2(np.fft.ifftshift(lodft, axes=axes), axes=axes).real
        levels_count = len(levels)
        residual = np.ascontiguousarray(residual[..., :height >> levels_count, :width >> levels_count])
        residual.flags.writeable = False
        return ComplexPyramid(config=self.config, subbands=subbands, residual_lowpass=residual)


def decompose(image, config: PyramidConfig) -> ComplexPyramid:
    return SteerablePyramid(config).build(image)
