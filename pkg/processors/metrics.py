import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from processors.frame_io import LumaFrame
from processors.pyramid import (
    ComplexPyramid,
    PyramidConfig,
    SteerablePyramid,
    default_pyramid_config,
)

logger = logging.getLogger(__name__)


class ShapeMismatchError(ValueError):
    pass


class MetricParameterError(ValueError):
    pass


class MetricKind(Enum):
    SAD = 'sad'
    MSE = 'mse'
    SSIM = 'ssim'
    CWSSIM = 'cwssim'
    VIF = 'vif'

    @property
    def is_distortion(self) -> bool:
        return self in (MetricKind.SAD, MetricKind.MSE)

    @property
    def label(self) -> str:
        return {'cwssim': 'CW-SSIM'}.get(self.value, self.value.upper())

    @classmethod
    def parse(cls, name: str) -> 'MetricKind':
        key = name.strip().lower().replace('-', '').replace('_', '')
        for kind in cls:
            if kind.value == key:
                return kind
        raise MetricParameterError(f"Unknown metric: {name}")


@dataclass(frozen=True)
class SsimParams:
    """SSIM constants; window_size None means one window over the whole block."""
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 255.0
    window_size: Optional[int] = None
    stride: int = 1

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0 or self.dynamic_range <= 0:
            raise MetricParameterError("SSIM constants must be strictly positive")
        if self.window_size is not None and self.window_size < 2:
            raise MetricParameterError(f"SSIM window must be at least 2, got {self.window_size}")
        if self.stride < 1:
            raise MetricParameterError(f"SSIM stride must be positive, got {self.stride}")

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2

    @property
    def c3(self) -> float:
        return self.c2 / 2

    @classmethod
    def whole_block(cls, **kwargs) -> 'SsimParams':
        return cls(window_size=None, **kwargs)

    @classmethod
    def sliding(cls, size: int = 8, stride: int = 1, **kwargs) -> 'SsimParams':
        return cls(window_size=size, stride=stride, **kwargs)

    @classmethod
    def from_settings(cls, settings: dict) -> 'SsimParams':
        return cls(
            k1=settings.get('ssim_k1', 0.01),
            k2=settings.get('ssim_k2', 0.03),
            window_size=settings.get('ssim_window'),
            stride=settings.get('ssim_stride', 1),
        )


@dataclass(frozen=True)
class CwSsimParams:
    """pyramid None picks the depth from the block side; orientations applies to that default."""
    k: float = 0.01
    pyramid: Optional[PyramidConfig] = None
    orientations: int = 6

    def __post_init__(self):
        if self.k <= 0:
            raise MetricParameterError(f"CW-SSIM stabilizer must be positive, got {self.k}")
        _check_orientations(self.orientations)

    @classmethod
    def from_settings(cls, settings: dict) -> 'CwSsimParams':
        return cls(
            k=settings.get('cwssim_k', 0.01),
            pyramid=_pyramid_from_settings(settings),
            orientations=_orientations_from_settings(settings),
        )


@dataclass(frozen=True)
class VifParams:
    sigma_n_sq: float = 0.4
    patch_size: int = 3
    pyramid: Optional[PyramidConfig] = None
    orientations: int = 6
    eps: float = 1e-10

    def __post_init__(self):
        if self.sigma_n_sq <= 0:
            raise MetricParameterError(f"VIF noise variance must be positive, got {self.sigma_n_sq}")
        if self.patch_size < 3:
            raise MetricParameterError(f"VIF patch size must be at least 3, got {self.patch_size}")
        _check_orientations(self.orientations)

    @classmethod
    def from_settings(cls, settings: dict) -> 'VifParams':
        return cls(
            sigma_n_sq=settings.get('vif_sigma_n_sq', 0.4),
            patch_size=settings.get('vif_patch_size', 3),
            pyramid=_pyramid_from_settings(settings),
            orientations=_orientations_from_settings(settings),
        )


def _check_orientations(orientations: int) -> None:
    if orientations < 2:
        raise MetricParameterError(f"Pyramid needs at least two orientations, got {orientations}")


def _orientations_from_settings(settings: dict) -> int:
    return int(settings.get('pyramid_orientations') or 6)


def _pyramid_from_settings(settings: dict) -> Optional[PyramidConfig]:
    """Explicit pyramid only when a depth is given; otherwise the depth follows the block side."""
    if settings.get('pyramid_levels') is None:
        return None
    return PyramidConfig(
        levels=int(settings['pyramid_levels']),
        orientations=_orientations_from_settings(settings),
    )


def _as_grid(x) -> np.ndarray:
    if isinstance(x, LumaFrame):
        return x.samples
    return np.asarray(x)


def _check_pair(a, b) -> Tuple[np.ndarray, np.ndarray]:
    a, b = _as_grid(a), _as_grid(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"Shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise ShapeMismatchError(f"Expected 2-D sample grids, got {a.ndim}-D")
    return a, b


def _check_batch(target, candidates) -> Tuple[np.ndarray, np.ndarray]:
    target = _as_grid(target)
    candidates = np.asarray(candidates)
    if target.ndim != 2 or candidates.ndim != 3 or candidates.shape[1:] != target.shape:
        raise ShapeMismatchError(
            f"Candidates {candidates.shape} do not stack blocks of shape {target.shape}"
        )
    return target, candidates


def _row_sum(x: np.ndarray) -> np.ndarray:
    """Sum the trailing two axes of every leading entry in one contiguous pass."""
    x = np.ascontiguousarray(x)
    return x.reshape(x.shape[:-2] + (-1,)).sum(axis=-1)


def _window_sums(x: np.ndarray, window: Optional[int], stride: int) -> np.ndarray:
    """Exact integer sums over square windows of the trailing two axes."""
    if window is None:
        return _row_sum(x)[..., np.newaxis, np.newaxis]
    height, width = x.shape[-2:]
    integral = np.zeros(x.shape[:-2] + (height + 1, width + 1), dtype=np.int64)
    integral[..., 1:, 1:] = x.cumsum(axis=-2).cumsum(axis=-1)
    w = window
    sums = (
        integral[..., w:, w:]
        - integral[..., :-w, w:]
        - integral[..., w:, :-w]
        + integral[..., :-w, :-w]
    )
    return sums[..., ::stride, ::stride]


def _ssim_batch(a: np.ndarray, b: np.ndarray, params: SsimParams) -> np.ndarray:
    height, width = a.shape[-2:]
    if params.window_size is None:
        count = height * width
        if count < 2:
            raise MetricParameterError("Whole-block SSIM needs at least 2 samples")
    else:
        if params.window_size > min(height, width):
            raise MetricParameterError(
                f"SSIM window {params.window_size} larger than input {width}x{height}"
            )
        count = params.window_size ** 2

    a = a.astype(np.int64)
    b = b.astype(np.int64)
    window, stride = params.window_size, params.stride
    s_a = _window_sums(a, window, stride)
    s_b = _window_sums(b, window, stride)
    s_aa = _window_sums(a * a, window, stride)
    s_bb = _window_sums(b * b, window, stride)
    s_ab = _window_sums(a * b, window, stride)

    # integer numerators keep variance and covariance exact before the single division
    norm = float(count * count)
    mu_a = s_a / count
    mu_b = s_b / count
    var_a = (count * s_aa - s_a * s_a) / norm
    var_b = (count * s_bb - s_b * s_b) / norm
    cov = (count * s_ab - s_a * s_b) / norm

    c1, c2, c3 = params.c1, params.c2, params.c3
    sigma_prod = np.sqrt(var_a * var_b)
    luminance = (2 * mu_a * mu_b + c1) / (mu_a ** 2 + mu_b ** 2 + c1)
    contrast = (2 * sigma_prod + c2) / (var_a + var_b + c2)
    structure = (cov + c3) / (sigma_prod + c3)
    ssim_map = luminance * contrast * structure
    return np.ascontiguousarray(ssim_map).reshape(ssim_map.shape[:-2] + (-1,)).mean(axis=-1)


def _pyramid_for(shape: Tuple[int, int], config: Optional[PyramidConfig],
                 orientations: int = 6) -> SteerablePyramid:
    if config is None:
        config = default_pyramid_config(min(shape), orientations)
    return SteerablePyramid(config)


def _cw_ssim_batch(x_pyr: ComplexPyramid, y_pyr: ComplexPyramid, k: float) -> np.ndarray:
    total = None
    count = 0
    for key, cx in x_pyr.bands():
        cy = y_pyr.subbands[key]
        mag_x = np.abs(cx)
        mag_y = np.abs(cy)
        cross = cx * np.conj(cy)
        magnitude = (2 * _row_sum(mag_x * mag_y) + k) / (_row_sum(mag_x ** 2) + _row_sum(mag_y ** 2) + k)
        phase = (2 * np.abs(_row_sum(cross)) + k) / (2 * _row_sum(np.abs(cross)) + k)
        band_score = magnitude * phase
        total = band_score if total is None else total + band_score
        count += 1
    return total / count


def _patch_means(x: np.ndarray, patch: int) -> np.ndarray:
    """Means over every fully covered patch x patch window of the trailing two axes."""
    size = (1,) * (x.ndim - 2) + (patch, patch)
    means = ndimage.uniform_filter(x, size=size, mode='nearest')
    height, width = x.shape[-2:]
    start = patch // 2
    return means[..., start:start + height - patch + 1, start:start + width - patch + 1]


def _vif_information(c: np.ndarray, d: np.ndarray, params: VifParams) -> Tuple[np.ndarray, np.ndarray]:
    """Per-row (distorted-channel, reference-channel) information summed over one coefficient field."""
    p = params.patch_size
    mu_c = _patch_means(c, p)
    mu_d = _patch_means(d, p)
    var_c = np.maximum(_patch_means(c * c, p) - mu_c * mu_c, 0.0)
    var_d = np.maximum(_patch_means(d * d, p) - mu_d * mu_d, 0.0)
    cov = _patch_means(c * d, p) - mu_c * mu_d
    var_c, var_d, cov = np.broadcast_arrays(var_c, var_d, cov)

    live = var_c >= params.eps
    g = np.divide(cov, var_c, out=np.zeros_like(cov), where=live)
    sigma_v_sq = np.where(live, var_d - g * cov, var_d)
    # anticorrelated patches carry no information about the reference
    sigma_v_sq = np.where(g < 0, var_d, sigma_v_sq)
    g = np.maximum(g, 0.0)
    sigma_v_sq = np.maximum(sigma_v_sq, 0.0)

    sigma_n_sq = params.sigma_n_sq
    ref_info = np.where(live, np.log2(1.0 + var_c / sigma_n_sq), 0.0)
    dist_info = np.log2(1.0 + g * g * var_c / (sigma_v_sq + sigma_n_sq))
    return _row_sum(dist_info), _row_sum(ref_info)


def _vif_batch(ref_pyr: ComplexPyramid, dist_pyr: ComplexPyramid, params: VifParams) -> np.ndarray:
    numerator = None
    denominator = None
    for key, c_band in ref_pyr.bands():
        d_band = dist_pyr.subbands[key]
        if min(c_band.shape[-2:]) < params.patch_size:
            raise MetricParameterError(
                f"Subband {key} of shape {c_band.shape[-2:]} smaller than VIF patch {params.patch_size}"
            )
        for part in (np.real, np.imag):
            num, den = _vif_information(
                np.ascontiguousarray(part(c_band)), np.ascontiguousarray(part(d_band)), params
            )
            numerator = num if numerator is None else numerator + num
            denominator = den if denominator is None else denominator + den
    blank = denominator <= 0
    safe = np.where(blank, 1.0, denominator)
    return np.where(blank, 1.0, numerator / safe)


class BlockScorer(ABC):
    """Scores one target block against a stack of candidates; higher is always better."""

    kind: MetricKind

    @abstractmethod
    def values_many(self, target, candidates) -> np.ndarray:
        """Raw metric values (distortion or similarity) per candidate."""

    def score_many(self, target, candidates) -> np.ndarray:
        values = np.asarray(self.values_many(target, candidates), dtype=np.float64)
        return -values if self.kind.is_distortion else values

    def score(self, a, b) -> float:
        a, b = _check_pair(a, b)
        return float(self.score_many(a, b[np.newaxis])[0])

    def value(self, a, b) -> float:
        a, b = _check_pair(a, b)
        return float(self.values_many(a, b[np.newaxis])[0])

    def describe(self) -> str:
        return self.kind.label


class SadScorer(BlockScorer):
    kind = MetricKind.SAD

    def values_many(self, target, candidates) -> np.ndarray:
        target, candidates = _check_batch(target, candidates)
        diff = candidates.astype(np.int64) - target.astype(np.int64)
        return _row_sum(np.abs(diff))


class MseScorer(BlockScorer):
    kind = MetricKind.MSE

    def values_many(self, target, candidates) -> np.ndarray:
        target, candidates = _check_batch(target, candidates)
        diff = candidates.astype(np.int64) - target.astype(np.int64)
        return _row_sum(diff * diff) / float(target.size)


class SsimScorer(BlockScorer):
    kind = MetricKind.SSIM

    def __init__(self, params: Optional[SsimParams] = None):
        self.params = params or SsimParams()

    def values_many(self, target, candidates) -> np.ndarray:
        target, candidates = _check_batch(target, candidates)
        return _ssim_batch(target[np.newaxis], candidates, self.params)

    def describe(self) -> str:
        window = 'block' if self.params.window_size is None else f"sliding:{self.params.window_size}"
        return f"SSIM(window={window})"


class CwSsimScorer(BlockScorer):
    kind = MetricKind.CWSSIM

    def __init__(self, params: Optional[CwSsimParams] = None):
        self.params = params or CwSsimParams()

    def values_many(self, target, candidates) -> np.ndarray:
        target, candidates = _check_batch(target, candidates)
        pyramid = _pyramid_for(target.shape, self.params.pyramid, self.params.orientations)
        target_pyr = pyramid.build(target[np.newaxis])
        candidate_pyr = pyramid.build(candidates)
        return _cw_ssim_batch(target_pyr, candidate_pyr, self.params.k)


class VifScorer(BlockScorer):
    """VIF with the target block as the reference signal and each candidate as the distorted one."""

    kind = MetricKind.VIF

    def __init__(self, params: Optional[VifParams] = None):
        self.params = params or VifParams()

    def values_many(self, target, candidates) -> np.ndarray:
        target, candidates = _check_batch(target, candidates)
        pyramid = _pyramid_for(target.shape, self.params.pyramid, self.params.orientations)
        target_pyr = pyramid.build(target[np.newaxis])
        candidate_pyr = pyramid.build(candidates)
        return _vif_batch(target_pyr, candidate_pyr, self.params)


def make_scorer(kind: MetricKind, params=None) -> BlockScorer:
    if kind is MetricKind.SAD:
        return SadScorer()
    if kind is MetricKind.MSE:
        return MseScorer()
    if kind is MetricKind.SSIM:
        return SsimScorer(params)
    if kind is MetricKind.CWSSIM:
        return CwSsimScorer(params)
    if kind is MetricKind.VIF:
        return VifScorer(params)
    raise MetricParameterError(f"Unknown metric kind: {kind}")


def scorer_from_settings(kind: MetricKind, settings: dict) -> BlockScorer:
    if kind is MetricKind.SSIM:
        return SsimScorer(SsimParams.from_settings(settings))
    if kind is MetricKind.CWSSIM:
        return CwSsimScorer(CwSsimParams.from_settings(settings))
    if kind is MetricKind.VIF:
        return VifScorer(VifParams.from_settings(settings))
    return make_scorer(kind)


def sad(a, b) -> int:
    a, b = _check_pair(a, b)
    return int(np.abs(a.astype(np.int64) - b.astype(np.int64)).sum())


def mse(a, b) -> float:
    a, b = _check_pair(a, b)
    diff = a.astype(np.int64) - b.astype(np.int64)
    return int((diff * diff).sum()) / a.size


def psnr(a, b) -> float:
    """PSNR in dB for 8-bit signals; +inf for identical inputs."""
    error = mse(a, b)
    if error == 0:
        return math.inf
    return 10 * math.log10(255.0 ** 2 / error)


def ssim_score(a, b, params: Optional[SsimParams] = None) -> float:
    a, b = _check_pair(a, b)
    return float(_ssim_batch(a, b, params or SsimParams()))


def cw_ssim_score(a, b, params: Optional[CwSsimParams] = None) -> float:
    a, b = _check_pair(a, b)
    params = params or CwSsimParams()
    pyramid = _pyramid_for(a.shape, params.pyramid, params.orientations)
    return float(_cw_ssim_batch(pyramid.build(a), pyramid.build(b), params.k))


def vif_score(reference, distorted, params: Optional[VifParams] = None) -> float:
    """Information fidelity of distorted relative to reference; not symmetric."""
    reference, distorted = _check_pair(reference, distorted)
    params = params or VifParams()
    pyramid = _pyramid_for(reference.shape, params.pyramid, params.orientations)
    return float(_vif_batch(pyramid.build(reference), pyramid.build(distorted), params))


def unified_score(kind: MetricKind, a, b, params=None) -> float:
    return make_scorer(kind, params).score(a, b)
