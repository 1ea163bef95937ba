import csv
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Optional, TextIO, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from processors.frame_io import BlockView, LumaFrame
from processors.metrics import BlockScorer, MetricKind, make_scorer, scorer_from_settings

logger = logging.getLogger(__name__)

SUPPORTED_BLOCK_SIZES = (8, 16)
TIE_BREAK_RULES = ('smallest-motion',)

FIELD_HEADER = ['width', 'height', 'block_size', 'search_radius', 'metric']
FIELD_COLUMNS = ['block_row', 'block_col', 'dx', 'dy', 'score']


class SearchConfigError(ValueError):
    pass


class FrameMismatchError(ValueError):
    pass


class FieldMismatchError(ValueError):
    pass


class FieldFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SearchConfig:
    block_size: int = 16
    search_radius: int = 16
    metric: MetricKind = MetricKind.SAD
    metric_params: object = None
    tie_break: str = 'smallest-motion'

    def __post_init__(self):
        if self.block_size not in SUPPORTED_BLOCK_SIZES:
            raise SearchConfigError(
                f"Block size {self.block_size} not supported; use one of {SUPPORTED_BLOCK_SIZES}"
            )
        if self.search_radius < 0:
            raise SearchConfigError(f"Search radius must be non-negative, got {self.search_radius}")
        if self.tie_break not in TIE_BREAK_RULES:
            raise SearchConfigError(f"Unknown tie-break rule: {self.tie_break}")

    @property
    def window_side(self) -> int:
        return self.block_size + 2 * self.search_radius

    def build_scorer(self) -> BlockScorer:
        return make_scorer(self.metric, self.metric_params)

    @classmethod
    def from_settings(cls, metric: MetricKind, settings: dict) -> 'SearchConfig':
        scorer = scorer_from_settings(metric, settings)
        return cls(
            block_size=int(settings.get('block_size', 16)),
            search_radius=int(settings.get('search_radius', 16)),
            metric=metric,
            metric_params=getattr(scorer, 'params', None),
        )


@dataclass(frozen=True)
class MotionVector:
    dx: int
    dy: int


class MotionField:
    """Per-block vectors (dx, dy) and best unified scores over the target's block grid."""

    def __init__(self, width: int, height: int, block_size: int, search_radius: int,
                 metric: MetricKind, vectors: np.ndarray, scores: np.ndarray):
        rows, cols = height // block_size, width // block_size
        vectors = np.asarray(vectors, dtype=np.int64)
        scores = np.asarray(scores, dtype=np.float64)
        if vectors.shape != (rows, cols, 2) or scores.shape != (rows, cols):
            raise FieldMismatchError(
                f"Field arrays {vectors.shape}/{scores.shape} do not match a {rows}x{cols} block grid"
            )
        self.width = width
        self.height = height
        self.block_size = block_size
        self.search_radius = search_radius
        self.metric = metric
        self.vectors = vectors
        self.scores = scores

    @property
    def rows(self) -> int:
        return self.vectors.shape[0]

    @property
    def cols(self) -> int:
        return self.vectors.shape[1]

    def vector(self, row: int, col: int) -> MotionVector:
        dx, dy = self.vectors[row, col]
        return MotionVector(int(dx), int(dy))

    def is_zero(self) -> bool:
        return not self.vectors.any()

    def __eq__(self, other) -> bool:
        if not isinstance(other, MotionField):
            return NotImplemented
        return (
            (self.width, self.height, self.block_size, self.search_radius, self.metric)
            == (other.width, other.height, other.block_size, other.search_radius, other.metric)
            and np.array_equal(self.vectors, other.vectors)
            and np.array_equal(self.scores, other.scores)
        )

    def __repr__(self) -> str:
        return (f"MotionField({self.cols}x{self.rows} blocks of {self.block_size}, "
                f"radius={self.search_radius}, metric={self.metric.value})")


def candidate_displacements(view: BlockView, width: int, height: int,
                            radius: int) -> Tuple[np.ndarray, np.ndarray]:
    """Displacement ranges (dy values, dx values) whose candidate block stays inside the frame."""
    n = view.size
    dys = np.arange(max(-radius, -view.origin_y), min(radius, height - n - view.origin_y) + 1)
    dxs = np.arange(max(-radius, -view.origin_x), min(radius, width - n - view.origin_x) + 1)
    return dys, dxs


def _select_best(scores: np.ndarray, dxs: np.ndarray, dys: np.ndarray) -> int:
    # maximize score, then smallest dx^2 + dy^2, then smallest dy, then smallest dx
    order = np.lexsort((dxs, dys, dxs * dxs + dys * dys, -scores))
    return int(order[0])


class MotionEstimator:
    """Exhaustive block matching: tiles the target, searches the reference."""

    def __init__(self, config: SearchConfig, settings: Optional[dict] = None):
        self.config = config
        self.settings = (settings or {}).copy()
        self.max_workers = int(self.settings.get('max_workers', 4))
        self.scorer = config.build_scorer()

    def search_block(self, target: LumaFrame, view: BlockView,
                     reference: LumaFrame) -> Tuple[MotionVector, float]:
        n = self.config.block_size
        if view.size != n:
            raise SearchConfigError(f"Block view size {view.size} differs from configured {n}")
        if not view.fits(target.width, target.height) or not view.fits(reference.width, reference.height):
            raise FrameMismatchError(f"Block at ({view.origin_x}, {view.origin_y}) is out of bounds")

        dys, dxs = candidate_displacements(view, reference.width, reference.height, self.config.search_radius)
        y0, x0 = view.origin_y + dys[0], view.origin_x + dxs[0]
        region = reference.samples[y0:view.origin_y + dys[-1] + n, x0:view.origin_x + dxs[-1] + n]
        candidates = np.ascontiguousarray(sliding_window_view(region, (n, n)).reshape(-1, n, n))
        grid_dy = np.repeat(dys, len(dxs))
        grid_dx = np.tile(dxs, len(dys))

        block = target.samples[view.origin_y:view.origin_y + n, view.origin_x:view.origin_x + n]
        scores = self.scorer.score_many(np.ascontiguousarray(block), candidates)
        best = _select_best(scores, grid_dx, grid_dy)
        logger.debug(f"Block ({view.origin_x}, {view.origin_y}): {len(scores)} candidates, "
                     f"best ({grid_dx[best]}, {grid_dy[best]}) score {scores[best]}")
        return MotionVector(int(grid_dx[best]), int(grid_dy[best])), float(scores[best])

    def _check_frames(self, reference: LumaFrame, target: LumaFrame) -> None:
        if reference.shape != target.shape:
            raise FrameMismatchError(
                f"Reference {reference.width}x{reference.height} and target "
                f"{target.width}x{target.height} differ in size"
            )
        n = self.config.block_size
        if target.width % n or target.height % n:
            raise FrameMismatchError(
                f"Frame {target.width}x{target.height} is not divisible by block size {n}"
            )

    def _search_row(self, reference: LumaFrame, target: LumaFrame, row: int,
                    vectors: np.ndarray, scores: np.ndarray) -> int:
        n = self.config.block_size
        for col in range(vectors.shape[1]):
            mv, score = self.search_block(target, BlockView(col * n, row * n, n), reference)
            vectors[row, col] = (mv.dx, mv.dy)
            scores[row, col] = score
        return row

    def estimate(self, reference: LumaFrame, target: LumaFrame) -> MotionField:
        self._check_frames(reference, target)
        n = self.config.block_size
        rows, cols = target.height // n, target.width // n
        vectors = np.zeros((rows, cols, 2), dtype=np.int64)
        scores = np.zeros((rows, cols), dtype=np.float64)

        if self.max_workers <= 1:
            for row in range(rows):
                self._search_row(reference, target, row, vectors, scores)
        else:
            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                future_map = {
                    executor.submit(self._search_row, reference, target, row, vectors, scores): row
                    for row in range(rows)
                }
                for future in as_completed(future_map):
                    row = future_map[future]
                    try:
                        future.result()
                    except Exception as e:
                        logger.error(f"Block row {row} failed: {str(e)}")
                        raise
                    logger.debug(f"Searched block row {row}")

        logger.info(f"Estimated {rows}x{cols} motion field with {self.scorer.describe()}")
        return MotionField(target.width, target.height, n, self.config.search_radius,
                           self.config.metric, vectors, scores)

    def compensate(self, reference: LumaFrame, field: MotionField) -> LumaFrame:
        return compensate(reference, field)


def search_block(target: LumaFrame, view: BlockView, reference: LumaFrame,
                 config: SearchConfig) -> Tuple[MotionVector, float]:
    return MotionEstimator(config, {'max_workers': 1}).search_block(target, view, reference)


def estimate_motion_field(reference: LumaFrame, target: LumaFrame, config: SearchConfig,
                          max_workers: int = 4) -> MotionField:
    return MotionEstimator(config, {'max_workers': max_workers}).estimate(reference, target)


def compensate(reference: LumaFrame, field: MotionField) -> LumaFrame:
    """Predict the target by copying each displaced reference block; no residual is added."""
    if (reference.width, reference.height) != (field.width, field.height):
        raise FieldMismatchError(
            f"Field geometry {field.width}x{field.height} does not match reference "
            f"{reference.width}x{reference.height}"
        )
    n = field.block_size
    if field.width % n or field.height % n:
        raise FieldMismatchError(f"Field geometry is not divisible by block size {n}")
    source = reference.samples
    output = np.empty_like(source)
    for row in range(field.rows):
        for col in range(field.cols):
            dx, dy = field.vectors[row, col]
            y, x = row * n + dy, col * n + dx
            if y < 0 or x < 0 or y + n > field.height or x + n > field.width:
                raise FieldMismatchError(
                    f"Vector ({dx}, {dy}) of block ({row}, {col}) leaves the reference frame"
                )
            output[row * n:(row + 1) * n, col * n:(col + 1) * n] = source[y:y + n, x:x + n]
    return LumaFrame(output)


def write_field_csv(field: MotionField, sink: TextIO) -> None:
    writer = csv.writer(sink, lineterminator='\n')
    writer.writerow(FIELD_HEADER)
    writer.writerow([field.width, field.height, field.block_size, field.search_radius, field.metric.value])
    writer.writerow(FIELD_COLUMNS)
    for row in range(field.rows):
        for col in range(field.cols):
            dx, dy = field.vectors[row, col]
            writer.writerow([row, col, int(dx), int(dy), repr(float(field.scores[row, col]))])


def read_field_csv(source: TextIO) -> MotionField:
    rows = list(csv.reader(source))
    if len(rows) < 3 or rows[0] != FIELD_HEADER or rows[2] != FIELD_COLUMNS:
        raise FieldFormatError("Motion field file lacks its header rows")
    try:
        width, height, block_size, radius = (int(v) for v in rows[1][:4])
        metric = MetricKind.parse(rows[1][4])
    except (ValueError, IndexError) as e:
        raise FieldFormatError(f"Bad motion field header: {e}")
    if block_size <= 0 or width % block_size or height % block_size:
        raise FieldFormatError(f"Field geometry {width}x{height} not divisible by block size {block_size}")

    grid_rows, grid_cols = height // block_size, width // block_size
    vectors = np.zeros((grid_rows, grid_cols, 2), dtype=np.int64)
    scores = np.zeros((grid_rows, grid_cols), dtype=np.float64)
    seen = np.zeros((grid_rows, grid_cols), dtype=bool)
    for line in rows[3:]:
        if not line:
            continue
        try:
            r, c, dx, dy = (int(v) for v in line[:4])
            score = float(line[4])
        except (ValueError, IndexError) as e:
            raise FieldFormatError(f"Bad motion field row {line}: {e}")
        if not (0 <= r < grid_rows and 0 <= c < grid_cols):
            raise FieldFormatError(f"Block ({r}, {c}) outside the {grid_rows}x{grid_cols} grid")
        vectors[r, c] = (dx, dy)
        scores[r, c] = score
        seen[r, c] = True
    if not seen.all():
        raise FieldFormatError(f"Motion field misses {int((~seen).sum())} block(s)")
    return MotionField(width, height, block_size, radius, metric, vectors, scores)
