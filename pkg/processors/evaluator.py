import csv
import io
import json
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from processors.frame_io import LumaFrame
from processors.metrics import (
    MetricKind,
    ShapeMismatchError,
    SsimParams,
    VifParams,
    mse,
    ssim_score,
    vif_score,
)

logger = logging.getLogger(__name__)

REPORT_FORMATS = ('csv', 'json', 'table')
PLANE_COLUMNS = [f"plane_{k}" for k in range(8)]
REPORT_COLUMNS = ['metric', 'mse', 'ssim', 'vif', 'dist', 'time'] + PLANE_COLUMNS
DECIMALS = 4


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class BitplaneDistances:
    """Fraction of pixels whose bit differs, per plane, MSB first, plus their mean."""
    per_plane: Tuple[float, ...]
    mean: Optional[float] = None

    def __post_init__(self):
        if len(self.per_plane) != 8:
            raise ReportError(f"Expected 8 bitplanes, got {len(self.per_plane)}")
        if self.mean is None:
            object.__setattr__(self, 'mean', sum(self.per_plane) / 8)

    @property
    def msb(self) -> float:
        return self.per_plane[0]


@dataclass(frozen=True)
class ComparisonReport:
    metric_used: MetricKind
    frame_mse: float
    frame_ssim: float
    frame_vif: float
    bitplane: BitplaneDistances
    elapsed_seconds: float

    def __post_init__(self):
        if self.elapsed_seconds < 0:
            raise ReportError(f"Elapsed time must be non-negative, got {self.elapsed_seconds}")

    def as_row(self) -> list:
        values = [self.frame_mse, self.frame_ssim, self.frame_vif, self.bitplane.mean, self.elapsed_seconds]
        return [self.metric_used.value] + [round(v, DECIMALS) for v in values + list(self.bitplane.per_plane)]


def bitplane_hamming(a: LumaFrame, b: LumaFrame) -> BitplaneDistances:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"Frames differ in size: {a.width}x{a.height} vs {b.width}x{b.height}")
    flips = np.unpackbits(np.bitwise_xor(a.samples, b.samples)[..., np.newaxis], axis=-1)
    counts = flips.reshape(-1, 8).sum(axis=0, dtype=np.int64)
    total = a.width * a.height
    return BitplaneDistances(tuple(int(c) / total for c in counts))


class FrameComparator:
    """Frame-level comparison of a reconstruction against its target.

    SSIM uses sliding windows (default 8x8, stride 1) averaged over the frame;
    VIF takes the target as the reference signal.
    """

    def __init__(self, settings: Optional[dict] = None):
        self.settings = (settings or {}).copy()
        self.ssim_params = SsimParams.sliding(
            size=int(self.settings.get('frame_ssim_window', 8)),
            stride=int(self.settings.get('frame_ssim_stride', 1)),
        )
        self.vif_params = VifParams(sigma_n_sq=float(self.settings.get('vif_sigma_n_sq', 0.4)))

    def compare(self, target: LumaFrame, reconstructed: LumaFrame, elapsed: float,
                metric_used: MetricKind) -> ComparisonReport:
        if target.shape != reconstructed.shape:
            raise ShapeMismatchError(
                f"Target {target.width}x{target.height} and reconstruction "
                f"{reconstructed.width}x{reconstructed.height} differ in size"
            )
        report = ComparisonReport(
            metric_used=metric_used,
            frame_mse=mse(target.samples, reconstructed.samples),
            frame_ssim=ssim_score(target.samples, reconstructed.samples, self.ssim_params),
            frame_vif=vif_score(target.samples, reconstructed.samples, self.vif_params),
            bitplane=bitplane_hamming(target, reconstructed),
            elapsed_seconds=max(float(elapsed), 0.0),
        )
        logger.info(f"{metric_used.label}: MSE={report.frame_mse:.4f} SSIM={report.frame_ssim:.4f} "
                    f"VIF={report.frame_vif:.4f} dist={report.bitplane.mean:.4f}")
        return report


def compare_frames(target: LumaFrame, reconstructed: LumaFrame, elapsed: float,
                   metric_used: MetricKind) -> ComparisonReport:
    return FrameComparator().compare(target, reconstructed, elapsed, metric_used)


def _emit_csv(rows: Sequence[ComparisonReport]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(REPORT_COLUMNS)
    for report in rows:
        row = report.as_row()
        writer.writerow([row[0]] + [f"{v:.{DECIMALS}f}" for v in row[1:]])
    return buffer.getvalue()


def _emit_json(rows: Sequence[ComparisonReport]) -> str:
    payload = [dict(zip(REPORT_COLUMNS, report.as_row())) for report in rows]
    return json.dumps(payload, indent=2) + '\n'


def _emit_table(rows: Sequence[ComparisonReport]) -> str:
    headers = ['Metric', 'MSE', 'SSIM', 'VIF', 'dist', 'Time (s)', 'Bitplanes (MSB..LSB)']
    lines = []
    for report in rows:
        row = report.as_row()
        planes = ' '.join(f"{v:.3f}" for v in row[6:])
        lines.append([report.metric_used.label] + [f"{v:.{DECIMALS}f}" for v in row[1:6]] + [planes])
    widths = [max(len(h), *(len(line[i]) for line in lines)) for i, h in enumerate(headers)]
    out = ['  '.join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    out.append('  '.join('-' * w for w in widths))
    for line in lines:
        out.append('  '.join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip())
    return '\n'.join(out) + '\n'


def emit_report(rows: Sequence[ComparisonReport], fmt: str = 'csv') -> bytes:
    if not rows:
        raise ReportError("Cannot emit an empty report")
    if fmt == 'csv':
        text = _emit_csv(rows)
    elif fmt == 'json':
        text = _emit_json(rows)
    elif fmt == 'table':
        text = _emit_table(rows)
    else:
        raise ReportError(f"Unknown report format: {fmt}")
    return text.encode('utf-8')


def _report_from_record(record: dict) -> ComparisonReport:
    try:
        values = {key: float(record[key]) for key in REPORT_COLUMNS[1:]}
        metric = MetricKind.parse(str(record['metric']))
    except (KeyError, ValueError, TypeError) as e:
        raise ReportError(f"Bad report row {record}: {e}")
    return ComparisonReport(
        metric_used=metric,
        frame_mse=values['mse'],
        frame_ssim=values['ssim'],
        frame_vif=values['vif'],
        bitplane=BitplaneDistances(tuple(values[c] for c in PLANE_COLUMNS), values['dist']),
        elapsed_seconds=values['time'],
    )


def parse_report(data: bytes, fmt: str = 'csv') -> List[ComparisonReport]:
    """Read back a csv or json report; values carry the emitted precision only."""
    text = data.decode('utf-8')
    if fmt == 'csv':
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames != REPORT_COLUMNS:
            raise ReportError(f"Unexpected report columns: {reader.fieldnames}")
        records = list(reader)
    elif fmt == 'json':
        try:
            records = json.loads(text)
        except json.JSONDecodeError as e:
            raise ReportError(f"Malformed JSON report: {e}")
        if not isinstance(records, list):
            raise ReportError("JSON report must be a list of rows")
    else:
        raise ReportError(f"Cannot parse report format: {fmt}")
    return [_report_from_record(record) for record in records]
