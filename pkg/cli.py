import argparse
import logging
import sys
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from processors.evaluator import REPORT_FORMATS, ComparisonReport, FrameComparator, emit_report
from processors.frame_io import CHROMA_LAYOUTS, FrameReader, LumaFrame, save_pgm
from processors.metrics import MetricKind
from processors.motion import (
    MotionEstimator,
    MotionField,
    SearchConfig,
    compensate,
    read_field_csv,
    write_field_csv,
)
from utils.helpers import LOG_FORMAT, OutputManager
from utils.option_parser import OptionParser

logger = logging.getLogger(__name__)

FORMAT_CHOICES = ('y4m', 'raw', 'pgm')
DEFAULT_FIELD_PATH = 'motion_field.csv'
DEFAULT_FRAME_PATH = 'reconstructed.pgm'


class RunSpecError(ValueError):
    pass


class StageError(RuntimeError):
    """A pipeline stage failed; the message names the stage."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage} stage failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunSpec:
    """One reproducible experiment run: input, frame pair, search setup, metrics and outputs."""
    input: str
    format: str = 'y4m'
    width: Optional[int] = None
    height: Optional[int] = None
    chroma: str = '420'
    ref_index: int = 0
    target_index: int = 1
    metrics: List[MetricKind] = field(default_factory=lambda: list(MetricKind))
    block_size: int = 16
    search_radius: int = 16
    ssim_window: Optional[int] = None
    ssim_stride: int = 1
    vif_sigma_n_sq: float = 0.4
    pyramid_levels: Optional[int] = None
    pyramid_orientations: Optional[int] = None
    out_field: Optional[str] = None
    out_frame: Optional[str] = None
    out_report: Optional[str] = None
    report_format: str = 'csv'
    field_path: Optional[str] = None
    workers: int = 4

    def __post_init__(self):
        if not self.metrics:
            raise RunSpecError("At least one metric is required")
        if self.ref_index == self.target_index:
            raise RunSpecError(f"Reference and target frame indices must differ, both are {self.ref_index}")
        if self.ref_index < 0 or self.target_index < 0:
            raise RunSpecError("Frame indices must be non-negative")
        if self.format == 'raw' and (not self.width or not self.height):
            raise RunSpecError("Raw input needs --width and --height")
        if self.format != 'raw' and (self.width or self.height):
            logger.warning("--width/--height are ignored for self-describing formats")
        if self.report_format not in REPORT_FORMATS:
            raise RunSpecError(f"Unknown report format: {self.report_format}")
        if self.workers < 1:
            raise RunSpecError(f"Worker count must be positive, got {self.workers}")

    @property
    def multiple(self) -> bool:
        return len(self.metrics) > 1

    def settings(self) -> dict:
        return {
            'format': self.format,
            'width': self.width,
            'height': self.height,
            'chroma': self.chroma,
            'block_size': self.block_size,
            'search_radius': self.search_radius,
            'ssim_window': self.ssim_window,
            'ssim_stride': self.ssim_stride,
            'vif_sigma_n_sq': self.vif_sigma_n_sq,
            'pyramid_levels': self.pyramid_levels,
            'pyramid_orientations': self.pyramid_orientations,
            'max_workers': self.workers,
        }

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> 'RunSpec':
        options = OptionParser()
        window = options.parse_window(args.ssim_window)
        return cls(
            input=args.input,
            format=args.format,
            width=args.width,
            height=args.height,
            chroma=args.chroma,
            ref_index=args.ref_index,
            target_index=args.target_index,
            metrics=options.parse_metrics(args.metric),
            block_size=args.block_size,
            search_radius=args.search_radius,
            ssim_window=window['ssim_window'],
            ssim_stride=window['ssim_stride'],
            vif_sigma_n_sq=args.vif_sigma_nsq,
            pyramid_levels=args.pyramid_levels,
            pyramid_orientations=args.pyramid_orients,
            out_field=args.out_field,
            out_frame=args.out_frame,
            out_report=args.out_report,
            report_format=args.report_format,
            field_path=getattr(args, 'field', None),
            workers=args.workers,
        )


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as e:
        logging.error(f"{name} stage failed: {str(e)}")
        raise StageError(name, e) from e


class MotionCompensationApp:
    """
    Runs estimate, reconstruct and report commands for one RunSpec.
    """

    def __init__(self, spec: RunSpec, output_manager: Optional[OutputManager] = None):
        self.spec = spec
        self.settings = spec.settings()
        self.outputs = output_manager or OutputManager()
        self.reader = FrameReader(self.settings)

    def _read_input(self) -> bytes:
        with open(self.spec.input, 'rb') as f:
            return f.read()

    def load_reference(self) -> LumaFrame:
        data = _stage('load', self._read_input)
        return _stage('load', self.reader.read, data, self.spec.ref_index)

    def load_frames(self) -> Tuple[LumaFrame, LumaFrame]:
        def load():
            data = self._read_input()
            return (self.reader.read(data, self.spec.ref_index),
                    self.reader.read(data, self.spec.target_index))

        reference, target = _stage('load', load)
        logger.info(f"Loaded frames {self.spec.ref_index} -> {self.spec.target_index} "
                    f"({target.width}x{target.height}) from {self.spec.input}")
        return reference, target

    def estimate(self, metric: MetricKind, reference: LumaFrame, target: LumaFrame) -> Tuple[MotionField, float]:
        """Estimate one field; the elapsed time covers the search only."""
        def run():
            config = SearchConfig.from_settings(metric, self.settings)
            estimator = MotionEstimator(config, self.settings)
            started = time.perf_counter()
            result = estimator.estimate(reference, target)
            return result, time.perf_counter() - started

        motion_field, elapsed = _stage('estimate', run)
        logger.info(f"{metric.label} search finished in {elapsed:.2f}s")
        return motion_field, elapsed

    def write_field(self, motion_field: MotionField, template: Optional[str]) -> Optional[str]:
        path = self.outputs.resolve(template, motion_field.metric, self.spec.multiple)
        if path is None:
            return None

        def write():
            with open(self.outputs.prepare(path), 'w', newline='', encoding='utf-8') as f:
                write_field_csv(motion_field, f)

        _stage('write', write)
        logger.info(f"Wrote motion field to {path}")
        return path

    def write_frame(self, frame: LumaFrame, metric: MetricKind, template: Optional[str],
                    multiple: bool) -> Optional[str]:
        path = self.outputs.resolve(template, metric, multiple)
        if path is None:
            return None

        def write():
            with open(self.outputs.prepare(path), 'wb') as f:
                save_pgm(frame, f)

        _stage('write', write)
        logger.info(f"Wrote reconstructed frame to {path}")
        return path

    def cmd_estimate(self) -> List[str]:
        reference, target = self.load_frames()
        written = []
        for metric in self.spec.metrics:
            motion_field, _ = self.estimate(metric, reference, target)
            written.append(self.write_field(motion_field, self.spec.out_field or DEFAULT_FIELD_PATH))
        return written

    def cmd_reconstruct(self) -> str:
        if not self.spec.field_path:
            raise StageError('load', RunSpecError("reconstruct needs --field"))

        def read_field():
            with open(self.spec.field_path, 'r', newline='', encoding='utf-8') as f:
                return read_field_csv(f)

        motion_field = _stage('load', read_field)
        reference = self.load_reference()
        frame = _stage('compensate', compensate, reference, motion_field)
        return self.write_frame(frame, motion_field.metric, self.spec.out_frame or DEFAULT_FRAME_PATH, False)

    def run_metric(self, metric: MetricKind, reference: LumaFrame, target: LumaFrame,
                   comparator: FrameComparator) -> ComparisonReport:
        motion_field, elapsed = self.estimate(metric, reference, target)
        frame = _stage('compensate', compensate, reference, motion_field)
        report = _stage('compare', comparator.compare, target, frame, elapsed, metric)
        self.write_field(motion_field, self.spec.out_field)
        self.write_frame(frame, metric, self.spec.out_frame, self.spec.multiple)
        return report

    def cmd_report(self) -> List[ComparisonReport]:
        reference, target = self.load_frames()
        comparator = FrameComparator(self.settings)
        rows = [self.run_metric(metric, reference, target, comparator) for metric in self.spec.metrics]
        data = _stage('write', emit_report, rows, self.spec.report_format)

        def write():
            if self.spec.out_report:
                with open(self.outputs.prepare(self.spec.out_report), 'wb') as f:
                    f.write(data)
            else:
                sys.stdout.write(data.decode('utf-8'))
                sys.stdout.flush()

        _stage('write', write)
        return rows


def setup_logging(verbose: bool = False):
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)
    logging.getLogger().setLevel(level)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--input', required=True, help='input sequence or image file')
    common.add_argument('--format', choices=FORMAT_CHOICES, default='y4m')
    common.add_argument('--width', type=int, help='frame width (raw only)')
    common.add_argument('--height', type=int, help='frame height (raw only)')
    common.add_argument('--chroma', choices=CHROMA_LAYOUTS, default='420', help='raw chroma layout')
    common.add_argument('--ref-index', type=int, default=0)
    common.add_argument('--target-index', type=int, default=1)
    common.add_argument('--metric', default='all', help='sad, mse, ssim, cwssim, vif, a comma list, or all')
    common.add_argument('--block-size', type=int, default=16, choices=(8, 16))
    common.add_argument('--search-radius', type=int, default=16)
    common.add_argument('--ssim-window', default='block', help='block or sliding:N')
    common.add_argument('--vif-sigma-nsq', type=float, default=0.4)
    common.add_argument('--pyramid-levels', type=int)
    common.add_argument('--pyramid-orients', type=int)
    common.add_argument('--out-field', help='motion field CSV path; may contain {metric}')
    common.add_argument('--out-frame', help='reconstructed PGM path; may contain {metric}')
    common.add_argument('--out-report', help='report path; stdout when omitted')
    common.add_argument('--report-format', choices=REPORT_FORMATS, default='csv')
    common.add_argument('--workers', type=int, default=4, help='block search threads')
    common.add_argument('--log-file')
    common.add_argument('--verbose', action='store_true')

    parser = argparse.ArgumentParser(
        prog='motion-compensate',
        description='Block-matching motion estimation with perceptual matching criteria',
    )
    commands = parser.add_subparsers(dest='command', required=True)
    commands.add_parser('estimate', parents=[common], help='write one motion field per metric')
    reconstruct = commands.add_parser('reconstruct', parents=[common], help='compensate the reference with a field')
    reconstruct.add_argument('--field', required=True, help='motion field CSV to apply')
    commands.add_parser('report', parents=[common], help='estimate, compensate and compare per metric')
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    outputs = OutputManager(log_file=args.log_file)
    outputs.attach_log_file(logging.DEBUG if args.verbose else logging.INFO)
    try:
        try:
            spec = RunSpec.from_args(args)
        except ValueError as e:
            logging.error(f"config stage failed: {str(e)}")
            return 1

        app = MotionCompensationApp(spec, outputs)
        if args.command == 'estimate':
            app.cmd_estimate()
        elif args.command == 'reconstruct':
            app.cmd_reconstruct()
        else:
            app.cmd_report()
        return 0
    except StageError as e:
        logging.error(f"{args.command} aborted: {str(e)}")
        return 1
    finally:
        outputs.close()


if __name__ == '__main__':
    sys.exit(main())
