import json
import os
import sys
import unittest

import numpy as np

sys.path.append(os.path.join(os.path.dirname(__file__), '..'))
from processors.evaluator import (
    REPORT_COLUMNS,
    BitplaneDistances,
    ComparisonReport,
    FrameComparator,
    ReportError,
    bitplane_hamming,
    compare_frames,
    emit_report,
    parse_report,
)
from processors.frame_io import LumaFrame
from processors.metrics import MetricKind, ShapeMismatchError
from tests.synthetic import random_block, textured


def sample_report(metric=MetricKind.SAD, seed=0, elapsed=1.23456) -> ComparisonReport:
    target = LumaFrame(textured(32, 32, seed=seed))
    noisy = np.clip(target.samples.astype(int) + random_block(32, seed).astype(int) // 32 - 4, 0, 255)
    return compare_frames(target, LumaFrame(noisy.astype(np.uint8)), elapsed, metric)


class TestBitplaneHamming(unittest.TestCase):
    def test_identity(self):
        frame = LumaFrame(textured(8, 8))
        result = bitplane_hamming(frame, frame)
        self.assertEqual(result.per_plane, (0.0,) * 8)
        self.assertEqual(result.mean, 0.0)

    def test_all_bits_differ(self):
        result = bitplane_hamming(LumaFrame(np.zeros((4, 4), np.uint8)), LumaFrame(np.full((4, 4), 255, np.uint8)))
        self.assertEqual(result.per_plane, (1.0,) * 8)
        self.assertEqual(result.mean, 1.0)

    def test_msb_first(self):
        a = LumaFrame(np.zeros((2, 2), np.uint8))
        b = LumaFrame(np.array([[128, 0], [0, 0]], np.uint8))
        result = bitplane_hamming(a, b)
        self.assertEqual(result.per_plane, (0.25, 0, 0, 0, 0, 0, 0, 0))
        self.assertEqual(result.mean, 0.03125)
        self.assertEqual(result.msb, 0.25)

    def test_lsb_last(self):
        a = LumaFrame(np.zeros((1, 4), np.uint8))
        b = LumaFrame(np.array([[1, 1, 0, 0]], np.uint8))
        self.assertEqual(bitplane_hamming(a, b).per_plane[-1], 0.5)

    def test_symmetric_and_zero_iff_equal(self):
        for seed in range(10):
            a = LumaFrame(random_block(16, seed))
            b = LumaFrame(random_block(16, seed + 1))
            forward, backward = bitplane_hamming(a, b), bitplane_hamming(b, a)
            self.assertEqual(forward, backward)
            self.assertGreater(forward.mean, 0)
            self.assertTrue(all(0 <= p <= 1 for p in forward.per_plane))
            self.assertAlmostEqual(forward.mean, sum(forward.per_plane) / 8, places=15)

    def test_dimension_mismatch(self):
        with self.assertRaises(ShapeMismatchError):
            bitplane_hamming(LumaFrame(np.zeros((2, 2), np.uint8)), LumaFrame(np.zeros((2, 3), np.uint8)))

    def test_needs_eight_planes(self):
        with self.assertRaises(ReportError):
            BitplaneDistances((0.0,) * 7)


class TestCompareFrames(unittest.TestCase):
    def test_identity_best_values(self):
        frame = LumaFrame(textured(32, 32, seed=3))
        for kind in MetricKind:
            report = compare_frames(frame, frame, 0.5, kind)
            with self.subTest(metric=kind.value):
                self.assertEqual(report.metric_used, kind)
                self.assertEqual(report.frame_mse, 0)
                self.assertAlmostEqual(report.frame_ssim, 1.0, delta=1e-9)
                self.assertAlmostEqual(report.frame_vif, 1.0, delta=1e-9)
                self.assertEqual(report.bitplane.mean, 0.0)

    def test_distorted_scores_lower(self):
        report = sample_report()
        self.assertGreater(report.frame_mse, 0)
        self.assertLess(report.frame_ssim, 1.0)
        self.assertLess(report.frame_vif, 1.0)
        self.assertGreater(report.bitplane.mean, 0)
        self.assertAlmostEqual(report.elapsed_seconds, 1.23456)

    def test_dimension_mismatch(self):
        with self.assertRaises(ShapeMismatchError):
            compare_frames(LumaFrame(textured(32, 32)), LumaFrame(textured(32, 40)), 0.0, MetricKind.SAD)

    def test_sliding_ssim_settings(self):
        comparator = FrameComparator({'frame_ssim_window': 4, 'frame_ssim_stride': 2, 'vif_sigma_n_sq': 1.0})
        self.assertEqual((comparator.ssim_params.window_size, comparator.ssim_params.stride), (4, 2))
        self.assertEqual(comparator.vif_params.sigma_n_sq, 1.0)

    def test_negative_elapsed_rejected(self):
        with self.assertRaises(ReportError):
            ComparisonReport(MetricKind.SAD, 0.0, 1.0, 1.0, BitplaneDistances((0.0,) * 8), -1.0)


class TestEmitReport(unittest.TestCase):
    def test_identity_row_csv(self):
        frame = LumaFrame(textured(32, 32, seed=4))
        data = emit_report([compare_frames(frame, frame, 0.0, MetricKind.SAD)], 'csv').decode('utf-8')
        header, row = data.strip().splitlines()
        self.assertEqual(header.split(','), REPORT_COLUMNS)
        self.assertTrue(row.startswith('sad,0.0000,1.0000,1.0000,0.0000,0.0000,'))

    def test_five_rows_stable_columns(self):
        rows = [sample_report(kind, seed) for seed, kind in enumerate(MetricKind)]
        lines = emit_report(rows, 'csv').decode('utf-8').strip().splitlines()
        self.assertEqual(len(lines), 6)
        self.assertEqual(lines[0], 'metric,mse,ssim,vif,dist,time,' + ','.join(f'plane_{k}' for k in range(8)))
        self.assertEqual([line.split(',')[0] for line in lines[1:]], [k.value for k in MetricKind])

    def test_json_round_trip_byte_identical(self):
        rows = [sample_report(kind, seed) for seed, kind in enumerate(MetricKind)]
        first = emit_report(rows, 'json')
        second = emit_report(parse_report(first, 'json'), 'json')
        self.assertEqual(first, second)
        payload = json.loads(first)
        self.assertEqual(list(payload[0].keys()), REPORT_COLUMNS)
        self.assertEqual(payload[0]['time'], 1.2346)

    def test_csv_round_trip_byte_identical(self):
        rows = [sample_report(kind, seed) for seed, kind in enumerate(MetricKind)]
        first = emit_report(rows, 'csv')
        self.assertEqual(emit_report(parse_report(first, 'csv'), 'csv'), first)

    def test_table(self):
        text = emit_report([sample_report(MetricKind.CWSSIM)], 'table').decode('utf-8')
        lines = text.splitlines()
        self.assertTrue(lines[0].startswith('Metric'))
        self.assertTrue(lines[2].startswith('CW-SSIM'))

    def test_deterministic(self):
        rows = [sample_report()]
        self.assertEqual(emit_report(rows, 'csv'), emit_report(rows, 'csv'))

    def test_errors(self):
        with self.assertRaises(ReportError):
            emit_report([], 'csv')
        with self.assertRaises(ReportError):
            emit_report([sample_report()], 'xml')
        with self.assertRaises(ReportError):
            parse_report(b'a,b\n1,2\n', 'csv')
        with self.assertRaises(ReportError):
            parse_report(b'{"metric": "sad"}', 'json')
        with self.assertRaises(ReportError):
            parse_report(b'[{"metric": "sad"}]', 'json')


if __name__ == '__main__':
    unittest.main()
