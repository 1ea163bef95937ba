import re
from typing import List, Optional
import logging

from processors.metrics import MetricKind, MetricParameterError


class OptionParser:
    """Parses the small option languages of the command line: metric lists and SSIM window specs."""

    def __init__(self, supported_metrics: Optional[List[MetricKind]] = None):
        self.supported_metrics = supported_metrics if supported_metrics else list(MetricKind)
        self.window_pattern = re.compile(r'^sliding(?::(\d+))?(?:/(\d+))?$', re.IGNORECASE)

    def parse_metrics(self, text: str) -> List[MetricKind]:
        """
        Parse 'all' or a comma separated list of metric names, keeping first-seen order.
        """
        if text is None or not text.strip():
            raise MetricParameterError("At least one metric is required")
        if text.strip().lower() == 'all':
            return list(self.supported_metrics)

        metrics = []
        for name in text.split(','):
            if not name.strip():
                continue
            kind = MetricKind.parse(name)
            if kind not in self.supported_metrics:
                raise MetricParameterError(f"Metric not supported here: {name}")
            if kind in metrics:
                logging.warning(f"Metric {kind.label} listed twice, ignoring the repeat")
                continue
            metrics.append(kind)
        if not metrics:
            raise MetricParameterError(f"No metric found in {text!r}")
        return metrics

    def parse_window(self, text: str) -> dict:
        """
        Parse 'block' or 'sliding:N' (optionally 'sliding:N/S' for stride S) into settings keys.
        """
        spec = (text or 'block').strip()
        if spec.lower() == 'block':
            return {'ssim_window': None, 'ssim_stride': 1}
        match = self.window_pattern.match(spec)
        if not match:
            raise MetricParameterError(f"Bad SSIM window spec {text!r}; use block or sliding:N")
        size = int(match.group(1)) if match.group(1) else 8
        stride = int(match.group(2)) if match.group(2) else 1
        if size < 2 or stride < 1:
            raise MetricParameterError(f"Bad SSIM window spec {text!r}")
        return {'ssim_window': size, 'ssim_stride': stride}
