import os
import logging
from typing import Optional

from processors.metrics import MetricKind

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


class OutputManager:
    def __init__(self, root_dir: Optional[str] = None, log_file: Optional[str] = None):
        """
        Resolve output paths under an optional root directory and own the optional log file handler.
        """
        self.root_dir = os.path.abspath(root_dir) if root_dir else None
        self.log_file = log_file
        self._handler: Optional[logging.Handler] = None

    def resolve(self, template: Optional[str], metric: MetricKind, multiple: bool) -> Optional[str]:
        """Per-metric output path: '{metric}' is substituted, else '_<metric>' goes before the extension."""
        if not template:
            return None
        if '{metric}' in template:
            path = template.replace('{metric}', metric.value)
        elif multiple:
            base, ext = os.path.splitext(template)
            path = f"{base}_{metric.value}{ext}"
        else:
            path = template
        if self.root_dir and not os.path.isabs(path):
            path = os.path.join(self.root_dir, path)
        return path

    def prepare(self, path: str) -> str:
        """Create the parent directory of an output path."""
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
        return path

    def attach_log_file(self, level: int = logging.INFO) -> Optional[logging.Handler]:
        if not self.log_file or self._handler is not None:
            return self._handler
        self.prepare(self.log_file)
        handler = logging.FileHandler(self.log_file, encoding='utf-8')
        handler.setLevel(level)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logging.getLogger().addHandler(handler)
        self._handler = handler
        return handler

    def close(self):
        """Detach and close the log file handler."""
        if self._handler is None:
            return
        try:
            logging.getLogger().removeHandler(self._handler)
            self._handler.close()
        except Exception as e:
            logging.error(f"Closing log file failed: {str(e)}")
        finally:
            self._handler = None

    def verify_file(self, path: str) -> bool:
        """Check that an output exists and is not empty."""
        return os.path.exists(path) and os.path.getsize(path) > 0
