import logging
import os
import sys
import tempfile
import unittest

sys.path.append(os.path.join(os.path.dirname(__file__), '..'))
from utils.helpers import OutputManager
from processors.metrics import MetricKind

class TestOutputManager(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.manager = OutputManager(root_dir=self.tmp.name, log_file=os.path.join(self.tmp.name, 'logs', 'run.log'))

    def tearDown(self):
        self.manager.close()
        self.tmp.cleanup()

    def test_no_template(self):
        self.assertIsNone(self.manager.resolve(None, MetricKind.SAD, True))

    def test_placeholder(self):
        path = self.manager.resolve('fields/{metric}.csv', MetricKind.CWSSIM, False)
        self.assertEqual(path, os.path.join(self.tmp.name, 'fields', 'cwssim.csv'))

    def test_suffix_for_several_metrics(self):
        self.assertEqual(self.manager.resolve('/abs/field.csv', MetricKind.VIF, True), '/abs/field_vif.csv')
        self.assertEqual(self.manager.resolve('/abs/field.csv', MetricKind.VIF, False), '/abs/field.csv')

    def test_prepare_creates_parent(self):
        path = os.path.join(self.tmp.name, 'a', 'b', 'frame.pgm')
        self.manager.prepare(path)
        self.assertTrue(os.path.isdir(os.path.dirname(path)))
        self.assertFalse(self.manager.verify_file(path))

    def test_log_file_handler(self):
        handler = self.manager.attach_log_file()
        self.assertIn(handler, logging.getLogger().handlers)
        self.assertIs(self.manager.attach_log_file(), handler)
        logging.getLogger().setLevel(logging.INFO)
        logging.getLogger('test').info('hello from the log test')
        self.manager.close()
        self.assertNotIn(handler, logging.getLogger().handlers)
        self.assertTrue(self.manager.verify_file(self.manager.log_file))
        with open(self.manager.log_file, encoding='utf-8') as f:
            self.assertIn(' - INFO - hello from the log test', f.read())

    def test_without_log_file(self):
        self.assertIsNone(OutputManager().attach_log_file())

if __name__ == '__main__':
    unittest.main()
