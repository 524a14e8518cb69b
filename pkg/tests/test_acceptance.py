"""
Full pipeline on the default synthetic dataset with the default Config.
"""

import os
import tempfile
import unittest

from changespot.cli import cmd_evaluate, cmd_synth
from changespot.config import Config
from changespot.evaluation import METHOD_COMBINATIONS
from changespot.synth import SynthSpec


class AcceptanceTestCase(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        dataset = os.path.join(cls.tmp.name, "dataset")
        cmd_synth(dataset, 0, SynthSpec())
        cls.report = cmd_evaluate(dataset, Config())

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def setUp(self):
        self.accuracy = self.report.accuracy

    def tearDown(self):
        pass

    def test_dataset_size(self):
        self.assertEqual(self.report.query_count, 30)
        self.assertGreaterEqual(self.report.object_count, 30)

    def test_localization_rank1(self):
        self.assertGreaterEqual(self.report.localization["rank1"], 90.0)

    def test_fd_detects_planted_objects(self):
        self.assertGreaterEqual(self.accuracy["FD"][20], 70.0)

    def test_fusion_not_worse_than_fd(self):
        self.assertGreaterEqual(self.accuracy["FD+AD+PC"][20], self.accuracy["FD"][20])

    def test_table_complete_and_monotone(self):
        self.assertEqual(sorted(self.accuracy), sorted(METHOD_COMBINATIONS))
        entries = 0
        for method in METHOD_COMBINATIONS:
            row = [self.accuracy[method][x] for x in (5, 10, 15, 20)]
            for value in row:
                self.assertIsNotNone(value, method)
                self.assertGreaterEqual(value, 0.0)
                self.assertLessEqual(value, 100.0)
            self.assertEqual(row, sorted(row), method)
            entries += len(row)
        self.assertEqual(entries, 24)


if "__main__" == __name__:
    unittest.main()
