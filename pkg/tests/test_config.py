"""
Configuration defaults, parsing and the effective-config digest.
"""

import os
import tempfile
import unittest

from changespot.config import FIELDS, Config
from changespot.errors import BAD_CONFIG, MISSING_PATH
from changespot.utils import ChangeSpotException


class ConfigTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def test_defaults(self):
        cfg = Config()

        self.assertEqual(cfg.top_y, 10)
        self.assertEqual(cfg.places_k, 10)
        self.assertEqual(cfg.normalizer_c, 0.8)
        self.assertEqual(cfg.cell_size, 10)
        self.assertEqual(cfg.x_list, (5, 10, 15, 20))
        self.assertTrue(cfg.use_proposals)

    def test_from_text(self):
        cfg = Config.from_text(
            "# overrides\n"
            "top_y = 5\n"
            "normalizer_c=0.5  # looser\n"
            "x_list = 10, 20\n"
            "use_proposals = no\n"
            "stages = tfidf,ratio\n"
        )

        self.assertEqual(cfg.top_y, 5)
        self.assertEqual(cfg.normalizer_c, 0.5)
        self.assertEqual(cfg.x_list, (10, 20))
        self.assertFalse(cfg.use_proposals)
        self.assertEqual(cfg.stages, "tfidf,ratio")

    def test_bad_values(self):
        for text in (
            "colour = red\n",
            "top_y = zero\n",
            "top_y = 0\n",
            "x_list = 0,120\n",
            "detection_rule = area\n",
            "template_sets = J=2x2:0 0 1 1\n",
            "template_sets = S=2x2:0 0 3 3\n",
            "empty_crop_entries = -1\n",
        ):
            with self.assertRaises(ChangeSpotException) as ctx:
                Config.from_text(text)
            self.assertEqual(ctx.exception.code, BAD_CONFIG.code(), text)

    def test_template_sets(self):
        cfg = Config.from_text("template_sets = S=2x2:0 0 1 1, 1 1 2 2\nquery_roi_sets = J,S\n")

        self.assertEqual(cfg.template_sets, "S=2x2:0 0 1 1, 1 1 2 2")
        self.assertEqual(cfg.query_roi_sets, "J,S")
        self.assertEqual(Config().template_sets, "")
        self.assertEqual(Config().query_roi_sets, "J,B,G,W")

    def test_dump_and_digest(self):
        cfg = Config(top_y=3)
        lines = cfg.dump().splitlines()

        self.assertEqual(len(lines), len(FIELDS))
        self.assertEqual(lines, sorted(lines))
        self.assertIn("top_y=3", lines)
        self.assertEqual(Config.from_text(cfg.dump()).digest(), cfg.digest())
        self.assertNotEqual(Config().digest(), cfg.digest())

    def test_load(self):
        path = os.path.join(self.tmp.name, "changespot.cfg")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("places_k = 4\n")

        self.assertEqual(Config.load(path).places_k, 4)
        with self.assertRaises(ChangeSpotException) as ctx:
            Config.load(os.path.join(self.tmp.name, "missing.cfg"))
        self.assertEqual(ctx.exception.code, MISSING_PATH.code())


if "__main__" == __name__:
    unittest.main()
