"""
Commands end to end on a small synthetic dataset.
"""

import builtins
import json
import os
import shutil
import tempfile
import unittest
from unittest import mock

from changespot.cli import cmd_build, cmd_detect, cmd_evaluate, cmd_synth, main
from changespot.config import Config
from changespot.errors import EMPTY_MAP_DIR, MISSING_PATH, NO_GROUND_TRUTH, UNKNOWN_METHOD
from changespot.evaluation import METHOD_COMBINATIONS
from changespot.synth import SynthSpec
from changespot.utils import ChangeSpotException


def small_config():
    return Config(places_k=2, pca_components=2, working_size=16, cluster_size=8, max_keypoints=150)


class CliTestCase(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.dataset = os.path.join(cls.tmp.name, "dataset")
        cls.artifacts = os.path.join(cls.tmp.name, "artifacts")
        spec = SynthSpec(width=128, height=96, scenes=6, queries=3, bing_min=3, bing_max=5)
        cmd_synth(cls.dataset, 11, spec)
        cls.manifest = cmd_build(os.path.join(cls.dataset, "map"), cls.artifacts, small_config())

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def setUp(self):
        self.work = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.work.cleanup()

    def query_path(self, name="query_0000.png"):
        return os.path.join(self.dataset, "queries", name)

    def read(self, *parts):
        with open(os.path.join(*parts), "rb") as fh:
            return fh.read()

    def test_build_manifest(self):
        self.assertEqual(len(self.manifest["map_images"]), 6)
        self.assertEqual(self.manifest["map_images"][0]["name"], "map_0000")
        self.assertIn("vocab.csvoc", self.manifest["files"])
        self.assertIn("index.csidx", self.manifest["files"])
        self.assertEqual(self.manifest["config_digest"], small_config().digest())
        for rel in self.manifest["files"]:
            self.assertTrue(os.path.isfile(os.path.join(self.artifacts, rel)), rel)

    def test_build_is_deterministic(self):
        again = os.path.join(self.work.name, "again")

        manifest = cmd_build(os.path.join(self.dataset, "map"), again, small_config())

        self.assertEqual(manifest["files"], self.manifest["files"])
        for rel in manifest["files"]:
            self.assertEqual(self.read(again, rel), self.read(self.artifacts, rel), rel)

    def test_build_errors(self):
        with self.assertRaises(ChangeSpotException) as ctx:
            cmd_build(os.path.join(self.work.name, "nowhere"), self.work.name)
        self.assertEqual(ctx.exception.code, MISSING_PATH.code())

        empty = os.path.join(self.work.name, "empty")
        os.makedirs(empty)
        with self.assertRaises(ChangeSpotException) as ctx:
            cmd_build(empty, self.work.name)
        self.assertEqual(ctx.exception.code, EMPTY_MAP_DIR.code())

    def test_detect_unchanged_map_image(self):
        queries = os.path.join(self.work.name, "queries")
        os.makedirs(queries)
        shutil.copy(os.path.join(self.dataset, "map", "map_0002.png"), os.path.join(queries, "revisit.png"))
        out = os.path.join(self.work.name, "out")

        result = cmd_detect(os.path.join(queries, "revisit.png"), self.artifacts, "FD", out, small_config())

        self.assertEqual(result["strong"][0]["name"], "map_0002")
        self.assertEqual(
            sorted(os.listdir(out)),
            ["revisit.fd.csloc", "revisit.fd.png", "revisit.fused.json", "revisit.localization.json"],
        )

    def test_fd_only_never_reads_map_imagery(self):
        map_dir = os.path.abspath(os.path.join(self.dataset, "map"))
        real_open = builtins.open
        opened = []

        def spy(file, *args, **kwargs):
            if isinstance(file, (str, bytes, os.PathLike)):
                opened.append(os.path.abspath(os.fsdecode(file)))
            return real_open(file, *args, **kwargs)

        with mock.patch("builtins.open", spy):
            cmd_detect(self.query_path(), self.artifacts, "FD", self.work.name, small_config())

        self.assertTrue(any(path.endswith("index.csidx") for path in opened))
        self.assertFalse([path for path in opened if path.startswith(map_dir + os.sep)])

    def test_detect_all_channels(self):
        out = os.path.join(self.work.name, "out")

        cmd_detect(self.query_path("query_0001.png"), self.artifacts, "FD+AD+PC", out, small_config())

        for channel in ("fd", "ad", "pc"):
            self.assertTrue(os.path.isfile(os.path.join(out, f"query_0001.{channel}.csloc")))
        with open(os.path.join(out, "query_0001.fused.json"), encoding="utf-8") as fh:
            fused = json.load(fh)
        self.assertEqual(fused["method"], "FD+AD+PC")
        self.assertEqual((fused["rows"], fused["cols"]), (10, 13))
        self.assertEqual(len([n for n in os.listdir(out) if n.endswith(".fused.json")]), 1)

    def test_unknown_method(self):
        with self.assertRaises(ChangeSpotException) as ctx:
            cmd_detect(self.query_path(), self.artifacts, "FD+XY", self.work.name)
        self.assertEqual(ctx.exception.code, UNKNOWN_METHOD.code())

        status = main(
            ["detect", self.query_path(), "--artifacts", self.artifacts, "--methods", "FD+XY", "--out", self.work.name]
        )
        self.assertEqual(status, 2)

    def test_pc_unavailable(self):
        artifacts = os.path.join(self.work.name, "artifacts")
        shutil.copytree(self.artifacts, artifacts)
        manifest_path = os.path.join(artifacts, "manifest.json")
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
        manifest["map_dir"] = os.path.join(self.work.name, "gone")
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh)
        args = ["detect", self.query_path(), "--artifacts", artifacts, "--out", self.work.name]

        self.assertEqual(main(args + ["--methods", "FD+PC"]), 4)
        self.assertEqual(main(args + ["--methods", "FD"]), 0)

    def test_evaluate(self):
        report = cmd_evaluate(self.dataset, small_config(), self.artifacts)

        self.assertEqual(report.methods, list(METHOD_COMBINATIONS))
        self.assertEqual(report.query_count, 3)
        for method in METHOD_COMBINATIONS:
            row = [report.accuracy[method][x] for x in (5, 10, 15, 20)]
            self.assertEqual(row, sorted(row))
            self.assertTrue(all(0.0 <= v <= 100.0 for v in row))
        self.assertEqual(report.to_table().splitlines()[0].split(), ["Method", "5", "10", "15", "20", "solo", "co"])

        first = self.read(self.artifacts, "metrics.json")
        cmd_evaluate(self.dataset, small_config(), self.artifacts)
        self.assertEqual(self.read(self.artifacts, "metrics.json"), first)

    def test_evaluate_without_ground_truth(self):
        with self.assertRaises(ChangeSpotException) as ctx:
            cmd_evaluate(self.work.name, small_config(), self.artifacts)
        self.assertEqual(ctx.exception.code, NO_GROUND_TRUTH.code())
        self.assertEqual(main(["evaluate", self.work.name, "--artifacts", self.artifacts]), 3)

    def test_synth_command(self):
        out = os.path.join(self.work.name, "synth")

        status = main(
            ["synth", out, "--seed", "1", "--scenes", "2", "--queries", "0", "--width", "64", "--height", "48"]
        )

        self.assertEqual(status, 0)
        self.assertEqual(os.listdir(os.path.join(out, "queries")), [])
        self.assertEqual(len(os.listdir(os.path.join(out, "map"))), 2)
        with open(os.path.join(out, "gt.txt"), encoding="utf-8") as fh:
            self.assertEqual(fh.read(), "")


if "__main__" == __name__:
    unittest.main()
