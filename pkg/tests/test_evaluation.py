"""
Cell pooling, masking, channel fusion and the accuracy protocol.
"""

import json
import math
import os
import tempfile
import unittest

import numpy as np

from changespot.errors import (
    DIMENSION_MISMATCH,
    INVALID_ARGUMENT,
    MALFORMED_GROUND_TRUTH,
    NO_GROUND_TRUTH,
    SHAPE_MISMATCH,
    UNKNOWN_METHOD,
)
from changespot.evaluation import (
    GroundTruth,
    MetricsReport,
    apply_mask,
    cell_order,
    detections,
    fuse_channels,
    ground_truth_lines,
    leader_stats,
    load_ground_truth,
    method_name,
    parse_methods,
    pool_cells,
    query_grades,
    top_x_accuracy,
)
from changespot.imaging import CellGrid, Image, LoCMap, Rect
from changespot.utils import ChangeSpotException


def oracle_grid(boxes, width=100, height=100, cell=10):
    values = np.zeros((height, width))
    for box in boxes:
        values[box.slices()] = 1.0
    return pool_cells(LoCMap(values), cell)


class EvaluationTestCase(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(8)
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def test_pool_constant_and_hot_pixel(self):
        grid = pool_cells(LoCMap(np.full((25, 31), 0.7)), 10)
        self.assertEqual(grid.shape, (3, 4))
        self.assertTrue(np.all(grid.values == 0.7))

        values = np.zeros((25, 31))
        values[13, 27] = 5.0
        grid = pool_cells(LoCMap(values), 10)
        self.assertEqual(int((grid.values != 0).sum()), 1)
        self.assertEqual(grid.values[1, 2], 5.0)

    def test_pool_matches_double_loop(self):
        values = self.rng.random((23, 37))

        grid = pool_cells(LoCMap(values), 10)

        for row in range(grid.rows):
            for col in range(grid.cols):
                best = max(
                    values[y, x]
                    for y in range(row * 10, min(row * 10 + 10, 23))
                    for x in range(col * 10, min(col * 10 + 10, 37))
                )
                self.assertEqual(grid.values[row, col], best)

    def test_mask_loc_map(self):
        loc = LoCMap(self.rng.random((20, 30)))
        half = np.zeros((20, 30), dtype=np.uint8)
        half[:, :15] = 255

        self.assertTrue(np.array_equal(apply_mask(loc, Image(np.zeros((20, 30)))).values, loc.values))
        self.assertFalse(apply_mask(loc, Image(np.ones((20, 30)))).values.any())
        masked = apply_mask(loc, Image(half)).values
        self.assertFalse(masked[:, :15].any())
        np.testing.assert_array_equal(masked[:, 15:], loc.values[:, 15:])

        with self.assertRaises(ChangeSpotException) as ctx:
            apply_mask(loc, Image(np.zeros((20, 31))))
        self.assertEqual(ctx.exception.code, DIMENSION_MISMATCH.code())

    def test_mask_grid(self):
        grid = CellGrid(30, 20, 10, np.arange(1, 7, dtype=float).reshape(2, 3))
        cell_mask = np.zeros((2, 3))
        cell_mask[0, 1] = 1
        frame_mask = np.zeros((20, 30))
        frame_mask[:10, :10] = 1
        frame_mask[10:15, 20:] = 1

        self.assertEqual(apply_mask(grid, Image(cell_mask)).values.tolist(), [[1, 0, 3], [4, 5, 6]])
        # only fully masked cells are zeroed
        self.assertEqual(apply_mask(grid, Image(frame_mask)).values.tolist(), [[0, 2, 3], [4, 5, 6]])

    def test_pool_commutes_with_aligned_mask(self):
        loc = LoCMap(self.rng.random((40, 50)))
        cells = self.rng.random((4, 5)) > 0.5
        frame = np.kron(cells, np.ones((10, 10))).astype(np.uint8)

        left = pool_cells(apply_mask(loc, Image(frame)), 10).values
        right = apply_mask(pool_cells(loc, 10), Image(frame)).values

        np.testing.assert_array_equal(left, right)

    def test_fuse_single_channel(self):
        grid = CellGrid(40, 40, 10, self.rng.random((4, 4)))

        fused = fuse_channels([grid])

        np.testing.assert_array_equal(cell_order(fused.values), cell_order(grid.values))

    def test_fuse_example(self):
        a = CellGrid(20, 10, 10, [[2.0, 1.0]])
        b = CellGrid(20, 10, 10, [[1.0, 2.0]])

        fused = fuse_channels([a, b])

        self.assertEqual(fused.values.tolist(), [[1.5, 1.5]])

    def test_fuse_matches_brute_force(self):
        grids = [CellGrid(40, 40, 10, self.rng.integers(0, 5, (4, 4)).astype(float)) for _ in range(3)]

        fused = fuse_channels(grids)

        for k in range(16):
            expected = 0.0
            for grid in grids:
                flat = grid.values.reshape(-1)
                rank = 1 + sum(
                    1 for j in range(16) if flat[j] > flat[k] or (flat[j] == flat[k] and j < k)
                )
                expected += 1.0 / rank
            self.assertAlmostEqual(fused.values.reshape(-1)[k], expected)

    def test_fuse_invariant_to_monotone_rescaling(self):
        grids = [CellGrid(40, 40, 10, self.rng.random((4, 4))) for _ in range(3)]
        rescaled = list(grids)
        rescaled[1] = grids[1].with_values(np.exp(3.0 * grids[1].values) + 7.0)

        np.testing.assert_array_equal(
            cell_order(fuse_channels(grids).values), cell_order(fuse_channels(rescaled).values)
        )

    def test_fuse_shape_mismatch(self):
        with self.assertRaises(ChangeSpotException) as ctx:
            fuse_channels([CellGrid(40, 40, 10), CellGrid(50, 40, 10)])
        self.assertEqual(ctx.exception.code, SHAPE_MISMATCH.code())

    def test_oracle_detector(self):
        boxes = [Rect(20, 20, 20, 20), Rect(60, 70, 30, 10)]
        gts = [GroundTruth("q", boxes)]
        fused = {"q": oracle_grid(boxes)}

        self.assertEqual(top_x_accuracy(fused, gts, 7), 100.0)
        self.assertEqual(top_x_accuracy(fused, gts, 100), 100.0)
        self.assertEqual(top_x_accuracy(fused, gts, 1), 0.0)

    def test_accuracy_non_decreasing_in_x(self):
        gts, fused = [], {}
        for q in range(6):
            boxes = [Rect(*self.rng.integers(0, 60, 2), *self.rng.integers(5, 40, 2)) for _ in range(2)]
            gts.append(GroundTruth(q, boxes))
            fused[q] = CellGrid(100, 100, 10, self.rng.random((10, 10)))

        values = [top_x_accuracy(fused, gts, x) for x in range(5, 101, 5)]

        self.assertEqual(values, sorted(values))
        self.assertEqual(values[-1], 100.0)

    def test_iou_rule(self):
        box = Rect(0, 0, 20, 10)
        fused = {"q": oracle_grid([box])}
        gts = [GroundTruth("q", [box])]

        self.assertEqual(top_x_accuracy(fused, gts, 2, rule="iou"), 100.0)
        self.assertEqual(top_x_accuracy(fused, gts, 50, rule="iou"), 0.0)
        self.assertEqual(top_x_accuracy(fused, gts, 50, rule="coverage"), 100.0)

    def test_global_scope(self):
        box = Rect(0, 0, 10, 10)
        gts = [GroundTruth("a", [box]), GroundTruth("b", [box])]
        hot = oracle_grid([box])
        fused = {"a": hot, "b": hot.with_values(hot.values * 0.5)}

        self.assertEqual(top_x_accuracy(fused, gts, 1, scope="query"), 100.0)
        self.assertEqual(top_x_accuracy(fused, gts, 0.5, scope="global"), 50.0)

    def test_missing_grid_counts_as_missed(self):
        box = Rect(0, 0, 10, 10)
        gts = [GroundTruth("a", [box]), GroundTruth("b", [box])]

        found = detections({"a": oracle_grid([box])}, gts, 5)

        self.assertEqual(found, {"a": [True], "b": [False]})

    def test_accuracy_errors(self):
        fused = {"q": oracle_grid([Rect(0, 0, 10, 10)])}

        with self.assertRaises(ChangeSpotException) as ctx:
            top_x_accuracy(fused, [GroundTruth("q", [Rect(0, 0, 10, 10)])], 0)
        self.assertEqual(ctx.exception.code, INVALID_ARGUMENT.code())
        with self.assertRaises(ChangeSpotException) as ctx:
            top_x_accuracy(fused, [GroundTruth("q")], 10)
        self.assertEqual(ctx.exception.code, NO_GROUND_TRUTH.code())

    def test_query_grades(self):
        box = Rect(0, 0, 30, 30)
        gts = [GroundTruth("q", [box]), GroundTruth("empty")]
        fused = {"q": oracle_grid([box]), "empty": CellGrid(100, 100, 10)}

        self.assertEqual(query_grades(fused, gts), {"q": 5})
        self.assertEqual(query_grades({"q": CellGrid(100, 100, 10)}, gts[:1]), {"q": 15})
        self.assertEqual(
            query_grades({"q": oracle_grid([Rect(70, 70, 30, 30)])}, gts[:1]), {"q": math.inf}
        )

    def test_leader_stats(self):
        solo = leader_stats({"FD": {"q": 5}, "AD": {"q": 20}, "PC": {"q": 20}})
        self.assertEqual(solo["FD"], {"solo": 100.0, "co": 0.0})
        self.assertEqual(solo["AD"], {"solo": 0.0, "co": 0.0})

        tied = leader_stats({"FD": {"q": 10}, "AD": {"q": 10}})
        self.assertEqual(tied["FD"], {"solo": 0.0, "co": 100.0})
        self.assertEqual(tied["AD"], {"solo": 0.0, "co": 100.0})

        with self.assertRaises(ChangeSpotException):
            leader_stats({"FD": {"q": 5}})

    def test_leader_stats_brute_force(self):
        grades = [5, 10, 15, 20, math.inf]
        methods = ["FD", "AD", "PC"]
        table = {m: {q: grades[int(self.rng.integers(0, 5))] for q in range(40)} for m in methods}

        stats = leader_stats(table)

        for m in methods:
            solo = co = 0
            for q in range(40):
                others = [table[o][q] for o in methods if o != m]
                if table[m][q] < min(others):
                    solo += 1
                elif table[m][q] == min(others):
                    co += 1
            self.assertAlmostEqual(stats[m]["solo"], 100.0 * solo / 40)
            self.assertAlmostEqual(stats[m]["co"], 100.0 * co / 40)

    def test_parse_methods(self):
        self.assertEqual(parse_methods("pc+FD"), ["FD", "PC"])
        self.assertEqual(method_name(["PC", "AD", "FD"]), "FD+AD+PC")
        with self.assertRaises(ChangeSpotException) as ctx:
            parse_methods("FD+XY")
        self.assertEqual(ctx.exception.code, UNKNOWN_METHOD.code())

    def test_ground_truth_file(self):
        path = os.path.join(self.tmp.name, "gt.txt")
        gts = [GroundTruth("q1", [Rect(1, 2, 3, 4), Rect(5, 6, 7, 8)]), GroundTruth("q2", [Rect(0, 0, 9, 9)])]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(ground_truth_lines(gts)) + "\n")

        loaded = load_ground_truth(path, {"q1": (40, 40)})

        self.assertEqual(sorted(loaded), ["q1", "q2"])
        self.assertEqual(loaded["q1"].change_boxes, gts[0].change_boxes)

        with open(path, "w", encoding="utf-8") as fh:
            fh.write("q1 1 2 3\n")
        with self.assertRaises(ChangeSpotException) as ctx:
            load_ground_truth(path)
        self.assertEqual(ctx.exception.code, MALFORMED_GROUND_TRUTH.code())

    def test_metrics_report(self):
        accuracy = {m: {x: float(x) for x in (5, 10, 15, 20)} for m in ("FD+AD", "FD")}
        report = MetricsReport(accuracy, (5, 10, 15, 20), 3, 4, {"rank1": 100.0})

        table = report.to_table().splitlines()

        self.assertEqual(report.methods, ["FD", "FD+AD"])
        self.assertEqual(table[0].split(), ["Method", "5", "10", "15", "20"])
        self.assertEqual(table[2].split(), ["FD", "5.0", "10.0", "15.0", "20.0"])
        self.assertEqual(json.loads(report.to_json())["accuracy"]["FD"]["15"], 15.0)
        self.assertEqual(report.to_json(), MetricsReport(accuracy, (5, 10, 15, 20), 3, 4, {"rank1": 100.0}).to_json())


if "__main__" == __name__:
    unittest.main()
