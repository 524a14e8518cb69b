"""
Gradient-histogram descriptors and the PC LoC map.
"""

import unittest

import numpy as np

from changespot.const import GRAD_DESCRIPTOR_SIZE
from changespot.errors import NO_REFERENCE_FEATURES, PATCH_OUT_OF_BOUNDS
from changespot.features import Keypoint, detect_keypoints
from changespot.imaging import Image
from changespot.pairwise import (
    descriptor_matrix,
    grad_descriptors,
    nearest_distances,
    pc_loc_map,
    splat,
)
from changespot.utils import ChangeSpotException


def blocks(seed, width=96, height=96):
    rng = np.random.default_rng(seed)
    coarse = rng.integers(0, 256, size=(height // 8, width // 8))
    return np.kron(coarse, np.ones((8, 8), dtype=np.int64)).astype(np.uint8)


class PairwiseTestCase(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(5)

    def tearDown(self):
        pass

    def test_flat_patch(self):
        img = Image(np.full((40, 40), 90, dtype=np.uint8))

        desc = grad_descriptors(img, [Keypoint(20, 20, 1.0)])[0]

        self.assertEqual(desc.values.shape, (GRAD_DESCRIPTOR_SIZE,))
        self.assertFalse(desc.values.any())

    def test_normalized_and_deterministic(self):
        img = Image(self.rng.integers(0, 256, size=(40, 40)))
        kp = Keypoint(20, 20, 1.0)

        first = grad_descriptors(img, [kp])[0]
        second = grad_descriptors(img, [kp])[0]

        self.assertAlmostEqual(float(np.linalg.norm(first.values)), 1.0, places=6)
        self.assertTrue(np.all(first.values >= 0))
        np.testing.assert_array_equal(first.values, second.values)

    def test_rotated_patch_permutes_bins(self):
        pixels = self.rng.integers(0, 256, size=(40, 40)).astype(np.uint8)
        kp = Keypoint(20, 20, 1.0)

        a = grad_descriptors(Image(pixels), [kp])[0].values.reshape(4, 4, 8)
        b = grad_descriptors(Image(np.rot90(pixels)), [kp])[0].values.reshape(4, 4, 8)

        for bi in range(4):
            for bj in range(4):
                for o in range(8):
                    self.assertAlmostEqual(b[bi, bj, o], a[bj, 3 - bi, (o + 2) % 8], places=9)

    def test_patch_out_of_bounds(self):
        img = Image(np.zeros((40, 40), dtype=np.uint8))

        with self.assertRaises(ChangeSpotException) as ctx:
            grad_descriptors(img, [Keypoint(8, 20, 1.0)])
        self.assertEqual(ctx.exception.code, PATCH_OUT_OF_BOUNDS.code())
        with self.assertRaises(ChangeSpotException):
            grad_descriptors(img, [Keypoint(20, 32, 1.0)])

    def test_nearest_distances_match_exhaustive(self):
        q = self.rng.random((30, GRAD_DESCRIPTOR_SIZE))
        m = self.rng.random((45, GRAD_DESCRIPTOR_SIZE))

        fast = nearest_distances(q, m)

        for i in range(q.shape[0]):
            expected = min(float(np.sqrt(((q[i] - m[j]) ** 2).sum())) for j in range(m.shape[0]))
            self.assertAlmostEqual(fast[i], expected, places=9)

    def test_splat(self):
        values = splat((30, 20), [(5, 5), (8, 5)], [2.0, 3.0], radius=2)

        self.assertEqual(values.shape, (20, 30))
        self.assertEqual(values[5, 5], 2.0)
        self.assertEqual(values[5, 7], 3.0)
        self.assertEqual(values[5, 10], 3.0)
        self.assertEqual(values[7, 5], 2.0)
        self.assertEqual(values[7, 7], 0.0)
        self.assertEqual(values[15, 20], 0.0)

    def test_identical_pair(self):
        img = Image(blocks(1))

        loc = pc_loc_map(img, img)

        self.assertEqual(loc.dims, img.dims)
        self.assertLess(float(loc.values.max()), 1e-9)

    def test_keypoint_scores_match_oracle(self):
        query, reference = Image(blocks(2)), Image(blocks(3))
        kps = detect_keypoints(query)
        qd = descriptor_matrix(grad_descriptors(query, kps))
        md = descriptor_matrix(grad_descriptors(reference, detect_keypoints(reference)))

        loc = pc_loc_map(query, reference, radius=0)

        for kp, desc in zip(kps, qd):
            expected = np.sqrt(((md - desc) ** 2).sum(axis=1)).min()
            self.assertAlmostEqual(loc.values[kp.y, kp.x], expected, places=9)

    def test_planted_change(self):
        pixels = blocks(4)
        planted = pixels.copy()
        planted[32:64, 32:64] = blocks(9, 32, 32)
        kps = detect_keypoints(Image(planted))

        loc = pc_loc_map(Image(planted), Image(pixels), radius=0)

        inside = [loc.values[k.y, k.x] for k in kps if 34 <= k.x < 62 and 34 <= k.y < 62]
        outside = [loc.values[k.y, k.x] for k in kps if not (24 <= k.x < 72 and 24 <= k.y < 72)]
        self.assertGreater(len(inside), 0)
        self.assertGreater(np.mean(inside), np.mean(outside))

    def test_featureless_reference(self):
        flat = Image(np.full((64, 64), 10, dtype=np.uint8))

        with self.assertRaises(ChangeSpotException) as ctx:
            pc_loc_map(Image(blocks(1, 64, 64)), flat)
        self.assertEqual(ctx.exception.code, NO_REFERENCE_FEATURES.code())

        loc = pc_loc_map(flat, Image(blocks(1)))
        self.assertFalse(loc.values.any())


if "__main__" == __name__:
    unittest.main()
