"""
Binary artifact layouts.
"""

import os
import struct
import tempfile
import unittest

import numpy as np

from changespot import codec
from changespot.anomaly import train_place_model
from changespot.errors import BAD_ARTIFACT, MISSING_PATH
from changespot.features import BoWImage, Vocabulary
from changespot.imaging import Image, Rect
from changespot.localization import InvertedIndex, StageFlags, index_add, weak_query
from changespot.roi import ROI, RoiSource, rois_for_image
from changespot.utils import ChangeSpotException


class CodecTestCase(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(17)
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def random_bow(self, name, n=30):
        return BoWImage(
            name,
            80,
            60,
            self.rng.integers(0, 25, n),
            np.stack([self.rng.integers(0, 80, n), self.rng.integers(0, 60, n)], axis=1),
            self.rng.random(n),
            self.rng.integers(0, 256, size=(n, 32)),
        )

    def test_vocabulary_layout(self):
        voc = Vocabulary(radius=50, words=self.rng.integers(0, 256, size=(3, 32)))

        buf = codec.encode_vocabulary(voc)
        decoded = codec.decode_vocabulary(buf)

        self.assertEqual(buf[:6], b"CSVOC1")
        self.assertEqual(len(buf), 6 + 8 + 3 * 32)
        self.assertEqual(decoded.radius, 50)
        np.testing.assert_array_equal(decoded.words, voc.words)

    def test_index_rebuilds_identically(self):
        idx = InvertedIndex()
        for image_id in (3, 1, 8):
            index_add(idx, image_id, rois_for_image((80, 60), "J+B"), self.random_bow(f"map_{image_id}"))
        idx.freeze()
        query = self.random_bow("q")

        decoded = codec.decode_index(codec.encode_index(idx))

        self.assertTrue(decoded.frozen)
        self.assertEqual(decoded.n_docs, idx.n_docs)
        self.assertEqual(dict(decoded.postings), dict(idx.postings))
        self.assertEqual(decoded.doc_freq, idx.doc_freq)
        self.assertEqual(
            weak_query(decoded, query, StageFlags()).items, weak_query(idx, query, StageFlags()).items
        )

    def test_index_postings_layout(self):
        rois = [
            ROI(Rect(0, 0, 20, 20), RoiSource.TEMPLATE, 0, "J0"),
            ROI(Rect(5, 5, 10, 10), RoiSource.TEMPLATE, 1, "X"),
        ]
        bow = BoWImage(
            "m", 20, 20, [7, 7, 2], [[1, 1], [10, 10], [2, 3]], [1.0, 1.0, 1.0], np.zeros((3, 32))
        )
        other = BoWImage("n", 20, 20, [7], [[12, 12]], [1.0], np.zeros((1, 32)))
        idx = InvertedIndex()
        index_add(idx, 4, rois, bow)
        index_add(idx, 9, rois, other)
        idx.freeze()

        buf = codec.encode_index(idx)

        docs = struct.pack("<I", 4)
        for image_id in (4, 9):
            for roi in rois:
                fields = (image_id, roi.roi_id, roi.source, *roi.rect.as_tuple(), 1.0)
                docs += struct.pack("<iIBiiiid", *fields)
                docs += struct.pack("<H", len(roi.name)) + roi.name.encode("ascii")
        # doc ids 0..3 are (4, J0), (4, X), (9, J0), (9, X)
        postings = struct.pack("<I", 2)
        postings += struct.pack("<iI", 2, 1) + struct.pack("<I", 0) + struct.pack("<2i", 2, 3)
        postings += struct.pack("<iI", 7, 5) + struct.pack("<5I", 0, 0, 1, 1, 1)
        postings += struct.pack("<10i", 1, 1, 10, 10, 10, 10, 12, 12, 12, 12)

        self.assertEqual(buf[:6], b"CSIDX1")
        self.assertEqual(buf[6 : 6 + len(docs)], docs)
        self.assertEqual(buf[6 + len(docs) : 6 + len(docs) + len(postings)], postings)
        self.assertEqual(struct.unpack_from("<Ii", buf, 6 + len(docs) + len(postings)), (2, 4))

        decoded = codec.decode_index(buf)
        self.assertEqual(decoded.postings[7], idx.postings[7])
        self.assertEqual(decoded.doc_stats, idx.doc_stats)
        self.assertEqual(decoded.doc_freq[7], 4)
        with self.assertRaises(ChangeSpotException) as ctx:
            codec.decode_index(buf[: 6 + len(docs) + 20])
        self.assertEqual(ctx.exception.code, BAD_ARTIFACT.code())

    def test_place_model(self):
        images = [Image(self.rng.integers(0, 256, size=(16, 16))) for _ in range(4)]
        model = train_place_model(images, d=2, place_id=7, working_size=16)

        decoded = codec.decode_place_model(codec.encode_place_model(model))

        self.assertEqual((decoded.place_id, decoded.d, decoded.width), (7, 2, 16))
        np.testing.assert_allclose(decoded.basis, model.basis, atol=1e-6)
        self.assertEqual((decoded.mu, decoded.sigma, decoded.c), (model.mu, model.sigma, model.c))

    def test_assignments(self):
        buf = codec.encode_assignments({4: 1, 0: 0, 2: 1})

        self.assertEqual(codec.decode_assignments(buf), {0: 0, 2: 1, 4: 1})

    def test_corrupt_artifacts(self):
        buf = codec.encode_loc_map(np.zeros((2, 3)))

        with self.assertRaises(ChangeSpotException) as ctx:
            codec.decode_loc_map(buf + b"\x00")
        self.assertEqual(ctx.exception.code, BAD_ARTIFACT.code())
        with self.assertRaises(ChangeSpotException) as ctx:
            codec.decode_loc_map(buf[:-2])
        self.assertEqual(ctx.exception.code, BAD_ARTIFACT.code())
        with self.assertRaises(ChangeSpotException) as ctx:
            codec.decode_vocabulary(buf)
        self.assertEqual(ctx.exception.code, BAD_ARTIFACT.code())

    def test_files(self):
        path = os.path.join(self.tmp.name, "a.csasg")

        codec.write_artifact(path, codec.encode_assignments({1: 0}))

        self.assertEqual(codec.decode_assignments(codec.read_artifact(path)), {1: 0})
        with self.assertRaises(ChangeSpotException) as ctx:
            codec.read_artifact(os.path.join(self.tmp.name, "none.csasg"))
        self.assertEqual(ctx.exception.code, MISSING_PATH.code())


if "__main__" == __name__:
    unittest.main()
