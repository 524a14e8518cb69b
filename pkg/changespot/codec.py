"""
The artifact layouts. Each encoder returns the complete file contents and
each decoder takes them back, raising BAD_ARTIFACT on anything that does
not parse. All multi-byte fields are little-endian.

    CSVOC1  u32 count, u32 radius, count x 32-byte words
    CSIDX1  u32 docs, per doc: i32 map id, u32 roi id, u8 source,
              i32 x y w h, f64 score, text name
            u32 words, per word in ascending id: i32 word id, u32 count,
              u32 doc id deltas (first from 0), i32 xy pairs
            u32 images, then per image in insertion order: i32 map id,
              text name, u32 width, u32 height, u32 entries, i32 words,
              i32 xy pairs, f64 responses, 32-byte descriptors
    CSPM1   u32 place id, u32 width, u32 height, u32 d, u32 centroid size,
            f32 centroid, f32 mean, f32 basis (pixels x d, row-major),
            f64 mu, f64 sigma, f64 c
    CSLOC1  u32 width, u32 height, f32 values row-major
    CSASG1  u32 count, then (i32 map id, i32 place id) pairs

Doc ids index the doc table. Decoding restores postings, document
statistics and the map BoWs as encoded, then freezes the index.
"""

import logging
from collections import Counter

import numpy as np

from changespot.anomaly import PlaceModel
from changespot.comm import make_header, read_header, pack_fields, pack_array, pack_text, FieldReader
from changespot.const import DESCRIPTOR_BYTES
from changespot.errors import BAD_ARTIFACT, MISSING_PATH, UNWRITABLE_OUTPUT
from changespot.features import BoWImage, Vocabulary
from changespot.imaging import Rect
from changespot.localization import Document, InvertedIndex
from changespot.roi import ROI
from changespot.utils import ChangeSpotException

logger = logging.getLogger(__name__)

VOCAB_MAGIC = "CSVOC1"
INDEX_MAGIC = "CSIDX1"
PLACE_MAGIC = "CSPM1"
LOC_MAGIC = "CSLOC1"
ASSIGN_MAGIC = "CSASG1"


def _finish(reader: FieldReader, magic: str):
    if not reader.at_end():
        raise ChangeSpotException(
            BAD_ARTIFACT.code(),
            BAD_ARTIFACT.msg(),
            f"{magic}: {len(reader.buf) - reader.offset} trailing bytes",
        )


def encode_vocabulary(voc: Vocabulary) -> bytes:
    return (
        make_header(VOCAB_MAGIC)
        + pack_fields("II", len(voc), voc.radius)
        + pack_array(voc.words, "u1")
    )


def decode_vocabulary(buf: bytes) -> Vocabulary:
    reader = FieldReader(buf, read_header(buf, VOCAB_MAGIC))
    count, radius = reader.read("II")
    words = reader.read_array("u1", count * DESCRIPTOR_BYTES, (count, DESCRIPTOR_BYTES))
    _finish(reader, VOCAB_MAGIC)
    return Vocabulary(radius, words)


def _encode_bow(bow: BoWImage) -> bytes:
    n = len(bow)
    return b"".join(
        [
            pack_text(str(bow.image_id)),
            pack_fields("III", bow.width, bow.height, n),
            pack_array(bow.word_ids, "<i4"),
            pack_array(bow.xy, "<i4"),
            pack_array(bow.responses, "<f8"),
            pack_array(bow.descriptors, "u1"),
        ]
    )


def _decode_bow(reader: FieldReader) -> BoWImage:
    name = reader.read_text()
    width, height, n = reader.read("III")
    word_ids = reader.read_array("<i4", n)
    xy = reader.read_array("<i4", 2 * n, (n, 2))
    responses = reader.read_array("<f8", n)
    descriptors = reader.read_array("u1", n * DESCRIPTOR_BYTES, (n, DESCRIPTOR_BYTES))
    return BoWImage(name, width, height, word_ids, xy, responses, descriptors)


def _encode_roi(roi: ROI) -> bytes:
    return (
        pack_fields("IBiiiid", roi.roi_id, roi.source, *roi.rect.as_tuple(), roi.score)
        + pack_text(roi.name)
    )


def _decode_roi(reader: FieldReader) -> ROI:
    roi_id, source, x, y, w, h, score = reader.read("IBiiiid")
    name = reader.read_text()
    try:
        rect = Rect(x, y, w, h)
    except ChangeSpotException as ex:
        raise ChangeSpotException(BAD_ARTIFACT.code(), BAD_ARTIFACT.msg(), str(ex)) from ex
    return ROI(rect, source, roi_id, name, score)


def encode_index(idx: InvertedIndex) -> bytes:
    """(map image id, roi id) pairs must be unique; they key the doc table."""

    doc_of = {(doc.image_id, doc.roi_id): k for k, doc in enumerate(idx.docs)}
    parts = [make_header(INDEX_MAGIC), pack_fields("I", len(idx.docs))]
    for doc in idx.docs:
        parts.append(pack_fields("i", doc.image_id))
        parts.append(_encode_roi(doc.roi))

    parts.append(pack_fields("I", len(idx.postings)))
    for word_id in sorted(idx.postings):
        plist = sorted(idx.postings[word_id], key=lambda p: doc_of[(p[0], p[1])])
        doc_ids = np.array([doc_of[(p[0], p[1])] for p in plist], dtype=np.int64)
        parts.append(pack_fields("iI", word_id, len(plist)))
        parts.append(pack_array(np.diff(doc_ids, prepend=0), "<u4"))
        parts.append(pack_array([(p[2], p[3]) for p in plist], "<i4"))

    parts.append(pack_fields("I", len(idx.map_bows)))
    for image_id, bow in idx.map_bows.items():
        parts.append(pack_fields("i", image_id))
        parts.append(_encode_bow(bow))
    return b"".join(parts)


def decode_index(buf: bytes) -> InvertedIndex:
    reader = FieldReader(buf, read_header(buf, INDEX_MAGIC))
    docs = []
    for _ in range(reader.read_one("I")):
        image_id = reader.read_one("i")
        docs.append(Document(image_id, _decode_roi(reader)))

    postings = []
    for _ in range(reader.read_one("I")):
        word_id, count = reader.read("iI")
        doc_ids = np.cumsum(reader.read_array("<u4", count).astype(np.int64))
        xy = reader.read_array("<i4", 2 * count, (count, 2))
        if count and doc_ids[-1] >= len(docs):
            raise ChangeSpotException(
                BAD_ARTIFACT.code(),
                BAD_ARTIFACT.msg(),
                f"{INDEX_MAGIC}: word {word_id} points past {len(docs)} docs",
            )
        postings.append((word_id, doc_ids, xy))

    bows = {}
    for _ in range(reader.read_one("I")):
        image_id = reader.read_one("i")
        bows[image_id] = _decode_bow(reader)
    _finish(reader, INDEX_MAGIC)
    return _assemble_index(docs, postings, bows)


def _assemble_index(docs, postings, bows) -> InvertedIndex:
    orphans = sorted({doc.image_id for doc in docs} - set(bows))
    if orphans:
        raise ChangeSpotException(
            BAD_ARTIFACT.code(),
            BAD_ARTIFACT.msg(),
            f"{INDEX_MAGIC}: docs of unknown images {orphans}",
        )
    idx = InvertedIndex()
    idx.map_bows = bows
    idx.docs = docs
    idx.doc_stats = [Counter() for _ in docs]
    for word_id, doc_ids, xy in postings:
        plist = []
        for k, (x, y) in zip(doc_ids.tolist(), xy.tolist()):
            plist.append((docs[k].image_id, docs[k].roi_id, x, y))
            idx.doc_stats[k][word_id] += 1
        idx.postings[word_id] = plist
        idx.doc_freq[word_id] = len(set(doc_ids.tolist()))
    idx.freeze()
    return idx


def encode_place_model(model: PlaceModel) -> bytes:
    return b"".join(
        [
            make_header(PLACE_MAGIC),
            pack_fields(
                "IIIII", model.place_id, model.width, model.height, model.d, model.centroid.size
            ),
            pack_array(model.centroid, "<f4"),
            pack_array(model.mean_image, "<f4"),
            pack_array(model.basis, "<f4"),
            pack_fields("ddd", model.mu, model.sigma, model.c),
        ]
    )


def decode_place_model(buf: bytes) -> PlaceModel:
    reader = FieldReader(buf, read_header(buf, PLACE_MAGIC))
    place_id, width, height, d, centroid_size = reader.read("IIIII")
    pixels = width * height
    centroid = reader.read_array("<f4", centroid_size).astype(np.float64)
    mean = reader.read_array("<f4", pixels).astype(np.float64)
    basis = reader.read_array("<f4", pixels * d, (pixels, d)).astype(np.float64)
    mu, sigma, c = reader.read("ddd")
    _finish(reader, PLACE_MAGIC)
    return PlaceModel(place_id, centroid, mean, basis, mu, sigma, c, width, height)


def encode_loc_map(values) -> bytes:
    values = np.asarray(values)
    height, width = values.shape
    return make_header(LOC_MAGIC) + pack_fields("II", width, height) + pack_array(values, "<f4")


def decode_loc_map(buf: bytes) -> np.ndarray:
    reader = FieldReader(buf, read_header(buf, LOC_MAGIC))
    width, height = reader.read("II")
    values = reader.read_array("<f4", width * height, (height, width)).astype(np.float64)
    _finish(reader, LOC_MAGIC)
    return values


def encode_assignments(assignments: dict) -> bytes:
    pairs = sorted((int(k), int(v)) for k, v in assignments.items())
    return b"".join(
        [make_header(ASSIGN_MAGIC), pack_fields("I", len(pairs))]
        + [pack_fields("ii", k, v) for k, v in pairs]
    )


def decode_assignments(buf: bytes) -> dict:
    reader = FieldReader(buf, read_header(buf, ASSIGN_MAGIC))
    assignments = {}
    for _ in range(reader.read_one("I")):
        map_id, place_id = reader.read("ii")
        assignments[map_id] = place_id
    _finish(reader, ASSIGN_MAGIC)
    return assignments


def write_artifact(path, payload: bytes):
    try:
        with open(path, "wb") as fh:
            fh.write(payload)
    except OSError as ex:
        raise ChangeSpotException(
            UNWRITABLE_OUTPUT.code(), UNWRITABLE_OUTPUT.msg(), f"{path}: {ex}"
        ) from ex
    logger.debug("write_artifact %s: %d bytes", path, len(payload))


def read_artifact(path) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as ex:
        raise ChangeSpotException(MISSING_PATH.code(), MISSING_PATH.msg(), str(path)) from ex
