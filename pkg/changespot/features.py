"""
Keypoints, binary descriptors, the incrementally grown visual vocabulary and
the BoWImage they produce.

The detector is a FAST-9 segment test and the descriptor a BRIEF-style
string of 256 intensity comparisons over a fixed pseudo-random pattern.
Neither is rotation or scale invariant.
"""

import logging
import threading

import numpy as np
from scipy import ndimage

from changespot.const import (
    UNMAPPED,
    DESCRIPTOR_BITS,
    DESCRIPTOR_BYTES,
    BRIEF_HALF_PATCH,
    BRIEF_SMOOTH_SIZE,
    BRIEF_SEED,
    FAST_THRESHOLD,
    FAST_ARC_LENGTH,
    DETECTOR_MARGIN,
    MIN_DETECT_SIZE,
    DEFAULT_MAX_KEYPOINTS,
    DEFAULT_VOCAB_RADIUS,
)
from changespot.errors import IMAGE_TOO_SMALL, PATCH_OUT_OF_BOUNDS
from changespot.imaging import Image
from changespot.object_implem import Object
from changespot.utils import ChangeSpotException, floatMaxString

logger = logging.getLogger(__name__)

# Bresenham circle of radius 3 as (dx, dy), clockwise from 12 o'clock
FAST_CIRCLE = (
    (0, -3), (1, -3), (2, -2), (3, -1),
    (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1),
    (-3, 0), (-3, -1), (-2, -2), (-1, -3),
)

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)
_HAMMING_CHUNK = 1 << 22


def _brief_pattern() -> np.ndarray:
    """(256, 4) int array of (px, py, qx, qy) offsets inside the 31x31 patch."""
    rng = np.random.default_rng(BRIEF_SEED)
    pattern = rng.integers(
        -BRIEF_HALF_PATCH, BRIEF_HALF_PATCH + 1, size=(DESCRIPTOR_BITS, 4)
    )
    same = (pattern[:, 0] == pattern[:, 2]) & (pattern[:, 1] == pattern[:, 3])
    px = pattern[same, 0]
    pattern[same, 2] = np.where(px < BRIEF_HALF_PATCH, px + 1, px - 1)
    pattern.setflags(write=False)
    return pattern


BRIEF_PATTERN = _brief_pattern()


class Keypoint(Object):
    def __init__(self, x: int, y: int, response: float):
        self.x = int(x)
        self.y = int(y)
        self.response = float(response)

    def __eq__(self, other):
        return (
            isinstance(other, Keypoint)
            and (self.x, self.y, self.response) == (other.x, other.y, other.response)
        )

    def __hash__(self):
        return hash((self.x, self.y, self.response))

    def __str__(self):
        return "X: %d, Y: %d, Response: %s" % (
            self.x,
            self.y,
            floatMaxString(self.response),
        )


class Descriptor(Object):
    """256-bit binary string, packed big-endian into 32 bytes."""

    def __init__(self, bits):
        arr = np.asarray(bits, dtype=np.uint8)
        if arr.shape == (DESCRIPTOR_BITS,):
            arr = np.packbits(arr)
        if arr.shape != (DESCRIPTOR_BYTES,):
            raise ValueError(f"descriptor must be {DESCRIPTOR_BYTES} packed bytes")
        self.bits = arr.copy()
        self.bits.setflags(write=False)

    def bit(self, k: int) -> int:
        return int(np.unpackbits(self.bits)[k])

    def hamming(self, other) -> int:
        return int(_POPCOUNT[np.bitwise_xor(self.bits, other.bits)].sum())

    def __eq__(self, other):
        return isinstance(other, Descriptor) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())

    def __str__(self):
        return self.bits.tobytes().hex()


class GradDescriptor(Object):
    """128 non-negative reals, L2-normalized, or all zero for a flat patch."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=np.float64)

    def distance(self, other) -> float:
        return float(np.linalg.norm(self.values - other.values))

    def __str__(self):
        return "Norm: %s" % floatMaxString(float(np.linalg.norm(self.values)))


def hamming_matrix(a, b) -> np.ndarray:
    """All pairwise Hamming distances between two packed descriptor sets."""

    a = np.atleast_2d(np.asarray(a, dtype=np.uint8))
    b = np.atleast_2d(np.asarray(b, dtype=np.uint8))
    out = np.zeros((a.shape[0], b.shape[0]), dtype=np.int32)
    if a.shape[0] == 0 or b.shape[0] == 0:
        return out
    step = max(1, _HAMMING_CHUNK // (b.shape[0] * DESCRIPTOR_BYTES))
    for start in range(0, a.shape[0], step):
        xor = np.bitwise_xor(a[start : start + step, None, :], b[None, :, :])
        out[start : start + step] = _POPCOUNT[xor].sum(axis=2, dtype=np.int32)
    return out


class BoWImage(Object):
    """
    An image as (visual word, keypoint, descriptor) entries in full-image
    coordinates. Stored column-wise; `entries` gives the row view.
    source_index is each entry's position in the BoW it was extracted into,
    and survives cropping.
    """

    def __init__(
        self,
        image_id,
        width: int,
        height: int,
        word_ids,
        xy,
        responses,
        descriptors,
        source_index=None,
    ):
        self.image_id = image_id
        self.width = int(width)
        self.height = int(height)
        self.word_ids = np.asarray(word_ids, dtype=np.int64).reshape(-1)
        n = self.word_ids.shape[0]
        self.xy = np.asarray(xy, dtype=np.int64).reshape(n, 2)
        self.responses = np.asarray(responses, dtype=np.float64).reshape(n)
        self.descriptors = np.asarray(descriptors, dtype=np.uint8).reshape(
            n, DESCRIPTOR_BYTES
        )
        if source_index is None:
            source_index = np.arange(n, dtype=np.int64)
        self.source_index = np.asarray(source_index, dtype=np.int64).reshape(n)

    @classmethod
    def empty(cls, image_id, width, height):
        return cls(image_id, width, height, [], np.zeros((0, 2)), [], np.zeros((0, DESCRIPTOR_BYTES)))

    def __len__(self):
        return self.word_ids.shape[0]

    @property
    def dims(self) -> tuple:
        return (self.width, self.height)

    @property
    def entries(self) -> list:
        return [
            (
                int(self.word_ids[i]),
                Keypoint(self.xy[i, 0], self.xy[i, 1], self.responses[i]),
                Descriptor(self.descriptors[i]),
            )
            for i in range(len(self))
        ]

    def mapped(self) -> np.ndarray:
        return self.word_ids != UNMAPPED

    def subset(self, mask):
        mask = np.asarray(mask)
        return BoWImage(
            self.image_id,
            self.width,
            self.height,
            self.word_ids[mask],
            self.xy[mask],
            self.responses[mask],
            self.descriptors[mask],
            self.source_index[mask],
        )

    def same_entries(self, other) -> bool:
        return (
            np.array_equal(self.word_ids, other.word_ids)
            and np.array_equal(self.xy, other.xy)
            and np.array_equal(self.responses, other.responses)
            and np.array_equal(self.descriptors, other.descriptors)
        )

    def __str__(self):
        return "Id: %s, Entries: %d, Unmapped: %d" % (
            self.image_id,
            len(self),
            int((~self.mapped()).sum()),
        )


class Vocabulary(Object):
    """
    Visual words as descriptor centroids. A descriptor maps to its nearest
    word when that word lies within `radius` bits; growth appends it as a new
    word otherwise. Growth holds the lock; lookups do not.
    """

    def __init__(self, radius: int = DEFAULT_VOCAB_RADIUS, words=None):
        self.radius = int(radius)
        if words is None:
            words = np.zeros((0, DESCRIPTOR_BYTES), dtype=np.uint8)
        self._words = np.asarray(words, dtype=np.uint8).reshape(-1, DESCRIPTOR_BYTES)
        self.lock = threading.Lock()

    def __len__(self):
        return self._words.shape[0]

    @property
    def next_id(self) -> int:
        return len(self)

    @property
    def words(self) -> np.ndarray:
        view = self._words.view()
        view.setflags(write=False)
        return view

    def word(self, word_id: int) -> Descriptor:
        return Descriptor(self._words[word_id])

    def quantize_many(self, descriptors, grow: bool = False) -> np.ndarray:
        """Word id per descriptor; same result as quantizing one by one in order."""

        descs = np.asarray(descriptors, dtype=np.uint8).reshape(-1, DESCRIPTOR_BYTES)
        n = descs.shape[0]
        ids = np.full(n, UNMAPPED, dtype=np.int64)
        if n == 0:
            return ids

        if grow:
            self.lock.acquire()
        try:
            base = len(self)
            if base > 0:
                dist = hamming_matrix(descs, self._words)
                old_best = dist.argmin(axis=1)  # first minimum: lowest id on ties
                old_dist = dist[np.arange(n), old_best]
            else:
                old_best = np.full(n, UNMAPPED, dtype=np.int64)
                old_dist = np.full(n, DESCRIPTOR_BITS + 1, dtype=np.int64)

            if not grow:
                hit = old_dist <= self.radius
                ids[hit] = old_best[hit]
                return ids

            added = np.zeros((n, DESCRIPTOR_BYTES), dtype=np.uint8)
            n_added = 0
            for i in range(n):
                best_id, best_dist = int(old_best[i]), int(old_dist[i])
                if n_added:
                    new_dist = hamming_matrix(descs[i], added[:n_added])[0]
                    j = int(new_dist.argmin())
                    if new_dist[j] < best_dist:
                        best_id, best_dist = base + j, int(new_dist[j])
                if best_dist <= self.radius:
                    ids[i] = best_id
                else:
                    ids[i] = base + n_added
                    added[n_added] = descs[i]
                    n_added += 1

            if n_added:
                self._words = np.concatenate([self._words, added[:n_added]])
                logger.debug("vocabulary grew by %d to %d words", n_added, len(self))
            return ids
        finally:
            if grow:
                self.lock.release()

    def __str__(self):
        return "Words: %d, Radius: %d" % (len(self), self.radius)


def detect_keypoints(
    img: Image,
    max_n: int = DEFAULT_MAX_KEYPOINTS,
    threshold: int = FAST_THRESHOLD,
    margin: int = DETECTOR_MARGIN,
) -> list:
    """FAST-9 corners, 3x3 non-maximum suppressed, strongest first."""

    if img.width < MIN_DETECT_SIZE or img.height < MIN_DETECT_SIZE:
        raise ChangeSpotException(
            IMAGE_TOO_SMALL.code(), IMAGE_TOO_SMALL.msg(), f"{img.width}x{img.height}"
        )
    xs, ys, resp = _fast_responses(img, threshold, margin)
    if xs.size == 0 or max_n <= 0:
        return []
    order = np.lexsort((xs, ys, -resp))[:max_n]
    return [Keypoint(xs[i], ys[i], resp[i]) for i in order]


def _fast_responses(img: Image, threshold: int, margin: int) -> tuple:
    pix = img.pixels.astype(np.int32)
    h, w = pix.shape
    if h <= 2 * margin or w <= 2 * margin:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0)

    center = pix[margin : h - margin, margin : w - margin]
    diffs = np.stack(
        [
            pix[margin + dy : h - margin + dy, margin + dx : w - margin + dx] - center
            for dx, dy in FAST_CIRCLE
        ]
    )
    corner = _has_arc(diffs > threshold) | _has_arc(diffs < -threshold)
    response = np.where(corner, np.abs(diffs).sum(axis=0), 0).astype(np.float64)

    peak = ndimage.maximum_filter(response, size=3, mode="constant", cval=0.0)
    keep = (response > 0) & (response == peak)
    ys, xs = np.nonzero(keep)
    return xs + margin, ys + margin, response[ys, xs]


def _has_arc(flags: np.ndarray) -> np.ndarray:
    """True where FAST_ARC_LENGTH circularly contiguous circle flags are set."""
    ring = np.concatenate([flags, flags[: FAST_ARC_LENGTH - 1]])
    run = np.zeros(flags.shape[1:], dtype=np.int32)
    found = np.zeros(flags.shape[1:], dtype=bool)
    for k in range(ring.shape[0]):
        run = np.where(ring[k], run + 1, 0)
        found |= run >= FAST_ARC_LENGTH
    return found


def box_sums(img: Image) -> np.ndarray:
    """Exact 5x5 box sums (edge-replicated); comparing sums is comparing means."""
    kernel = np.ones((BRIEF_SMOOTH_SIZE, BRIEF_SMOOTH_SIZE), dtype=np.int64)
    return ndimage.correlate(img.pixels.astype(np.int64), kernel, mode="nearest")


def compute_descriptors(img: Image, kps, sums=None) -> np.ndarray:
    """Packed (n, 32) descriptors for a keypoint list."""

    if len(kps) == 0:
        return np.zeros((0, DESCRIPTOR_BYTES), dtype=np.uint8)
    xs = np.array([kp.x for kp in kps], dtype=np.int64)
    ys = np.array([kp.y for kp in kps], dtype=np.int64)
    r = BRIEF_HALF_PATCH
    bad = (xs - r < 0) | (ys - r < 0) | (xs + r >= img.width) | (ys + r >= img.height)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ChangeSpotException(
            PATCH_OUT_OF_BOUNDS.code(),
            PATCH_OUT_OF_BOUNDS.msg(),
            f"keypoint ({xs[i]},{ys[i]}) in {img.width}x{img.height}",
        )
    if sums is None:
        sums = box_sums(img)
    pat = BRIEF_PATTERN
    p = sums[ys[:, None] + pat[None, :, 1], xs[:, None] + pat[None, :, 0]]
    q = sums[ys[:, None] + pat[None, :, 3], xs[:, None] + pat[None, :, 2]]
    return np.packbits(p < q, axis=1)


def compute_descriptor(img: Image, kp: Keypoint) -> Descriptor:
    return Descriptor(compute_descriptors(img, [kp])[0])


def vocab_quantize(voc: Vocabulary, d: Descriptor, grow: bool = False) -> int:
    return int(voc.quantize_many(d.bits[None, :], grow)[0])


def extract_bow(
    img: Image,
    voc: Vocabulary,
    grow: bool = False,
    max_n: int = DEFAULT_MAX_KEYPOINTS,
    threshold: int = FAST_THRESHOLD,
) -> BoWImage:
    """detect -> describe -> quantize"""

    kps = detect_keypoints(img, max_n, threshold)
    if not kps:
        logger.debug("extract_bow %s: no keypoints", img.image_id)
        return BoWImage.empty(img.image_id, img.width, img.height)
    descs = compute_descriptors(img, kps)
    ids = voc.quantize_many(descs, grow)
    bow = BoWImage(
        img.image_id,
        img.width,
        img.height,
        ids,
        [(kp.x, kp.y) for kp in kps],
        [kp.response for kp in kps],
        descs,
    )
    logger.debug("extract_bow %s", bow)
    return bow


def requantize(bow: BoWImage, voc: Vocabulary) -> BoWImage:
    """Word ids against the vocabulary as it stands now, e.g. after later growth."""
    return BoWImage(
        bow.image_id,
        bow.width,
        bow.height,
        voc.quantize_many(bow.descriptors),
        bow.xy,
        bow.responses,
        bow.descriptors,
        bow.source_index,
    )
