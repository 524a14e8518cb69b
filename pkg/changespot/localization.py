"""
Self-localization against the BoW map.

The inverted index holds one document per (map image, ROI) crop. A weak
query localizes a single cropped BoW through up to four stages:

    1. TF-IDF cosine similarity, per image the best of its documents
    2. ratio test on descriptor matches, re-scored by surviving matches
    3. RANSAC similarity verification of the top-V candidates
    4. island clustering of temporally adjacent candidates

A strong query fuses many weak ranked lists by summing reciprocal ranks.
Map image ids are integers whose order is taken as temporal order.
"""

import logging
import math
import threading
from collections import Counter, defaultdict

import numpy as np

from changespot.const import (
    UNMAPPED,
    DESCRIPTOR_BITS,
    DESCRIPTOR_BYTES,
    RATIO_TEST,
    MAX_MATCH_DISTANCE,
    RANSAC_TOP_V,
    RANSAC_INLIER_PX,
    RANSAC_ITERATIONS,
    RANSAC_SEED,
    ISLAND_GAP,
    ISLAND_MIN_RATIO,
    TFIDF_TIEBREAK,
)
from changespot.errors import (
    DUPLICATE_MAP_IMAGE,
    UNLOCALIZABLE,
    EMPTY_INDEX,
    EMPTY_RANK_LISTS,
    INDEX_FROZEN,
    UNKNOWN_STAGE,
)
from changespot.features import BoWImage, hamming_matrix
from changespot.geometry import ransac_similarity
from changespot.object_implem import Object
from changespot.roi import ROI, crop_mask
from changespot.utils import ChangeSpotException, floatMaxString, parse_csv_list

logger = logging.getLogger(__name__)


class RankedList(Object):
    """Map image ids in descending score order; ranks are 1-based."""

    def __init__(self, items):
        self.items = [(int(i), float(s)) for i, s in items]
        self.rank_of = {}
        for rank, (image_id, _) in enumerate(self.items, 1):
            if image_id in self.rank_of:
                raise ValueError(f"duplicate id {image_id} in ranked list")
            self.rank_of[image_id] = rank

    @classmethod
    def from_scores(cls, scores: dict):
        """Descending score, ties by ascending id."""
        return cls(sorted(scores.items(), key=lambda kv: (-kv[1], kv[0])))

    @classmethod
    def from_order(cls, ids, scores: dict):
        """Keeps the given order; scores are capped by their predecessor."""
        items, prev = [], math.inf
        for image_id in ids:
            prev = min(prev, scores[image_id])
            items.append((image_id, prev))
        return cls(items)

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    @property
    def ids(self) -> list:
        return [image_id for image_id, _ in self.items]

    @property
    def scores(self) -> list:
        return [score for _, score in self.items]

    def rank(self, image_id) -> int:
        """Rank of an id; ids missing from the list get len + 1."""
        return self.rank_of.get(int(image_id), len(self.items) + 1)

    def top(self, n: int) -> list:
        return self.ids[: max(0, n)]

    def score_of(self, image_id) -> float:
        return self.items[self.rank_of[int(image_id)] - 1][1]

    def __str__(self):
        head = ", ".join(
            f"{image_id}:{floatMaxString(score, 4)}" for image_id, score in self.items[:5]
        )
        return "Len: %d, Top: [%s]" % (len(self.items), head)


class StageFlags(Object):
    NAMES = ("tfidf", "ratio", "ransac", "island")

    def __init__(self, tfidf=True, ratio=True, ransac=True, island=True):
        self.tfidf = tfidf
        self.ratio = ratio
        self.ransac = ransac
        self.island = island

    @classmethod
    def from_names(cls, names):
        names = parse_csv_list(names) if isinstance(names, str) else list(names)
        unknown = [n for n in names if n not in cls.NAMES]
        if unknown:
            raise ChangeSpotException(
                UNKNOWN_STAGE.code(), UNKNOWN_STAGE.msg(), ",".join(unknown)
            )
        return cls(**{n: n in names for n in cls.NAMES})

    @classmethod
    def tfidf_only(cls):
        return cls(True, False, False, False)

    def names(self) -> list:
        return [n for n in self.NAMES if getattr(self, n)]

    def __str__(self):
        return "+".join(self.names()) or "none"


class QueryParams(Object):
    def __init__(
        self,
        ratio=RATIO_TEST,
        max_match_distance=MAX_MATCH_DISTANCE,
        top_v=RANSAC_TOP_V,
        inlier_px=RANSAC_INLIER_PX,
        iterations=RANSAC_ITERATIONS,
        seed=RANSAC_SEED,
        island_gap=ISLAND_GAP,
        island_min_ratio=ISLAND_MIN_RATIO,
    ):
        self.ratio = ratio
        self.max_match_distance = max_match_distance
        self.top_v = top_v
        self.inlier_px = inlier_px
        self.iterations = iterations
        self.seed = seed
        self.island_gap = island_gap
        self.island_min_ratio = island_min_ratio

    @classmethod
    def from_config(cls, cfg):
        return cls(
            cfg.ratio_test,
            cfg.max_match_distance,
            cfg.ransac_top_v,
            cfg.ransac_inlier_px,
            cfg.ransac_iterations,
            cfg.ransac_seed,
            cfg.island_gap,
            cfg.island_min_ratio,
        )

    def __str__(self):
        return ", ".join(f"{k}: {v}" for k, v in vars(self).items())


class Document(Object):
    def __init__(self, image_id: int, roi: ROI):
        self.image_id = image_id
        self.roi = roi

    @property
    def roi_id(self) -> int:
        return self.roi.roi_id

    def __str__(self):
        return "Image: %d, Roi: %s" % (self.image_id, self.roi)


class InvertedIndex(Object):
    """
    postings: word -> [(map_image_id, roi_id, x, y)], sorted by
    (map_image_id, roi_id) once frozen. Construction needs exclusive access;
    after freeze() the index is read-only.
    """

    def __init__(self):
        self.lock = threading.Lock()
        self.frozen = False
        self.map_bows = {}
        self.docs = []
        self.doc_stats = []
        self.postings = defaultdict(list)
        self.doc_freq = Counter()
        self._reset_frozen()

    def _reset_frozen(self):
        self.image_ids = []
        self.image_pos = {}
        self.doc_image = np.zeros(0, dtype=np.int64)
        self.doc_norm = np.zeros(0)
        self.word_docs = {}
        self.map_descriptors = np.zeros((0, DESCRIPTOR_BYTES), dtype=np.uint8)
        self.map_xy = np.zeros((0, 2), dtype=np.int64)
        self.map_starts = np.zeros(0, dtype=np.int64)
        self.map_counts = np.zeros(0, dtype=np.int64)

    @property
    def n_docs(self) -> int:
        return len(self.docs)

    @property
    def n_images(self) -> int:
        return len(self.map_bows)

    def idf(self, word_id: int) -> float:
        df = self.doc_freq.get(word_id, 0)
        return math.log(self.n_docs / df) if df else 0.0

    def freeze(self):
        with self.lock:
            if self.frozen:
                return
            for plist in self.postings.values():
                plist.sort(key=lambda p: (p[0], p[1]))

            self.image_ids = sorted(self.map_bows)
            self.image_pos = {image_id: m for m, image_id in enumerate(self.image_ids)}
            self.doc_image = np.array(
                [self.image_pos[d.image_id] for d in self.docs], dtype=np.int64
            )

            weights = defaultdict(lambda: ([], []))
            norms = np.zeros(self.n_docs)
            for k, stats in enumerate(self.doc_stats):
                total = sum(stats.values())
                for word_id, count in sorted(stats.items()):
                    wgt = (count / total) * self.idf(word_id)
                    weights[word_id][0].append(k)
                    weights[word_id][1].append(wgt)
                    norms[k] += wgt * wgt
            self.doc_norm = np.sqrt(norms)
            self.word_docs = {
                w: (np.array(ks, dtype=np.int64), np.array(ws)) for w, (ks, ws) in weights.items()
            }

            bows = [self.map_bows[i] for i in self.image_ids]
            counts = np.array([len(b) for b in bows], dtype=np.int64)
            self.map_counts = counts
            self.map_starts = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
            if bows and counts.sum():
                self.map_descriptors = np.concatenate([b.descriptors for b in bows])
                self.map_xy = np.concatenate([b.xy for b in bows])
            self.frozen = True
        logger.info(
            "index frozen: %d images, %d docs, %d words",
            self.n_images,
            self.n_docs,
            len(self.word_docs),
        )

    def tfidf_scores(self, bow: BoWImage) -> np.ndarray:
        """Cosine similarity of the query against every document."""

        scores = np.zeros(self.n_docs)
        words = bow.word_ids[bow.mapped()]
        if words.size == 0:
            return scores
        counts = Counter(words.tolist())
        total = words.size
        q_norm2 = 0.0
        for word_id, count in counts.items():
            posting = self.word_docs.get(word_id)
            qw = (count / total) * self.idf(word_id)
            q_norm2 += qw * qw
            if posting is not None and qw:
                ks, ws = posting
                scores[ks] += qw * ws
        if q_norm2 == 0.0:
            return np.zeros(self.n_docs)
        denom = math.sqrt(q_norm2) * self.doc_norm
        return np.divide(scores, denom, out=np.zeros_like(scores), where=denom > 0)

    def image_scores(self, doc_scores: np.ndarray) -> np.ndarray:
        per_image = np.zeros(len(self.image_ids))
        np.maximum.at(per_image, self.doc_image, doc_scores)
        return per_image

    def __str__(self):
        return "Images: %d, Docs: %d, Words: %d, Frozen: %s" % (
            self.n_images,
            self.n_docs,
            len(self.doc_freq),
            self.frozen,
        )


def index_add(idx: InvertedIndex, map_image_id: int, rois, bow: BoWImage):
    """One document per ROI crop of the map image's BoW."""

    with idx.lock:
        if idx.frozen:
            raise ChangeSpotException(
                INDEX_FROZEN.code(), INDEX_FROZEN.msg(), str(map_image_id)
            )
        if map_image_id in idx.map_bows:
            raise ChangeSpotException(
                DUPLICATE_MAP_IMAGE.code(), DUPLICATE_MAP_IMAGE.msg(), str(map_image_id)
            )
        idx.map_bows[map_image_id] = bow
        mapped = bow.mapped()
        for roi in rois:
            sel = crop_mask(bow, roi.rect) & mapped
            words = bow.word_ids[sel]
            xy = bow.xy[sel]
            stats = Counter(words.tolist())
            idx.docs.append(Document(map_image_id, roi))
            idx.doc_stats.append(stats)
            for word_id, (x, y) in zip(words.tolist(), xy.tolist()):
                idx.postings[word_id].append((map_image_id, roi.roi_id, x, y))
            for word_id in stats:
                idx.doc_freq[word_id] += 1
    logger.debug("index_add %d: %d rois, %d entries", map_image_id, len(rois), len(bow))


class QueryMatches(Object):
    """
    Per query entry: nearest map entry in every map image, and whether the
    best match survives the ratio test against the best match in any other
    image. Rows are keyed by the entries' source_index.
    """

    def __init__(self, source_index, image_dist, image_entry, best_image, accepted):
        order = np.argsort(source_index, kind="stable")
        self.source_index = np.asarray(source_index)[order]
        self.image_dist = image_dist[order]
        self.image_entry = image_entry[order]
        self.best_image = best_image[order]
        self.accepted = accepted[order]

    def rows(self, source_index) -> np.ndarray:
        source_index = np.asarray(source_index)
        pos = np.searchsorted(self.source_index, source_index)
        pos = np.minimum(pos, max(len(self.source_index) - 1, 0))
        if len(self.source_index) == 0 or not np.array_equal(
            self.source_index[pos], source_index
        ):
            raise ValueError("crop entries are not covered by these matches")
        return pos

    def __str__(self):
        return "Entries: %d, Accepted: %d" % (len(self.source_index), int(self.accepted.sum()))


def match_query(idx: InvertedIndex, bow: BoWImage, params: QueryParams = None) -> QueryMatches:
    if not idx.frozen:
        idx.freeze()
    params = params or QueryParams()
    n, m = len(bow), len(idx.image_ids)
    far = DESCRIPTOR_BITS + 1
    image_dist = np.full((n, m), far, dtype=np.int64)
    image_entry = np.full((n, m), -1, dtype=np.int64)

    if n and idx.map_descriptors.shape[0]:
        dist = hamming_matrix(bow.descriptors, idx.map_descriptors)
        for pos in range(m):
            count = idx.map_counts[pos]
            if count == 0:
                continue
            start = idx.map_starts[pos]
            block = dist[:, start : start + count]
            arg = block.argmin(axis=1)
            image_entry[:, pos] = start + arg
            image_dist[:, pos] = block[np.arange(n), arg]

    if m:
        best_image = image_dist.argmin(axis=1)
        best = image_dist[np.arange(n), best_image]
        if m > 1:
            second = np.partition(image_dist, 1, axis=1)[:, 1]
        else:
            second = np.full(n, far, dtype=np.int64)
        accepted = (best < params.ratio * second) & (best <= params.max_match_distance)
    else:
        best_image = np.zeros(n, dtype=np.int64)
        accepted = np.zeros(n, dtype=bool)
    return QueryMatches(bow.source_index, image_dist, image_entry, best_image, accepted)


def weak_query(
    idx: InvertedIndex,
    query_bow_crop: BoWImage,
    stage_flags: StageFlags = None,
    params: QueryParams = None,
    matches: QueryMatches = None,
) -> RankedList:
    """Ranked list of every map image for one (cropped) query BoW."""

    if idx.n_docs == 0:
        raise ChangeSpotException(EMPTY_INDEX.code(), EMPTY_INDEX.msg(), "weak_query")
    if len(query_bow_crop) == 0:
        raise ChangeSpotException(
            UNLOCALIZABLE.code(), UNLOCALIZABLE.msg(), "empty query BoW"
        )
    if not idx.frozen:
        idx.freeze()
    flags = stage_flags or StageFlags()
    params = params or QueryParams()
    ids = idx.image_ids

    cosine = (
        idx.image_scores(idx.tfidf_scores(query_bow_crop))
        if flags.tfidf
        else np.zeros(len(ids))
    )
    scores = cosine.copy()
    evidence = cosine

    need_matches = flags.ratio or flags.ransac
    if need_matches:
        if matches is None:
            matches = match_query(idx, query_bow_crop, params)
        rows = matches.rows(query_bow_crop.source_index)

    if flags.ratio:
        acc = matches.accepted[rows]
        votes = np.bincount(matches.best_image[rows][acc], minlength=len(ids))
        scores = votes + TFIDF_TIEBREAK * cosine
        evidence = votes.astype(np.float64)

    order = _order(ids, scores)

    if flags.ransac:
        top = order[: params.top_v]
        verified = {}
        evidence = np.zeros(len(ids))
        for pos in top:
            src, dst = _correspondences(idx, query_bow_crop, matches, rows, pos, flags.ratio, params)
            result = ransac_similarity(
                src, dst, params.iterations, params.inlier_px, params.seed
            )
            verified[pos] = 1.0 + result.n_inliers + TFIDF_TIEBREAK * cosine[pos]
            evidence[pos] = result.n_inliers
        rest_max = max((scores[pos] for pos in order[params.top_v :]), default=0.0)
        new_scores = scores / (1.0 + max(rest_max, 0.0))
        for pos, value in verified.items():
            new_scores[pos] = value
        scores = new_scores
        order = _order(ids, scores)

    if flags.island:
        order, scores = _island_order(ids, order, scores, params, evidence)

    result = RankedList.from_order([ids[pos] for pos in order], {ids[p]: scores[p] for p in order})
    logger.debug("weak_query %s [%s] -> %s", query_bow_crop.image_id, flags, result)
    return result


def _order(ids, scores) -> list:
    """Positions by descending score, ties by ascending image id."""
    return sorted(range(len(ids)), key=lambda p: (-scores[p], ids[p]))


def _correspondences(idx, crop, matches, rows, pos, ratio_only, params):
    if ratio_only:
        use = matches.accepted[rows] & (matches.best_image[rows] == pos)
    else:
        use = matches.image_dist[rows, pos] <= params.max_match_distance
    entries = matches.image_entry[rows[use], pos]
    return crop.xy[use], idx.map_xy[entries]


def _island_order(ids, order, scores, params, evidence=None):
    """
    Candidates in the top-V that carry evidence from the last stage run
    (inliers, surviving matches or cosine) and score at least
    island_min_ratio of the best are grouped into islands of ids no more
    than island_gap apart. Islands are ranked by the sum of their members'
    scores, members by their own score; everything else keeps its order
    behind them. Without evidenced candidates the order is unchanged.
    """

    top = order[: params.top_v]
    best = scores[top[0]] if top else 0.0
    if best <= 0:
        return order, scores
    if evidence is None:
        evidence = scores
    chosen = sorted(
        (p for p in top if evidence[p] > 0 and scores[p] >= params.island_min_ratio * best),
        key=lambda p: ids[p],
    )
    if not chosen:
        return order, scores
    islands, current = [], [chosen[0]]
    for p in chosen[1:]:
        if ids[p] - ids[current[-1]] <= params.island_gap:
            current.append(p)
        else:
            islands.append(current)
            current = [p]
    islands.append(current)

    ranked = sorted(
        islands, key=lambda isl: (-sum(scores[p] for p in isl), min(ids[p] for p in isl))
    )
    new_scores = scores.copy()
    new_order = []
    for island in ranked:
        total = sum(scores[p] for p in island)
        for p in sorted(island, key=lambda p: (-scores[p], ids[p])):
            new_order.append(p)
            new_scores[p] = total
    in_island = set(new_order)
    new_order.extend(p for p in order if p not in in_island)
    return new_order, new_scores


def strong_query(lists) -> RankedList:
    """score(id) = sum over lists of 1/rank, absent ids ranked len + 1."""

    lists = list(lists)
    if not lists:
        raise ChangeSpotException(EMPTY_RANK_LISTS.code(), EMPTY_RANK_LISTS.msg())
    all_ids = set()
    for ranked in lists:
        all_ids.update(ranked.ids)
    scores = {image_id: sum(1.0 / ranked.rank(image_id) for ranked in lists) for image_id in all_ids}
    return RankedList.from_scores(scores)


def localization_accuracy(strong_lists, true_ids, top_y: int) -> tuple:
    """(rank-1 rate, top-Y hit rate) in percent."""

    pairs = [(ranked, true_id) for ranked, true_id in zip(strong_lists, true_ids) if true_id is not None]
    if not pairs:
        return (0.0, 0.0)
    rank1 = sum(1 for ranked, true_id in pairs if ranked.ids[:1] == [true_id])
    topy = sum(1 for ranked, true_id in pairs if ranked.rank(true_id) <= top_y)
    return (100.0 * rank1 / len(pairs), 100.0 * topy / len(pairs))
