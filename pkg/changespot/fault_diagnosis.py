"""
Fault diagnosis (FD): change as inconsistency between strong and weak
self-localization. Each ROI crop of the query is localized on its own; a
ROI whose crop disagrees with the strong result (a high weak rank for the
strong top-Y hypotheses) likely holds a change. Per-ROI ranks are fused
per pixel with a harmonic mean.
"""

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from changespot import codec
from changespot.const import TOP_Y, QUERY_ROI_SETS, EMPTY_CROP_ENTRIES
from changespot.errors import (
    LENGTH_MISMATCH,
    NO_ROIS,
    INVALID_ARGUMENT,
    UNLOCALIZABLE,
    UNWRITABLE_OUTPUT,
)
from changespot.imaging import LoCMap, save_png
from changespot.localization import (
    InvertedIndex,
    RankedList,
    StageFlags,
    QueryParams,
    match_query,
    weak_query,
    strong_query,
)
from changespot.object_implem import Object
from changespot.roi import crop_bow, crop_mask, split_set_names
from changespot.utils import ChangeSpotException

logger = logging.getLogger(__name__)


class FDConfig(Object):
    """
    empty_crop_entries: an empty query crop over which the strong top-1 map
    image holds at least this many entries is ranked as missing from every
    weak list; 0 leaves all empty crops out of the fusion.
    """

    def __init__(
        self,
        Y: int = TOP_Y,
        obb_sources=QUERY_ROI_SETS,
        empty_crop_entries: int = EMPTY_CROP_ENTRIES,
    ):
        if Y < 1 or empty_crop_entries < 0:
            raise ChangeSpotException(
                INVALID_ARGUMENT.code(),
                INVALID_ARGUMENT.msg(),
                f"Y={Y}, empty_crop_entries={empty_crop_entries}",
            )
        self.Y = Y
        self.obb_sources = split_set_names(obb_sources)
        self.empty_crop_entries = empty_crop_entries

    def __str__(self):
        return "Y: %d, ObbSources: %s, EmptyCropEntries: %d" % (
            self.Y,
            "+".join(self.obb_sources),
            self.empty_crop_entries,
        )


class FDResult(Object):
    """
    The LoC map with the strong localization result it came from. Unpacks
    as (loc_map, strong).
    """

    def __init__(self, loc_map, strong, rois, weak_lists, ranks, skipped):
        self.loc_map = loc_map
        self.strong = strong
        self.rois = rois
        self.weak_lists = weak_lists
        self.ranks = ranks
        self.skipped = skipped

    def __iter__(self):
        return iter((self.loc_map, self.strong))

    def __str__(self):
        return "LoC: (%s), Strong: (%s), Rois: %d, Skipped: %d" % (
            self.loc_map,
            self.strong,
            len(self.rois),
            len(self.skipped),
        )


def obb_inconsistency(strong: RankedList, weak_j: RankedList, Y: int) -> int:
    if Y < 1 or len(strong) == 0:
        raise ChangeSpotException(
            INVALID_ARGUMENT.code(),
            INVALID_ARGUMENT.msg(),
            f"Y={Y}, strong list size {len(strong)}",
        )
    return min(weak_j.rank(image_id) for image_id in strong.top(Y))


def fuse_pixel_ranks(rois, ranks, image_dims) -> LoCMap:
    """
    r[p] = |J[p]| / sum_{j in J[p]} 1/r_j over the ROIs J[p] holding pixel p;
    pixels outside every ROI score 0.
    """

    rois, ranks = list(rois), list(ranks)
    if len(rois) != len(ranks):
        raise ChangeSpotException(
            LENGTH_MISMATCH.code(),
            LENGTH_MISMATCH.msg(),
            f"{len(rois)} rois, {len(ranks)} ranks",
        )
    width, height = image_dims
    inv_sum = np.zeros((height, width))
    count = np.zeros((height, width))
    for roi, rank in zip(rois, ranks):
        if rank < 1:
            raise ChangeSpotException(
                INVALID_ARGUMENT.code(), INVALID_ARGUMENT.msg(), f"rank {rank} < 1"
            )
        rect = roi.rect.clipped(width, height)
        if rect is None:
            continue
        inv_sum[rect.slices()] += 1.0 / rank
        count[rect.slices()] += 1
    values = np.divide(count, inv_sum, out=np.zeros_like(count), where=count > 0)
    return LoCMap(values)


def fd_loc_map(
    idx: InvertedIndex,
    query_bow,
    rois,
    cfg: FDConfig = None,
    stage_flags: StageFlags = None,
    params: QueryParams = None,
    workers: int = 1,
) -> FDResult:
    rois = list(rois)
    if not rois:
        raise ChangeSpotException(NO_ROIS.code(), NO_ROIS.msg())
    cfg = cfg or FDConfig()
    params = params or QueryParams()
    if not idx.frozen:
        idx.freeze()

    crops, used, skipped = [], [], []
    for roi in rois:
        crop = crop_bow(query_bow, roi)
        if len(crop) == 0:
            skipped.append(roi)
        else:
            crops.append(crop)
            used.append(roi)
    if not used:
        raise ChangeSpotException(
            UNLOCALIZABLE.code(),
            UNLOCALIZABLE.msg(),
            f"all {len(rois)} ROI crops of {query_bow.image_id} are empty",
        )

    flags = stage_flags or StageFlags()
    matches = match_query(idx, query_bow, params) if (flags.ratio or flags.ransac) else None

    def localize(crop):
        return weak_query(idx, crop, flags, params, matches)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            weak_lists = list(pool.map(localize, crops))
    else:
        weak_lists = [localize(crop) for crop in crops]

    strong = strong_query(weak_lists)
    y = min(cfg.Y, len(strong))
    ranks = [obb_inconsistency(strong, weak, y) for weak in weak_lists]

    vacated, skipped = _vacated_crops(idx, strong, skipped, cfg.empty_crop_entries)
    used.extend(vacated)
    ranks.extend([len(strong) + 1] * len(vacated))
    loc = fuse_pixel_ranks(used, ranks, query_bow.dims)
    result = FDResult(loc, strong, used, weak_lists, ranks, skipped)
    logger.info("fd_loc_map %s: %s", query_bow.image_id, result)
    return result


def _vacated_crops(idx, strong, empty_rois, min_entries) -> tuple:
    """
    Splits empty query crops into those the strong top-1 map image has
    features in, and the rest. Uses the indexed map BoW, never map pixels.
    """

    top_bow = idx.map_bows.get(strong.ids[0]) if len(strong) else None
    if min_entries == 0 or top_bow is None:
        return [], list(empty_rois)
    vacated, rest = [], []
    for roi in empty_rois:
        if int(crop_mask(top_bow, roi.rect).sum()) >= min_entries:
            vacated.append(roi)
        else:
            rest.append(roi)
    return vacated, rest


def save_loc_map(path, loc: LoCMap):
    codec.write_artifact(path, codec.encode_loc_map(loc.values))


def load_loc_map(path) -> LoCMap:
    return LoCMap(codec.decode_loc_map(codec.read_artifact(path)))


def loc_preview_png(path, loc: LoCMap):
    """8-bit preview, affinely stretched so the map's min is 0 and max 255."""

    values = loc.values
    lo, hi = (float(values.min()), float(values.max())) if values.size else (0.0, 0.0)
    scaled = (values - lo) * (255.0 / (hi - lo)) if hi > lo else np.zeros_like(values)
    try:
        save_png(path, scaled)
    except OSError as ex:
        raise ChangeSpotException(
            UNWRITABLE_OUTPUT.code(), UNWRITABLE_OUTPUT.msg(), f"{path}: {ex}"
        ) from ex
