"""
Pairwise comparison (PC) channel: every query keypoint scores the L2
distance from its gradient-histogram descriptor to the nearest descriptor
of the paired map image. Keypoint scores are splatted into a dense map as
max-combined disks.
"""

import logging

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import cdist

from changespot.const import (
    GRAD_PATCH_SIZE,
    GRAD_SPATIAL_BINS,
    GRAD_ORIENTATION_BINS,
    GRAD_DESCRIPTOR_SIZE,
    PC_SPLAT_RADIUS,
    DEFAULT_MAX_KEYPOINTS,
    FAST_THRESHOLD,
)
from changespot.errors import PATCH_OUT_OF_BOUNDS, NO_REFERENCE_FEATURES
from changespot.features import GradDescriptor, detect_keypoints
from changespot.imaging import Image, LoCMap
from changespot.utils import ChangeSpotException

logger = logging.getLogger(__name__)

_HALF = GRAD_PATCH_SIZE // 2
_CELL = GRAD_PATCH_SIZE // GRAD_SPATIAL_BINS
_BIN_WIDTH = 2 * np.pi / GRAD_ORIENTATION_BINS


def _patch_histogram(pix: np.ndarray, x: int, y: int) -> np.ndarray:
    rows = slice(y - _HALF, y + _HALF)
    cols = slice(x - _HALF, x + _HALF)
    gx = pix[rows, x - _HALF + 1 : x + _HALF + 1] - pix[rows, x - _HALF - 1 : x + _HALF - 1]
    gy = pix[y - _HALF + 1 : y + _HALF + 1, cols] - pix[y - _HALF - 1 : y + _HALF - 1, cols]
    mag = np.hypot(gx, gy)
    pos = np.mod(np.arctan2(gy, gx), 2 * np.pi) / _BIN_WIDTH
    lower = np.floor(pos).astype(np.int64)
    frac = pos - lower
    lower %= GRAD_ORIENTATION_BINS
    upper = (lower + 1) % GRAD_ORIENTATION_BINS

    ii, jj = np.indices((GRAD_PATCH_SIZE, GRAD_PATCH_SIZE))
    spatial = (ii // _CELL) * GRAD_SPATIAL_BINS + (jj // _CELL)
    hist = np.zeros(GRAD_DESCRIPTOR_SIZE)
    np.add.at(hist, spatial * GRAD_ORIENTATION_BINS + lower, mag * (1.0 - frac))
    np.add.at(hist, spatial * GRAD_ORIENTATION_BINS + upper, mag * frac)
    norm = np.linalg.norm(hist)
    return hist / norm if norm > 0 else hist


def grad_descriptors(img: Image, kps) -> list:
    """
    128-d descriptors: a 16x16 patch around each keypoint split into 4x4
    cells, each an 8-bin gradient orientation histogram with linear
    interpolation between neighbouring bins, L2-normalized. Layout is
    [row cell][col cell][orientation].
    """

    pix = img.as_float()
    out = []
    for kp in kps:
        if (
            kp.x - _HALF - 1 < 0
            or kp.y - _HALF - 1 < 0
            or kp.x + _HALF >= img.width
            or kp.y + _HALF >= img.height
        ):
            raise ChangeSpotException(
                PATCH_OUT_OF_BOUNDS.code(),
                PATCH_OUT_OF_BOUNDS.msg(),
                f"keypoint ({kp.x},{kp.y}) in {img.width}x{img.height}",
            )
        out.append(GradDescriptor(_patch_histogram(pix, kp.x, kp.y)))
    return out


def descriptor_matrix(descs) -> np.ndarray:
    if len(descs) == 0:
        return np.zeros((0, GRAD_DESCRIPTOR_SIZE))
    return np.stack([d.values for d in descs])


def nearest_distances(q, m) -> np.ndarray:
    """L2 distance from each row of q to its nearest row of m."""
    q, m = np.atleast_2d(q), np.atleast_2d(m)
    if q.shape[0] == 0:
        return np.zeros(0)
    return cdist(q, m, metric="euclidean").min(axis=1)


def disk_footprint(radius: int) -> np.ndarray:
    yy, xx = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    return xx * xx + yy * yy <= radius * radius


def splat(image_dims, xy, values, radius: int = PC_SPLAT_RADIUS) -> np.ndarray:
    """Max-combined filled disks; pixels under no disk stay 0."""

    width, height = image_dims
    seeds = np.zeros((height, width))
    for (x, y), v in zip(xy, values):
        seeds[y, x] = max(seeds[y, x], v)
    if not len(values):
        return seeds
    return ndimage.grey_dilation(
        seeds, footprint=disk_footprint(radius), mode="constant", cval=0.0
    )


def pc_loc_map(
    query: Image,
    map_img: Image,
    radius: int = PC_SPLAT_RADIUS,
    max_n: int = DEFAULT_MAX_KEYPOINTS,
    threshold: int = FAST_THRESHOLD,
    query_kps=None,
    query_descs=None,
) -> LoCMap:
    map_kps = detect_keypoints(map_img, max_n, threshold)
    if not map_kps:
        raise ChangeSpotException(
            NO_REFERENCE_FEATURES.code(), NO_REFERENCE_FEATURES.msg(), str(map_img.image_id)
        )
    map_descs = descriptor_matrix(grad_descriptors(map_img, map_kps))

    if query_kps is None:
        query_kps = detect_keypoints(query, max_n, threshold)
    if query_descs is None:
        query_descs = descriptor_matrix(grad_descriptors(query, query_kps))
    if not len(query_kps):
        logger.debug("pc_loc_map %s: no query keypoints", query.image_id)
        return LoCMap.zeros(query.dims)

    dist = nearest_distances(query_descs, map_descs)
    loc = LoCMap(splat(query.dims, [(kp.x, kp.y) for kp in query_kps], dist, radius))
    logger.debug(
        "pc_loc_map %s vs %s: %d/%d keypoints, %s",
        query.image_id,
        map_img.image_id,
        len(query_kps),
        len(map_kps),
        loc,
    )
    return loc
