"""
RANSAC verification of putative keypoint matches under a 2D similarity
transform (rotation, uniform scale, translation).
"""

import itertools
import logging

import numpy as np

from changespot.const import RANSAC_INLIER_PX, RANSAC_ITERATIONS, RANSAC_SEED
from changespot.object_implem import Object
from changespot.utils import floatMaxString

logger = logging.getLogger(__name__)


class SimilarityModel(Object):
    """w = a * z + b over complex pixel coordinates z = x + iy."""

    def __init__(self, a: complex, b: complex):
        self.a = complex(a)
        self.b = complex(b)

    @property
    def scale(self) -> float:
        return abs(self.a)

    @property
    def angle(self) -> float:
        return float(np.angle(self.a))

    def apply(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        w = self.a * (xy[:, 0] + 1j * xy[:, 1]) + self.b
        return np.stack([w.real, w.imag], axis=1)

    def __str__(self):
        return "Scale: %s, Angle: %s, Tx: %s, Ty: %s" % (
            floatMaxString(self.scale),
            floatMaxString(self.angle),
            floatMaxString(self.b.real),
            floatMaxString(self.b.imag),
        )


class RansacResult(Object):
    def __init__(self, model, inliers):
        self.model = model
        self.inliers = inliers

    @property
    def n_inliers(self) -> int:
        return int(self.inliers.sum())

    def __str__(self):
        return "Inliers: %d, Model: %s" % (self.n_inliers, self.model)


def ransac_similarity(
    src,
    dst,
    iterations: int = RANSAC_ITERATIONS,
    inlier_px: float = RANSAC_INLIER_PX,
    seed: int = RANSAC_SEED,
) -> RansacResult:
    """
    Best similarity hypothesis from two-point samples. When the number of
    distinct pairs does not exceed `iterations` every pair is tried, so
    small match sets get an exact answer.
    """

    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    n = src.shape[0]
    if n == 0:
        return RansacResult(None, np.zeros(0, dtype=bool))

    z = src[:, 0] + 1j * src[:, 1]
    w = dst[:, 0] + 1j * dst[:, 1]
    if n == 1:
        return _best_translation(z, w, inlier_px)

    if n * (n - 1) // 2 <= iterations:
        pairs = np.array(list(itertools.combinations(range(n), 2)), dtype=np.int64)
    else:
        rng = np.random.default_rng(seed)
        first = rng.integers(0, n, size=iterations)
        second = (first + rng.integers(1, n, size=iterations)) % n
        pairs = np.stack([first, second], axis=1)

    dz = z[pairs[:, 1]] - z[pairs[:, 0]]
    ok = dz != 0
    if not ok.any():
        return _best_translation(z, w, inlier_px)
    pairs, dz = pairs[ok], dz[ok]
    a = (w[pairs[:, 1]] - w[pairs[:, 0]]) / dz
    b = w[pairs[:, 0]] - a * z[pairs[:, 0]]

    residuals = np.abs(a[:, None] * z[None, :] + b[:, None] - w[None, :])
    inlier_sets = residuals <= inlier_px
    counts = inlier_sets.sum(axis=1)
    best = int(counts.argmax())
    result = RansacResult(SimilarityModel(a[best], b[best]), inlier_sets[best])
    logger.debug("ransac_similarity: %d matches, %s", n, result)
    return result


def _best_translation(z, w, inlier_px) -> RansacResult:
    """Pure translations, one per match; used when no pair fixes a similarity."""
    b = w - z
    residuals = np.abs(z[None, :] + b[:, None] - w[None, :])
    inlier_sets = residuals <= inlier_px
    best = int(inlier_sets.sum(axis=1).argmax())
    return RansacResult(SimilarityModel(1.0, b[best]), inlier_sets[best])
