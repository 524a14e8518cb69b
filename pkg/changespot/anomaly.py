"""
Anomaly detection (AD) channel.

Map images are clustered into places; each place gets a linear normal
model (mean image plus a principal subspace) fitted at a fixed working
resolution. A query is scored by its per-pixel reconstruction error
against the model of the place it localized to, normalized with the
place's own error statistics so scores from different places compare.
"""

import logging

import numpy as np
from sklearn.cluster import KMeans
from sklearn.decomposition import PCA

from changespot.const import (
    WORKING_SIZE,
    CLUSTER_SIZE,
    PCA_COMPONENTS,
    NORMALIZER_C,
    RE_SIGMA_FLOOR,
    KMEANS_SEED,
    KMEANS_MAX_ITER,
)
from changespot.errors import (
    TOO_MANY_CLUSTERS,
    TOO_MANY_COMPONENTS,
    DEGENERATE_PLACE,
    UNKNOWN_MAP_IMAGE,
    INVALID_ARGUMENT,
)
from changespot.imaging import Image, LoCMap, Rect, resample
from changespot.object_implem import Object
from changespot.utils import ChangeSpotException, floatMaxString

logger = logging.getLogger(__name__)


def image_vector(img: Image, width: int, height: int) -> np.ndarray:
    """Flattened float intensities at width x height (bilinear)."""
    if img.dims == (width, height):
        return img.as_float().reshape(-1)
    return resample(img.as_float(), width, height).reshape(-1)


def cluster_places(
    map_images,
    k: int,
    seed: int = KMEANS_SEED,
    max_iter: int = KMEANS_MAX_ITER,
    cluster_size: int = CLUSTER_SIZE,
) -> np.ndarray:
    """
    Place label per image. Labels are renumbered in order of first
    appearance so they do not depend on k-means' internal numbering.
    """

    n = len(map_images)
    if k < 1:
        raise ChangeSpotException(INVALID_ARGUMENT.code(), INVALID_ARGUMENT.msg(), f"k={k}")
    if k > n:
        raise ChangeSpotException(
            TOO_MANY_CLUSTERS.code(), TOO_MANY_CLUSTERS.msg(), f"k={k} > {n} images"
        )
    if k == n:
        return np.arange(n, dtype=np.int64)

    features = np.stack(
        [image_vector(img, cluster_size, cluster_size) / 255.0 for img in map_images]
    )
    kmeans = KMeans(
        n_clusters=k, init="k-means++", n_init=1, max_iter=max_iter, random_state=seed
    ).fit(features)

    relabel = {}
    for label in kmeans.labels_:
        relabel.setdefault(int(label), len(relabel))
    labels = np.array([relabel[int(label)] for label in kmeans.labels_], dtype=np.int64)
    logger.info(
        "cluster_places: %d images into %d places, inertia %s",
        n,
        len(relabel),
        floatMaxString(float(kmeans.inertia_), 3),
    )
    return labels


class PlaceModel(Object):
    """
    Mean image plus d orthonormal principal components (columns of basis)
    over width x height working vectors; mu and sigma describe the per-pixel
    reconstruction error of the training images.
    """

    def __init__(
        self,
        place_id: int,
        centroid,
        mean_image,
        basis,
        mu: float,
        sigma: float,
        c: float = NORMALIZER_C,
        width: int = WORKING_SIZE,
        height: int = WORKING_SIZE,
    ):
        self.place_id = int(place_id)
        self.centroid = np.asarray(centroid, dtype=np.float64).reshape(-1)
        self.mean_image = np.asarray(mean_image, dtype=np.float64).reshape(-1)
        self.basis = np.asarray(basis, dtype=np.float64).reshape(self.mean_image.size, -1)
        self.mu = float(mu)
        self.sigma = float(sigma)
        self.c = float(c)
        self.width = int(width)
        self.height = int(height)

    @property
    def d(self) -> int:
        return self.basis.shape[1]

    def reconstruct(self, vector) -> np.ndarray:
        centered = np.asarray(vector, dtype=np.float64).reshape(-1) - self.mean_image
        return self.mean_image + self.basis @ (self.basis.T @ centered)

    def __str__(self):
        return "Place: %d, Dims: %dx%d, D: %d, Mu: %s, Sigma: %s, C: %s" % (
            self.place_id,
            self.width,
            self.height,
            self.d,
            floatMaxString(self.mu),
            floatMaxString(self.sigma),
            floatMaxString(self.c),
        )


class REMap(Object):
    def __init__(self, values):
        self.values = np.asarray(values, dtype=np.float64)

    @property
    def total(self) -> float:
        return float(self.values.sum())

    def region_sum(self, rect: Rect) -> float:
        """V_RE(P): summed error over the part of rect inside the map."""
        clipped = rect.clipped(self.values.shape[1], self.values.shape[0])
        return float(self.values[clipped.slices()].sum()) if clipped else 0.0

    def __str__(self):
        return "Shape: %s, Total: %s" % (self.values.shape, floatMaxString(self.total))


def train_place_model(
    images_in_cluster,
    d: int = PCA_COMPONENTS,
    place_id: int = 0,
    working_size: int = WORKING_SIZE,
    c: float = NORMALIZER_C,
    sigma_floor: float = RE_SIGMA_FLOOR,
    cluster_size: int = CLUSTER_SIZE,
) -> PlaceModel:
    images = list(images_in_cluster)
    n = len(images)
    if n == 0:
        raise ChangeSpotException(
            INVALID_ARGUMENT.code(), INVALID_ARGUMENT.msg(), "empty place cluster"
        )
    pixels = working_size * working_size
    if d < 0 or d > min(pixels, n):
        raise ChangeSpotException(
            TOO_MANY_COMPONENTS.code(),
            TOO_MANY_COMPONENTS.msg(),
            f"d={d}, {n} images of {pixels} pixels",
        )

    data = np.stack([image_vector(img, working_size, working_size) for img in images])
    centroid = np.stack(
        [image_vector(img, cluster_size, cluster_size) / 255.0 for img in images]
    ).mean(axis=0)
    mean_image = data.mean(axis=0)

    # n centered samples span at most n - 1 directions
    d_fit = min(d, n - 1)
    if d_fit > 0:
        pca = PCA(n_components=d_fit, svd_solver="full").fit(data)
        basis = pca.components_.T
    else:
        basis = np.zeros((pixels, 0))

    centered = data - mean_image
    recon = mean_image + (centered @ basis) @ basis.T
    errors = np.abs(data - recon)
    mu = float(errors.mean())
    sigma = max(float(errors.std()), sigma_floor)
    model = PlaceModel(
        place_id, centroid, mean_image, basis, mu, sigma, c, working_size, working_size
    )
    logger.debug("train_place_model: %s from %d images", model, n)
    return model


def train_places(map_images, k: int, d: int, cfg=None):
    """(place models by id, place label per image)"""

    kwargs = {}
    cluster_kwargs = {}
    if cfg is not None:
        kwargs = dict(
            working_size=cfg.working_size,
            c=cfg.normalizer_c,
            sigma_floor=cfg.re_sigma_floor,
            cluster_size=cfg.cluster_size,
        )
        cluster_kwargs = dict(
            seed=cfg.kmeans_seed, max_iter=cfg.kmeans_max_iter, cluster_size=cfg.cluster_size
        )
    labels = cluster_places(map_images, k, **cluster_kwargs)
    models = {}
    for place_id in range(int(labels.max()) + 1):
        members = [img for img, label in zip(map_images, labels) if label == place_id]
        models[place_id] = train_place_model(
            members, min(d, len(members)), place_id, **kwargs
        )
    logger.info("train_places: %d models", len(models))
    return models, labels


def re_map(model: PlaceModel, query: Image) -> REMap:
    vector = image_vector(query, model.width, model.height)
    errors = np.abs(vector - model.reconstruct(vector))
    return REMap(errors.reshape(model.height, model.width))


def normalize_re(v, model: PlaceModel):
    """z = (v - mu) / (sigma * c); works on scalars and arrays"""

    if model.sigma <= 0:
        raise ChangeSpotException(
            DEGENERATE_PLACE.code(),
            DEGENERATE_PLACE.msg(),
            f"place {model.place_id} has sigma {model.sigma}",
        )
    return (v - model.mu) / (model.sigma * model.c)


def _linked_model(models, assignments, map_image_id) -> PlaceModel:
    if map_image_id not in assignments:
        raise ChangeSpotException(
            UNKNOWN_MAP_IMAGE.code(), UNKNOWN_MAP_IMAGE.msg(), str(map_image_id)
        )
    place_id = assignments[map_image_id]
    if place_id not in models:
        raise ChangeSpotException(
            UNKNOWN_MAP_IMAGE.code(),
            UNKNOWN_MAP_IMAGE.msg(),
            f"{map_image_id} -> missing place {place_id}",
        )
    return models[place_id]


def ad_loc_map(models, assignments, query: Image, localized_map_image_id) -> LoCMap:
    """
    Normalized RE of the query under the localized image's place model,
    clamped at 0 and upsampled to the query frame.
    """

    model = _linked_model(models, assignments, localized_map_image_id)
    z = np.maximum(normalize_re(re_map(model, query).values, model), 0.0)
    if (model.width, model.height) != query.dims:
        z = resample(z, query.width, query.height)
    return LoCMap(np.maximum(z, 0.0))


def is_anomalous_region(model: PlaceModel, query: Image, rect: Rect, threshold: float) -> bool:
    """V_RE over rect (query coordinates) against the decision threshold."""

    errors = re_map(model, query).values
    if (model.width, model.height) != query.dims:
        errors = np.maximum(resample(errors, query.width, query.height), 0.0)
    return REMap(errors).region_sum(rect) > threshold
