"""
Numeric defaults and sentinels shared across modules. The Config layer
reads its defaults from here.
"""

import math

UNMAPPED = -1  # word id for descriptors outside every vocabulary radius

# imaging
DEFAULT_CELL_SIZE = 10

# features
DESCRIPTOR_BITS = 256
DESCRIPTOR_BYTES = DESCRIPTOR_BITS // 8
BRIEF_PATCH_SIZE = 31
BRIEF_HALF_PATCH = BRIEF_PATCH_SIZE // 2
BRIEF_SMOOTH_SIZE = 5
BRIEF_SEED = 0x5EED1
FAST_THRESHOLD = 20
FAST_ARC_LENGTH = 9
DETECTOR_MARGIN = 16  # covers the BRIEF half patch plus the FAST circle
MIN_DETECT_SIZE = 16
DEFAULT_MAX_KEYPOINTS = 500
DEFAULT_VOCAB_RADIUS = 80
GRAD_PATCH_SIZE = 16
GRAD_SPATIAL_BINS = 4
GRAD_ORIENTATION_BINS = 8
GRAD_DESCRIPTOR_SIZE = GRAD_SPATIAL_BINS * GRAD_SPATIAL_BINS * GRAD_ORIENTATION_BINS

# localization
RATIO_TEST = 0.8
MAX_MATCH_DISTANCE = 64
RANSAC_TOP_V = 20
RANSAC_INLIER_PX = 5.0
RANSAC_ITERATIONS = 200
RANSAC_SEED = 7
ISLAND_GAP = 3
ISLAND_MIN_RATIO = 0.5
TFIDF_TIEBREAK = 0.5  # weight of the cosine score added to integer match counts

# fault diagnosis
TOP_Y = 10
MAP_ROI_SETS = "J,B,G"
EMPTY_CROP_ENTRIES = 2
QUERY_ROI_SETS = "J,B,G,W"

# anomaly
PLACES_K = 10
NORMALIZER_C = 0.8
WORKING_SIZE = 64
CLUSTER_SIZE = 32
PCA_COMPONENTS = 4
RE_SIGMA_FLOOR = 1.0
RE_THRESHOLD = 0.0
KMEANS_SEED = 0
KMEANS_MAX_ITER = 100

# pairwise
PC_SPLAT_RADIUS = 8

# evaluation
X_LIST = (5, 10, 15, 20)
COVERAGE_THRESHOLD = 0.5
GRADE_OTHERWISE = math.inf
