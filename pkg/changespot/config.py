"""
Effective configuration: every tunable with its default, loaded from a
plain "key=value" file and printable as a sorted dump whose SHA-256 goes
into each manifest.
"""

import configparser
import hashlib
import logging

from changespot import const
from changespot.errors import BAD_CONFIG, MISSING_PATH
from changespot.object_implem import Object
from changespot.roi import parse_template_sets
from changespot.utils import ChangeSpotException, parse_csv_list

logger = logging.getLogger(__name__)

_SECTION = "changespot"


def _int_list(text):
    return tuple(int(v) for v in parse_csv_list(text))


def _bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text}")


# name -> (parser, default)
FIELDS = {
    "cell_size": (int, const.DEFAULT_CELL_SIZE),
    "top_y": (int, const.TOP_Y),
    "places_k": (int, const.PLACES_K),
    "normalizer_c": (float, const.NORMALIZER_C),
    "vocab_radius": (int, const.DEFAULT_VOCAB_RADIUS),
    "max_keypoints": (int, const.DEFAULT_MAX_KEYPOINTS),
    "fast_threshold": (int, const.FAST_THRESHOLD),
    "ratio_test": (float, const.RATIO_TEST),
    "max_match_distance": (int, const.MAX_MATCH_DISTANCE),
    "ransac_top_v": (int, const.RANSAC_TOP_V),
    "ransac_inlier_px": (float, const.RANSAC_INLIER_PX),
    "ransac_iterations": (int, const.RANSAC_ITERATIONS),
    "ransac_seed": (int, const.RANSAC_SEED),
    "island_gap": (int, const.ISLAND_GAP),
    "island_min_ratio": (float, const.ISLAND_MIN_RATIO),
    "working_size": (int, const.WORKING_SIZE),
    "pca_components": (int, const.PCA_COMPONENTS),
    "re_sigma_floor": (float, const.RE_SIGMA_FLOOR),
    "re_threshold": (float, const.RE_THRESHOLD),
    "kmeans_seed": (int, const.KMEANS_SEED),
    "kmeans_max_iter": (int, const.KMEANS_MAX_ITER),
    "cluster_size": (int, const.CLUSTER_SIZE),
    "pc_splat_radius": (int, const.PC_SPLAT_RADIUS),
    "map_roi_sets": (str, const.MAP_ROI_SETS),
    "query_roi_sets": (str, const.QUERY_ROI_SETS),
    "template_sets": (str, ""),
    "empty_crop_entries": (int, const.EMPTY_CROP_ENTRIES),
    "use_proposals": (_bool, True),
    "stages": (str, "tfidf,ratio,ransac,island"),
    "detection_rule": (str, "coverage"),
    "ranking_scope": (str, "query"),
    "channel_hypotheses": (int, 1),
    "x_list": (_int_list, const.X_LIST),
    "seed": (int, 0),
}

_CHOICES = {
    "detection_rule": ("coverage", "iou"),
    "ranking_scope": ("query", "global"),
}

_MINIMUM = {
    "cell_size": 1,
    "top_y": 1,
    "places_k": 1,
    "max_keypoints": 1,
    "ransac_top_v": 1,
    "ransac_iterations": 1,
    "working_size": 8,
    "cluster_size": 4,
    "pca_components": 0,
    "channel_hypotheses": 1,
    "pc_splat_radius": 0,
    "island_gap": 0,
    "empty_crop_entries": 0,
}


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


class Config(Object):
    def __init__(self, **overrides):
        for name, (_, default) in FIELDS.items():
            setattr(self, name, default)
        self.update(overrides)

    def update(self, values: dict):
        for name, raw in values.items():
            if name not in FIELDS:
                raise ChangeSpotException(BAD_CONFIG.code(), BAD_CONFIG.msg(), f"unknown key {name}")
            parser = FIELDS[name][0]
            try:
                value = parser(raw) if isinstance(raw, str) else raw
                if parser is _int_list:
                    value = tuple(int(v) for v in value)
                elif parser in (int, float):
                    value = parser(value)
            except (TypeError, ValueError) as ex:
                raise ChangeSpotException(
                    BAD_CONFIG.code(), BAD_CONFIG.msg(), f"{name}={raw}: {ex}"
                ) from ex
            self._check(name, value)
            setattr(self, name, value)
        return self

    @staticmethod
    def _check(name, value):
        problem = None
        if name in _CHOICES and value not in _CHOICES[name]:
            problem = f"one of {'/'.join(_CHOICES[name])}"
        elif name in _MINIMUM and value < _MINIMUM[name]:
            problem = f">= {_MINIMUM[name]}"
        elif name == "x_list" and (not value or any(not 0 < x <= 100 for x in value)):
            problem = "percentages in (0, 100]"
        elif name == "normalizer_c" and value <= 0:
            problem = "> 0"
        elif name == "template_sets":
            try:
                parse_template_sets(value)
            except ChangeSpotException as ex:
                problem = f"NAME=ROWSxCOLS:r0 c0 r1 c1 sets ({ex.text})"
        if problem:
            raise ChangeSpotException(
                BAD_CONFIG.code(), BAD_CONFIG.msg(), f"{name}={value}, expected {problem}"
            )

    @classmethod
    def from_text(cls, text: str):
        parser = configparser.ConfigParser(
            delimiters=("=",),
            comment_prefixes=("#",),
            inline_comment_prefixes=("#",),
            interpolation=None,
        )
        parser.optionxform = str
        try:
            parser.read_string(f"[{_SECTION}]\n" + text)
        except configparser.Error as ex:
            raise ChangeSpotException(BAD_CONFIG.code(), BAD_CONFIG.msg(), str(ex)) from ex
        return cls().update(dict(parser.items(_SECTION)))

    @classmethod
    def load(cls, path):
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as ex:
            raise ChangeSpotException(MISSING_PATH.code(), MISSING_PATH.msg(), str(path)) from ex
        cfg = cls.from_text(text)
        logger.info("config loaded from %s, digest %s", path, cfg.digest()[:12])
        return cfg

    def dump(self) -> str:
        return "".join(f"{name}={_format(getattr(self, name))}\n" for name in sorted(FIELDS))

    def digest(self) -> str:
        return hashlib.sha256(self.dump().encode("utf-8")).hexdigest()

    def __str__(self):
        return self.dump().strip().replace("\n", ", ")
