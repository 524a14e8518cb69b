"""
Object bounding boxes (OBBs) that turn one full-image BoW into many
sub-image BoW features: a fixed library of grid templates plus proposals
from external detectors read from text files.

Cropping never recomputes features; a crop is the subset of entries whose
keypoint falls inside the box.
"""

import logging

import numpy as np

from changespot.enum_implem import Enum
from changespot.errors import (
    UNKNOWN_TEMPLATE_SET,
    MALFORMED_PROPOSAL,
    MALFORMED_TEMPLATE_SET,
    MISSING_PATH,
)
from changespot.features import BoWImage
from changespot.imaging import Rect
from changespot.object_implem import Object
from changespot.utils import ChangeSpotException, floatMaxString

logger = logging.getLogger(__name__)

RoiSource = Enum("TEMPLATE", "YOLO", "BING")

TEMPLATE_GRID = 4
WINDOW_GRID = 16


class ROI(Object):
    def __init__(self, rect: Rect, source: int, roi_id: int, name: str = "", score: float = 1.0):
        self.rect = rect
        self.source = source
        self.roi_id = roi_id
        self.name = name
        self.score = score

    def renumbered(self, roi_id: int):
        return ROI(self.rect, self.source, roi_id, self.name, self.score)

    def __eq__(self, other):
        return isinstance(other, ROI) and (
            self.rect,
            self.source,
            self.roi_id,
            self.name,
        ) == (other.rect, other.source, other.roi_id, other.name)

    def __hash__(self):
        return hash((self.rect, self.source, self.roi_id, self.name))

    def __str__(self):
        return "Id: %d, Source: %s, Name: %s, Rect: (%s), Score: %s" % (
            self.roi_id,
            RoiSource.toStr(self.source),
            self.name,
            self.rect,
            floatMaxString(self.score),
        )


class TemplateSet(Object):
    """
    Named members over a rows x cols grid laid on the image frame. Each member
    is a contiguous block of cells given as (row0, col0, row1, col1), end
    exclusive.
    """

    def __init__(self, name: str, members, rows: int = TEMPLATE_GRID, cols: int = TEMPLATE_GRID):
        self.name = name
        self.rows = rows
        self.cols = cols
        self.members = list(members)
        for r0, c0, r1, c1 in self.members:
            if not (0 <= r0 < r1 <= rows and 0 <= c0 < c1 <= cols):
                raise ValueError(f"template {name} member {(r0, c0, r1, c1)} off the grid")

    def rects(self, image_dims) -> list:
        width, height = image_dims
        xs = [round(c * width / self.cols) for c in range(self.cols + 1)]
        ys = [round(r * height / self.rows) for r in range(self.rows + 1)]
        return [
            Rect(xs[c0], ys[r0], xs[c1] - xs[c0], ys[r1] - ys[r0])
            for r0, c0, r1, c1 in self.members
        ]

    def __str__(self):
        return "Name: %s, Grid: %dx%d, Members: %d" % (
            self.name,
            self.rows,
            self.cols,
            len(self.members),
        )


def _default_library() -> dict:
    n = TEMPLATE_GRID
    half = n // 2
    sets = [
        TemplateSet("J", [(0, 0, n, n)]),
        TemplateSet(
            "B",
            [(r, c, r + half, c + half) for r in (0, half) for c in (0, half)],
        ),
        TemplateSet("H", [(0, 0, n, half), (0, half, n, n)]),
        TemplateSet("V", [(0, 0, half, n), (half, 0, n, n)]),
        TemplateSet("C", [(n // 4, n // 4, n // 4 + half, n // 4 + half)]),
        TemplateSet("G", [(r, c, r + 1, c + 1) for r in range(n) for c in range(n)]),
        TemplateSet(
            "D",
            [(r, c, r + 2, c + 2) for r in range(n - 1) for c in range(n - 1)],
        ),
        TemplateSet(
            "W",
            [(r, c, r + 2, c + 2) for r in range(WINDOW_GRID - 1) for c in range(WINDOW_GRID - 1)],
            WINDOW_GRID,
            WINDOW_GRID,
        ),
    ]
    return {t.name: t for t in sets}


TEMPLATE_LIBRARY = _default_library()


def split_set_names(set_names) -> list:
    if isinstance(set_names, str):
        set_names = set_names.replace(",", "+").split("+")
    return [name.strip() for name in set_names if name.strip()]


def parse_template_sets(text) -> dict:
    """
    Extra template sets from a config value:

        NAME=ROWSxCOLS:r0 c0 r1 c1, r0 c0 r1 c1; NAME2=...

    Member blocks are grid cells, end exclusive. Built-in names are reserved.
    """

    sets = {}
    for chunk in str(text or "").split(";"):
        if not chunk.strip():
            continue
        try:
            name, body = (part.strip() for part in chunk.split("=", 1))
            grid, members = body.split(":", 1)
            rows, cols = (int(v) for v in grid.lower().split("x"))
            blocks = [tuple(int(v) for v in m.split()) for m in members.split(",") if m.strip()]
            if not name.isidentifier() or not blocks or any(len(b) != 4 for b in blocks):
                raise ValueError("expected NAME=ROWSxCOLS:r0 c0 r1 c1[, ...]")
            if name in TEMPLATE_LIBRARY or name in sets:
                raise ValueError(f"set {name} already defined")
            sets[name] = TemplateSet(name, blocks, rows, cols)
        except ValueError as ex:
            raise ChangeSpotException(
                MALFORMED_TEMPLATE_SET.code(),
                MALFORMED_TEMPLATE_SET.msg(),
                f"{chunk.strip()}: {ex}",
            ) from ex
    return sets


def template_library(extra="") -> dict:
    library = dict(TEMPLATE_LIBRARY)
    library.update(parse_template_sets(extra))
    return library


def template_rois(image_dims, set_names, library=None) -> list:
    library = TEMPLATE_LIBRARY if library is None else library
    rois = []
    for name in split_set_names(set_names):
        template = library.get(name)
        if template is None:
            raise ChangeSpotException(
                UNKNOWN_TEMPLATE_SET.code(), UNKNOWN_TEMPLATE_SET.msg(), name
            )
        for k, rect in enumerate(template.rects(image_dims)):
            rois.append(ROI(rect, RoiSource.TEMPLATE, len(rois), f"{name}{k}"))
    return rois


def load_proposals(path, image_id, image_dims, start_id: int = 0) -> list:
    """
    Reads "image_id x y w h score [label]" lines; a label marks a YOLO box,
    no label a class-agnostic BING box. Boxes are clamped to the frame.
    """

    width, height = image_dims
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as ex:
        raise ChangeSpotException(MISSING_PATH.code(), MISSING_PATH.msg(), str(path)) from ex

    rois = []
    for lineno, line in enumerate(lines, 1):
        fields = line.split()
        if not fields or fields[0].startswith("#"):
            continue
        try:
            if len(fields) < 6:
                raise ValueError("expected at least 6 fields")
            x, y, w, h = (int(round(float(v))) for v in fields[1:5])
            score = float(fields[5])
            if w <= 0 or h <= 0:
                raise ValueError("non-positive extent")
        except ValueError as ex:
            raise ChangeSpotException(
                MALFORMED_PROPOSAL.code(),
                MALFORMED_PROPOSAL.msg(),
                f"{path}:{lineno}: {ex}",
            ) from ex

        if fields[0] != str(image_id):
            continue
        rect = Rect(x, y, w, h).clipped(width, height)
        if rect is None:
            logger.debug("proposal %s:%d lies outside the frame", path, lineno)
            continue
        label = " ".join(fields[6:])
        source = RoiSource.YOLO if label else RoiSource.BING
        rois.append(ROI(rect, source, start_id + len(rois), label, score))

    logger.debug("load_proposals %s %s: %d boxes", path, image_id, len(rois))
    return rois


def rois_for_image(
    image_dims, set_names, proposal_path=None, image_id=None, library=None
) -> list:
    """Templates first, then any proposals, with dense ids over the whole set."""

    rois = template_rois(image_dims, set_names, library) if set_names else []
    if proposal_path is not None:
        rois.extend(load_proposals(proposal_path, image_id, image_dims, len(rois)))
    return rois


def crop_mask(b: BoWImage, rect: Rect) -> np.ndarray:
    x, y = b.xy[:, 0], b.xy[:, 1]
    return (x >= rect.x) & (x < rect.x2) & (y >= rect.y) & (y < rect.y2)


def crop_bow(b: BoWImage, r) -> BoWImage:
    rect = r.rect if isinstance(r, ROI) else r
    return b.subset(crop_mask(b, rect))
