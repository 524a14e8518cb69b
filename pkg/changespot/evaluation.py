"""
Cell pooling, masking, reciprocal-rank channel fusion and the top-X
accuracy protocol with its five-grade leader statistics.
"""

import json
import logging
import math

import numpy as np

from changespot.const import DEFAULT_CELL_SIZE, X_LIST, COVERAGE_THRESHOLD, GRADE_OTHERWISE
from changespot.enum_implem import Enum
from changespot.errors import (
    DIMENSION_MISMATCH,
    SHAPE_MISMATCH,
    NO_GROUND_TRUTH,
    MALFORMED_GROUND_TRUTH,
    INVALID_ARGUMENT,
    UNKNOWN_METHOD,
    MISSING_PATH,
)
from changespot.imaging import CellGrid, Image, LoCMap, Rect
from changespot.object_implem import Object
from changespot.utils import ChangeSpotException, floatMaxString

logger = logging.getLogger(__name__)

CHANNELS = ("FD", "AD", "PC")
METHOD_COMBINATIONS = ("FD", "AD", "PC", "FD+AD", "FD+PC", "FD+AD+PC")

DetectionRule = Enum("COVERAGE", "IOU")
RankingScope = Enum("QUERY", "GLOBAL")


def parse_methods(text) -> list:
    """'FD+AD' or ['FD', 'AD'] -> ordered channel names."""

    names = text.replace(",", "+").split("+") if isinstance(text, str) else list(text)
    names = [n.strip().upper() for n in names if n.strip()]
    unknown = [n for n in names if n not in CHANNELS]
    if unknown or not names:
        raise ChangeSpotException(
            UNKNOWN_METHOD.code(), UNKNOWN_METHOD.msg(), ",".join(unknown) or "(none)"
        )
    return [c for c in CHANNELS if c in names]


def method_name(channels) -> str:
    return "+".join(c for c in CHANNELS if c in channels)


class GroundTruth(Object):
    def __init__(self, query_image_id, change_boxes=()):
        self.query_image_id = query_image_id
        self.change_boxes = list(change_boxes)

    def __len__(self):
        return len(self.change_boxes)

    def __str__(self):
        return "Query: %s, Boxes: %d" % (self.query_image_id, len(self.change_boxes))


def load_ground_truth(path, dims_by_query=None) -> dict:
    """Parses "query_id x y w h" lines into GroundTruth per query id."""

    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as ex:
        raise ChangeSpotException(MISSING_PATH.code(), MISSING_PATH.msg(), str(path)) from ex

    gts = {}
    for lineno, line in enumerate(lines, 1):
        fields = line.split()
        if not fields or fields[0].startswith("#"):
            continue
        try:
            if len(fields) != 5:
                raise ValueError("expected 'query_id x y w h'")
            rect = Rect(*(int(v) for v in fields[1:]))
        except (ValueError, ChangeSpotException) as ex:
            raise ChangeSpotException(
                MALFORMED_GROUND_TRUTH.code(),
                MALFORMED_GROUND_TRUTH.msg(),
                f"{path}:{lineno}: {ex}",
            ) from ex
        query_id = fields[0]
        if dims_by_query and query_id in dims_by_query:
            if not rect.inside(*dims_by_query[query_id]):
                raise ChangeSpotException(
                    MALFORMED_GROUND_TRUTH.code(),
                    MALFORMED_GROUND_TRUTH.msg(),
                    f"{path}:{lineno}: box outside the image",
                )
        gts.setdefault(query_id, GroundTruth(query_id)).change_boxes.append(rect)
    logger.debug("load_ground_truth %s: %d queries", path, len(gts))
    return gts


def ground_truth_lines(gts) -> list:
    return [
        "%s %d %d %d %d" % ((gt.query_image_id,) + box.as_tuple())
        for gt in gts
        for box in gt.change_boxes
    ]


def pool_cells(loc, cell_size: int = DEFAULT_CELL_SIZE) -> CellGrid:
    """Max of the pixel values in each cell."""

    values = loc.values if isinstance(loc, LoCMap) else np.asarray(loc, dtype=np.float64)
    height, width = values.shape
    grid = CellGrid(width, height, cell_size)
    padded = np.full((grid.rows * cell_size, grid.cols * cell_size), -np.inf)
    padded[:height, :width] = values
    pooled = padded.reshape(grid.rows, cell_size, grid.cols, cell_size).max(axis=(1, 3))
    return grid.with_values(pooled)


def apply_mask(grid_or_map, mask: Image):
    """
    Zeroes non-interesting positions (mask pixel > 0). A CellGrid takes
    either a cell-shaped mask or a frame-sized one; with the latter a cell
    is zeroed when all of its pixels are masked.
    """

    masked = mask.pixels > 0
    if isinstance(grid_or_map, LoCMap):
        if masked.shape != grid_or_map.values.shape:
            raise ChangeSpotException(
                DIMENSION_MISMATCH.code(),
                DIMENSION_MISMATCH.msg(),
                f"mask {mask.dims} vs map {grid_or_map.dims}",
            )
        return LoCMap(np.where(masked, 0.0, grid_or_map.values))

    grid = grid_or_map
    if masked.shape == grid.shape:
        cells = masked
    elif masked.shape == (grid.height, grid.width):
        cells = pool_cells((~masked).astype(np.float64), grid.cell_size).values == 0
    else:
        raise ChangeSpotException(
            DIMENSION_MISMATCH.code(),
            DIMENSION_MISMATCH.msg(),
            f"mask {mask.dims} vs grid {grid}",
        )
    return grid.with_values(np.where(cells, 0.0, grid.values))


def cell_order(values) -> np.ndarray:
    """Flat cell indices by descending score, ties by row-major index."""
    flat = np.asarray(values).reshape(-1)
    return np.lexsort((np.arange(flat.size), -flat))


def cell_ranks(values) -> np.ndarray:
    order = cell_order(values)
    ranks = np.empty(order.size, dtype=np.int64)
    ranks[order] = np.arange(1, order.size + 1)
    return ranks.reshape(np.shape(values))


def fuse_channels(grids) -> CellGrid:
    """Sum over channels of 1/rank, rank 1 being the most changed cell."""

    grids = list(grids)
    if not grids:
        raise ChangeSpotException(INVALID_ARGUMENT.code(), INVALID_ARGUMENT.msg(), "no channels")
    shape = grids[0].shape
    for grid in grids[1:]:
        if grid.shape != shape:
            raise ChangeSpotException(
                SHAPE_MISMATCH.code(), SHAPE_MISMATCH.msg(), f"{grid.shape} vs {shape}"
            )
    fused = sum(1.0 / cell_ranks(grid.values) for grid in grids)
    return grids[0].with_values(fused)


def _selections(grids, X, scope) -> dict:
    if scope == RankingScope.GLOBAL:
        pool = []
        for qid, grid in grids.items():
            flat = grid.values.reshape(-1)
            pool.extend((-flat[k], qid, k) for k in range(flat.size))
        pool.sort(key=lambda item: (item[0], _sort_key(item[1]), item[2]))
        take = _top_count(X, len(pool))
        chosen = {qid: [] for qid in grids}
        for _, qid, k in pool[:take]:
            chosen[qid].append(k)
        return {qid: np.array(ks, dtype=np.int64) for qid, ks in chosen.items()}
    return {
        qid: cell_order(grid.values)[: _top_count(X, grid.n_cells)] for qid, grid in grids.items()
    }


def _sort_key(qid):
    return str(qid)


def _top_count(X, n) -> int:
    return min(n, math.ceil(X * n / 100.0 - 1e-9))


def _selected_pixels(grid: CellGrid, cells) -> np.ndarray:
    chosen = np.zeros(grid.n_cells, dtype=bool)
    chosen[cells] = True
    chosen = chosen.reshape(grid.shape)
    full = np.repeat(np.repeat(chosen, grid.cell_size, axis=0), grid.cell_size, axis=1)
    return full[: grid.height, : grid.width]


def _is_detected(selected, box: Rect, rule) -> bool:
    inter = int(selected[box.slices()].sum())
    if rule == DetectionRule.IOU:
        union = int(selected.sum()) + box.area - inter
        return union > 0 and inter / union >= COVERAGE_THRESHOLD
    return inter / box.area >= COVERAGE_THRESHOLD


def _as_rule(rule):
    return DetectionRule.fromStr(rule.upper()) if isinstance(rule, str) else rule


def _as_scope(scope):
    return RankingScope.fromStr(scope.upper()) if isinstance(scope, str) else scope


def detections(fused: dict, gts, X, rule="coverage", scope="query") -> dict:
    """query id -> detected flag per ground-truth box"""

    if not 0 < X <= 100:
        raise ChangeSpotException(INVALID_ARGUMENT.code(), INVALID_ARGUMENT.msg(), f"X={X}")
    rule, scope = _as_rule(rule), _as_scope(scope)
    if rule is None or scope is None:
        raise ChangeSpotException(
            INVALID_ARGUMENT.code(), INVALID_ARGUMENT.msg(), "unknown detection rule or scope"
        )
    gts = list(gts.values()) if isinstance(gts, dict) else list(gts)
    if sum(len(gt) for gt in gts) == 0:
        raise ChangeSpotException(NO_GROUND_TRUTH.code(), NO_GROUND_TRUTH.msg(), f"X={X}")

    selections = _selections(fused, X, scope)
    result = {}
    for gt in gts:
        grid = fused.get(gt.query_image_id)
        if grid is None:
            result[gt.query_image_id] = [False] * len(gt)
            continue
        selected = _selected_pixels(grid, selections[gt.query_image_id])
        result[gt.query_image_id] = [_is_detected(selected, box, rule) for box in gt.change_boxes]
    return result


def top_x_accuracy(fused: dict, gts, X, rule="coverage", scope="query") -> float:
    """Percent of ground-truth objects covered by the top-X% cells."""

    found = detections(fused, gts, X, rule, scope)
    flags = [flag for per_query in found.values() for flag in per_query]
    accuracy = 100.0 * sum(flags) / len(flags)
    logger.debug("top_x_accuracy X=%s: %s", X, floatMaxString(accuracy, 2))
    return accuracy


def query_grades(fused: dict, gts, x_list=X_LIST, rule="coverage", scope="query") -> dict:
    """
    Smallest X in x_list at which every object of the query is detected,
    GRADE_OTHERWISE when none. Queries without objects are not graded.
    """

    gts = list(gts.values()) if isinstance(gts, dict) else list(gts)
    grades = {gt.query_image_id: GRADE_OTHERWISE for gt in gts if len(gt)}
    for X in sorted(x_list):
        found = detections(fused, gts, X, rule, scope)
        for qid in grades:
            if grades[qid] == GRADE_OTHERWISE and all(found[qid]):
                grades[qid] = X
    return grades


def leader_stats(grades_by_method: dict) -> dict:
    """
    method -> {"solo": %, "co": %} over the queries graded for every method.
    A solo leader has the best grade alone; co-leaders share it.
    """

    if len(grades_by_method) < 2:
        raise ChangeSpotException(
            INVALID_ARGUMENT.code(), INVALID_ARGUMENT.msg(), "leader stats need two methods"
        )
    methods = sorted(grades_by_method)
    queries = set.intersection(*(set(grades_by_method[m]) for m in methods))
    stats = {m: {"solo": 0.0, "co": 0.0} for m in methods}
    if not queries:
        return stats
    for qid in queries:
        best = min(grades_by_method[m][qid] for m in methods)
        leaders = [m for m in methods if grades_by_method[m][qid] == best]
        key = "solo" if len(leaders) == 1 else "co"
        for m in leaders:
            stats[m][key] += 1
    for m in methods:
        for key in ("solo", "co"):
            stats[m][key] = 100.0 * stats[m][key] / len(queries)
    return stats


class MetricsReport(Object):
    def __init__(
        self,
        accuracy: dict,
        x_list=X_LIST,
        query_count: int = 0,
        object_count: int = 0,
        localization=None,
        leaders=None,
        config_digest: str = "",
    ):
        self.accuracy = accuracy
        self.x_list = list(x_list)
        self.query_count = query_count
        self.object_count = object_count
        self.localization = localization or {}
        self.leaders = leaders or {}
        self.config_digest = config_digest

    @property
    def methods(self) -> list:
        known = [m for m in METHOD_COMBINATIONS if m in self.accuracy]
        return known + sorted(m for m in self.accuracy if m not in METHOD_COMBINATIONS)

    def as_dict(self) -> dict:
        return {
            "accuracy": {
                m: {str(x): round(self.accuracy[m][x], 6) for x in self.x_list}
                for m in self.methods
            },
            "x_list": self.x_list,
            "query_count": self.query_count,
            "object_count": self.object_count,
            "localization": {k: round(v, 6) for k, v in self.localization.items()},
            "leaders": {
                m: {k: round(v, 6) for k, v in s.items()} for m, s in self.leaders.items()
            },
            "config_digest": self.config_digest,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2)

    def to_table(self) -> str:
        header = ["Method"] + [str(x) for x in self.x_list]
        if self.leaders:
            header += ["solo", "co"]
        rows = []
        for m in self.methods:
            row = [m] + ["%.1f" % self.accuracy[m][x] for x in self.x_list]
            if self.leaders:
                lead = self.leaders.get(m, {"solo": 0.0, "co": 0.0})
                row += ["%.1f" % lead["solo"], "%.1f" % lead["co"]]
            rows.append(row)
        widths = [max(len(r[k]) for r in [header] + rows) for k in range(len(header))]

        def fmt(row):
            return "  ".join(
                cell.ljust(widths[k]) if k == 0 else cell.rjust(widths[k])
                for k, cell in enumerate(row)
            )

        lines = [fmt(header), "-" * len(fmt(header))] + [fmt(r) for r in rows]
        lines.append("queries: %d, objects: %d" % (self.query_count, self.object_count))
        if self.localization:
            lines.append(
                "localization: "
                + ", ".join(
                    "%s %.1f" % (k, v) for k, v in sorted(self.localization.items())
                )
            )
        return "\n".join(lines)

    def __str__(self):
        return "Methods: %d, Queries: %d, Objects: %d" % (
            len(self.accuracy),
            self.query_count,
            self.object_count,
        )
