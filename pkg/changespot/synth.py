"""
Seeded desk-scale datasets: textured rectangle-composite scenes as the map,
photometrically perturbed revisits with planted change rectangles as the
queries.

Layout written by write_dataset:

    map/<map_id>.png
    queries/<query_id>.png
    proposals/<image_id>.txt   class-agnostic boxes, "image_id x y w h score"
    masks/<query_id>.png       non-interesting band (255) at the top
    gt.txt                     "query_id x y w h" per planted change
    scenes.txt                 "query_id map_id", the revisited scene
"""

import logging
import math
import os

import numpy as np

from changespot.errors import INFEASIBLE_SYNTH_SPEC, UNWRITABLE_OUTPUT
from changespot.evaluation import GroundTruth, ground_truth_lines
from changespot.imaging import Image, Rect, save_png
from changespot.object_implem import Object
from changespot.utils import ChangeSpotException

logger = logging.getLogger(__name__)

MIN_SYNTH_SIZE = 48


class SynthSpec(Object):
    def __init__(
        self,
        width: int = 160,
        height: int = 120,
        scenes: int = 50,
        queries: int = 30,
        changes_min: int = 1,
        changes_max: int = 3,
        area_min: float = 0.08,
        area_max: float = 0.20,
        noise: float = 5.0,
        brightness_shift: float = 10.0,
        sky_band: float = 0.10,
        rects_per_scene: int = 30,
        bing_min: int = 42,
        bing_max: int = 50,
    ):
        self.width = width
        self.height = height
        self.scenes = scenes
        self.queries = queries
        self.changes_min = changes_min
        self.changes_max = changes_max
        self.area_min = area_min
        self.area_max = area_max
        self.noise = noise
        self.brightness_shift = brightness_shift
        self.sky_band = sky_band
        self.rects_per_scene = rects_per_scene
        self.bing_min = bing_min
        self.bing_max = bing_max

    @property
    def band_rows(self) -> int:
        return int(round(self.sky_band * self.height))

    def validate(self):
        problems = []
        if self.width < MIN_SYNTH_SIZE or self.height < MIN_SYNTH_SIZE:
            problems.append(f"frame {self.width}x{self.height} below {MIN_SYNTH_SIZE}")
        if self.scenes < 1 or self.queries < 0:
            problems.append("need at least one scene and a non-negative query count")
        if not 0 <= self.changes_min <= self.changes_max:
            problems.append("change count range")
        if not 0 < self.area_min <= self.area_max:
            problems.append("change area range")
        if not 0 <= self.sky_band < 1:
            problems.append("sky band fraction")
        usable = self.width * (self.height - self.band_rows)
        if self.changes_max and self.area_max * self.width * self.height > usable:
            problems.append("change larger than the unmasked image")
        if not 0 <= self.bing_min <= self.bing_max:
            problems.append("proposal count range")
        if problems:
            raise ChangeSpotException(
                INFEASIBLE_SYNTH_SPEC.code(), INFEASIBLE_SYNTH_SPEC.msg(), "; ".join(problems)
            )

    def __str__(self):
        return "Frame: %dx%d, Scenes: %d, Queries: %d, Changes: %d-%d" % (
            self.width,
            self.height,
            self.scenes,
            self.queries,
            self.changes_min,
            self.changes_max,
        )


class SynthDataset(Object):
    def __init__(self, spec, map_images, queries, ground_truth, masks, proposals, scene_of):
        self.spec = spec
        self.map_images = map_images
        self.queries = queries
        self.ground_truth = ground_truth
        self.masks = masks
        self.proposals = proposals
        self.scene_of = scene_of

    def __str__(self):
        return "Map: %d, Queries: %d, Objects: %d" % (
            len(self.map_images),
            len(self.queries),
            sum(len(gt) for gt in self.ground_truth),
        )


def _ripples(rng, xx, yy) -> np.ndarray:
    """
    Two plane waves of random heading. Slopes stay well under the corner
    threshold, so they shade surfaces without adding keypoints.
    """
    out = np.zeros(xx.shape)
    for _ in range(2):
        heading = rng.uniform(0.0, math.pi)
        wavelength = rng.uniform(20.0, 48.0)
        along = xx * math.cos(heading) + yy * math.sin(heading)
        phase = rng.uniform(0.0, 2 * math.pi)
        out += rng.uniform(6.0, 12.0) * np.sin(2 * math.pi * along / wavelength + phase)
    return out


def _composite(rng, width, height, n_rects) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width]
    canvas = rng.uniform(60, 190) + _ripples(rng, xx, yy)
    for _ in range(n_rects):
        w = int(rng.integers(6, max(7, width // 3)))
        h = int(rng.integers(6, max(7, height // 3)))
        x = int(rng.integers(-w // 2, width - w // 2))
        y = int(rng.integers(-h // 2, height - h // 2))
        inside = (xx >= x) & (xx < x + w) & (yy >= y) & (yy < y + h)
        level = rng.uniform(30, 225)
        if rng.random() < 0.3:
            period = int(rng.integers(3, 7))
            checker = ((xx // period + yy // period) % 2) * rng.uniform(40, 90)
            canvas = np.where(inside, level - 45 + checker + _ripples(rng, xx, yy), canvas)
        else:
            canvas = np.where(inside, level + _ripples(rng, xx, yy), canvas)
    return canvas


def _photometric(rng, base, noise, shift) -> np.ndarray:
    out = base + rng.uniform(-shift, shift) + rng.normal(0.0, noise, base.shape)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _change_box(rng, spec: SynthSpec) -> Rect:
    frame = spec.width * spec.height
    top = spec.band_rows
    area = rng.uniform(spec.area_min, spec.area_max) * frame
    aspect = rng.uniform(0.6, 1.6)
    w = int(min(spec.width, max(1, round(math.sqrt(area * aspect)))))
    h = int(min(spec.height - top, max(1, round(area / w))))
    x = int(rng.integers(0, spec.width - w + 1))
    y = int(rng.integers(top, spec.height - h + 1))
    return Rect(x, y, w, h)


def _proposals(rng, image_id, spec: SynthSpec) -> list:
    count = int(rng.integers(spec.bing_min, spec.bing_max + 1))
    boxes = []
    for _ in range(count):
        w = int(rng.integers(spec.width // 8, spec.width // 2 + 1))
        h = int(rng.integers(spec.height // 8, spec.height // 2 + 1))
        x = int(rng.integers(0, spec.width - w + 1))
        y = int(rng.integers(0, spec.height - h + 1))
        boxes.append((image_id, x, y, w, h, round(float(rng.random()), 4)))
    return boxes


def synth_dataset(spec: SynthSpec = None, seed: int = 0) -> SynthDataset:
    spec = spec or SynthSpec()
    spec.validate()
    rng = np.random.default_rng(seed)

    bases = [
        _composite(rng, spec.width, spec.height, spec.rects_per_scene) for _ in range(spec.scenes)
    ]
    map_images = [
        Image(_photometric(rng, base, spec.noise, 0.0), "map_%04d" % k)
        for k, base in enumerate(bases)
    ]

    band = np.zeros((spec.height, spec.width), dtype=np.uint8)
    band[: spec.band_rows] = 255

    queries, gts, masks, scene_of = [], [], [], {}
    for q in range(spec.queries):
        query_id = "query_%04d" % q
        scene = int(rng.integers(0, spec.scenes))
        canvas = bases[scene].copy()
        boxes = []
        for _ in range(int(rng.integers(spec.changes_min, spec.changes_max + 1))):
            box = _change_box(rng, spec)
            patch = _composite(rng, box.w, box.h, max(2, spec.rects_per_scene // 6))
            canvas[box.slices()] = patch
            boxes.append(box)
        queries.append(Image(_photometric(rng, canvas, spec.noise, spec.brightness_shift), query_id))
        gts.append(GroundTruth(query_id, boxes))
        masks.append(Image(band, query_id))
        scene_of[query_id] = map_images[scene].image_id

    proposals = {}
    for img in map_images + queries:
        proposals[img.image_id] = _proposals(rng, img.image_id, spec)

    dataset = SynthDataset(spec, map_images, queries, gts, masks, proposals, scene_of)
    logger.info("synth_dataset seed %d: %s", seed, dataset)
    return dataset


def write_dataset(dataset: SynthDataset, out_dir) -> list:
    """Writes the layout above; returns the relative paths written, sorted."""

    written = []
    try:
        for sub in ("map", "queries", "proposals", "masks"):
            os.makedirs(os.path.join(out_dir, sub), exist_ok=True)

        def emit_png(rel, pixels):
            save_png(os.path.join(out_dir, rel), pixels)
            written.append(rel)

        def emit_text(rel, lines):
            with open(os.path.join(out_dir, rel), "w", encoding="utf-8", newline="\n") as fh:
                fh.write("".join(line + "\n" for line in lines))
            written.append(rel)

        for img in dataset.map_images:
            emit_png(f"map/{img.image_id}.png", img.pixels)
        for img, mask in zip(dataset.queries, dataset.masks):
            emit_png(f"queries/{img.image_id}.png", img.pixels)
            emit_png(f"masks/{img.image_id}.png", mask.pixels)
        for image_id, boxes in sorted(dataset.proposals.items()):
            emit_text(
                f"proposals/{image_id}.txt",
                ["%s %d %d %d %d %.4f" % box for box in boxes],
            )
        emit_text("gt.txt", ground_truth_lines(dataset.ground_truth))
        emit_text("scenes.txt", ["%s %s" % kv for kv in sorted(dataset.scene_of.items())])
    except OSError as ex:
        raise ChangeSpotException(
            UNWRITABLE_OUTPUT.code(), UNWRITABLE_OUTPUT.msg(), f"{out_dir}: {ex}"
        ) from ex
    logger.info("write_dataset %s: %d files", out_dir, len(written))
    return sorted(written)


def load_scenes(path) -> dict:
    """query id -> map image id of the revisited scene"""
    scenes = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            fields = line.split()
            if len(fields) == 2:
                scenes[fields[0]] = fields[1]
    return scenes
