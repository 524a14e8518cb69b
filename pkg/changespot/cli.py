"""
Command line front end: build map artifacts, detect changes in a query,
evaluate a dataset, generate a synthetic dataset.

    changespot build MAP_DIR --out ARTIFACTS
    changespot detect QUERY --artifacts ARTIFACTS --methods FD+AD+PC --out OUT
    changespot evaluate DATASET
    changespot synth OUT --seed 0

Exit codes: 0 success, 2 usage, 3 data error, 4 unavailable channel.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from changespot import codec, get_version_string
from changespot.anomaly import ad_loc_map, train_places
from changespot.config import Config
from changespot.errors import (
    EMPTY_MAP_DIR,
    MISSING_PATH,
    NO_GROUND_TRUTH,
    PC_UNAVAILABLE,
    AD_UNAVAILABLE,
    BAD_ARTIFACT,
    UNWRITABLE_OUTPUT,
    EXIT_OK,
    exit_status,
)
from changespot.evaluation import (
    CHANNELS,
    METHOD_COMBINATIONS,
    GroundTruth,
    MetricsReport,
    apply_mask,
    fuse_channels,
    leader_stats,
    load_ground_truth,
    method_name,
    parse_methods,
    pool_cells,
    query_grades,
    top_x_accuracy,
)
from changespot.fault_diagnosis import FDConfig, fd_loc_map, loc_preview_png, save_loc_map
from changespot.features import Vocabulary, extract_bow, requantize
from changespot.imaging import LoCMap, load_image
from changespot.localization import (
    InvertedIndex,
    QueryParams,
    StageFlags,
    index_add,
    localization_accuracy,
)
from changespot.object_implem import Object
from changespot.pairwise import pc_loc_map
from changespot.roi import rois_for_image, template_library
from changespot.synth import SynthSpec, load_scenes, synth_dataset, write_dataset
from changespot.utils import ChangeSpotException, current_fn_name, log_

logger = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".png", ".pgm")
MANIFEST = "manifest.json"
VOCAB_FILE = "vocab.csvoc"
INDEX_FILE = "index.csidx"
ASSIGN_FILE = "assignments.csasg"
PLACES_DIR = "places"


def list_images(directory) -> list:
    if not os.path.isdir(directory):
        raise ChangeSpotException(MISSING_PATH.code(), MISSING_PATH.msg(), str(directory))
    return sorted(
        name for name in os.listdir(directory) if name.lower().endswith(IMAGE_EXTENSIONS)
    )


def _proposal_path(cfg: Config, proposals_dir, image_id):
    if not cfg.use_proposals or proposals_dir is None:
        return None
    path = os.path.join(proposals_dir, f"{image_id}.txt")
    return path if os.path.isfile(path) else None


def _sibling(directory, name):
    return os.path.join(os.path.dirname(os.path.abspath(directory)), name)


def _write_json(path, payload):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")
    except OSError as ex:
        raise ChangeSpotException(
            UNWRITABLE_OUTPUT.code(), UNWRITABLE_OUTPUT.msg(), f"{path}: {ex}"
        ) from ex


def _manifest(cfg: Config, files, **extra) -> dict:
    manifest = {
        "version": get_version_string(),
        "config_digest": cfg.digest(),
        "config": cfg.dump().splitlines(),
        "seeds": {
            "seed": cfg.seed,
            "kmeans_seed": cfg.kmeans_seed,
            "ransac_seed": cfg.ransac_seed,
        },
        "files": sorted(files),
    }
    manifest.update(extra)
    return manifest


def cmd_build(map_dir, out_dir, cfg: Config = None, proposals_dir=None) -> dict:
    """Vocabulary, inverted index and place models for the map; returns the manifest."""

    log_(current_fn_name(), vars(), "COMMAND")
    cfg = cfg or Config()
    names = list_images(map_dir)
    if not names:
        raise ChangeSpotException(EMPTY_MAP_DIR.code(), EMPTY_MAP_DIR.msg(), str(map_dir))
    if proposals_dir is None:
        proposals_dir = _sibling(map_dir, "proposals")
    try:
        os.makedirs(os.path.join(out_dir, PLACES_DIR), exist_ok=True)
    except OSError as ex:
        raise ChangeSpotException(
            UNWRITABLE_OUTPUT.code(), UNWRITABLE_OUTPUT.msg(), f"{out_dir}: {ex}"
        ) from ex

    images = [load_image(os.path.join(map_dir, name)) for name in names]
    voc = Vocabulary(cfg.vocab_radius)
    idx = InvertedIndex()
    library = template_library(cfg.template_sets)
    grown = [extract_bow(img, voc, True, cfg.max_keypoints, cfg.fast_threshold) for img in images]
    for map_id, (img, bow) in enumerate(zip(images, grown)):
        # map and query words both come from the final vocabulary
        bow = requantize(bow, voc)
        rois = rois_for_image(
            img.dims,
            cfg.map_roi_sets,
            _proposal_path(cfg, proposals_dir, img.image_id),
            img.image_id,
            library,
        )
        index_add(idx, map_id, rois, bow)
    idx.freeze()

    files = [VOCAB_FILE, INDEX_FILE, ASSIGN_FILE]
    codec.write_artifact(os.path.join(out_dir, VOCAB_FILE), codec.encode_vocabulary(voc))
    codec.write_artifact(os.path.join(out_dir, INDEX_FILE), codec.encode_index(idx))

    k = min(cfg.places_k, len(images))
    models, labels = train_places(images, k, cfg.pca_components, cfg)
    for place_id, model in models.items():
        rel = f"{PLACES_DIR}/place_{place_id:03d}.cspm"
        codec.write_artifact(os.path.join(out_dir, rel), codec.encode_place_model(model))
        files.append(rel)
    assignments = {map_id: int(label) for map_id, label in enumerate(labels)}
    codec.write_artifact(os.path.join(out_dir, ASSIGN_FILE), codec.encode_assignments(assignments))

    manifest = _manifest(
        cfg,
        files,
        map_dir=os.path.abspath(map_dir),
        map_images=[
            {"id": map_id, "name": img.image_id, "file": name}
            for map_id, (img, name) in enumerate(zip(images, names))
        ],
        vocabulary_size=len(voc),
        places=len(models),
    )
    _write_json(os.path.join(out_dir, MANIFEST), manifest)
    logger.info(
        "cmd_build: %d map images, %d words, %d places into %s",
        len(images),
        len(voc),
        len(models),
        out_dir,
    )
    return manifest


class MapContext(Object):
    """Loaded map artifacts. Map imagery and place models load on first use."""

    def __init__(self, artifacts_dir, cfg: Config):
        self.artifacts_dir = artifacts_dir
        self.cfg = cfg
        manifest_path = os.path.join(artifacts_dir, MANIFEST)
        try:
            with open(manifest_path, "r", encoding="utf-8") as fh:
                self.manifest = json.load(fh)
        except OSError as ex:
            raise ChangeSpotException(
                MISSING_PATH.code(), MISSING_PATH.msg(), manifest_path
            ) from ex
        except ValueError as ex:
            raise ChangeSpotException(BAD_ARTIFACT.code(), BAD_ARTIFACT.msg(), manifest_path) from ex
        self.voc = codec.decode_vocabulary(codec.read_artifact(self._path(VOCAB_FILE)))
        self.idx = codec.decode_index(codec.read_artifact(self._path(INDEX_FILE)))
        self.map_entries = {m["id"]: m for m in self.manifest.get("map_images", [])}
        self.flags = StageFlags.from_names(cfg.stages)
        self.params = QueryParams.from_config(cfg)
        self._places = None
        self._map_images = {}

    def _path(self, rel):
        return os.path.join(self.artifacts_dir, rel)

    def __str__(self):
        return "Artifacts: %s, Index: (%s), Words: %d" % (self.artifacts_dir, self.idx, len(self.voc))

    def name_of(self, map_id) -> str:
        return self.map_entries.get(map_id, {}).get("name", str(map_id))

    def places(self):
        if self._places is None:
            try:
                assignments = codec.decode_assignments(codec.read_artifact(self._path(ASSIGN_FILE)))
                models = {}
                for place_id in sorted(set(assignments.values())):
                    rel = f"{PLACES_DIR}/place_{place_id:03d}.cspm"
                    models[place_id] = codec.decode_place_model(codec.read_artifact(self._path(rel)))
            except ChangeSpotException as ex:
                raise ChangeSpotException(
                    AD_UNAVAILABLE.code(), AD_UNAVAILABLE.msg(), str(ex)
                ) from ex
            self._places = (models, assignments)
        return self._places

    def map_image(self, map_id):
        if map_id not in self._map_images:
            entry = self.map_entries.get(map_id)
            path = (
                os.path.join(self.manifest.get("map_dir", ""), entry["file"]) if entry else None
            )
            if path is None or not os.path.isfile(path):
                raise ChangeSpotException(
                    PC_UNAVAILABLE.code(), PC_UNAVAILABLE.msg(), str(path or map_id)
                )
            self._map_images[map_id] = load_image(path)
        return self._map_images[map_id]


class Detection(Object):
    def __init__(self, query_id, fd_result, maps, grids):
        self.query_id = query_id
        self.fd_result = fd_result
        self.maps = maps
        self.grids = grids

    @property
    def strong(self):
        return self.fd_result.strong

    def fused(self, channels):
        return fuse_channels([self.grids[c] for c in channels])

    def __str__(self):
        return "Query: %s, Channels: %s" % (self.query_id, "+".join(self.maps))


def _min_pool(maps) -> LoCMap:
    return LoCMap(np.minimum.reduce([m.values for m in maps]))


def detect_query(ctx: MapContext, query, channels, mask=None, proposal_path=None) -> Detection:
    """Runs FD and the requested extra channels on one query image."""

    cfg = ctx.cfg
    bow = extract_bow(query, ctx.voc, False, cfg.max_keypoints, cfg.fast_threshold)
    rois = rois_for_image(
        query.dims,
        cfg.query_roi_sets,
        proposal_path,
        query.image_id,
        template_library(cfg.template_sets),
    )
    fd = fd_loc_map(
        ctx.idx,
        bow,
        rois,
        FDConfig(cfg.top_y, cfg.query_roi_sets, cfg.empty_crop_entries),
        ctx.flags,
        ctx.params,
    )
    hypotheses = fd.strong.top(cfg.channel_hypotheses)

    maps = {}
    if "FD" in channels:
        maps["FD"] = fd.loc_map
    if "AD" in channels:
        models, assignments = ctx.places()
        maps["AD"] = _min_pool(
            ad_loc_map(models, assignments, query, map_id) for map_id in hypotheses
        )
    if "PC" in channels:
        maps["PC"] = _min_pool(
            pc_loc_map(
                query,
                ctx.map_image(map_id),
                cfg.pc_splat_radius,
                cfg.max_keypoints,
                cfg.fast_threshold,
            )
            for map_id in hypotheses
        )
    if mask is not None:
        maps = {c: apply_mask(m, mask) for c, m in maps.items()}
    grids = {c: pool_cells(m, cfg.cell_size) for c, m in maps.items()}
    return Detection(query.image_id, fd, maps, grids)


def localization_json(ctx: MapContext, detection: Detection) -> dict:
    return {
        "query": detection.query_id,
        "strong": [
            {"id": map_id, "name": ctx.name_of(map_id), "score": round(score, 9)}
            for map_id, score in detection.strong
        ],
        "rois_used": len(detection.fd_result.rois),
        "rois_skipped": len(detection.fd_result.skipped),
    }


def cmd_detect(
    query_path, artifacts_dir, methods, out_dir, cfg: Config = None, mask_path=None, proposals_dir=None
) -> dict:
    """LoC rasters per channel, the fused cell grid and the strong ranked list."""

    log_(current_fn_name(), vars(), "COMMAND")
    cfg = cfg or Config()
    channels = parse_methods(methods)
    ctx = MapContext(artifacts_dir, cfg)
    query = load_image(query_path)
    mask = load_image(mask_path) if mask_path else None
    if proposals_dir is None:
        proposals_dir = _sibling(os.path.dirname(os.path.abspath(query_path)), "proposals")
    detection = detect_query(
        ctx, query, channels, mask, _proposal_path(cfg, proposals_dir, query.image_id)
    )

    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as ex:
        raise ChangeSpotException(
            UNWRITABLE_OUTPUT.code(), UNWRITABLE_OUTPUT.msg(), f"{out_dir}: {ex}"
        ) from ex
    files = []
    for channel in channels:
        base = f"{query.image_id}.{channel.lower()}"
        save_loc_map(os.path.join(out_dir, base + ".csloc"), detection.maps[channel])
        loc_preview_png(os.path.join(out_dir, base + ".png"), detection.maps[channel])
        files += [base + ".csloc", base + ".png"]
    fused = detection.fused(channels)
    fused_name = f"{query.image_id}.fused.json"
    _write_json(
        os.path.join(out_dir, fused_name),
        {
            "method": method_name(channels),
            "cell_size": fused.cell_size,
            "rows": fused.rows,
            "cols": fused.cols,
            "cells": [[round(v, 9) for v in row] for row in fused.values.tolist()],
        },
    )
    result = localization_json(ctx, detection)
    loc_name = f"{query.image_id}.localization.json"
    _write_json(os.path.join(out_dir, loc_name), result)
    files += [fused_name, loc_name]
    logger.info("cmd_detect %s: %s", query.image_id, ", ".join(sorted(files)))
    return result


def cmd_evaluate(dataset_dir, cfg: Config = None, artifacts_dir=None, methods=METHOD_COMBINATIONS) -> MetricsReport:
    """Top-X accuracy of every method combination over the dataset's queries."""

    log_(current_fn_name(), vars(), "COMMAND")
    cfg = cfg or Config()
    combos = [method_name(parse_methods(m)) for m in methods]
    needed = [c for c in CHANNELS if any(c in combo.split("+") for combo in combos)]
    gt_path = os.path.join(dataset_dir, "gt.txt")
    if not os.path.isfile(gt_path):
        raise ChangeSpotException(NO_GROUND_TRUTH.code(), NO_GROUND_TRUTH.msg(), gt_path)
    if artifacts_dir is None:
        artifacts_dir = os.path.join(dataset_dir, "artifacts")
    if not os.path.isfile(os.path.join(artifacts_dir, MANIFEST)):
        cmd_build(os.path.join(dataset_dir, "map"), artifacts_dir, cfg)
    ctx = MapContext(artifacts_dir, cfg)

    query_dir = os.path.join(dataset_dir, "queries")
    names = list_images(query_dir)
    gts = load_ground_truth(gt_path)
    scenes_path = os.path.join(dataset_dir, "scenes.txt")
    scenes = load_scenes(scenes_path) if os.path.isfile(scenes_path) else {}
    id_of = {entry["name"]: map_id for map_id, entry in ctx.map_entries.items()}

    detections, strong_lists, true_ids = {}, [], []
    for name in names:
        query = load_image(os.path.join(query_dir, name))
        mask_path = os.path.join(dataset_dir, "masks", name)
        mask = load_image(mask_path) if os.path.isfile(mask_path) else None
        proposal = _proposal_path(cfg, os.path.join(dataset_dir, "proposals"), query.image_id)
        detection = detect_query(ctx, query, needed, mask, proposal)
        detections[query.image_id] = detection
        strong_lists.append(detection.strong)
        true_ids.append(id_of.get(scenes.get(query.image_id)))

    truths = [gts.get(qid, GroundTruth(qid)) for qid in detections]
    accuracy, grades = {}, {}
    for combo in combos:
        channels = combo.split("+")
        fused = {qid: det.fused(channels) for qid, det in detections.items()}
        accuracy[combo] = {
            x: top_x_accuracy(fused, truths, x, cfg.detection_rule, cfg.ranking_scope)
            for x in cfg.x_list
        }
        grades[combo] = query_grades(
            fused, truths, cfg.x_list, cfg.detection_rule, cfg.ranking_scope
        )

    rank1, top_y = localization_accuracy(strong_lists, true_ids, cfg.top_y)
    report = MetricsReport(
        accuracy,
        cfg.x_list,
        query_count=len(detections),
        object_count=sum(len(gt) for gt in truths),
        localization={"rank1": rank1, f"top{cfg.top_y}": top_y} if scenes else {},
        leaders=leader_stats(grades) if len(grades) > 1 else {},
        config_digest=cfg.digest(),
    )
    written = ["metrics.json", "metrics.txt"]
    try:
        with open(os.path.join(artifacts_dir, "metrics.json"), "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
        with open(os.path.join(artifacts_dir, "metrics.txt"), "w", encoding="utf-8") as fh:
            fh.write(report.to_table() + "\n")
    except OSError as ex:
        raise ChangeSpotException(
            UNWRITABLE_OUTPUT.code(), UNWRITABLE_OUTPUT.msg(), f"{artifacts_dir}: {ex}"
        ) from ex
    logger.info("cmd_evaluate %s: %s, wrote %s", dataset_dir, report, written)
    return report


def cmd_synth(out_dir, seed: int = 0, spec: SynthSpec = None, cfg: Config = None) -> dict:
    log_(current_fn_name(), vars(), "COMMAND")
    cfg = cfg or Config(seed=seed)
    dataset = synth_dataset(spec, seed)
    files = write_dataset(dataset, out_dir)
    manifest = _manifest(cfg, files, synth_seed=seed, spec=vars(dataset.spec))
    manifest["seeds"]["seed"] = seed
    _write_json(os.path.join(out_dir, MANIFEST), manifest)
    return manifest


def _load_config(args) -> Config:
    cfg = Config.load(args.config) if getattr(args, "config", None) else Config()
    if getattr(args, "seed", None) is not None:
        cfg.update({"seed": args.seed})
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="changespot", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=get_version_string())
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
        help="root logger level",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build map artifacts")
    p.add_argument("map_dir")
    p.add_argument("--out", required=True, help="artifacts directory")
    p.add_argument("--proposals", help="proposal directory, default: sibling proposals/")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("detect", help="detect changes in one query image")
    p.add_argument("query")
    p.add_argument("--artifacts", required=True)
    p.add_argument("--methods", default="FD", help="e.g. FD, FD+AD, FD+AD+PC")
    p.add_argument("--out", required=True)
    p.add_argument("--mask", help="non-interesting region mask (pixel > 0)")
    p.add_argument("--proposals")
    p.add_argument("--config")

    p = sub.add_parser("evaluate", help="top-X accuracy over a dataset")
    p.add_argument("dataset")
    p.add_argument("--artifacts")
    p.add_argument("--methods", nargs="+", default=list(METHOD_COMBINATIONS))
    p.add_argument("--x-list", help="comma separated percentages, e.g. 5,10,15,20")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenes", type=int, default=50)
    p.add_argument("--queries", type=int, default=30)
    p.add_argument("--changes-min", type=int, default=1)
    p.add_argument("--changes-max", type=int, default=3)
    p.add_argument("--width", type=int, default=160)
    p.add_argument("--height", type=int, default=120)
    p.add_argument("--config")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )
    try:
        cfg = _load_config(args)
        if args.command == "build":
            manifest = cmd_build(args.map_dir, args.out, cfg, args.proposals)
            print(f"indexed {len(manifest['map_images'])} map images into {args.out}")
        elif args.command == "detect":
            result = cmd_detect(
                args.query, args.artifacts, args.methods, args.out, cfg, args.mask, args.proposals
            )
            print(json.dumps(result, sort_keys=True, indent=2))
        elif args.command == "evaluate":
            if args.x_list:
                cfg.update({"x_list": args.x_list})
            report = cmd_evaluate(args.dataset, cfg, args.artifacts, args.methods)
            print(report.to_table())
        elif args.command == "synth":
            spec = SynthSpec(
                width=args.width,
                height=args.height,
                scenes=args.scenes,
                queries=args.queries,
                changes_min=args.changes_min,
                changes_max=args.changes_max,
            )
            manifest = cmd_synth(args.out, args.seed, spec, cfg)
            print(f"wrote {len(manifest['files'])} files into {args.out}")
    except ChangeSpotException as ex:
        logger.error("%s failed: %s", args.command, ex)
        print(f"error: {ex}", file=sys.stderr)
        return exit_status(ex.code)
    return EXIT_OK


if "__main__" == __name__:
    sys.exit(main())
