"""Command-line pipeline: synth -> train -> detect -> evaluate, plus bench.

Every subcommand writes into ``--out``; files are staged under temporary
names and only renamed into place once the whole command has succeeded.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np

from . import classical
from .config import ALL_METHODS, RunConfig, parse_config
from .errors import HacdError
from .evaluation import compute_auc, compute_roc, write_metrics_json, write_roc_csv
from .hsio import HsiCube, export_map, load_envi, radiometric_align, read_map_csv, save_envi
from .mtcnet import infer_loss_map, load_model, save_model, train, write_history_csv
from .scene import generate_scene

log = logging.getLogger("hacd")


class Staging:
    """Collect output files under temporary names; commit renames them all."""

    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.pending = []

    def path(self, name):
        final = os.path.join(self.out_dir, name)
        tmp = os.path.join(self.out_dir, f".{name}.partial")
        self.pending.append((tmp, final))
        return tmp

    def commit(self):
        for tmp, final in self.pending:
            os.replace(tmp, final)
        self.pending = []

    def discard(self):
        for tmp, _ in self.pending:
            if os.path.exists(tmp):
                os.remove(tmp)
        self.pending = []


def _data_path(header_path):
    stem, ext = os.path.splitext(header_path)
    if ext.lower() != ".hdr":
        raise HacdError(f"{header_path}: expected an ENVI .hdr path")
    for cand in (stem + ".img", stem + ".dat", stem + ".raw", stem + ".bsq", stem + ".bil", stem + ".bip", stem):
        if os.path.isfile(cand):
            return cand
    raise FileNotFoundError(f"no data file found next to {header_path}")


def read_cube(header_path) -> HsiCube:
    return load_envi(header_path, _data_path(header_path))


def _require(path, what):
    if not path:
        raise HacdError(f"missing {what}; pass it as a flag or set it in the config file")
    if not os.path.exists(path):
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _load_pair(cfg: RunConfig, args):
    t1 = read_cube(_require(args.time1 or cfg.paths.get("time1"), "time-1 cube"))
    t2 = read_cube(_require(args.time2 or cfg.paths.get("time2"), "time-2 cube"))
    if t1.shape != t2.shape:
        raise HacdError(f"cube shapes differ: {t1.shape} vs {t2.shape}")
    if cfg.align if args.align is None else args.align:
        log.info("matching time-2 band statistics to time 1")
        t2 = radiometric_align(t1, t2)
    return t1, t2


def _mask(path) -> np.ndarray:
    return read_map_csv(_require(path, "mask")).astype(np.uint8)


def score_map(method, cfg: RunConfig, t1, t2, checkpoint=None) -> np.ndarray:
    if method == "mtcnet":
        model, _ = load_model(_require(checkpoint, "checkpoint (needed for mtcnet)"))
        return infer_loss_map(model, t1, t2, tile=cfg.tile_size or None)
    return classical.run_detector(method, t1, t2, cfg.reg_eps, cfg.usfa_iterations)


def cmd_synth(cfg, args, stage):
    t1, t2, mask = generate_scene(cfg.scene)
    log.info("scene %dx%dx%d with %d anomalous pixels", *t1.shape, int(mask.sum()))
    save_envi(t1, stage.path("time1.hdr"), stage.path("time1.img"))
    save_envi(t2, stage.path("time2.hdr"), stage.path("time2.img"))
    np.savetxt(stage.path("mask.csv"), mask, delimiter=",", fmt="%d")


def cmd_train(cfg, args, stage):
    t1, t2 = _load_pair(cfg, args)
    model, history = train(t1, t2, cfg.arch, cfg.train)
    ckpt = stage.path("model.ckpt")
    sidecar = stage.path("model.ckpt.cfg")
    save_model(model, ckpt, cfg.train)
    os.replace(ckpt + ".cfg", sidecar)
    write_history_csv(history, stage.path("loss_history.csv"))
    log.info("final epoch loss %.6f", history[-1])


def cmd_detect(cfg, args, stage):
    checkpoint = args.checkpoint or cfg.paths.get("checkpoint")
    if args.method == "mtcnet":
        _require(checkpoint, "checkpoint (needed for mtcnet)")
    t1, t2 = _load_pair(cfg, args)
    scores = score_map(args.method, cfg, t1, t2, checkpoint)
    export_map(scores, stage.path(f"{args.method}.pgm"), "pgm16")
    export_map(scores, stage.path(f"{args.method}.csv"), "csv")


def cmd_evaluate(cfg, args, stage):
    scores = read_map_csv(_require(args.scores, "score map"))
    mask = _mask(args.mask or cfg.paths.get("mask"))
    curve = compute_roc(scores, mask)
    auc = compute_auc(curve)
    name = args.method or os.path.splitext(os.path.basename(args.scores))[0]
    write_roc_csv(curve, stage.path("roc.csv"))
    write_metrics_json(stage.path("metrics.json"), name, auc, curve.n_pos, curve.n_neg)
    log.info("%s AUC %.4f", name, auc)


def cmd_bench(cfg, args, stage):
    mask_path = _require(args.mask or cfg.paths.get("mask"), "mask")
    checkpoint = args.checkpoint or cfg.paths.get("checkpoint")
    if checkpoint:
        _require(checkpoint, "checkpoint")
    t1, t2 = _load_pair(cfg, args)
    mask = _mask(mask_path)
    methods = [m for m in cfg.methods if m != "mtcnet"]
    if checkpoint:
        methods.append("mtcnet")
    rows = []
    for method in methods:
        auc = compute_auc(compute_roc(score_map(method, cfg, t1, t2, checkpoint), mask))
        log.info("%-8s AUC %.4f", method, auc)
        rows.append((method, auc))
    with open(stage.path("bench.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["method", "auc"])
        for method, auc in rows:
            w.writerow([method, f"{auc:.4f}"])


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "detect": cmd_detect, "evaluate": cmd_evaluate, "bench": cmd_bench}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value run configuration file")
    common.add_argument("--out", help="output directory (default: current directory)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("-v", "--verbose", action="store_true")

    pair = argparse.ArgumentParser(add_help=False)
    pair.add_argument("--time1", help="time-1 ENVI header (.hdr)")
    pair.add_argument("--time2", help="time-2 ENVI header (.hdr)")
    pair.add_argument(
        "--align", action=argparse.BooleanOptionalAction, default=None,
        help="match time-2 band mean/std to time 1 first (default: config 'align', on)",
    )

    parser = argparse.ArgumentParser(prog="hacd", description="Hyperspectral anomalous change detection.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write a synthetic cube pair and mask")
    sub.add_parser("train", parents=[common, pair], help="train the siamese network")
    p = sub.add_parser("detect", parents=[common, pair], help="compute a change score map")
    p.add_argument("--method", required=True, choices=ALL_METHODS)
    p.add_argument("--checkpoint", help="trained model (mtcnet only)")
    p = sub.add_parser("evaluate", parents=[common], help="ROC curve and AUC of a score map")
    p.add_argument("--scores", required=True, help="score map CSV")
    p.add_argument("--mask", help="ground-truth mask CSV")
    p.add_argument("--method", help="name recorded in metrics.json")
    p = sub.add_parser("bench", parents=[common, pair], help="AUC table for every detector")
    p.add_argument("--mask", help="ground-truth mask CSV")
    p.add_argument("--checkpoint", help="trained model; adds the mtcnet row")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    stage = None
    try:
        cfg = parse_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        out = args.out or cfg.paths.get("out") or "."
        os.makedirs(out, exist_ok=True)
        stage = Staging(out)
        COMMANDS[args.command](cfg, args, stage)
        stage.commit()
    except (HacdError, OSError, ValueError) as e:
        if stage is not None:
            stage.discard()
        print(f"hacd {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
