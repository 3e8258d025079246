"""``cvsa`` command-line entry point.

Errors are reported on stderr as ``cvsa: error[<kind>]: <message>`` and
exit with a code per kind (see ``EXIT_CODES``).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import typing
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .augment.config import AugConfig
from .augment.swap import make_rrc_pair, make_view_pair
from .augment.synth import generate_synthetic_corpus, write_corpus
from .boxsearch import BoxConfig, saliency_bbox
from .image import read_image, write_gray8, write_image
from .network import ModelConfig
from .pipeline.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .pipeline.config import TrainConfig
from .pipeline.corpus import BOX_SOURCES, load_corpus
from .pipeline.evaluate import ProbeConfig, linear_probe, localization_eval
from .pipeline.train import initial_model, pretrain_stage1, pretrain_stage2
from .rng import Rng, mix_seed
from .saliency import boxes_as_saliency, load_saliency_map, read_annotations, save_saliency_map, spectral_residual

EXIT_CODES = {"selfcheck": 1, "config": 2, "usage": 2, "io": 3, "checkpoint": 4, "runtime": 5}

# RunConfig sections and the dataclass each mirrors
SECTIONS = {"aug": AugConfig, "train": TrainConfig, "model": ModelConfig}
PATH_KEYS = ("corpus", "out", "init", "resume", "saliency_dir")
# ModelConfig.align_stage is taken from the train section
SKIP = {("model", "align_stage")}
FLAG_ALIASES = {("train", "total_steps"): ["--steps"], ("aug", "lam"): ["--lambda"]}


class CliError(Exception):
    def __init__(self, kind: str, messages):
        self.kind = kind
        self.messages = [messages] if isinstance(messages, str) else list(messages)
        super().__init__("; ".join(self.messages))


# ---------------------------------------------------------------------------
# RunConfig


def _field_types(cls) -> dict[str, type]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in fields(cls)}


def _is_tuple(tp) -> bool:
    return typing.get_origin(tp) is tuple or tp is tuple


def _parse_value(tp, raw: str):
    if _is_tuple(tp):
        args = typing.get_args(tp)
        conv = int if args and args[0] is int else float
        return tuple(conv(v) for v in raw.split(","))
    if typing.get_origin(tp) is typing.Literal:
        return raw
    return tp(raw)


@dataclass
class RunConfig:
    aug: AugConfig
    train: TrainConfig
    model: ModelConfig
    paths: dict

    def to_dict(self) -> dict:
        model = self.model.to_dict()
        model.pop("align_stage", None)
        return {"aug": self.aug.to_dict(), "train": self.train.to_dict(), "model": model, "paths": dict(self.paths)}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _unvalidated(cls, values: dict):
    obj = cls.__new__(cls)
    for f in fields(cls):
        setattr(obj, f.name, values.get(f.name, f.default))
    return obj


def build_run_config(file_data: dict | None, overrides: dict[tuple[str, str], object]) -> RunConfig:
    """Merge config-file values with flag overrides; every problem is reported at once."""
    data = file_data or {}
    problems = []
    if not isinstance(data, dict):
        raise CliError("config", "config file must hold a JSON object")
    for key in sorted(set(data) - set(SECTIONS) - {"paths"}):
        problems.append(f"unknown config section {key!r}")
    merged: dict[str, dict] = {}
    for sec, cls in SECTIONS.items():
        raw = data.get(sec, {})
        if not isinstance(raw, dict):
            problems.append(f"section {sec!r} must be an object")
            raw = {}
        names = {f.name for f in fields(cls)} - {n for s, n in SKIP if s == sec}
        for key in sorted(set(raw) - names):
            problems.append(f"unknown key {sec}.{key}")
        merged[sec] = {k: v for k, v in raw.items() if k in names}
    paths = data.get("paths", {})
    if not isinstance(paths, dict):
        problems.append("section 'paths' must be an object")
        paths = {}
    for key in sorted(set(paths) - set(PATH_KEYS)):
        problems.append(f"unknown key paths.{key}")
    paths = {k: v for k, v in paths.items() if k in PATH_KEYS}
    for (sec, name), value in overrides.items():
        if sec == "paths":
            paths[name] = value
        else:
            merged[sec][name] = value

    objs = {}
    for sec, cls in SECTIONS.items():
        values = dict(merged[sec])
        for k, v in values.items():
            if isinstance(v, list):
                values[k] = tuple(v)
        if sec == "model":
            values["align_stage"] = merged["train"].get("align_stage", TrainConfig.align_stage)
        obj = _unvalidated(cls, values)
        try:
            sub = obj.problems() if hasattr(obj, "problems") else []
        except TypeError as exc:
            sub = [str(exc)]
        if not sub:
            try:
                obj = cls(**values)
            except (TypeError, ValueError) as exc:
                sub = [str(exc)]
        problems.extend(f"{sec}: {p}" for p in sub)
        objs[sec] = obj
    if problems:
        raise CliError("config", problems)
    return RunConfig(objs["aug"], objs["train"], objs["model"], paths)


def add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON RunConfig file; flags override its values")
    for sec, cls in SECTIONS.items():
        g = p.add_argument_group(f"{sec} settings")
        for name, tp in _field_types(cls).items():
            if (sec, name) in SKIP:
                continue
            flags = [f"--{name.replace('_', '-')}"] + FLAG_ALIASES.get((sec, name), [])
            g.add_argument(*flags, dest=f"cfg__{sec}__{name}", default=None, metavar=name.upper(),
                           help=f"{sec}.{name}" + (" (comma-separated)" if _is_tuple(tp) else ""))


def collect_overrides(args) -> dict[tuple[str, str], object]:
    out = {}
    problems = []
    for key, raw in vars(args).items():
        if not key.startswith("cfg__") or raw is None:
            continue
        _, sec, name = key.split("__")
        tp = _field_types(SECTIONS[sec])[name]
        try:
            out[(sec, name)] = _parse_value(tp, raw)
        except ValueError:
            problems.append(f"--{name.replace('_', '-')}: cannot parse {raw!r}")
    if problems:
        raise CliError("config", problems)
    for name in PATH_KEYS:
        val = getattr(args, name, None)
        if val is not None:
            out[("paths", name)] = str(val)
    return out


def load_run_config(args) -> RunConfig:
    data = None
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise CliError("io", f"cannot read config {args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise CliError("config", f"{args.config} is not valid JSON: {exc}") from None
    return build_run_config(data, collect_overrides(args))


def write_resolved(out_dir, payload: dict) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.json").write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


# ---------------------------------------------------------------------------
# subcommands


def _saliency_map(args, img):
    H, W = img.shape[:2]
    if args.source == "spectral":
        return spectral_residual(img)
    if args.source == "file":
        if not args.map:
            raise CliError("usage", "--source file needs --map")
        return load_saliency_map(args.map, (W, H))
    if not args.annotations:
        raise CliError("usage", "--source gt needs --annotations")
    return boxes_as_saliency(_annotation_for(args.annotations, args.input), W, H)


def cmd_saliency(args) -> int:
    img = read_image(args.input)
    s = _saliency_map(args, img)
    box = saliency_bbox(s, BoxConfig(args.box_mode, args.kappa, args.min_area_frac))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_saliency_map(args.out, s)
    result = {"image": str(args.input), "source": args.source, "box": box.as_list(), "constant": s.constant}
    if args.box_out:
        Path(args.box_out).write_text(json.dumps(result, sort_keys=True) + "\n")
    write_resolved(Path(args.out).parent, {"command": "saliency", **_plain(args)})
    _emit(result)
    return 0


def cmd_boxfind(args) -> int:
    if args.mode == "gt":
        if not (args.input and args.annotations):
            raise CliError("usage", "--mode gt needs --in and --annotations")
        img = read_image(args.input)
        box = _annotation_for(args.annotations, args.input)
        box = saliency_bbox(boxes_as_saliency(box, img.shape[1], img.shape[0]), BoxConfig("gt"), box)
        _emit({"box": box.as_list(), "mode": "gt", "constant": False})
        return 0
    if bool(args.map) == bool(args.input):
        raise CliError("usage", "give exactly one of --map or --in")
    s = load_saliency_map(args.map) if args.map else spectral_residual(read_image(args.input))
    box = saliency_bbox(s, BoxConfig(args.mode, args.theta_kappa, args.min_area_frac))
    _emit({"box": box.as_list(), "mode": args.mode, "constant": s.constant})
    return 0


def _annotation_for(ann_path, image_path):
    anns = read_annotations(ann_path)
    key = Path(image_path).name
    box = anns.get(key, anns.get(str(image_path)))
    if box is None:
        raise CliError("usage", f"no annotation for {key!r} in {ann_path}")
    return box


def _box_source(requested: str, corpus_dir) -> str:
    if requested != "auto":
        return requested
    return "gt" if (Path(corpus_dir) / "annotations.jsonl").exists() else "spectral"


def cmd_augment(args) -> int:
    rc = load_run_config(args)
    src_dir, out = rc.paths.get("corpus"), rc.paths.get("out")
    if not src_dir or not out:
        raise CliError("usage", "augment needs --input-dir and --out-dir")
    sal_dir = rc.paths.get("saliency_dir")
    src = load_corpus(src_dir, _box_source(args.box_source, src_dir), sal_dir)
    bg_dir = args.bg_dir or src_dir
    pool = src if args.bg_dir is None else load_corpus(bg_dir, _box_source(args.box_source, bg_dir), sal_dir)
    aug = rc.aug if args.mode is None else replace(rc.aug, fusion=args.mode)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i, name in enumerate(src.names):
        rng = Rng(mix_seed(rc.train.seed, i))
        stem = Path(name).stem
        img = src.images[i]
        if args.rrc:
            q, k = make_rrc_pair(img, aug, rng)
            files = {"q": q, "k": k}
        else:
            vp = make_view_pair(img, src.sal_boxes[i], pool, aug, rng)
            files = {"q": vp.img_q, "k": vp.img_k, "mq": vp.mask_q, "mk": vp.mask_k}
        for tag, arr in files.items():
            path = out / f"{stem}_{tag}.png"
            if tag.startswith("m"):
                write_gray8(path, arr.astype(np.float64))
            else:
                write_image(path, arr)
            written.append(path.name)
    write_resolved(out, {"command": "augment", "bg_dir": str(bg_dir), "rrc": args.rrc,
                         "box_source": args.box_source, **rc.to_dict(), "aug": aug.to_dict()})
    _emit({"out": str(out), "images": len(src), "files": len(written)})
    return 0


def cmd_gen_synth(args) -> int:
    syn = generate_synthetic_corpus(args.n, args.classes, args.size, Rng(mix_seed(args.seed, 7)))
    write_corpus(syn, args.out)
    write_resolved(args.out, {"command": "gen-synth", **_plain(args)})
    _emit({"out": str(args.out), "images": len(syn), "classes": args.classes, "size": args.size})
    return 0


def cmd_pretrain(args) -> int:
    rc = load_run_config(args)
    corpus_dir, out = rc.paths.get("corpus"), rc.paths.get("out")
    missing = [f"--{n}" for n, v in (("corpus", corpus_dir), ("out", out)) if not v]
    if missing:
        raise CliError("usage", f"pretrain needs {' and '.join(missing)}")
    cfg, aug = rc.train, rc.aug
    init_path, resume_path = rc.paths.get("init"), rc.paths.get("resume")
    if cfg.stage == 1 and init_path:
        raise CliError("usage", "--init applies to stage 2 only")
    if cfg.stage == 2 and not init_path and not resume_path and cfg.freeze_k > 0 and not args.allow_scratch:
        raise CliError("usage", "stage 2 with frozen stages needs --init (or --allow-scratch)")
    box_source = _box_source(args.box_source, corpus_dir) if cfg.stage == 2 else None
    corpus = load_corpus(corpus_dir, box_source, rc.paths.get("saliency_dir"))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    resume = None
    if resume_path:
        resume = load_checkpoint(resume_path)
        if resume.train != cfg.to_dict() or resume.aug != aug.to_dict():
            raise CliError("config", "resume checkpoint was written with a different configuration")
    metrics_path = out / "metrics.jsonl"
    append = resume is not None and metrics_path.exists()
    fh = open(metrics_path, "a" if append else "w")
    try:
        on_metrics = lambda rec: fh.write(json.dumps(rec) + "\n")  # noqa: E731
        if cfg.stage == 1:
            res = pretrain_stage1(corpus, cfg, aug, rc.model, resume, args.stop_after, on_metrics)
        else:
            init = load_checkpoint(init_path) if init_path and resume is None else None
            res = pretrain_stage2(corpus, init, cfg, aug, rc.model, resume, args.stop_after, on_metrics,
                                  allow_scratch=args.allow_scratch)
    finally:
        fh.close()
    save_checkpoint(res.checkpoint, out)
    write_resolved(out, {"command": "pretrain", "box_source": args.box_source, "stop_after": args.stop_after,
                         "allow_scratch": args.allow_scratch, **rc.to_dict()})
    last = res.metrics[-1] if res.metrics else {}
    _emit({"checkpoint": str(out), "step": res.checkpoint.step, "last": last})
    return 0


def cmd_eval(args) -> int:
    rc = load_run_config(args)
    corpus_dir = rc.paths.get("corpus")
    if not corpus_dir:
        raise CliError("usage", "eval needs --corpus")
    if bool(args.ckpt) == bool(args.random_init):
        raise CliError("usage", "give exactly one of --ckpt or --random-init")
    if args.ckpt:
        model = load_checkpoint(args.ckpt).model
    else:
        model = initial_model(rc.train, rc.model)
    corpus = load_corpus(corpus_dir, None)
    if args.task == "linear":
        if not corpus.has_labels():
            raise CliError("usage", "linear probe needs labels.jsonl with a label for every image")
        if len(set(corpus.labels)) < 2:
            raise CliError("usage", "linear probe needs at least two classes")
        hook = None
        if args.oracle == "labels":
            hook = lambda c: np.eye(max(c.labels) + 1)[c.labels]  # noqa: E731
        res = linear_probe(model, corpus, ProbeConfig(seed=rc.train.seed), feature_fn=hook)
        payload = {"metric": "linear_top1", "value": res.accuracy, "trials": res.trials}
    else:
        if not corpus.has_boxes():
            raise CliError("usage", "localization needs annotations.jsonl with a box for every image")
        hook = None
        if args.oracle == "gt-maps":
            hook = lambda c: [boxes_as_saliency(b, im.shape[1], im.shape[0]).values for b, im in zip(c.boxes, c.images)]  # noqa: E731
        res = localization_eval(model, corpus, args.iou, aug=rc.aug, seed=rc.train.seed, score_map_fn=hook)
        payload = {"metric": "localization", "value": res.score, "best_tau": res.best_tau}
    payload["config_digest"] = rc.digest()
    payload["checkpoint"] = str(args.ckpt) if args.ckpt else "random-init"
    _emit(payload)
    return 0


def cmd_selfcheck(args) -> int:
    from .selfcheck import run_selfcheck

    results = run_selfcheck(args.seed)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise CliError("selfcheck", f"failing checks: {', '.join(failed)}")
    return 0


def _plain(args) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cvsa", description="Cross-view saliency alignment toolkit")
    p.add_argument("--version", action="version", version=f"cvsa {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("saliency", help="compute a saliency map and its box")
    s.add_argument("--in", dest="input", required=True, type=Path)
    s.add_argument("--source", choices=("spectral", "file", "gt"), default="spectral")
    s.add_argument("--map", type=Path, help="saliency map file for --source file")
    s.add_argument("--annotations", type=Path, help="annotations.jsonl for --source gt")
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--box-out", type=Path)
    s.add_argument("--box-mode", choices=("excess", "avg-brute"), default="excess")
    s.add_argument("--kappa", type=float, default=0.0)
    s.add_argument("--min-area-frac", type=float, default=0.05)
    s.set_defaults(func=cmd_saliency)

    s = sub.add_parser("boxfind", help="saliency box of a map file or image")
    s.add_argument("--map", type=Path)
    s.add_argument("--in", dest="input", type=Path)
    s.add_argument("--annotations", type=Path, help="annotations.jsonl for --mode gt")
    s.add_argument("--mode", choices=("excess", "avg-brute", "gt"), default="excess")
    s.add_argument("--theta-kappa", "--kappa", dest="theta_kappa", type=float, default=0.0,
                   help="excess threshold is mean + kappa * std")
    s.add_argument("--min-area-frac", type=float, default=0.05)
    s.set_defaults(func=cmd_boxfind)

    s = sub.add_parser("augment", help="write a SaliencySwap view pair for every image in a directory")
    s.add_argument("--input-dir", "--corpus", dest="corpus", type=Path)
    s.add_argument("--bg-dir", type=Path, help="background pool (default: the input directory)")
    s.add_argument("--out-dir", "--out", dest="out", type=Path)
    s.add_argument("--saliency-dir", dest="saliency_dir", type=Path)
    s.add_argument("--mode", choices=("same", "cross"), help="fusion mode (overrides --fusion)")
    s.add_argument("--rrc", action="store_true", help="RandomResizedCrop baseline views instead")
    s.add_argument("--box-source", choices=("auto",) + BOX_SOURCES, default="auto")
    add_config_flags(s)
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("gen-synth", help="generate the synthetic corpus")
    s.add_argument("--out-dir", "--out", dest="out", required=True, type=Path)
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--classes", type=int, default=4)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gen_synth)

    s = sub.add_parser("pretrain", help="stage 1 or stage 2 pretraining")
    s.add_argument("--corpus", type=Path)
    s.add_argument("--out", type=Path)
    s.add_argument("--init", type=Path, help="stage-1 checkpoint directory")
    s.add_argument("--resume", type=Path, help="checkpoint of an interrupted run to continue")
    s.add_argument("--saliency-dir", dest="saliency_dir", type=Path)
    s.add_argument("--stop-after", type=int, help="stop (and checkpoint) after this many steps")
    s.add_argument("--allow-scratch", action="store_true")
    s.add_argument("--box-source", choices=("auto",) + BOX_SOURCES, default="auto")
    add_config_flags(s)
    s.set_defaults(func=cmd_pretrain)

    s = sub.add_parser("eval", help="linear probe or localization score")
    s.add_argument("--task", choices=("linear", "localize"), required=True)
    s.add_argument("--ckpt", type=Path)
    s.add_argument("--random-init", action="store_true", help="evaluate the seed's random initialization")
    s.add_argument("--corpus", type=Path)
    s.add_argument("--iou", type=float, default=0.5)
    s.add_argument("--oracle", choices=("none", "labels", "gt-maps"), default="none",
                   help="replace features or score maps with ground truth (sanity hook)")
    add_config_flags(s)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("selfcheck", help="gradient, box-search and augmentation checks")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_selfcheck)
    return p


def _report(kind: str, messages) -> int:
    for m in messages:
        print(f"cvsa: error[{kind}]: {m}", file=sys.stderr)
    return EXIT_CODES[kind]


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        return _report(exc.kind, exc.messages)
    except CheckpointError as exc:
        return _report("checkpoint", [str(exc)])
    except OSError as exc:
        name = getattr(exc, "filename", None)
        return _report("io", [f"{name}: {exc.strerror}" if name and exc.strerror else str(exc)])
    except ValueError as exc:
        return _report("usage", [str(exc)])
    except Exception as exc:  # pragma: no cover - last resort
        return _report("runtime", [f"{type(exc).__name__}: {exc}"])


if __name__ == "__main__":
    sys.exit(main())
