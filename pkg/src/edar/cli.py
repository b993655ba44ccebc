"""Command line entry point: ``edar <subcommand> ...``.

Exit status: 0 on success, 2 for usage or configuration errors, 3 for
missing or malformed input data.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import apply_thread_limit

apply_thread_limit()

from . import energy as en  # noqa: E402
from .core import PipelineConfig  # noqa: E402
from .io import (  # noqa: E402
    DataError, ensure_dir, frame_name, load_frame_dir, load_segmentation_dir, read_groundtruth,
    read_roi_trace, save_segmentation, save_sequence, sequence_dirs, write_groundtruth, write_roi_trace,
)
from .nn.graph import flops, param_count  # noqa: E402
from .nn.weights import WeightFormatError, save_weights  # noqa: E402

log = logging.getLogger("edar")

EXIT_CONFIG = 2
EXIT_DATA = 3


class ConfigError(Exception):
    pass


def _dump(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def load_config(args) -> PipelineConfig:
    """Defaults, then the ``--config`` file, then explicit flags."""
    values = PipelineConfig().to_dict()
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                file_values = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON ({exc})") from exc
        if not isinstance(file_values, dict):
            raise ConfigError(f"{args.config}: expected a JSON object")
        values.update(file_values)
    for key in ("sigma", "gamma", "epsilon_div", "seg_variant"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if getattr(args, "seed", None) is not None:
        values["rng_seed"] = args.seed
    try:
        return PipelineConfig.from_dict(values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_dataset(paths):
    from .train import LabeledSequence

    seqs = []
    for root in paths:
        for d in sequence_dirs(root):
            frames = load_frame_dir(d / "frames")
            labels = load_segmentation_dir(d / "labels")
            if len(labels) != len(frames):
                raise DataError(f"{d}: {len(frames)} frames but {len(labels)} label maps")
            seqs.append(LabeledSequence(frames, labels))
    return seqs


# -- subcommands ---------------------------------------------------------------------

def cmd_synth(args):
    from .synth import EyeSceneParams, params_json, refine_groundtruth, render_sequence

    out = ensure_dir(args.out)
    overrides = {}
    if args.params:
        try:
            overrides = json.loads(Path(args.params).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read scene parameters {args.params}: {exc}") from exc
    if args.noise is not None:
        overrides["noise_sigma"] = args.noise
    for k in range(args.sequences):
        seed = args.seed + k
        try:
            if args.fixed:
                params = EyeSceneParams(width=args.width, height=args.height, seed=seed)
                for key, v in overrides.items():
                    setattr(params, key, tuple(v) if isinstance(v, list) else v)
            else:
                params = EyeSceneParams.random(seed, args.width, args.height, **{
                    key: tuple(v) if isinstance(v, list) else v for key, v in overrides.items()})
            rendered = render_sequence(params, args.frames)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid scene parameters: {exc}") from exc
        d = out if args.sequences == 1 else ensure_dir(out / f"seq{k:03d}")
        labels = [r[1] for r in rendered]
        if args.refine:
            labels = [refine_groundtruth(s) for s in labels]
        save_sequence(d, [r[0] for r in rendered], labels)
        write_groundtruth(d / "gt.csv", [(r[0].index, r[2], r[3]) for r in rendered])
        (d / "params.json").write_text(params_json(params) + "\n")
    log.info("wrote %d sequence(s) of %d frames to %s", args.sequences, args.frames, out)


def _curve_path(out: Path, stem: str) -> Path:
    return out / f"{stem}_loss.csv"


def cmd_train_seg(args):
    from .segnet import build_segnet
    from .train import train_segnet, write_loss_curve

    cfg = load_config(args)
    data = load_dataset(args.data)
    net = build_segnet(cfg.seg_variant).initialize(cfg.rng_seed)
    res = train_segnet(net, data, epochs=args.epochs, batch=args.batch, lr=args.lr, seed=cfg.rng_seed,
                       val_fraction=args.val_fraction, stride=args.stride)
    out = ensure_dir(args.out)
    save_weights(res.net, out / "segnet.edarw")
    write_loss_curve(_curve_path(out, "segnet"), res.curve)


def _roinet_for(data, seed):
    from .roinet import build_roinet

    h, w = data[0].frames[0].shape
    return build_roinet(input_size=(-(-h // 2), -(-w // 2))).initialize(seed)


def cmd_train_roi(args):
    from .train import train_roinet, write_loss_curve

    cfg = load_config(args)
    data = load_dataset(args.data)
    net = _roinet_for(data, cfg.rng_seed)
    res = train_roinet(net, data, epochs=args.epochs, batch=args.batch, lr=args.lr, seed=cfg.rng_seed,
                       val_fraction=args.val_fraction, sigma=cfg.sigma, epsilon_div=cfg.epsilon_div,
                       stride=args.stride)
    out = ensure_dir(args.out)
    save_weights(res.net, out / "roinet.edarw")
    write_loss_curve(_curve_path(out, "roinet"), res.curve)


def cmd_finetune(args):
    from .roinet import load_roinet
    from .segnet import load_segnet
    from .train import finetune_segnet_on_rois, write_loss_curve

    cfg = load_config(args)
    data = load_dataset(args.data)
    seg = load_segnet(args.weights_seg)
    roi = load_roinet(args.weights_roi)
    res = finetune_segnet_on_rois(seg, roi, data, epochs=args.epochs, lr=args.lr, batch=args.batch,
                                  seed=cfg.rng_seed, val_fraction=args.val_fraction, sigma=cfg.sigma,
                                  epsilon_div=cfg.epsilon_div, stride=args.stride)
    out = ensure_dir(args.out)
    save_weights(res.net, out / "segnet_finetuned.edarw")
    write_loss_curve(_curve_path(out, "finetune"), res.curve)


def _load_nets(args):
    from .roinet import load_roinet
    from .segnet import load_segnet

    seg = load_segnet(args.weights_seg)
    roi = None if args.weights_roi is None else load_roinet(args.weights_roi)
    return roi, seg


def _true_centers(args):
    if not getattr(args, "gt", None):
        return None
    return [c for _, _, c in read_groundtruth(args.gt)]


def cmd_run(args):
    from .pipeline import run_sequence

    cfg = load_config(args)
    frames = load_frame_dir(args.frames)
    roi, seg = _load_nets(args)
    labels = load_segmentation_dir(args.labels) if args.labels else None
    if labels is not None and len(labels) != len(frames):
        raise DataError(f"{len(frames)} frames but {len(labels)} label maps")
    centers = _true_centers(args)
    if centers is not None and len(centers) != len(frames):
        raise DataError(f"{len(frames)} frames but {len(centers)} ground-truth rows")
    outputs, report = run_sequence(frames, cfg, roi, seg, labels, centers)
    out = ensure_dir(args.out)
    seg_dir = ensure_dir(out / "seg")
    for f, o in zip(frames, outputs):
        save_segmentation(seg_dir / frame_name(f.index), o.seg)
    write_roi_trace(out / "roi_trace.csv", [(f.index, o.roi, o.mode.value) for f, o in zip(frames, outputs)])
    _dump(report.to_dict(), out / "report.json")
    _dump({"seconds_per_stage": report.timings, "frames": report.frames}, out / "timing.json")


def cmd_eval(args):
    from .pupil import evaluate

    preds = load_segmentation_dir(args.pred)
    truths = load_segmentation_dir(args.labels)
    modes = None
    if args.trace:
        modes = [m for _, _, m in read_roi_trace(args.trace)]
        if len(modes) != len(preds):
            raise DataError(f"trace has {len(modes)} rows for {len(preds)} frames")
    try:
        result = evaluate(preds, truths, _true_centers(args), modes)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    _dump(result, args.out)


def cmd_flops(args):
    from .roinet import build_roinet
    from .segnet import build_segnet

    rows = []
    h, w = args.height, args.width
    for variant in (("S", "L") if args.variant == "all" else (args.variant,)):
        g = build_segnet(variant)
        rows.append({"network": g.name, "input": [w, h], "params": param_count(g),
                     "flops": flops(g, {"image": (1, h, w)})})
    rh, rw = -(-h // 2), -(-w // 2)
    g = build_roinet(input_size=(rh, rw))
    rows.append({"network": g.name, "input": [rw, rh], "params": param_count(g),
                 "flops": flops(g, {"maps": (2, rh, rw), "prev_roi": (4,)})})
    if args.json:
        _dump(rows)
        return
    print(f"{'network':<14}{'input':>12}{'params':>12}{'GFLOPs':>10}")
    for r in rows:
        print(f"{r['network']:<14}{'%dx%d' % tuple(r['input']):>12}{r['params']:>12,}{r['flops'] / 1e9:>10.3f}")


def cmd_energy(args):
    kw = dict(sensor_node=args.sensor_node, processor_node=args.processor_node,
              roi_fraction=args.roi_fraction, extrapolated_fraction=args.extrapolated_fraction,
              tx_ratio=args.tx_ratio)
    try:
        scenarios = {m: en.mode_scenario(m, **kw) for m in "abc"}
        if args.mode == "search":
            best = en.optimal_mapping(**kw)
            scenarios["optimal"] = best
        out = {}
        for name, s in scenarios.items():
            if args.mode not in ("search", name) and name != "a":
                continue
            out[name] = {"placement": s.placement, "mode": en.mode_of(s.placement),
                         **en.scenario_energy(s).to_dict()}
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    base = out["a"]["total"]
    for v in out.values():
        v["relative_to_a"] = v["total"] / base
    _dump({"scenario": kw, "results": out})


def cmd_bench(args):
    from .pipeline import run_sequence

    cfg = load_config(args)
    frames = load_frame_dir(args.frames)
    roi, seg = _load_nets(args)
    totals: dict[str, float] = {}
    wall = 0.0
    for _ in range(args.repeat):
        t = time.perf_counter()
        _, report = run_sequence(frames, cfg, roi, seg)
        wall += time.perf_counter() - t
        for k, v in report.timings.items():
            totals[k] = totals.get(k, 0.0) + v
    stages = {k: v for k, v in totals.items() if k != "total"}
    busy = sum(stages.values())
    _dump({
        "frames": len(frames) * args.repeat,
        "modes": report.modes,
        "seconds_per_frame": wall / (len(frames) * args.repeat),
        "stage_seconds": stages,
        "stage_share": {k: v / busy for k, v in stages.items()} if busy else {},
    })


# -- argument parsing ------------------------------------------------------------------

def _add_config_flags(p):
    p.add_argument("--config", help="JSON pipeline config; flags override its values")
    p.add_argument("--sigma", type=float, help="event threshold (relative change)")
    p.add_argument("--gamma", type=float, help="event density threshold for extrapolation")
    p.add_argument("--epsilon-div", dest="epsilon_div", type=float, help="divisor floor for event maps")
    p.add_argument("--variant", dest="seg_variant", choices=["S", "L"], help="segmentation network size")
    p.add_argument("--seed", type=int, help="random seed")


def _add_training_flags(p, epochs, batch, lr):
    p.add_argument("--data", nargs="+", required=True, help="sequence directories or dataset roots")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--batch", type=int, default=batch)
    p.add_argument("--lr", type=float, default=lr)
    p.add_argument("--stride", type=int, default=1, help="use every n-th frame")
    p.add_argument("--val-fraction", type=float, default=0.2)
    _add_config_flags(p)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="edar", description="Event-driven ROI eye segmentation toolkit")
    ap.add_argument("--log-level", default="WARNING")
    ap.add_argument("--print-config", action="store_true", help="print the effective pipeline config and exit")
    ap.add_argument("--config", dest="global_config", help=argparse.SUPPRESS)
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="render synthetic eye sequences")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=64)
    p.add_argument("--sequences", type=int, default=1)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, help="pixel noise sigma")
    p.add_argument("--params", help="JSON file of scene parameter overrides")
    p.add_argument("--fixed", action="store_true", help="use the default geometry instead of a random one")
    p.add_argument("--refine", action="store_true", help="clean label maps with refine_groundtruth")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-seg", help="train the segmentation network")
    _add_training_flags(p, 250, 4, 1e-3)
    p.set_defaults(func=cmd_train_seg)

    p = sub.add_parser("train-roi", help="train the ROI prediction network")
    _add_training_flags(p, 100, 8, 1e-3)
    p.set_defaults(func=cmd_train_roi)

    p = sub.add_parser("finetune", help="fine-tune the segmentation network on predicted ROIs")
    _add_training_flags(p, 100, 4, 1e-4)
    p.add_argument("--weights-seg", required=True)
    p.add_argument("--weights-roi", required=True)
    p.set_defaults(func=cmd_finetune)

    for name, func, text in (("run", cmd_run, "run the pipeline over a frame directory"),
                             ("bench", cmd_bench, "time each pipeline stage")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--frames", required=True)
        p.add_argument("--weights-seg", required=True)
        p.add_argument("--weights-roi", help="omit to segment every frame at full resolution")
        _add_config_flags(p)
        if name == "run":
            p.add_argument("--out", required=True)
            p.add_argument("--labels", help="ground-truth label directory for metrics")
            p.add_argument("--gt", help="gt.csv with pupil centers")
        else:
            p.add_argument("--repeat", type=int, default=1)
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="score predicted maps against labels")
    p.add_argument("--pred", required=True, help="directory of predicted segmentation PGMs")
    p.add_argument("--labels", required=True)
    p.add_argument("--gt", help="gt.csv with pupil centers")
    p.add_argument("--trace", help="roi_trace.csv, adds the mode distribution")
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("flops", help="parameter and FLOP counts")
    p.add_argument("--variant", choices=["S", "L", "all"], default="all")
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=400)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("energy", help="sensor/processor energy model")
    p.add_argument("--sensor-node", type=float, default=7.0)
    p.add_argument("--processor-node", type=float, default=7.0)
    p.add_argument("--roi-fraction", type=float, default=1 / 3)
    p.add_argument("--extrapolated-fraction", type=float, default=0.5)
    p.add_argument("--tx-ratio", type=float, default=800.0)
    p.add_argument("--mode", choices=["a", "b", "c", "search"], default="search")
    p.set_defaults(func=cmd_energy)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.print_config:
            if args.global_config and not getattr(args, "config", None):
                args.config = args.global_config
            _dump(load_config(args).to_dict())
            return 0
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_CONFIG
        args.func(args)
    except ConfigError as exc:
        print(f"edar: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, WeightFormatError, OSError, ValueError) as exc:
        # config problems were already turned into ConfigError; what is left is bad input
        print(f"edar: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
