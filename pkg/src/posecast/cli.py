"""Command line: gen-data, train, eval, ablate, smooth, gradcheck, export-plotdata."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, fields
from pathlib import Path

from .config import ConfigError, RunConfig, load_config, save_config, write_manifest

log = logging.getLogger("posecast")


def _synth_config(path):
    from .synth import SynthConfig
    if not path:
        return SynthConfig()
    doc = json.loads(Path(path).read_text())
    bad = sorted(set(doc) - {f.name for f in fields(SynthConfig)})
    if bad:
        raise ConfigError(f"unknown synth config keys {bad}")
    return SynthConfig(**doc)


def _run_config(path, seed=None, **over):
    cfg = load_config(path) if path else RunConfig()
    if seed is not None:
        cfg.seed = seed
    for k, v in over.items():
        if v is not None:
            setattr(cfg, k, v)
    return cfg.validate()


def cmd_gen_data(args):
    from .synth import generate_dataset, save_dataset
    cfg = _synth_config(args.config)
    ds = generate_dataset(cfg, args.seed)
    path = save_dataset(ds, args.out)
    write_manifest(Path(args.out).parent, "gen-data", None, args.seed, {"synth_config": asdict(cfg),
                                                                       "dataset": str(path)})
    print(f"wrote {path}")


def cmd_train(args):
    from .synth import load_dataset
    from .train import train
    cfg = _run_config(args.config, args.seed, data=args.data, out=args.out)
    if args.epochs is not None:
        cfg.epochs = args.epochs
    ds = load_dataset(args.data, expect_feature_dim=cfg.temporal.feature_dim)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.json")
    res = train(cfg, ds, out_dir=out, progress=lambda r: print(json.dumps(r), flush=True))
    (out / "train_log.json").write_text(json.dumps(res.log, indent=1) + "\n")
    write_manifest(out, "train", cfg, cfg.seed, {"best_epoch": res.best_epoch,
                                                  "best_val_pa_mpjpe_mm": res.best_val,
                                                  "lr_drops": res.lr_drops})
    print(f"best epoch {res.best_epoch}, val PA-MPJPE {res.best_val:.3f} mm -> {res.checkpoint}")


def cmd_eval(args):
    from .evaluate import Predictions, evaluate, evaluate_predictions
    from .model import load_checkpoint
    from .synth import load_dataset
    if bool(args.checkpoint) == bool(args.pred):
        raise SystemExit("eval: give exactly one of --checkpoint or --pred")
    stem = Path(args.report)
    cfg = None
    if args.checkpoint:
        model, meta, _ = load_checkpoint(args.checkpoint)
        cfg = model.config
        ds = load_dataset(args.data, expect_feature_dim=cfg.temporal.feature_dim)
        report, preds = evaluate(model, ds, args.split)
        preds.save(stem.with_name(stem.name + "_predictions.npz"))
        if model.regressor.calls["past"] or model.regressor.calls["future"]:
            raise RuntimeError("evaluation reached the past/future regressor branches")
    else:
        ds = load_dataset(args.data)
        report = evaluate_predictions(Predictions.load(args.pred), ds, args.split)
    txt, csv = report.write(stem)
    write_manifest(stem.parent, "eval", cfg, cfg.seed if cfg else None,
                   {"checkpoint": args.checkpoint, "predictions": args.pred, "report": str(txt)})
    print(report.to_text(), end="")


def cmd_ablate(args):
    from .ablation import ablate, variant_set
    cfg = _run_config(args.config, data=args.data, out=args.out)
    if args.epochs is not None:
        cfg.epochs = args.epochs
    seeds = [int(s) for s in args.seeds.split(",")]
    variants = variant_set(tuple(args.variants.split(",")))
    t0 = time.perf_counter()

    def show(rec):
        what = rec.error or (f"PA-MPJPE {rec.metrics['pa_mpjpe_mm']:.3f}  "
                             f"accel {rec.metrics['accel_err_mm_s2']:.1f}")
        print(f"[{time.perf_counter() - t0:7.1f}s] {rec.variant:<24} seed {rec.seed}: {what}", flush=True)
    res = ablate(cfg, args.data, seeds, variants, out_dir=args.out, workers=args.workers, progress=show)
    print(res.table(), end="")


def cmd_smooth(args):
    from .evaluate import Predictions
    from .smoothing import smooth_predictions
    preds = Predictions.load(args.pred)
    out = smooth_predictions(preds, args.window).save(args.out)
    write_manifest(Path(args.out).parent, "smooth", None, None,
                   {"input": args.pred, "window": args.window, "output": str(out)})
    print(f"wrote {out}")


def cmd_gradcheck(args):
    from .gradcheck import full_suite
    t0 = time.perf_counter()
    results = full_suite(args.instances, args.seed)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print(f"{'PASS' if ok else 'FAIL'}: {len(results)} checks in {time.perf_counter() - t0:.1f}s")
    return 0 if ok else 1


def cmd_export_plotdata(args):
    import numpy as np
    from .evaluate import Predictions, accel_traces, export_plotdata, spike_count
    from .synth import load_dataset
    ds = load_dataset(args.data)
    traces = {}
    for item in args.pred:
        name, _, path = item.partition("=")
        if not path:
            name, path = Path(item).stem, item
        traces[name] = accel_traces(Predictions.load(path), ds, args.split)
    out = export_plotdata(traces, args.out)
    for name, tr in traces.items():
        allv = np.concatenate([v for _, v in tr.values()])
        print(f"{name}: {allv.size} frames, {spike_count(allv)} spikes above 3x median")
    write_manifest(Path(args.out).parent, "export-plotdata", None, None, {"inputs": args.pred, "output": str(out)})
    print(f"wrote {out}")


def build_parser():
    p = argparse.ArgumentParser(prog="posecast")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate the synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--config", help="JSON with SynthConfig fields")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train")
    t.add_argument("--config")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval")
    e.add_argument("--checkpoint")
    e.add_argument("--pred", help="evaluate a predictions file instead of a checkpoint")
    e.add_argument("--data", required=True)
    e.add_argument("--report", required=True, help="output stem; writes .txt and .csv")
    e.add_argument("--split", default="eval")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate")
    a.add_argument("--config")
    a.add_argument("--data", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--seeds", default="0,1,2")
    a.add_argument("--variants", default="architecture,current",
                   help="comma list of: architecture, current, supervision")
    a.add_argument("--workers", type=int, default=1)
    a.add_argument("--epochs", type=int)
    a.set_defaults(func=cmd_ablate)

    s = sub.add_parser("smooth")
    s.add_argument("--pred", required=True)
    s.add_argument("--window", type=int, default=5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_smooth)

    c = sub.add_parser("gradcheck")
    c.add_argument("--instances", type=int, default=20)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_gradcheck)

    x = sub.add_parser("export-plotdata")
    x.add_argument("--data", required=True)
    x.add_argument("--pred", nargs="+", required=True, help="NAME=predictions.npz ...")
    x.add_argument("--out", required=True)
    x.add_argument("--split", default="eval")
    x.set_defaults(func=cmd_export_plotdata)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args) or 0
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
