"""Generate the default dataset, train every ablation variant for 3 seeds, print the table.

    python scripts/run_ablation.py --out runs/ablation [--workers 4] [--epochs 10]

Afterwards the (+res -PF) predictions are smoothed with W=5 and re-scored.
"""
import argparse
import time
from pathlib import Path

from posecast.ablation import ablate, variant_set
from posecast.config import RunConfig
from posecast.evaluate import Predictions, evaluate_predictions
from posecast.smoothing import smooth_predictions
from posecast.synth import SynthConfig, generate_dataset, save_dataset


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/ablation")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--epochs", type=int)
    ap.add_argument("--supervision", action="store_true", help="also run the supervision-target variants")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data_path = out / "dataset.bin"
    ds = generate_dataset(SynthConfig(), 0)
    save_dataset(ds, data_path)
    cfg = RunConfig()
    if args.epochs:
        cfg.epochs = args.epochs
    names = ("architecture", "current") + (("supervision",) if args.supervision else ())
    t0 = time.perf_counter()

    def show(r):
        m = r.error or f"PA {r.metrics['pa_mpjpe_mm']:.2f} mm  accel {r.metrics['accel_err_mm_s2']:.0f} mm/s^2"
        print(f"[{time.perf_counter() - t0:6.0f}s] {r.variant:<22} seed {r.seed}  {m}", flush=True)
    seeds = [int(s) for s in args.seeds.split(",")]
    source = data_path if args.workers > 1 else ds
    res = ablate(cfg, source, seeds, variant_set(names), out_dir=out, workers=args.workers, progress=show)
    print(res.table())

    for r in res.runs:
        if r.variant == "+res -PF" and r.predictions:
            preds = Predictions.load(r.predictions)
            a = evaluate_predictions(preds, ds)
            b = evaluate_predictions(smooth_predictions(preds, 5), ds)
            print(f"smooth W=5 seed {r.seed}: accel {a.accel_err_mm_s2:.0f} -> {b.accel_err_mm_s2:.0f} mm/s^2, "
                  f"PA-MPJPE {a.pa_mpjpe_mm:.2f} -> {b.pa_mpjpe_mm:.2f} mm")


if __name__ == "__main__":
    main()
