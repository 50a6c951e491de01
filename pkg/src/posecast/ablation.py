"""Train-and-evaluate grid over the architecture switches, several seeds each."""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import write_manifest

log = logging.getLogger(__name__)

ARCHITECTURE = {
    "+res -PF": {"temporal.use_residual": True, "temporal.poseforecast": False},
    "+res +PF": {"temporal.use_residual": True, "temporal.poseforecast": True},
    "-res -PF": {"temporal.use_residual": False, "temporal.poseforecast": False},
    "-res +PF": {"temporal.use_residual": False, "temporal.poseforecast": True},
}
WITH_CURRENT = {
    "-res +PF +cur": {"temporal.use_residual": False, "temporal.poseforecast": True,
                      "temporal.poseforecast_includes_current": True},
}
SUPERVISION = {
    "-res +PF sup=none": {"temporal.use_residual": False, "temporal.poseforecast": True,
                          "loss.supervision_target": "none"},
    "-res +PF sup=adjacent": {"temporal.use_residual": False, "temporal.poseforecast": True,
                              "loss.supervision_target": "adjacent"},
}
METRICS = ("pa_mpjpe_mm", "mpjpe_mm", "mpvpe_mm", "accel_err_mm_s2")


def variant_set(names=("architecture", "current")):
    out = {}
    for n in names:
        out.update({"architecture": ARCHITECTURE, "current": WITH_CURRENT, "supervision": SUPERVISION}[n])
    return out


@dataclass
class RunRecord:
    variant: str
    seed: int
    metrics: dict | None = None
    error: str | None = None
    seconds: float = 0.0
    predictions: str = ""


def run_one(base_config, changes, variant, seed, dataset, out_dir=None):
    """Train + evaluate one (variant, seed); failures are captured, not raised."""
    from .synth import load_dataset
    from .train import train
    from .evaluate import evaluate

    t0 = time.perf_counter()
    try:
        if isinstance(dataset, (str, Path)):
            dataset = load_dataset(dataset)
        cfg = base_config.replace(seed=seed, **changes).validate()
        run_dir = None
        if out_dir is not None:
            run_dir = Path(out_dir) / variant.replace(" ", "_") / f"seed{seed}"
            run_dir.mkdir(parents=True, exist_ok=True)
        res = train(cfg, dataset, out_dir=run_dir)
        report, preds = evaluate(res.model, dataset, "eval")
        rec = RunRecord(variant, seed, report.summary(), seconds=time.perf_counter() - t0)
        if run_dir is not None:
            report.write(run_dir / "report")
            rec.predictions = str(preds.save(run_dir / "predictions.npz"))
            (run_dir / "train_log.json").write_text(json.dumps(res.log, indent=1) + "\n")
            write_manifest(run_dir, "ablate-run", cfg, seed, {"variant": variant})
        return rec
    except Exception as exc:  # the table marks the cell failed
        log.exception("variant %s seed %d failed", variant, seed)
        return RunRecord(variant, seed, error=f"{type(exc).__name__}: {exc}", seconds=time.perf_counter() - t0)


@dataclass
class AblationResult:
    runs: list = field(default_factory=list)

    def variants(self):
        seen = []
        for r in self.runs:
            if r.variant not in seen:
                seen.append(r.variant)
        return seen

    def stats(self, variant, metric):
        vals = [r.metrics[metric] for r in self.runs if r.variant == variant and r.metrics is not None]
        failed = sum(1 for r in self.runs if r.variant == variant and r.metrics is None)
        if not vals or failed:
            return None
        return float(np.mean(vals)), float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0

    def mean(self, variant, metric):
        s = self.stats(variant, metric)
        return float("nan") if s is None else s[0]

    def table(self):
        head = f"{'variant':<24}" + "".join(f"{m:>24}" for m in METRICS)
        lines = [head, "-" * len(head)]
        for v in self.variants():
            cells = []
            for m in METRICS:
                s = self.stats(v, m)
                cells.append(f"{'failed':>24}" if s is None else f"{f'{s[0]:.3f} +- {s[1]:.3f}':>24}")
            lines.append(f"{v:<24}" + "".join(cells))
        return "\n".join(lines) + "\n"

    def to_json(self):
        return json.dumps([asdict(r) for r in self.runs], indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls([RunRecord(**d) for d in json.loads(text)])


def ablate(base_config, dataset, seeds=(0, 1, 2), variants=None, out_dir=None, workers=1, progress=None):
    """Every variant x seed; sequential unless ``workers > 1``."""
    variants = variants if variants is not None else variant_set()
    jobs = [(name, changes, seed) for name, changes in variants.items() for seed in seeds]
    result = AblationResult()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(run_one, base_config, ch, name, seed, dataset, out_dir) for name, ch, seed in jobs]
            for f in futs:
                result.runs.append(f.result())
                if progress:
                    progress(result.runs[-1])
    else:
        for name, ch, seed in jobs:
            result.runs.append(run_one(base_config, ch, name, seed, dataset, out_dir))
            if progress:
                progress(result.runs[-1])
    if out_dir is not None:
        out = Path(out_dir)
        (out / "ablation.json").write_text(result.to_json() + "\n")
        (out / "ablation.txt").write_text(result.table())
        write_manifest(out, "ablate", base_config, list(seeds), {"variants": variants})
    return result
