"""Declutter a saturated 2000-point scatter.

Starts with maximal radius and opacity so the blobs smear into solid
ink, then lets the gradient optimizer shrink both against the overplot
judge.  Writes before/after PNGs and the optimization trace.
"""

import os

import numpy as np

from vizgrad.chart import ChartSpec
from vizgrad.datagen import generate
from vizgrad.image import encode_png
from vizgrad.judges import OverplotJudge
from vizgrad.optim import Objective, OptimizerConfig, optimize_gradient
from vizgrad.params import ParamSchema, ParamVector, bounded_scalar, constrain
from vizgrad.render import render

OUT = os.path.join(os.path.dirname(__file__), "out")


def main() -> None:
    os.makedirs(OUT, exist_ok=True)
    data = generate("blobs", 2000, 3)
    schema = ParamSchema([
        bounded_scalar("radius", 0.5, 8.0),
        bounded_scalar("alpha", 0.02, 1.0),
    ])
    spec = ChartSpec(x="x", y="y", size="radius", opacity="alpha", canvas=(256, 256))
    judge = OverplotJudge(threshold=0.9, sharpness=50.0)
    obj = Objective(dataset=data, spec=spec, judge=judge)
    p0 = ParamVector(schema, np.array([4.0, 4.0]))  # near both upper bounds

    def snapshot(raw, stem):
        realized = constrain(ParamVector(schema, raw))
        img = render(data, spec, realized)
        with open(os.path.join(OUT, f"{stem}.png"), "wb") as f:
            f.write(encode_png(img))
        frac = 1.0 - judge.judge(img).score
        print(f"{stem}: radius={realized['radius']:.2f} alpha={realized['alpha']:.2f} "
              f"overplot fraction={frac:.4f}")
        return frac

    f0 = snapshot(p0.raw, "before")
    cfg = OptimizerConfig(kind="gradient", max_iters=300, eta=0.05, window=40,
                          tol=1e-6, seed=0)
    trace = optimize_gradient(obj, p0, cfg)
    f1 = snapshot(trace.best_raw, "after")
    trace.write_jsonl(os.path.join(OUT, "declutter_trace.jsonl"))
    print(f"status={trace.status} iterations={len(trace.records)} "
          f"fraction ratio={f1 / max(f0, 1e-12):.3f}")


if __name__ == "__main__":
    main()
