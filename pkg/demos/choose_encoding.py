"""Pick which attributes drive the x and color channels.

The bundled assignment fixture has one attribute (u) that spreads marks
across the canvas and one (c) that maps to dark ink under the colormap.
Brute force scores every hard assignment; the relaxed optimizer reaches
the same winner through Gumbel-Softmax weights and temperature
annealing, without ever enumerating.
"""

import os

import numpy as np

from vizgrad.config import load_config
from vizgrad.image import encode_png
from vizgrad.optim import Objective, optimize_gradient
from vizgrad.params import ParamVector, RealizedParams, constrain, harden
from vizgrad.render import render

FIXTURE = os.path.join(os.path.dirname(__file__), "..", "src", "vizgrad",
                       "fixtures", "assignment_k3.json")
OUT = os.path.join(os.path.dirname(__file__), "out")


def main() -> None:
    os.makedirs(OUT, exist_ok=True)
    cfg = load_config(os.path.abspath(FIXTURE))
    data = cfg.load_dataset()
    judge = cfg.build_judge()
    options = cfg.spec.x.attr_options

    print("brute force over all hard assignments:")
    table = {}
    for i, xa in enumerate(options):
        for j, ca in enumerate(options):
            realized = RealizedParams(cfg.schema, {"cx": i, "cc": j})
            score = judge.judge(render(data, cfg.spec, realized)).score
            table[(i, j)] = score
            print(f"  x={xa} color={ca}: {score:.4f}")
    oracle = max(table, key=table.get)
    print(f"oracle: x={options[oracle[0]]} color={options[oracle[1]]}")

    obj = Objective(dataset=data, spec=cfg.spec, judge=judge)
    trace = optimize_gradient(obj, cfg.initial_point(), cfg.optimizer)
    hard = harden(constrain(ParamVector(cfg.schema, trace.final_raw())))
    choice = (hard["cx"], hard["cc"])
    print(f"relaxed optimizer ({len(trace.records)} iterations, {trace.status}): "
          f"x={options[choice[0]]} color={options[choice[1]]} "
          f"-> {'matches oracle' if choice == oracle else 'MISMATCH'}")

    img = render(data, cfg.spec, hard)
    with open(os.path.join(OUT, "chosen_encoding.png"), "wb") as f:
        f.write(encode_png(img))


if __name__ == "__main__":
    main()
