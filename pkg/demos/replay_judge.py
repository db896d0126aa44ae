"""Record a judged optimization once, then replay it with no judge.

A mock scorer stands in for a live endpoint (same transport interface).
The first run records every request/reply pair into a JSONL transcript;
the replay run answers every request from the file, byte-identically,
with zero network access.
"""

import os

import numpy as np

from vizgrad.chart import ChartSpec
from vizgrad.datagen import generate
from vizgrad.judges import Goal
from vizgrad.optim import Objective, OptimizerConfig, optimize_spsa
from vizgrad.params import ParamSchema, ParamVector, bounded_scalar
from vizgrad.remote import (
    CallableTransport,
    RecordingTransport,
    RemoteJudgeConfig,
    RemoteScoreJudge,
    request_hash,
    with_transcript,
)

OUT = os.path.join(os.path.dirname(__file__), "out")


def mock_server(request: dict) -> str:
    # deterministic pseudo-judge: any reply containing a number in [0, 1]
    score = int(request_hash(request), 16) % 997 / 997
    return f"I would rate this chart {score:.3f} for the stated goal."


def build(transport) -> tuple[Objective, ParamVector, OptimizerConfig]:
    data = generate("blobs", 200, 3)
    schema = ParamSchema([
        bounded_scalar("radius", 0.5, 6.0),
        bounded_scalar("alpha", 0.05, 1.0),
    ])
    spec = ChartSpec(x="x", y="y", size="radius", opacity="alpha", canvas=(96, 96))
    goal = Goal(text="reduce clutter while keeping the clusters visible")
    judge = RemoteScoreJudge(goal, RemoteJudgeConfig(retries=0, backoff=0.0),
                             transport=transport)
    obj = Objective(dataset=data, spec=spec, judge=judge, goal=goal)
    cfg = OptimizerConfig(kind="spsa", max_iters=10, judge_budget=40,
                          window=30, eta=0.5, seed=3)
    return obj, ParamVector(schema, np.array([1.0, 1.0])), cfg


def main() -> None:
    os.makedirs(OUT, exist_ok=True)
    transcript = os.path.join(OUT, "judge_transcript.jsonl")
    if os.path.exists(transcript):
        os.remove(transcript)

    obj, p0, cfg = build(RecordingTransport(CallableTransport(mock_server), transcript))
    live = optimize_spsa(obj, p0, cfg)
    print(f"recorded run: best={live.best_score:.4f} judge_calls={live.judge_calls} "
          f"transcript lines={sum(1 for _ in open(transcript))}")

    obj2, p02, cfg2 = build(None)
    with_transcript(obj2.judge, transcript, "replay")
    replayed = optimize_spsa(obj2, p02, cfg2)
    same = all(np.array_equal(a.raw, b.raw)
               for a, b in zip(live.records, replayed.records))
    print(f"replayed run: best={replayed.best_score:.4f} "
          f"trajectories identical={same} (no network used)")


if __name__ == "__main__":
    main()
