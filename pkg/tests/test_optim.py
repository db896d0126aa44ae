"""Optimizer update rules, statuses, and trace bookkeeping.

Raw-space judges exercise the update rules against closed-form
objectives; tiny rendered scenes cover the image-backed paths.
"""

import json

import numpy as np
import pytest

from conftest import quant_dataset
from vizgrad.chart import ChartSpec
from vizgrad.errors import JudgeParseError, ValidationError
from vizgrad.judges import (
    FunctionScoreJudge,
    InkJudge,
    Preference,
    RawComparativeJudge,
    RawFunctionJudge,
)
from vizgrad.optim import (
    Objective,
    OptimizerConfig,
    Trace,
    TraceRecord,
    evaluate_consistency,
    gradcheck,
    optimize_comparative,
    optimize_gradient,
    optimize_spsa,
)
from vizgrad.params import ParamSchema, ParamVector, bounded_scalar, bounded_vector


def raw_objective(judge):
    # on_raw judges never render; the scene is a placeholder
    d = quant_dataset(x=[0.2, 0.8], y=[0.3, 0.7])
    return Objective(dataset=d, spec=ChartSpec(x="x", y="y", canvas=(16, 16)), judge=judge)


def vec_schema(dim, name="w"):
    return ParamSchema([bounded_vector(name, -10.0, 10.0, dim)])


def quadratic_judge(target):
    target = np.asarray(target, dtype=np.float64)
    return RawFunctionJudge(
        lambda u: -float(np.sum((u - target) ** 2)),
        grad=lambda u: -2.0 * (u - target),
    )


def test_gradient_ascent_reaches_quadratic_optimum():
    target = np.array([0.7, -0.4, 1.2, 0.0, -1.0, 0.3, 0.9, -0.6])
    judge = quadratic_judge(target)
    cfg = OptimizerConfig(kind="gradient", max_iters=400, eta=0.05, tol=1e-7)
    trace = optimize_gradient(raw_objective(judge), ParamVector(vec_schema(8), np.zeros(8)), cfg)
    assert trace.status in ("converged", "iteration_cap")
    assert np.max(np.abs(trace.best_raw - target)) < 1e-2
    assert trace.judge_calls == len(trace.records) == judge.calls
    assert trace.best_score == max(r.score for r in trace.records)


def test_gradient_requires_differentiable_judge():
    judge = RawFunctionJudge(lambda u: 0.5)  # no gradient function
    with pytest.raises(ValidationError):
        optimize_gradient(raw_objective(judge), ParamVector(vec_schema(2), np.zeros(2)),
                          OptimizerConfig(kind="gradient"))


def test_gradient_zero_budget_stops_before_any_judge_call():
    judge = quadratic_judge([1.0])
    cfg = OptimizerConfig(kind="gradient", judge_budget=0)
    trace = optimize_gradient(raw_objective(judge), ParamVector(vec_schema(1), np.zeros(1)), cfg)
    assert trace.status == "judge_budget"
    assert trace.records == [] and trace.best_score is None
    assert judge.calls == 0


def test_gradient_nonfinite_gradient_aborts_with_partial_trace():
    state = {"n": 0}

    def bad_grad(u):
        state["n"] += 1
        return np.array([np.nan]) if state["n"] > 3 else -2.0 * u

    judge = RawFunctionJudge(lambda u: -float(u @ u), grad=bad_grad)
    cfg = OptimizerConfig(kind="gradient", max_iters=50)
    trace = optimize_gradient(raw_objective(judge), ParamVector(vec_schema(1), np.ones(1)), cfg)
    assert trace.status == "error"
    assert "non-finite gradient" in trace.error
    assert len(trace.records) == 4  # the offending iteration is kept


def test_spsa_converges_on_concave_scalar():
    judge = RawFunctionJudge(lambda u: 1.0 - 0.1 * float((u[0] - 3.0) ** 2))
    cfg = OptimizerConfig(kind="spsa", max_iters=200, eta=3.0, spsa_delta=0.1,
                          judge_budget=300, seed=4)
    trace = optimize_spsa(raw_objective(judge), ParamVector(vec_schema(1), np.zeros(1)), cfg)
    assert trace.status == "converged"
    assert abs(trace.best_raw[0] - 3.0) <= 0.05
    assert trace.judge_calls == judge.calls == 2 * len(trace.records)


def test_spsa_budget_is_enforced_in_probe_pairs():
    judge = RawFunctionJudge(lambda u: float(u[0]))
    cfg = OptimizerConfig(kind="spsa", max_iters=100, judge_budget=5, window=90)
    trace = optimize_spsa(raw_objective(judge), ParamVector(vec_schema(1), np.zeros(1)), cfg)
    assert trace.status == "judge_budget"
    assert trace.judge_calls == 4  # two full probe pairs fit in a budget of 5


def test_spsa_warns_on_persistent_stall():
    judge = RawFunctionJudge(lambda u: 0.5)
    cfg = OptimizerConfig(kind="spsa", max_iters=40, window=20)
    trace = optimize_spsa(raw_objective(judge), ParamVector(vec_schema(2), np.zeros(2)), cfg)
    assert "spsa-stall: identical probe scores for 10 consecutive iterations" in trace.warnings
    assert trace.warnings.count(
        "spsa-stall: identical probe scores for 10 consecutive iterations") == 1
    assert trace.status == "converged"  # flat best history


def test_spsa_judge_failure_preserves_partial_trace():
    state = {"n": 0}

    def flaky(u):
        state["n"] += 1
        if state["n"] > 6:
            raise JudgeParseError("garbled reply")
        return float(-(u[0] ** 2))

    judge = RawFunctionJudge(flaky)
    cfg = OptimizerConfig(kind="spsa", max_iters=50)
    trace = optimize_spsa(raw_objective(judge), ParamVector(vec_schema(1), np.ones(1)), cfg)
    assert trace.status == "error"
    assert "JudgeParseError" in trace.error
    assert len(trace.records) == 3  # three full iterations before the failure


def test_spsa_rejects_comparative_judge():
    judge = RawComparativeJudge(lambda u: 0.0)
    with pytest.raises(ValidationError):
        optimize_spsa(raw_objective(judge), ParamVector(vec_schema(1), np.zeros(1)),
                      OptimizerConfig(kind="spsa"))


def test_spsa_seeded_runs_replay_exactly():
    def make():
        return RawFunctionJudge(lambda u: -float(np.sum(u * u)))

    p0 = ParamVector(vec_schema(3), np.ones(3))
    cfg = OptimizerConfig(kind="spsa", max_iters=15, window=10, seed=5)
    a = optimize_spsa(raw_objective(make()), p0, cfg)
    b = optimize_spsa(raw_objective(make()), p0, cfg)
    for ra, rb in zip(a.records, b.records):
        np.testing.assert_array_equal(ra.raw, rb.raw)
    c = optimize_spsa(raw_objective(make()), p0, OptimizerConfig(kind="spsa", max_iters=15,
                                                                 window=10, seed=6))
    assert any(not np.array_equal(ra.raw, rc.raw) for ra, rc in zip(a.records, c.records))


def test_comparative_converges_on_concave_scalar():
    judge = RawComparativeJudge(lambda u: -float((u[0] - 2.0) ** 2), tie_eps=1e-12)
    cfg = OptimizerConfig(kind="comparative", max_iters=5000, judge_budget=400,
                          sigma0=0.5, seed=3)
    trace = optimize_comparative(raw_objective(judge), ParamVector(vec_schema(1), np.zeros(1)), cfg)
    assert trace.status in ("converged", "judge_budget")
    assert abs(trace.best_raw[0] - 2.0) <= 0.1
    accepted = [r for r in trace.records if r.extra["accepted"]]
    assert accepted, "expected at least one acceptance"
    # acceptance means strictly better scalar, so accepted scores increase
    scores = [r.score for r in accepted]
    assert all(b > a for a, b in zip(scores, scores[1:]))


def test_comparative_budget_with_acceptances_reports_judge_budget():
    judge = RawComparativeJudge(lambda u: float(u[0]))
    cfg = OptimizerConfig(kind="comparative", max_iters=10_000, judge_budget=30,
                          window=500, seed=1)
    trace = optimize_comparative(raw_objective(judge), ParamVector(vec_schema(1), np.zeros(1)), cfg)
    assert trace.status == "judge_budget"
    assert any(r.extra["accepted"] for r in trace.records)


class AlwaysFirst:
    """Preference-only judge: incumbent always wins, no scalar exposed."""

    comparative = True
    differentiable = False
    on_raw = True

    def compare_raw(self, a, b):
        return Preference("first")


def test_comparative_zero_acceptance_budget_warning():
    cfg = OptimizerConfig(kind="comparative", max_iters=100, judge_budget=3, window=50)
    trace = optimize_comparative(raw_objective(AlwaysFirst()),
                                 ParamVector(vec_schema(1), np.zeros(1)), cfg)
    assert trace.status == "iteration_cap"
    assert "zero-acceptance: budget exhausted before any acceptance" in trace.warnings
    assert all(not r.extra["accepted"] for r in trace.records)


def test_comparative_without_scalar_converges_on_acceptance_free_window():
    cfg = OptimizerConfig(kind="comparative", max_iters=100, window=8)
    trace = optimize_comparative(raw_objective(AlwaysFirst()),
                                 ParamVector(vec_schema(1), np.zeros(1)), cfg)
    assert trace.status == "converged"
    assert len(trace.records) == 8
    assert all(r.score is None for r in trace.records)


def test_comparative_tie_shrinks_sigma_slowly():
    judge = RawComparativeJudge(lambda u: 0.0, tie_eps=1.0)  # everything ties
    cfg = OptimizerConfig(kind="comparative", max_iters=30, window=25, sigma0=1.0)
    trace = optimize_comparative(raw_objective(judge), ParamVector(vec_schema(1), np.zeros(1)), cfg)
    sigmas = [r.extra["sigma"] for r in trace.records]
    assert all(r.extra["preference"] == "tie" for r in trace.records)
    np.testing.assert_allclose(sigmas, [0.95 ** (k + 1) for k in range(len(sigmas))])


def test_comparative_rejects_scoring_judge():
    judge = RawFunctionJudge(lambda u: 0.5)
    with pytest.raises(ValidationError):
        optimize_comparative(raw_objective(judge), ParamVector(vec_schema(1), np.zeros(1)),
                             OptimizerConfig(kind="comparative"))


def rendered_objective(judge, n=12, canvas=(32, 32), seed=2):
    g = np.random.default_rng(seed)
    d = quant_dataset(x=g.uniform(0, 1, n), y=g.uniform(0, 1, n))
    spec = ChartSpec(x="x", y="y", size="r", opacity="al", canvas=canvas)
    schema = ParamSchema([bounded_scalar("r", 0.5, 6.0), bounded_scalar("al", 0.05, 1.0)])
    return Objective(dataset=d, spec=spec, judge=judge), schema


def test_gradient_on_rendered_scene_improves_ink_score():
    obj, schema = rendered_objective(InkJudge(target=0.3))
    cfg = OptimizerConfig(kind="gradient", max_iters=40, eta=0.2, window=30)
    trace = optimize_gradient(obj, ParamVector(schema, np.array([2.0, 2.0])), cfg)
    assert trace.records[0].score is not None
    assert trace.best_score > trace.records[0].score
    assert set(trace.records[0].realized) == {"r", "al"}


def test_evaluate_consistency_is_deterministic_and_validates():
    obj, schema = rendered_objective(InkJudge(target=0.3), n=20)
    p = ParamVector(schema, np.zeros(2))
    a = evaluate_consistency(obj, p, replicates=3, seed=11)
    b = evaluate_consistency(obj, p, replicates=3, seed=11)
    assert a == b
    assert not a["incomplete"]
    assert len(a["scores"]) == 3
    assert a["consistency"] == pytest.approx(1.0 - (a["max"] - a["min"]))
    c = evaluate_consistency(obj, p, replicates=3, seed=12)
    assert c["scores"] != a["scores"]  # different resamples
    with pytest.raises(ValidationError):
        evaluate_consistency(obj, p, replicates=1, seed=0)
    comp_obj = Objective(dataset=obj.dataset, spec=obj.spec,
                         judge=RawComparativeJudge(lambda u: 0.0))
    with pytest.raises(ValidationError):
        evaluate_consistency(comp_obj, p, replicates=2, seed=0)


def test_evaluate_consistency_flags_incomplete_on_judge_failure():
    state = {"n": 0}

    def scorer(img):
        state["n"] += 1
        if state["n"] == 2:
            raise JudgeParseError("bad reply")
        return 0.5

    obj, schema = rendered_objective(FunctionScoreJudge(scorer))
    report = evaluate_consistency(obj, ParamVector(schema, np.zeros(2)), replicates=4, seed=5)
    assert report["incomplete"]
    assert "JudgeParseError" in report["error"]
    assert len(report["scores"]) == 1


def test_gradcheck_passes_on_smooth_scene_and_reports_coordinates():
    obj, schema = rendered_objective(InkJudge(target=0.4), n=8, canvas=(24, 24))
    report = gradcheck(obj, ParamVector(schema, np.array([0.3, -0.2])), seed=1, h=1e-3)
    assert report["pass"]
    assert report["max_rel_error"] <= report["tol_max"]
    assert [c["name"] for c in report["coordinates"]] == ["r", "al"]
    assert all(np.isfinite(c["finite_difference"]) for c in report["coordinates"])
    with pytest.raises(ValidationError):
        gradcheck(Objective(dataset=obj.dataset, spec=obj.spec,
                            judge=FunctionScoreJudge(lambda im: 0.5)),
                  ParamVector(schema, np.zeros(2)))


def test_trace_bookkeeping_and_serialization(tmp_path):
    tr = Trace()
    tr.record(TraceRecord(iteration=0, raw=np.array([1.0]), realized={"w": 1.0},
                          score=0.2, judge_calls=1, wall_ms=5.0))
    tr.record(TraceRecord(iteration=3, raw=np.array([2.0]), realized={"w": 2.0},
                          score=0.6, judge_calls=2, wall_ms=5.0,
                          extra={"s_plus": 0.6}),
              scored_raw=np.array([2.5]))
    with pytest.raises(ValidationError):
        tr.record(TraceRecord(iteration=3, raw=np.array([0.0]), realized={},
                              score=None, judge_calls=3, wall_ms=0.0))
    assert tr.best_score == 0.6
    np.testing.assert_array_equal(tr.best_raw, [2.5])  # the probe that scored best
    np.testing.assert_array_equal(tr.final_raw(), [2.0])

    path = tmp_path / "trace.jsonl"
    tr.write_jsonl(str(path))
    lines = [json.loads(s) for s in path.read_text().splitlines()]
    assert len(lines) == 2
    assert all("wall_ms" not in d for d in lines)  # volatile by default
    assert lines[1]["extra"] == {"s_plus": 0.6}
    tr.write_jsonl(str(path), include_timing=True)
    lines = [json.loads(s) for s in path.read_text().splitlines()]
    assert all(d["wall_ms"] == 5.0 for d in lines)

    s = tr.summary()
    assert s["initial_score"] == 0.2 and s["best_score"] == 0.6
    assert s["best_iteration"] == 3 and s["iterations"] == 2
    with pytest.raises(ValidationError):
        Trace().final_raw()


def test_optimizer_config_validation():
    with pytest.raises(ValidationError):
        OptimizerConfig(kind="genetic")
    with pytest.raises(ValidationError):
        OptimizerConfig(max_iters=0)
    with pytest.raises(ValidationError):
        OptimizerConfig(eta=0.0)
    with pytest.raises(ValidationError):
        OptimizerConfig(window=1)
    with pytest.raises(ValidationError):
        OptimizerConfig(tau_anneal=0.0)
    with pytest.raises(ValidationError):
        OptimizerConfig(tau_anneal=0.9, tau_floor=0.0)
