"""Optimizers over the raw parameter space.

Three search modes matched to three judge capabilities: adaptive-moment
gradient ascent when the judge returns pixel gradients, simultaneous
perturbation (SPSA) when it returns only scalar scores, and a (1+1)
success-rule search when it returns only pairwise preferences.  All
three share the Trace record format, windowed stall detection, and
judge-call budgets, and draw every random quantity from labeled
counter-based streams so runs replay exactly.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .chart import ChartSpec, Layout
from .dataset import Dataset, bootstrap_resample
from .errors import JudgeError, NumericError, ValidationError
from .judges import Goal
from .params import ParamVector, RealizedParams, constrain, constrain_vjp, gumbel_noise
from .render import layout_penalty_vjp, render, render_with_vjp
from .rng import StreamRng, derive_seed

__all__ = [
    "Objective",
    "OptimizerConfig",
    "Trace",
    "TraceRecord",
    "optimize_gradient",
    "optimize_spsa",
    "optimize_comparative",
    "evaluate_consistency",
    "gradcheck",
]


@dataclass(frozen=True)
class Objective:
    """What is being maximized: judge score minus weighted view overlap.

    penalty_weight None defers to the layout's own overlap_weight; a
    plain chart has no penalty.
    """

    dataset: Dataset
    spec: ChartSpec | Layout
    judge: object
    goal: Goal | None = None
    penalty_weight: float | None = None
    smoothing: float = 0.7
    marks_only: bool = False

    def effective_spec(self) -> ChartSpec | Layout:
        if self.penalty_weight is None or not isinstance(self.spec, Layout):
            return self.spec
        return replace(self.spec, overlap_weight=float(self.penalty_weight))

    def penalty(self, r: RealizedParams) -> tuple[float, dict]:
        return layout_penalty_vjp(self.effective_spec(), r)

    def render(self, r: RealizedParams, threads: int = 1):
        return render(self.dataset, self.spec, r, smoothing=self.smoothing,
                      threads=threads, marks_only=self.marks_only)


@dataclass(frozen=True)
class OptimizerConfig:
    """Hyperparameters for every optimizer family; unused extras are
    ignored by the other families."""

    kind: str = "gradient"
    max_iters: int = 300
    judge_budget: int = 10_000
    eta: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    spsa_delta: float = 0.1
    spsa_alpha: float = 0.602
    spsa_gamma: float = 0.101
    sigma0: float = 0.5
    success_up: float = 1.5
    fail_down: float = 0.8
    tie_down: float = 0.95
    sigma_floor: float = 1e-4
    window: int = 20
    tol: float = 1e-4
    tau_anneal: float = 1.0
    tau_floor: float = 0.05
    resample_noise: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gradient", "spsa", "comparative"):
            raise ValidationError(f"unknown optimizer kind {self.kind!r}")
        if self.max_iters < 1 or self.judge_budget < 0:
            raise ValidationError("max_iters must be >= 1 and judge_budget >= 0")
        for name in ("eta", "spsa_delta", "sigma0", "tol", "eps"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be > 0")
        if self.window < 2:
            raise ValidationError("convergence window must be >= 2")
        if not (0.0 < self.tau_anneal <= 1.0 and self.tau_floor > 0):
            raise ValidationError("tau_anneal in (0, 1] and tau_floor > 0 required")


@dataclass
class TraceRecord:
    iteration: int
    raw: np.ndarray
    realized: dict
    score: float | None
    judge_calls: int
    wall_ms: float
    extra: dict = field(default_factory=dict)

    def to_json(self, include_timing: bool = False) -> dict:
        d = {
            "iteration": self.iteration,
            "raw": [float(v) for v in self.raw],
            "realized": self.realized,
            "score": self.score,
            "judge_calls": self.judge_calls,
        }
        if include_timing:
            d["wall_ms"] = self.wall_ms
        if self.extra:
            d["extra"] = self.extra
        return d


@dataclass
class Trace:
    records: list[TraceRecord] = field(default_factory=list)
    best_raw: np.ndarray | None = None
    best_score: float | None = None
    best_iteration: int = -1
    status: str = "iteration_cap"
    judge_calls: int = 0
    warnings: list[str] = field(default_factory=list)
    error: str | None = None

    def record(self, rec: TraceRecord, scored_raw: np.ndarray | None = None) -> None:
        """Append a record; scored_raw names the point the score was
        measured at when it differs from the post-update iterate."""
        if self.records and rec.iteration <= self.records[-1].iteration:
            raise ValidationError("trace iterations must be strictly increasing")
        self.records.append(rec)
        if rec.score is not None and (self.best_score is None or rec.score > self.best_score):
            self.best_score = rec.score
            self.best_raw = np.array(rec.raw if scored_raw is None else scored_raw,
                                     dtype=np.float64)
            self.best_iteration = rec.iteration

    def warn_once(self, message: str) -> None:
        if message not in self.warnings:
            self.warnings.append(message)

    def final_raw(self) -> np.ndarray:
        if not self.records:
            raise ValidationError("empty trace has no final point")
        return np.array(self.records[-1].raw, dtype=np.float64)

    def write_jsonl(self, path: str, include_timing: bool = False) -> None:
        """One record per line; wall-clock is volatile, so it is kept out
        of the file unless explicitly asked for."""
        with open(path, "w", encoding="utf-8") as f:
            for rec in self.records:
                f.write(json.dumps(rec.to_json(include_timing), sort_keys=True) + "\n")

    def summary(self) -> dict:
        first_score = next((r.score for r in self.records if r.score is not None), None)
        return {
            "status": self.status,
            "iterations": len(self.records),
            "judge_calls": self.judge_calls,
            "initial_score": first_score,
            "best_score": self.best_score,
            "best_iteration": self.best_iteration,
            "warnings": list(self.warnings),
            "error": self.error,
        }


def _realized_summary(r: RealizedParams) -> dict:
    out = {}
    for s in r.schema.specs:
        v = r.values[s.name]
        if isinstance(v, (int, np.integer)):
            out[s.name] = int(v)
        elif isinstance(v, np.ndarray):
            out[s.name] = [float(x) for x in v]
        else:
            out[s.name] = float(v)
    return out


def _converged(best_hist: list[float], window: int, tol: float) -> bool:
    k = len(best_hist) - 1
    return k >= window and best_hist[k] - best_hist[k - window] < tol


def _schema_at(p0: ParamVector, cfg: OptimizerConfig, k: int):
    if cfg.tau_anneal >= 1.0:
        return p0.schema
    return p0.schema.scale_temperatures(cfg.tau_anneal**k, cfg.tau_floor)


def _noise_at(p0: ParamVector, cfg: OptimizerConfig, k: int) -> dict:
    return gumbel_noise(p0.schema, cfg.seed, counter=k if cfg.resample_noise else 0)


def optimize_gradient(obj: Objective, p0: ParamVector, cfg: OptimizerConfig,
                      threads: int = 1) -> Trace:
    """Adaptive-moment ascent on score minus overlap penalty.

    Per iteration: fresh Gumbel noise, soft constrain, render, judge,
    pull the judge's pixel gradient through the rasterizer and constraint
    maps, update.  Aborts with status "error" on a non-finite gradient,
    recording the offending iteration.
    """
    if not getattr(obj.judge, "differentiable", False):
        raise ValidationError("gradient optimizer requires a differentiable judge")
    on_raw = getattr(obj.judge, "on_raw", False)
    trace = Trace()
    u = p0.raw.copy()
    m = np.zeros_like(u)
    v = np.zeros_like(u)
    best_hist: list[float] = []
    for k in range(cfg.max_iters):
        if trace.judge_calls + 1 > cfg.judge_budget:
            trace.status = "judge_budget"
            return trace
        t0 = time.perf_counter()
        pk = ParamVector(_schema_at(p0, cfg, k), u)
        noise = _noise_at(p0, cfg, k)
        realized = constrain(pk, noise=noise)
        if on_raw:
            score, grad = obj.judge.judge_raw(u)
        else:
            img, pull = render_with_vjp(
                obj.dataset, obj.spec, pk, noise=noise, smoothing=obj.smoothing,
                threads=threads, marks_only=obj.marks_only,
            )
            judgment = obj.judge.judge(img)
            score = judgment.score
            grad = pull(judgment.pixel_gradient)
        trace.judge_calls += 1
        pen, pen_cot = obj.penalty(realized)
        total = score - pen
        if pen_cot:
            grad = grad - constrain_vjp(pk, pen_cot, noise=noise)
        trace.record(TraceRecord(
            iteration=k, raw=u.copy(), realized=_realized_summary(realized),
            score=total, judge_calls=trace.judge_calls,
            wall_ms=(time.perf_counter() - t0) * 1e3,
            extra={"judge_score": score, "penalty": pen} if pen else {},
        ))
        if not np.all(np.isfinite(grad)):
            trace.status = "error"
            trace.error = f"NumericError: non-finite gradient at iteration {k}"
            return trace
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad
        mhat = m / (1.0 - cfg.beta1 ** (k + 1))
        vhat = v / (1.0 - cfg.beta2 ** (k + 1))
        u = u + cfg.eta * mhat / (np.sqrt(vhat) + cfg.eps)
        best_hist.append(trace.best_score)
        if _converged(best_hist, cfg.window, cfg.tol):
            trace.status = "converged"
            return trace
    trace.status = "iteration_cap"
    return trace


def optimize_spsa(obj: Objective, p0: ParamVector, cfg: OptimizerConfig,
                  threads: int = 1) -> Trace:
    """Simultaneous-perturbation ascent from scalar scores only.

    Per iteration, two probes at u +- delta_k * Delta (Rademacher Delta)
    give the gradient estimate [s+ - s-]/(2 delta_k) * Delta; steps and
    perturbations decay as eta/(k+1)^alpha and delta/(k+1)^gamma.  Judge
    failures stop the run, preserving the partial trace.
    """
    on_raw = getattr(obj.judge, "on_raw", False)
    if getattr(obj.judge, "comparative", False) or not (hasattr(obj.judge, "judge") or on_raw):
        raise ValidationError("spsa optimizer requires a scoring judge")
    trace = Trace()
    rng = StreamRng(cfg.seed)
    u = p0.raw.copy()
    best_hist: list[float] = []
    stall_run = 0

    def score_at(raw: np.ndarray, k: int) -> float:
        pk = ParamVector(_schema_at(p0, cfg, k), raw)
        noise = _noise_at(p0, cfg, k)
        realized = constrain(pk, noise=noise)
        if on_raw:
            s = obj.judge.judge_raw(raw)[0]
        else:
            s = obj.judge.judge(obj.render(realized, threads)).score
        pen, _ = obj.penalty(realized)
        return float(s - pen)

    for k in range(cfg.max_iters):
        if trace.judge_calls + 2 > cfg.judge_budget:
            trace.status = "judge_budget"
            return trace
        t0 = time.perf_counter()
        delta_k = cfg.spsa_delta / (k + 1) ** cfg.spsa_gamma
        eta_k = cfg.eta / (k + 1) ** cfg.spsa_alpha
        direction = rng.rademacher("spsa-delta", k, u.shape[0])
        probe_raw = u + delta_k * direction
        try:
            s_plus = score_at(probe_raw, k)
            s_minus = score_at(u - delta_k * direction, k)
        except JudgeError as e:
            trace.status = "error"
            trace.error = f"{type(e).__name__}: {e}"
            return trace
        trace.judge_calls += 2
        stall_run = stall_run + 1 if s_plus == s_minus else 0
        if stall_run >= 10:
            trace.warn_once("spsa-stall: identical probe scores for 10 consecutive iterations")
        g = (s_plus - s_minus) / (2.0 * delta_k) * direction
        if not np.all(np.isfinite(g)):
            trace.status = "error"
            trace.error = f"NumericError: non-finite gradient estimate at iteration {k}"
            return trace
        if s_minus > s_plus:
            probe_raw = u - delta_k * direction
        u = u + eta_k * g
        probe_best = max(s_plus, s_minus)
        realized_now = constrain(ParamVector(_schema_at(p0, cfg, k), u),
                                 noise=_noise_at(p0, cfg, k))
        trace.record(TraceRecord(
            iteration=k, raw=u.copy(), realized=_realized_summary(realized_now),
            score=probe_best, judge_calls=trace.judge_calls,
            wall_ms=(time.perf_counter() - t0) * 1e3,
            extra={"s_plus": s_plus, "s_minus": s_minus, "delta_k": delta_k,
                   "probe_raw": [float(x) for x in probe_raw]},
        ), scored_raw=probe_raw)
        best_hist.append(trace.best_score)
        if _converged(best_hist, cfg.window, cfg.tol):
            trace.status = "converged"
            return trace
    trace.status = "iteration_cap"
    return trace


def optimize_comparative(obj: Objective, p0: ParamVector, cfg: OptimizerConfig,
                         threads: int = 1) -> Trace:
    """(1+1) search driven only by pairwise preferences.

    Challenger u' = u + sigma*z; the judge compares incumbent (first)
    against challenger (second).  Challenger wins: accept and sigma *=
    1.5; incumbent wins: sigma *= 0.8; tie: sigma *= 0.95; sigma floors
    at sigma_floor.  The budget counts comparisons.  When the judge
    exposes an underlying scalar, scores populate the trace and drive
    windowed convergence; otherwise an acceptance-free window converges.
    """
    if not getattr(obj.judge, "comparative", False):
        raise ValidationError("comparative optimizer requires a comparative judge")
    on_raw = getattr(obj.judge, "on_raw", False)
    trace = Trace()
    rng = StreamRng(cfg.seed)
    u = p0.raw.copy()
    sigma = cfg.sigma0
    has_scalar = hasattr(obj.judge, "score_raw" if on_raw else "score")
    calls_per_compare = getattr(obj.judge, "calls_per_compare", 1)
    comparisons = 0
    acceptances = 0
    best_hist: list[float] = []
    since_accept = 0

    def realize(raw: np.ndarray, k: int) -> RealizedParams:
        return constrain(ParamVector(_schema_at(p0, cfg, k), raw), noise=_noise_at(p0, cfg, k))

    for k in range(cfg.max_iters):
        if comparisons + 1 > cfg.judge_budget:
            trace.status = "iteration_cap" if acceptances == 0 else "judge_budget"
            if acceptances == 0:
                trace.warn_once("zero-acceptance: budget exhausted before any acceptance")
            return trace
        t0 = time.perf_counter()
        z = rng.normal("comparative-z", k, u.shape[0])
        challenger = u + sigma * z
        r_inc = realize(u, k)
        r_ch = realize(challenger, k)
        img_inc = img_ch = None
        try:
            if on_raw:
                pref = obj.judge.compare_raw(u, challenger)
            else:
                img_inc = obj.render(r_inc, threads)
                img_ch = obj.render(r_ch, threads)
                pref = obj.judge.compare(img_inc, img_ch)
        except JudgeError as e:
            trace.status = "error"
            trace.error = f"{type(e).__name__}: {e}"
            return trace
        comparisons += 1
        trace.judge_calls += calls_per_compare
        accepted = pref.choice == "second"
        if accepted:
            u = challenger
            sigma *= cfg.success_up
            acceptances += 1
            since_accept = 0
        else:
            sigma *= cfg.fail_down if pref.choice == "first" else cfg.tie_down
            since_accept += 1
        sigma = max(sigma, cfg.sigma_floor)
        score = None
        if has_scalar:
            pen, _ = obj.penalty(r_ch if accepted else r_inc)
            raw_score = (obj.judge.score_raw(u) if on_raw
                         else obj.judge.score(img_ch if accepted else img_inc))
            score = float(raw_score - pen)
        trace.record(TraceRecord(
            iteration=k, raw=u.copy(),
            realized=_realized_summary(r_ch if accepted else r_inc),
            score=score, judge_calls=trace.judge_calls,
            wall_ms=(time.perf_counter() - t0) * 1e3,
            extra={"preference": pref.choice, "sigma": sigma,
                   "accepted": accepted, "comparisons": comparisons},
        ))
        if has_scalar:
            best_hist.append(trace.best_score)
            if _converged(best_hist, cfg.window, cfg.tol):
                trace.status = "converged"
                return trace
        elif since_accept >= cfg.window:
            trace.status = "converged"
            return trace
    trace.status = "iteration_cap"
    if acceptances == 0:
        trace.warn_once("zero-acceptance: no challenger accepted")
    return trace


def evaluate_consistency(obj: Objective, p: ParamVector, replicates: int,
                         seed: int, threads: int = 1) -> dict:
    """Judge stability under bootstrap resampling.

    Renders B resampled datasets with the same realized parameters and
    reports score statistics plus consistency = 1 - (max - min).  A judge
    failure stops early and flags the partial report incomplete.
    """
    if replicates < 2:
        raise ValidationError("consistency needs at least 2 replicates")
    if getattr(obj.judge, "comparative", False) or not hasattr(obj.judge, "judge"):
        raise ValidationError("consistency needs a scoring or differentiable judge")
    realized = constrain(p, noise=gumbel_noise(p.schema, seed))
    scores: list[float] = []
    incomplete = None
    for b in range(1, replicates + 1):
        db = bootstrap_resample(obj.dataset, derive_seed(seed, "bootstrap-rep", b))
        img = render(db, obj.spec, realized, smoothing=obj.smoothing,
                     threads=threads, marks_only=obj.marks_only)
        try:
            scores.append(float(obj.judge.judge(img).score))
        except JudgeError as e:
            incomplete = f"{type(e).__name__}: {e}"
            break
    report: dict = {"replicates": replicates, "seed": seed, "scores": scores,
                    "incomplete": incomplete is not None}
    if incomplete:
        report["error"] = incomplete
    if scores:
        arr = np.asarray(scores)
        report.update(
            mean=float(arr.mean()), std=float(arr.std()),
            min=float(arr.min()), max=float(arr.max()),
            consistency=float(1.0 - (arr.max() - arr.min())),
        )
    return report


def _coord_names(schema) -> list[str]:
    names: list[str] = []
    for s in schema.specs:
        if s.raw_dim == 1:
            names.append(s.name)
        else:
            names.extend(f"{s.name}[{i}]" for i in range(s.raw_dim))
    return names


def gradcheck(obj: Objective, p: ParamVector, seed: int = 0, h: float = 1e-3,
              tol_p95: float = 1e-3, tol_max: float = 1e-2,
              threads: int = 1) -> dict:
    """Central-difference audit of the composite gradient at p.

    The value is judge score minus weighted overlap penalty, with Gumbel
    noise held fixed so the map is deterministic.  A coordinate passes at
    relative error |analytic - fd| / max(|analytic|, |fd|, 1e-8); the
    check passes when at least 95% of coordinates are within tol_p95 and
    all are within tol_max.
    """
    if not getattr(obj.judge, "differentiable", False):
        raise ValidationError("gradcheck requires a differentiable judge")
    noise = gumbel_noise(p.schema, seed)

    def value(raw: np.ndarray) -> float:
        pk = ParamVector(p.schema, raw)
        realized = constrain(pk, noise=noise)
        s = obj.judge.judge(obj.render(realized, threads)).score
        pen, _ = obj.penalty(realized)
        return float(s - pen)

    pk = ParamVector(p.schema, p.raw)
    realized = constrain(pk, noise=noise)
    img, pull = render_with_vjp(
        obj.dataset, obj.spec, pk, noise=noise, smoothing=obj.smoothing,
        threads=threads, marks_only=obj.marks_only,
    )
    judgment = obj.judge.judge(img)
    analytic = pull(judgment.pixel_gradient)
    _, pen_cot = obj.penalty(realized)
    if pen_cot:
        analytic = analytic - constrain_vjp(pk, pen_cot, noise=noise)

    names = _coord_names(p.schema)
    coords = []
    rels = np.empty(p.schema.raw_dim)
    for i in range(p.schema.raw_dim):
        up = p.raw.copy()
        dn = p.raw.copy()
        up[i] += h
        dn[i] -= h
        fd = (value(up) - value(dn)) / (2.0 * h)
        rel = abs(analytic[i] - fd) / max(abs(analytic[i]), abs(fd), 1e-8)
        rels[i] = rel
        coords.append({"index": i, "name": names[i], "analytic": float(analytic[i]),
                       "finite_difference": float(fd), "rel_error": float(rel)})
    frac_ok = float(np.mean(rels <= tol_p95))
    report = {
        "h": h,
        "seed": seed,
        "coordinates": coords,
        "max_rel_error": float(rels.max()),
        "p95_rel_error": float(np.percentile(rels, 95.0)),
        "fraction_within_p95_tol": frac_ok,
        "tol_p95": tol_p95,
        "tol_max": tol_max,
        "pass": bool(frac_ok >= 0.95 and rels.max() <= tol_max),
    }
    return report
