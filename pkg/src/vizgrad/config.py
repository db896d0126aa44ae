"""Run configuration: one JSON document describes a complete run.

The document names the dataset (a CSV path or a synthetic generator),
the parameter schema, the chart or layout, an optional goal, the judge,
and the optimizer.  Parsing resolves every default, so the "resolved"
echo written next to each run's artifacts re-runs to identical results;
the seed is always written out explicitly, never left implicit.

Convention: wherever a channel accepts either a literal or a parameter,
a bare JSON number/array is the literal and {"param": "name"} is the
reference.  Encodings use {"attr": "col"} for a fixed attribute and
{"attr_choice": "p", "attr_options": [...]} for a categorical choice.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np

from .chart import ChartSpec, ColorEncoding, Colormap, EncodingMap, Layout, View
from .dataset import Dataset, ingest_csv
from .datagen import generate
from .errors import DataError, ValidationError
from .judges import ContrastJudge, Goal, InkJudge, OverplotJudge
from .optim import OptimizerConfig
from .params import ParamSchema, ParamVector
from .remote import (
    RemoteCompareJudge,
    RemoteJudgeConfig,
    RemoteScoreJudge,
    with_transcript,
)

__all__ = ["RunConfig", "load_config", "parse_config"]

JUDGE_KINDS = ("overplot", "ink", "contrast", "remote_score", "remote_compare")
GENERATOR_ARGS = {
    "blobs": ("n", "seed", "blobs", "spread"),
    "correlated": ("n", "seed", "rho"),
    "uniform": ("n", "seed"),
}


def _fail(msg: str):
    raise ValidationError(f"config: {msg}")


def _param_name(v, what: str) -> str:
    if not (isinstance(v, dict) and set(v) == {"param"} and isinstance(v["param"], str)):
        _fail(f'{what}: expected {{"param": "name"}}')
    return v["param"]


def _enc_from_json(doc, what: str) -> EncodingMap:
    if isinstance(doc, str):
        return EncodingMap(attr=doc)
    if not isinstance(doc, dict):
        _fail(f"{what}: encoding must be an attribute name or an object")
    known = {"attr", "attr_choice", "attr_options", "domain", "coeffs", "out_range"}
    extra = set(doc) - known
    if extra:
        _fail(f"{what}: unknown encoding keys {sorted(extra)}")
    kw: dict = {}
    if "attr" in doc:
        kw["attr"] = doc["attr"]
    if "attr_choice" in doc:
        kw["attr_choice"] = doc["attr_choice"]
        kw["attr_options"] = tuple(doc.get("attr_options", ()))
    dom = doc.get("domain")
    if dom is not None:
        kw["domain"] = _param_name(dom, what) if isinstance(dom, dict) else (
            float(dom[0]), float(dom[1]))
    if "coeffs" in doc:
        c = doc["coeffs"]
        kw["coeffs"] = _param_name(c, what) if isinstance(c, dict) else tuple(
            float(v) for v in c)
    if "out_range" in doc:
        r = doc["out_range"]
        if isinstance(r, dict):
            if "params" in r:
                a, b = r["params"]
                kw["out_range"] = (str(a), str(b))
            else:
                kw["out_range"] = _param_name(r, what)
        else:
            kw["out_range"] = (float(r[0]), float(r[1]))
    return EncodingMap(**kw)


def _colormap_from_json(doc, what: str) -> Colormap:
    kw: dict = {}
    if "c0" in doc:
        kw["c0"] = tuple(float(v) for v in doc["c0"])
    if "chroma1" in doc:
        kw["chroma1"] = tuple(float(v) for v in doc["chroma1"])
    if "delta_l" in doc:
        dl = doc["delta_l"]
        kw["delta_l"] = _param_name(dl, what) if isinstance(dl, dict) else float(dl)
    return Colormap(**kw)


def _chart_from_json(doc, what: str = "chart") -> ChartSpec:
    if not isinstance(doc, dict):
        _fail(f"{what}: must be an object")
    for key in ("x", "y"):
        if key not in doc:
            _fail(f"{what}: missing {key!r} encoding")
    kw: dict = {
        "x": _enc_from_json(doc["x"], f"{what}.x"),
        "y": _enc_from_json(doc["y"], f"{what}.y"),
    }
    if "size" in doc:
        s = doc["size"]
        if isinstance(s, dict):
            kw["size"] = (_enc_from_json(s["encoding"], f"{what}.size")
                          if "encoding" in s else _param_name(s, f"{what}.size"))
        else:
            kw["size"] = float(s)
    if "color" in doc:
        c = doc["color"]
        if isinstance(c, dict):
            kw["color"] = ColorEncoding(
                encoding=_enc_from_json(c["encoding"], f"{what}.color"),
                colormap=_colormap_from_json(c.get("colormap", {}), f"{what}.color"),
            )
        else:
            kw["color"] = tuple(float(v) for v in c)
    if "opacity" in doc:
        o = doc["opacity"]
        kw["opacity"] = _param_name(o, f"{what}.opacity") if isinstance(o, dict) else float(o)
    if "canvas" in doc:
        kw["canvas"] = (int(doc["canvas"][0]), int(doc["canvas"][1]))
    if "background" in doc:
        kw["background"] = tuple(float(v) for v in doc["background"])
    if "kind" in doc:
        kw["kind"] = str(doc["kind"])
    return ChartSpec(**kw)


def _layout_from_json(doc) -> Layout:
    if not isinstance(doc, dict) or "views" not in doc:
        _fail("layout: must be an object with a 'views' list")
    views = []
    for i, v in enumerate(doc["views"]):
        chart = _chart_from_json(v.get("chart"), f"layout.views[{i}].chart")
        rect = v.get("rect", (0.5, 0.5, 1.0, 1.0))
        if isinstance(rect, dict):
            rect = _param_name(rect, f"layout.views[{i}].rect")
        else:
            rect = tuple(float(t) for t in rect)
        views.append(View(chart=chart, rect=rect))
    kw: dict = {"views": tuple(views)}
    if "canvas" in doc:
        kw["canvas"] = (int(doc["canvas"][0]), int(doc["canvas"][1]))
    if "background" in doc:
        kw["background"] = tuple(float(v) for v in doc["background"])
    if "overlap_weight" in doc:
        kw["overlap_weight"] = float(doc["overlap_weight"])
    if "min_view_fraction" in doc:
        kw["min_view_fraction"] = float(doc["min_view_fraction"])
    return Layout(**kw)


def _goal_from_json(doc) -> Goal | None:
    if doc is None:
        return None
    if not isinstance(doc, dict) or "text" not in doc:
        _fail("goal: must be an object with 'text'")
    return Goal(
        text=str(doc["text"]),
        kind=str(doc.get("kind", "pattern")),
        targets=dict(doc.get("targets", {})),
    )


@dataclass
class RunConfig:
    """A parsed, validated run description plus its resolved echo."""

    doc: dict
    base_dir: str
    seed: int
    threads: int
    deterministic: bool
    output_dir: str
    schema: ParamSchema
    has_params: bool
    init_raw: np.ndarray
    compare_raw: np.ndarray | None
    spec: ChartSpec | Layout
    goal: Goal | None
    judge_doc: dict
    optimizer: OptimizerConfig
    smoothing: float
    marks_only: bool
    penalty_weight: float | None

    def effective_threads(self) -> int:
        return 1 if self.deterministic else max(1, self.threads)

    def initial_point(self) -> ParamVector:
        return ParamVector(self.schema, self.init_raw.copy())

    def load_dataset(self) -> Dataset:
        d = self.doc["dataset"]
        if "path" in d:
            path = os.path.join(self.base_dir, d["path"])
            try:
                with open(path, encoding="utf-8") as f:
                    return ingest_csv(f)
            except DataError as e:
                raise DataError(f"{path}: {e}") from None
            except OSError as e:
                raise DataError(f"{path}: {e}") from None
        g = dict(d["generate"])
        kind = g.pop("kind")
        g.setdefault("seed", self.seed)
        n = g.pop("n")
        return generate(kind, n, g.pop("seed"), **g)

    def build_judge(self, transcript: str | None = None, mode: str | None = None):
        """Construct the configured judge; transcript/mode rewire remote
        transports for --record / --replay."""
        d = dict(self.judge_doc)
        kind = d.pop("kind")
        if kind == "overplot":
            return OverplotJudge(threshold=d.get("threshold", 0.9),
                                 sharpness=d.get("sharpness", 50.0))
        if kind == "ink":
            return InkJudge(target=d.get("target", 0.5))
        if kind == "contrast":
            bg = d.get("background")
            if bg is None:
                bg = self.spec.background
            return ContrastJudge(background=tuple(float(v) for v in bg))
        if self.goal is None:
            _fail(f"judge kind {kind!r} requires a goal")
        cfg_fields = {f.name for f in dataclasses.fields(RemoteJudgeConfig)}
        extra = set(d) - cfg_fields
        if extra:
            _fail(f"judge: unknown keys {sorted(extra)}")
        rcfg = RemoteJudgeConfig(**d)
        cls = RemoteScoreJudge if kind == "remote_score" else RemoteCompareJudge
        judge = cls(self.goal, rcfg)
        if transcript is not None:
            if mode not in ("record", "replay"):
                _fail("transcript given without --record or --replay")
            judge = with_transcript(judge, transcript, mode)
        return judge

    def resolved(self) -> dict:
        """The full document with every default made explicit."""
        return self.doc


def parse_config(doc: dict, base_dir: str = ".", seed: int | None = None,
                 threads: int | None = None) -> RunConfig:
    """Validate and resolve a config document.

    seed/threads are command-line overrides applied before resolution so
    the echoed document matches what actually ran.
    """
    if not isinstance(doc, dict):
        _fail("top level must be an object")
    doc = dict(doc)
    if seed is not None:
        doc["seed"] = int(seed)
    if threads is not None:
        doc["threads"] = int(threads)
    run_seed = int(doc.get("seed", 0))
    if not 0 <= run_seed < 2**64:
        _fail("seed must be an unsigned 64-bit integer")
    run_threads = int(doc.get("threads", 1))
    deterministic = bool(doc.get("deterministic", run_threads <= 1))
    output_dir = str(doc.get("output_dir", "out"))

    ds = doc.get("dataset")
    if not isinstance(ds, dict) or ("path" in ds) == ("generate" in ds):
        _fail("dataset: exactly one of 'path' or 'generate' required")
    if "path" in ds:
        full = os.path.join(base_dir, ds["path"])
        if not os.path.isfile(full):
            _fail(f"dataset: no such file {full!r}")
        ds = {"path": os.path.abspath(full)}
    else:
        g = ds["generate"]
        if not isinstance(g, dict) or "kind" not in g or "n" not in g:
            _fail("dataset.generate: needs 'kind' and 'n'")
        if g["kind"] not in GENERATOR_ARGS:
            _fail(f"dataset.generate: unknown kind {g['kind']!r}")
        extra = set(g) - set(GENERATOR_ARGS[g["kind"]]) - {"kind"}
        if extra:
            _fail(f"dataset.generate: unknown keys {sorted(extra)}")
        g = dict(g)
        g.setdefault("seed", run_seed)
        ds = {"generate": g}

    schema = ParamSchema.from_list(doc.get("params", []) or
                                   [{"name": "_unused", "kind": "bounded_scalar",
                                     "lo": 0.0, "hi": 1.0}])
    has_params = bool(doc.get("params"))
    init = doc.get("init_raw")
    if init is None:
        init_raw = np.zeros(schema.raw_dim)
    else:
        init_raw = np.asarray([float(v) for v in init], dtype=np.float64)
        if init_raw.shape != (schema.raw_dim,):
            _fail(f"init_raw: expected {schema.raw_dim} values, got {init_raw.shape[0]}")
    comp = doc.get("compare_raw")
    compare_raw = None
    if comp is not None:
        compare_raw = np.asarray([float(v) for v in comp], dtype=np.float64)
        if compare_raw.shape != (schema.raw_dim,):
            _fail(f"compare_raw: expected {schema.raw_dim} values")

    if ("chart" in doc) == ("layout" in doc):
        _fail("exactly one of 'chart' or 'layout' required")
    spec = (_chart_from_json(doc["chart"]) if "chart" in doc
            else _layout_from_json(doc["layout"]))

    goal = _goal_from_json(doc.get("goal"))

    judge_doc = doc.get("judge", {"kind": "overplot"})
    if not isinstance(judge_doc, dict) or judge_doc.get("kind") not in JUDGE_KINDS:
        _fail(f"judge: 'kind' must be one of {JUDGE_KINDS}")

    opt_doc = dict(doc.get("optimizer", {}))
    opt_doc.setdefault("seed", run_seed)
    known = {f.name for f in dataclasses.fields(OptimizerConfig)}
    extra = set(opt_doc) - known
    if extra:
        _fail(f"optimizer: unknown keys {sorted(extra)}")
    optimizer = OptimizerConfig(**opt_doc)

    render_doc = dict(doc.get("render", {}))
    smoothing = float(render_doc.get("smoothing", 0.7))
    marks_only = bool(render_doc.get("marks_only", False))
    pw = doc.get("penalty_weight")
    penalty_weight = None if pw is None else float(pw)

    resolved = {
        "seed": run_seed,
        "threads": run_threads,
        "deterministic": deterministic,
        "output_dir": output_dir,
        "dataset": ds,
        "params": doc.get("params", []),
        "init_raw": [float(v) for v in init_raw],
        "compare_raw": None if compare_raw is None else [float(v) for v in compare_raw],
        ("chart" if "chart" in doc else "layout"):
            doc.get("chart", doc.get("layout")),
        "goal": doc.get("goal"),
        "judge": judge_doc,
        "optimizer": {k: getattr(optimizer, k) for k in sorted(known)},
        "render": {"smoothing": smoothing, "marks_only": marks_only},
        "penalty_weight": penalty_weight,
    }

    return RunConfig(
        doc=resolved, base_dir=base_dir, seed=run_seed, threads=run_threads,
        deterministic=deterministic, output_dir=output_dir, schema=schema,
        has_params=has_params, init_raw=init_raw, compare_raw=compare_raw,
        spec=spec, goal=goal, judge_doc=judge_doc, optimizer=optimizer,
        smoothing=smoothing, marks_only=marks_only, penalty_weight=penalty_weight,
    )


def load_config(path: str, seed: int | None = None, threads: int | None = None) -> RunConfig:
    """Read and parse a JSON config file; paths resolve relative to it."""
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except FileNotFoundError:
        _fail(f"no such config file {path!r}")
    except json.JSONDecodeError as e:
        _fail(f"{path}: invalid JSON ({e})")
    return parse_config(doc, base_dir=os.path.dirname(os.path.abspath(path)),
                        seed=seed, threads=threads)
