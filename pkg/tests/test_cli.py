"""CLI subcommands: artifacts, determinism, exit codes, error lines.

Runs go through main(argv) in-process; one smoke test covers the
installed console script.
"""

import io
import json
import subprocess

import pytest

from vizgrad.cli import main
from vizgrad.dataset import ingest_csv
from vizgrad.image import Image, read_vgimg
from vizgrad.remote import COMPARE_PROMPT, RemoteJudgeConfig, build_request, request_hash


def write_config(tmp_path, doc, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def base_doc(out, **extra):
    doc = {
        "seed": 3,
        "output_dir": out,
        "dataset": {"generate": {"kind": "blobs", "n": 60}},
        "params": [
            {"name": "r", "kind": "bounded_scalar", "lo": 0.5, "hi": 5.0},
            {"name": "al", "kind": "bounded_scalar", "lo": 0.05, "hi": 1.0},
        ],
        "chart": {"x": "x", "y": "y", "size": {"param": "r"},
                  "opacity": {"param": "al"}, "canvas": [64, 48]},
        "judge": {"kind": "ink", "target": 0.2},
        "optimizer": {"kind": "gradient", "max_iters": 6, "eta": 0.2},
    }
    doc.update(extra)
    return doc


def err_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    return json.loads(err[-1])


def test_render_writes_artifacts_and_is_byte_deterministic(tmp_path):
    cfg = write_config(tmp_path, base_doc(str(tmp_path / "a")))
    assert main(["render", "--config", cfg]) == 0
    assert main(["render", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert (d / "resolved.json").is_file()
        assert (d / "chart.png").is_file()
        assert (d / "chart.vgimg").is_file()
    assert (a / "chart.png").read_bytes() == (b / "chart.png").read_bytes()
    assert (a / "chart.vgimg").read_bytes() == (b / "chart.vgimg").read_bytes()
    img = read_vgimg(str(a / "chart.vgimg"))
    assert isinstance(img, Image) and (img.width, img.height) == (64, 48)
    echoed = json.loads((a / "resolved.json").read_text())
    assert echoed["seed"] == 3  # seed never left implicit


def test_optimize_writes_trace_and_summary(tmp_path):
    out = tmp_path / "run"
    cfg = write_config(tmp_path, base_doc(str(out)))
    assert main(["optimize", "--config", cfg]) == 0
    for stem in ("resolved.json", "initial.png", "best.png", "trace.jsonl", "summary.json"):
        assert (out / stem).is_file()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] in ("converged", "iteration_cap", "judge_budget")
    assert summary["judge_calls"] == summary["iterations"] == 6
    assert summary["best_score"] >= summary["initial_score"]
    assert set(summary["hardened_params"]) == {"r", "al"}
    lines = [json.loads(s) for s in (out / "trace.jsonl").read_text().splitlines()]
    assert len(lines) == 6
    assert all("wall_ms" not in rec for rec in lines)  # wall clock is volatile


def test_optimize_is_byte_deterministic_across_runs(tmp_path):
    cfg = write_config(tmp_path, base_doc(str(tmp_path / "o1")))
    assert main(["optimize", "--config", cfg]) == 0
    assert main(["optimize", "--config", cfg, "--out", str(tmp_path / "o2")]) == 0
    for stem in ("best.png", "initial.png", "trace.jsonl", "summary.json"):
        assert (tmp_path / "o1" / stem).read_bytes() == (tmp_path / "o2" / stem).read_bytes()


def test_judge_writes_judgment_and_rejects_comparative(tmp_path, capsys):
    out = tmp_path / "j"
    cfg = write_config(tmp_path, base_doc(str(out)))
    assert main(["judge", "--config", cfg]) == 0
    j = json.loads((out / "judgment.json").read_text())
    assert 0.0 <= j["score"] <= 1.0
    assert (out / "chart.png").is_file()

    comp = base_doc(str(out), judge={"kind": "remote_compare"},
                    goal={"text": "less clutter"})
    cfg2 = write_config(tmp_path, comp, "comp.json")
    assert main(["judge", "--config", cfg2]) == 2
    e = err_line(capsys)
    assert e["error"] == "ValidationError" and "use compare" in e["message"]


def test_compare_requires_compare_raw_and_comparative_judge(tmp_path, capsys):
    cfg = write_config(tmp_path, base_doc(str(tmp_path / "c")))
    assert main(["compare", "--config", cfg]) == 2
    assert "compare_raw" in err_line(capsys)["message"]
    doc = base_doc(str(tmp_path / "c"), compare_raw=[0.5, -0.5])
    cfg2 = write_config(tmp_path, doc, "c2.json")
    assert main(["compare", "--config", cfg2]) == 2
    assert "comparative judge" in err_line(capsys)["message"]


def test_compare_replays_recorded_preferences(tmp_path):
    out = tmp_path / "cmp"
    doc = base_doc(str(out), compare_raw=[1.0, 1.0],
                   judge={"kind": "remote_compare", "model": "viz-judge-1"},
                   goal={"text": "maximize legibility"})
    cfg_path = write_config(tmp_path, doc, "cmp.json")

    # reproduce the two debias requests the CLI will issue, then supply
    # agreeing replies (SECOND, swapped FIRST) through a transcript
    from vizgrad.cli import _render_at
    from vizgrad.config import load_config

    cfg = load_config(cfg_path)
    dataset = cfg.load_dataset()
    img_a, _ = _render_at(cfg, dataset, cfg.init_raw)
    img_b, _ = _render_at(cfg, dataset, cfg.compare_raw)
    prompt = COMPARE_PROMPT.format(goal="maximize legibility")
    rcfg = RemoteJudgeConfig(model="viz-judge-1")
    transcript = tmp_path / "prefs.jsonl"
    lines = [
        {"request_hash": request_hash(build_request(rcfg, prompt, [img_a, img_b])),
         "reply_text": "SECOND"},
        {"request_hash": request_hash(build_request(rcfg, prompt, [img_b, img_a])),
         "reply_text": "FIRST"},
    ]
    transcript.write_text("".join(json.dumps(l) + "\n" for l in lines))

    code = main(["compare", "--config", cfg_path, "--replay",
                 "--transcript", str(transcript)])
    assert code == 0
    pref = json.loads((out / "preference.json").read_text())
    assert pref["choice"] == "second"
    assert (out / "first.png").is_file() and (out / "second.png").is_file()


def test_gradcheck_exit_codes(tmp_path, capsys):
    out = tmp_path / "g"
    cfg = write_config(tmp_path, base_doc(str(out)))
    assert main(["gradcheck", "--config", cfg]) == 0
    report = json.loads((out / "gradcheck.json").read_text())
    assert report["pass"] and report["h"] == 1e-3

    # a huge step defeats the quadratic error bound of central differences
    assert main(["gradcheck", "--config", cfg, "--step", "2.0"]) == 5
    report = json.loads((out / "gradcheck.json").read_text())
    assert not report["pass"]

    no_params = {k: v for k, v in base_doc(str(out)).items() if k != "params"}
    no_params["chart"] = {"x": "x", "y": "y", "canvas": [64, 48]}
    cfg2 = write_config(tmp_path, no_params, "np.json")
    assert main(["gradcheck", "--config", cfg2]) == 2
    assert "nothing to check" in err_line(capsys)["message"]


def test_consistency_report_and_validation(tmp_path, capsys):
    out = tmp_path / "k"
    cfg = write_config(tmp_path, base_doc(str(out)))
    assert main(["consistency", "--config", cfg, "--replicates", "3"]) == 0
    rep = json.loads((out / "consistency.json").read_text())
    assert len(rep["scores"]) == 3 and not rep["incomplete"]
    assert rep["consistency"] == pytest.approx(1.0 - (rep["max"] - rep["min"]))
    assert main(["consistency", "--config", cfg, "--replicates", "1"]) == 2
    assert "2 replicates" in err_line(capsys)["message"]


def test_gen_data_stdout_and_file_round_trip(tmp_path, capsys):
    assert main(["gen-data", "--kind", "correlated", "--n", "40",
                 "--seed", "8", "--rho", "0.6", "--out", "-"]) == 0
    text = capsys.readouterr().out
    d = ingest_csv(io.StringIO(text))
    assert d.n_items == 40 and [a.name for a in d.attributes] == ["x", "y"]

    path = tmp_path / "pts.csv"
    assert main(["gen-data", "--kind", "correlated", "--n", "40",
                 "--seed", "8", "--rho", "0.6", "--out", str(path)]) == 0
    assert path.read_text() == text  # stdout and file agree byte for byte


def test_transcript_flag_exclusivity(tmp_path, capsys):
    cfg = write_config(tmp_path, base_doc(str(tmp_path / "t")))
    assert main(["judge", "--config", cfg, "--transcript", "x.jsonl"]) == 2
    assert "--record or --replay" in err_line(capsys)["message"]
    assert main(["judge", "--config", cfg, "--transcript", "x.jsonl",
                 "--record", "--replay"]) == 2
    assert "mutually exclusive" in err_line(capsys)["message"]


def test_corrupt_dataset_file_is_named_in_error(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n3\n")  # ragged row
    doc = base_doc(str(tmp_path / "x"), dataset={"path": "bad.csv"})
    cfg = write_config(tmp_path, doc, "bad.json")
    assert main(["render", "--config", cfg]) == 2
    e = err_line(capsys)
    assert e["error"] == "DataError" and "bad.csv" in e["message"]


def test_missing_config_and_replay_transcript(tmp_path, capsys):
    assert main(["render", "--config", str(tmp_path / "nope.json")]) == 2
    assert "no such config" in err_line(capsys)["message"]
    doc = base_doc(str(tmp_path / "y"), judge={"kind": "remote_score"},
                   goal={"text": "g"})
    cfg = write_config(tmp_path, doc, "r.json")
    assert main(["judge", "--config", cfg, "--replay",
                 "--transcript", str(tmp_path / "absent.jsonl")]) == 2
    assert "cannot read transcript" in err_line(capsys)["message"]


def test_console_script_smoke():
    proc = subprocess.run(["vizgrad", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "optimize" in proc.stdout
