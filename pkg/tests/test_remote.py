"""Remote-judge protocol: parsing, retry, debias, record/replay.

Every test runs against in-process transports; nothing touches the
network.
"""

import json

import numpy as np
import pytest

from vizgrad.errors import JudgeParseError, JudgeTransportError, ValidationError
from vizgrad.image import Image
from vizgrad.judges import Goal
from vizgrad.remote import (
    CallableTransport,
    RecordingTransport,
    RemoteCompareJudge,
    RemoteJudgeConfig,
    RemoteScoreJudge,
    ReplayTransport,
    build_request,
    parse_preference,
    parse_score,
    request_hash,
    with_transcript,
)

GOAL = Goal(text="declutter the scatter plot")
CFG = RemoteJudgeConfig(retries=2, backoff=0.0, debias=True)


def img(v, shape=(4, 4)):
    return Image(np.full((*shape, 4), v))


def test_parse_score_takes_first_number_in_range():
    assert parse_score("SCORE: 0.73 (was 0.9 before)") == 0.73
    assert parse_score("I rate this 2 out of... actually 0.5") == 0.5
    assert parse_score("1") == 1.0
    with pytest.raises(JudgeParseError) as e:
        parse_score("the chart is lovely")
    assert e.value.raw_reply == "the chart is lovely"
    with pytest.raises(JudgeParseError):
        parse_score("rating: 7/5")  # no candidate within [0, 1]


def test_parse_preference_first_standalone_token():
    assert parse_preference("The FIRST chart is clearer.") == "first"
    assert parse_preference("verdict: second") == "second"
    assert parse_preference("Tie, both equal") == "tie"
    with pytest.raises(JudgeParseError):
        parse_preference("firstly, neither")  # no standalone token


def test_score_judge_parses_via_mock_transport():
    j = RemoteScoreJudge(GOAL, CFG, transport=CallableTransport(lambda r: "score 0.42!"))
    verdict = j.judge(img(0.5))
    assert verdict.score == 0.42
    assert verdict.rationale == "score 0.42!"
    assert j.calls == 1


def test_score_judge_surfaces_parse_failure():
    j = RemoteScoreJudge(GOAL, CFG, transport=CallableTransport(lambda r: "no idea"))
    with pytest.raises(JudgeParseError):
        j.judge(img(0.5))


def test_compare_judge_debias_agreement_and_tie():
    bright = build_request(CFG, "x", [img(0.9)])["images"][0]

    def prefers_bright(request):
        # consistent preference for the bright image in either position
        return "FIRST" if request["images"][0] == bright else "SECOND"

    j = RemoteCompareJudge(GOAL, CFG, transport=CallableTransport(prefers_bright))
    p = j.compare(img(0.9), img(0.1))
    assert p.choice == "first"
    assert j.calls == 2  # both orders asked
    assert j.calls_per_compare == 2

    always_first = RemoteCompareJudge(
        GOAL, CFG, transport=CallableTransport(lambda r: "FIRST")
    )
    # a position-biased judge disagrees with itself under the swap -> tie
    assert always_first.compare(img(0.9), img(0.1)).choice == "tie"

    no_debias = RemoteCompareJudge(
        GOAL,
        RemoteJudgeConfig(retries=0, backoff=0.0, debias=False),
        transport=CallableTransport(lambda r: "FIRST"),
    )
    assert no_debias.compare(img(0.9), img(0.1)).choice == "first"
    assert no_debias.calls_per_compare == 1


def test_transport_retry_then_success():
    state = {"n": 0}

    def flaky(request):
        state["n"] += 1
        if state["n"] < 3:
            raise JudgeTransportError("connection reset")
        return "0.8"

    class FlakyTransport:
        def send(self, request):
            return flaky(request)

    j = RemoteScoreJudge(GOAL, CFG, transport=FlakyTransport())
    assert j.judge(img(0.3)).score == 0.8
    assert state["n"] == 3  # two failures then the third attempt lands


def test_transport_failure_after_retries_exhausted():
    class Dead:
        def send(self, request):
            raise JudgeTransportError("refused")

    j = RemoteScoreJudge(GOAL, CFG, transport=Dead())
    with pytest.raises(JudgeTransportError, match="after 3 attempts"):
        j.judge(img(0.3))


def test_request_hash_is_canonical():
    a = {"model": "m", "prompt": "p", "images": ["zz"]}
    b = {"images": ["zz"], "prompt": "p", "model": "m"}
    assert request_hash(a) == request_hash(b)
    assert request_hash(a) != request_hash({**a, "prompt": "q"})


def test_record_then_replay_round_trip(tmp_path):
    path = str(tmp_path / "transcript.jsonl")
    replies = iter(["0.2", "0.9", "0.2"])
    rec = RecordingTransport(CallableTransport(lambda r: next(replies)), path)
    j = RemoteScoreJudge(GOAL, CFG, transport=rec)
    a, b = img(0.1), img(0.7)
    live = [j.judge(a).score, j.judge(b).score, j.judge(a).score]

    rj = with_transcript(RemoteScoreJudge(GOAL, CFG), path, "replay")
    assert isinstance(rj.transport, ReplayTransport)
    assert rj.cfg.backoff == 0.0
    replayed = [rj.judge(a).score, rj.judge(b).score, rj.judge(a).score]
    # identical requests replay in recorded order (FIFO per hash)
    assert replayed == live == [0.2, 0.9, 0.2]
    with pytest.raises(JudgeTransportError):
        rj.judge(a)  # queue for that request is now empty


def test_replay_misses_unseen_request(tmp_path):
    path = str(tmp_path / "t.jsonl")
    rec = RecordingTransport(CallableTransport(lambda r: "0.5"), path)
    RemoteScoreJudge(GOAL, CFG, transport=rec).judge(img(0.2))
    rj = with_transcript(RemoteScoreJudge(GOAL, CFG), path, "replay")
    with pytest.raises(JudgeTransportError):
        rj.judge(img(0.9))


def test_corrupt_transcript_line_reports_path_and_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    good = json.dumps({"request_hash": "ab", "reply_text": "0.1"})
    path.write_text(good + "\n{not json\n")
    with pytest.raises(ValidationError, match=r"bad\.jsonl:2"):
        ReplayTransport(str(path))
    with pytest.raises(ValidationError):
        ReplayTransport(str(tmp_path / "absent.jsonl"))
    with pytest.raises(ValidationError):
        with_transcript(RemoteScoreJudge(GOAL, CFG), str(path), "rewind")


def test_judge_many_preserves_request_order():
    def scored(request):
        return f"score {request['prompt'].count('x') / 10 + len(request['images'][0]) % 2}"

    # deterministic per-image replies keyed by payload size
    def by_payload(request):
        return "0.25" if len(request["images"][0]) % 2 == 0 else "0.75"

    cfg = RemoteJudgeConfig(retries=0, backoff=0.0, concurrency=3)
    j = RemoteScoreJudge(GOAL, cfg, transport=CallableTransport(by_payload))
    imgs = [img(0.1, (3, 3)), img(0.6, (5, 5)), img(0.9, (3, 3)), img(0.2, (5, 5))]
    want = [by_payload(build_request(cfg, "p", [im])) for im in imgs]
    got = [f"{v.score}" for v in j.judge_many(imgs)]
    assert got == want
    assert j.calls == 4


def test_config_requires_endpoint_when_live():
    cfg = RemoteJudgeConfig(url=None)
    with pytest.raises(ValidationError, match="VIZGRAD_JUDGE_URL"):
        cfg.resolved_url()
