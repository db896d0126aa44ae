"""Visualization judges: (image, goal) -> judgment.

Three families share one interface.  Analytic judges are differentiable
surrogates that return an exact per-pixel gradient alongside the score,
so gradient optimizers can run end to end.  Remote judges (see the
remote module) return scores or preferences parsed from a model's text
reply.  Mock judges wrap plain functions for deterministic tests and
zeroth-order optimizer fixtures.

A judge object advertises two capability flags: ``differentiable`` (its
Judgment carries pixel_gradient) and ``comparative`` (it implements
compare(a, b) -> Preference instead of judge(img) -> Judgment).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ValidationError
from .image import Image

__all__ = [
    "Goal",
    "Judgment",
    "Preference",
    "OverplotJudge",
    "InkJudge",
    "ContrastJudge",
    "ScalarComparativeJudge",
    "FunctionScoreJudge",
    "RawFunctionJudge",
    "RawComparativeJudge",
    "judge_overplot",
    "judge_ink",
    "judge_contrast",
    "mock_comparative_from_scalar",
]

GOAL_KINDS = ("pattern", "aesthetic", "task")


@dataclass(frozen=True)
class Goal:
    """What the user wants, in words, plus optional numeric targets."""

    text: str
    kind: str = "pattern"
    targets: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.text:
            raise ValidationError("goal text must be non-empty")
        if self.kind not in GOAL_KINDS:
            raise ValidationError(f"goal kind must be one of {GOAL_KINDS}")


@dataclass(frozen=True)
class Judgment:
    """A judge's verdict on one image.

    ``score`` is in [0, 1] unless ``log_density`` marks it as an
    unnormalized log-density.  ``pixel_gradient`` (same shape as the
    image) is present exactly when the judge is differentiable.
    """

    score: float
    pixel_gradient: np.ndarray | None = None
    rationale: str | None = None
    log_density: bool = False

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValidationError("judgment score must be finite")
        if not self.log_density and not 0.0 <= self.score <= 1.0:
            raise ValidationError("scoring judgment must lie in [0, 1]")


@dataclass(frozen=True)
class Preference:
    """Pairwise verdict: which of two images serves the goal better."""

    choice: str  # {"first", "second", "tie"}
    confidence: float | None = None
    rationale: str | None = None

    def __post_init__(self):
        if self.choice not in ("first", "second", "tie"):
            raise ValidationError("preference must be first, second, or tie")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValidationError("preference confidence must lie in [0, 1]")


def _grad_template(img: Image) -> np.ndarray:
    return np.zeros((img.height, img.width, 4))


def judge_overplot(img: Image, threshold: float = 0.9, sharpness: float = 50.0) -> Judgment:
    """Penalize saturated pixels: overplot fraction is the smooth share of
    pixels whose alpha exceeds the threshold; score = 1 - fraction."""
    if not 0.0 < threshold < 1.0:
        raise ValidationError("overplot threshold must lie in (0, 1)")
    a = img.alpha()
    sig = expit(sharpness * (a - threshold))
    f = float(np.mean(sig))
    grad = _grad_template(img)
    grad[:, :, 3] = -sharpness * sig * (1.0 - sig) / a.size
    return Judgment(score=1.0 - f, pixel_gradient=grad)


def overplot_fraction(img: Image, threshold: float = 0.9, sharpness: float = 50.0) -> float:
    return 1.0 - judge_overplot(img, threshold, sharpness).score


def judge_ink(img: Image, target: float = 0.5) -> Judgment:
    """Gaussian preference for a target mean-alpha (ink) fraction."""
    if not 0.0 < target < 1.0:
        raise ValidationError("ink target must lie in (0, 1)")
    rho = float(np.mean(img.alpha()))
    score = float(np.exp(-((rho - target) ** 2) / 0.02))
    grad = _grad_template(img)
    grad[:, :, 3] = score * (-2.0 * (rho - target) / 0.02) / img.alpha().size
    return Judgment(score=score, pixel_gradient=grad)


def judge_contrast(img: Image, background=(1.0, 1.0, 1.0)) -> Judgment:
    """Reward alpha-weighted RGB distance from the background, squashed
    into [0, 1) by tanh(mean/0.5); exact gradient in all channels."""
    bg = np.asarray(background, dtype=np.float64)
    if bg.shape != (3,) or bg.min() < 0 or bg.max() > 1:
        raise ValidationError("background must be 3 channels in [0, 1]")
    px = img.pixels
    diff = px[:, :, :3] - bg[None, None, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    a = px[:, :, 3]
    m = float(np.mean(a * dist))
    th = np.tanh(m / 0.5)
    dm = (1.0 - th * th) / 0.5 / a.size
    grad = _grad_template(img)
    grad[:, :, 3] = dm * dist
    safe = np.where(dist > 0.0, dist, 1.0)
    grad[:, :, :3] = (dm * a / safe)[:, :, None] * diff  # zero at dist == 0
    return Judgment(score=float(th), pixel_gradient=grad)


class OverplotJudge:
    """Differentiable scoring judge around judge_overplot."""

    differentiable = True
    comparative = False

    def __init__(self, threshold: float = 0.9, sharpness: float = 50.0):
        self.threshold = float(threshold)
        self.sharpness = float(sharpness)

    def judge(self, img: Image) -> Judgment:
        return judge_overplot(img, self.threshold, self.sharpness)


class InkJudge:
    differentiable = True
    comparative = False

    def __init__(self, target: float = 0.5):
        self.target = float(target)

    def judge(self, img: Image) -> Judgment:
        return judge_ink(img, self.target)


class ContrastJudge:
    differentiable = True
    comparative = False

    def __init__(self, background=(1.0, 1.0, 1.0)):
        self.background = tuple(float(v) for v in background)

    def judge(self, img: Image) -> Judgment:
        return judge_contrast(img, self.background)


class FunctionScoreJudge:
    """Scoring judge from a plain function over images (test double for
    the zeroth-order optimizers; non-differentiable by construction)."""

    differentiable = False
    comparative = False

    def __init__(self, fn):
        self.fn = fn

    def judge(self, img: Image) -> Judgment:
        return Judgment(score=float(self.fn(img)))


class ScalarComparativeJudge:
    """Comparative judge induced by a scalar function: first/second by
    sign of f(A) - f(B), tie within tie_eps.  Transitive by construction
    and deterministic, so it doubles as the comparative-optimizer oracle.
    The underlying scalar is exposed via score() for trace columns."""

    differentiable = False
    comparative = True

    def __init__(self, fn, tie_eps: float = 0.0):
        if tie_eps < 0:
            raise ValidationError("tie_eps must be >= 0")
        self.fn = fn
        self.tie_eps = float(tie_eps)

    def score(self, img: Image) -> float:
        return float(self.fn(img))

    def judge(self, img: Image) -> Judgment:
        return Judgment(score=min(max(self.score(img), 0.0), 1.0))

    def compare(self, a: Image, b: Image) -> Preference:
        da, db = self.score(a), self.score(b)
        if abs(da - db) <= self.tie_eps:
            return Preference("tie")
        return Preference("first" if da > db else "second")


def mock_comparative_from_scalar(fn, tie_eps: float = 0.0) -> ScalarComparativeJudge:
    """Build a deterministic comparative judge from a scalar image
    functional; ties when |f(A) - f(B)| <= tie_eps."""
    return ScalarComparativeJudge(fn, tie_eps)


class RawFunctionJudge:
    """Scoring judge over raw parameter vectors instead of images.

    Optimizers detect the on_raw flag and skip rendering, so closed-form
    objectives can exercise the update rules exactly.  Differentiable
    only when a gradient function is supplied.
    """

    comparative = False
    on_raw = True

    def __init__(self, fn, grad=None):
        self.fn = fn
        self.grad = grad
        self.calls = 0

    @property
    def differentiable(self) -> bool:
        return self.grad is not None

    def judge_raw(self, u: np.ndarray) -> tuple[float, np.ndarray | None]:
        self.calls += 1
        u = np.asarray(u, dtype=np.float64)
        g = None if self.grad is None else np.asarray(self.grad(u), dtype=np.float64)
        return float(self.fn(u)), g


class RawComparativeJudge:
    """Comparative judge over raw vectors by an underlying scalar; the
    on_raw flag makes optimizers skip rendering.  Transitive and
    deterministic, with the scalar exposed via score_raw()."""

    differentiable = False
    comparative = True
    on_raw = True
    calls_per_compare = 1

    def __init__(self, fn, tie_eps: float = 0.0):
        if tie_eps < 0:
            raise ValidationError("tie_eps must be >= 0")
        self.fn = fn
        self.tie_eps = float(tie_eps)
        self.comparisons = 0

    def score_raw(self, u: np.ndarray) -> float:
        return float(self.fn(np.asarray(u, dtype=np.float64)))

    def compare_raw(self, a: np.ndarray, b: np.ndarray) -> Preference:
        self.comparisons += 1
        da, db = self.score_raw(a), self.score_raw(b)
        if abs(da - db) <= self.tie_eps:
            return Preference("tie")
        return Preference("first" if da > db else "second")
