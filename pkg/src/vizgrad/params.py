"""The searchable design space: raw vectors and constrained realizations.

Optimizers operate on an unconstrained raw vector.  ``constrain`` maps it
through smooth bijections (logistic squashing for bounds, nested logistic
for ordered pairs, softplus for positive scalars) and through the
Gumbel-Softmax relaxation for categorical choices, producing the realized
values the rasterizer consumes.  ``constrain_vjp`` is the exact reverse
pass of the soft-mode map; ``unconstrain`` inverts interior realizations
so optimization can start from a user-given design.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, log_expit, logit

from .errors import ValidationError
from .rng import StreamRng

__all__ = [
    "ParamSpec",
    "ParamSchema",
    "ParamVector",
    "RealizedParams",
    "bounded_scalar",
    "bounded_vector",
    "ordered_pair",
    "unit_interval_vector",
    "positive_scalar",
    "categorical",
    "constrain",
    "unconstrain",
    "constrain_vjp",
    "harden",
    "gumbel_noise",
]

KINDS = (
    "bounded_scalar",
    "bounded_vector",
    "ordered_pair",
    "unit_interval_vector",
    "positive_scalar",
    "categorical",
)

SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class ParamSpec:
    """One named entry of the design space."""

    name: str
    kind: str
    lo: float = 0.0
    hi: float = 1.0
    length: int = 1
    num_options: int = 2
    temperature: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"{self.name!r}: unknown param kind {self.kind!r}")
        if self.kind in ("bounded_scalar", "bounded_vector", "ordered_pair"):
            if not (np.isfinite(self.lo) and np.isfinite(self.hi) and self.lo < self.hi):
                raise ValidationError(f"{self.name!r}: need lo < hi")
        if self.kind in ("bounded_vector", "unit_interval_vector") and self.length < 1:
            raise ValidationError(f"{self.name!r}: length must be >= 1")
        if self.kind == "categorical":
            if self.num_options < 2:
                raise ValidationError(f"{self.name!r}: num_options must be >= 2")
            if not self.temperature > 0:
                raise ValidationError(f"{self.name!r}: temperature must be > 0")

    @property
    def raw_dim(self) -> int:
        """Raw scalar coordinates this spec contributes."""
        if self.kind in ("bounded_scalar", "positive_scalar"):
            return 1
        if self.kind == "ordered_pair":
            return 2
        if self.kind == "categorical":
            return self.num_options
        return self.length

    def to_dict(self) -> dict:
        d: dict = {"name": self.name, "kind": self.kind}
        if self.kind in ("bounded_scalar", "bounded_vector", "ordered_pair"):
            d["lo"], d["hi"] = self.lo, self.hi
        if self.kind in ("bounded_vector", "unit_interval_vector"):
            d["len"] = self.length
        if self.kind == "categorical":
            d["num_options"] = self.num_options
            d["temperature"] = self.temperature
        return d

    @staticmethod
    def from_dict(d: dict) -> "ParamSpec":
        kind = d.get("kind")
        if kind not in KINDS:
            raise ValidationError(f"param entry {d.get('name')!r}: unknown kind {kind!r}")
        return ParamSpec(
            name=d["name"],
            kind=kind,
            lo=float(d.get("lo", 0.0)),
            hi=float(d.get("hi", 1.0)),
            length=int(d.get("len", 1)),
            num_options=int(d.get("num_options", 2)),
            temperature=float(d.get("temperature", 0.5)),
        )


def bounded_scalar(name: str, lo: float, hi: float) -> ParamSpec:
    return ParamSpec(name, "bounded_scalar", lo=lo, hi=hi)


def bounded_vector(name: str, lo: float, hi: float, length: int) -> ParamSpec:
    return ParamSpec(name, "bounded_vector", lo=lo, hi=hi, length=length)


def ordered_pair(name: str, lo: float, hi: float) -> ParamSpec:
    return ParamSpec(name, "ordered_pair", lo=lo, hi=hi)


def unit_interval_vector(name: str, length: int) -> ParamSpec:
    return ParamSpec(name, "unit_interval_vector", length=length)


def positive_scalar(name: str) -> ParamSpec:
    return ParamSpec(name, "positive_scalar")


def categorical(name: str, num_options: int, temperature: float = 0.5) -> ParamSpec:
    return ParamSpec(name, "categorical", num_options=num_options, temperature=temperature)


@dataclass(frozen=True)
class ParamSchema:
    """Ordered collection of ParamSpecs with a fixed raw layout."""

    specs: tuple[ParamSpec, ...]

    def __post_init__(self):
        names = [s.name for s in self.specs]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate parameter names")
        if self.raw_dim < 1:
            raise ValidationError("schema raw dimension must be >= 1")

    @property
    def raw_dim(self) -> int:
        return sum(s.raw_dim for s in self.specs)

    def slices(self) -> dict[str, slice]:
        out: dict[str, slice] = {}
        off = 0
        for s in self.specs:
            out[s.name] = slice(off, off + s.raw_dim)
            off += s.raw_dim
        return out

    def spec(self, name: str) -> ParamSpec:
        for s in self.specs:
            if s.name == name:
                return s
        raise ValidationError(f"no parameter named {name!r}")

    def has(self, name: str) -> bool:
        return any(s.name == name for s in self.specs)

    def scale_temperatures(self, scale: float, floor: float = 0.05) -> "ParamSchema":
        """Schema copy with each categorical temperature set to
        max(temperature * scale, floor)."""
        specs = tuple(
            replace(s, temperature=max(s.temperature * scale, floor))
            if s.kind == "categorical"
            else s
            for s in self.specs
        )
        return ParamSchema(specs)

    def to_list(self) -> list[dict]:
        return [s.to_dict() for s in self.specs]

    @staticmethod
    def from_list(entries: list[dict]) -> "ParamSchema":
        return ParamSchema(tuple(ParamSpec.from_dict(e) for e in entries))


@dataclass(frozen=True)
class ParamVector:
    """A point in raw (unconstrained) space."""

    schema: ParamSchema
    raw: np.ndarray = field(repr=False)

    def __post_init__(self):
        raw = np.asarray(self.raw, dtype=np.float64)
        if raw.shape != (self.schema.raw_dim,):
            raise ValidationError(
                f"raw length {raw.shape} does not match schema dim {self.schema.raw_dim}"
            )
        if not np.all(np.isfinite(raw)):
            raise ValidationError("raw vector contains non-finite values")
        object.__setattr__(self, "raw", raw)

    @staticmethod
    def zeros(schema: ParamSchema) -> "ParamVector":
        return ParamVector(schema, np.zeros(schema.raw_dim))


@dataclass(frozen=True)
class RealizedParams:
    """Constrained values keyed by spec name.

    Per kind: float (bounded/positive scalar), ndarray (vectors, ordered
    pair as [a, b]), ndarray of simplex weights (soft categorical), or int
    option index (hard categorical).
    """

    schema: ParamSchema
    values: dict[str, object]

    def __getitem__(self, name: str):
        return self.values[name]

    def is_hard(self, name: str) -> bool:
        return isinstance(self.values[name], (int, np.integer))

    def validate(self) -> None:
        """Check the realized-value invariants; raises ValidationError."""
        for s in self.schema.specs:
            v = self.values[s.name]
            if s.kind in ("bounded_scalar", "bounded_vector"):
                arr = np.atleast_1d(np.asarray(v, dtype=np.float64))
                if np.any(arr < s.lo) or np.any(arr > s.hi):
                    raise ValidationError(f"{s.name!r}: value outside [{s.lo}, {s.hi}]")
            elif s.kind == "ordered_pair":
                a, b = np.asarray(v, dtype=np.float64)
                if not (s.lo <= a <= b <= s.hi):
                    raise ValidationError(f"{s.name!r}: need lo <= a <= b <= hi")
            elif s.kind == "unit_interval_vector":
                arr = np.asarray(v, dtype=np.float64)
                if np.any(arr < 0.0) or np.any(arr > 1.0):
                    raise ValidationError(f"{s.name!r}: value outside [0, 1]")
            elif s.kind == "positive_scalar":
                if not float(v) > 0.0:
                    raise ValidationError(f"{s.name!r}: value must be > 0")
            elif s.kind == "categorical":
                if isinstance(v, (int, np.integer)):
                    if not 0 <= int(v) < s.num_options:
                        raise ValidationError(f"{s.name!r}: index out of range")
                else:
                    w = np.asarray(v, dtype=np.float64)
                    if w.shape != (s.num_options,):
                        raise ValidationError(f"{s.name!r}: weight length mismatch")
                    if np.any(w <= 0.0) or abs(float(w.sum()) - 1.0) > SIMPLEX_TOL:
                        raise ValidationError(f"{s.name!r}: weights not a positive simplex")


def gumbel_noise(schema: ParamSchema, seed: int, counter: int = 0) -> dict[str, np.ndarray]:
    """Standard Gumbel(0,1) noise for every categorical spec, keyed by name.

    Draws come from the ``gumbel`` stream at the given counter, one
    sub-counter per categorical, so schemas with several choices get
    independent noise.
    """
    rng = StreamRng(seed)
    out: dict[str, np.ndarray] = {}
    k = 0
    for s in schema.specs:
        if s.kind == "categorical":
            out[s.name] = rng.gumbel(f"gumbel.{k}", counter, s.num_options)
            k += 1
    return out


def _noise_for(spec: ParamSpec, noise: dict[str, np.ndarray] | None) -> np.ndarray:
    if noise is None or spec.name not in noise:
        return np.zeros(spec.num_options)
    g = np.asarray(noise[spec.name], dtype=np.float64)
    if g.shape != (spec.num_options,):
        raise ValidationError(f"{spec.name!r}: noise length mismatch")
    return g


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def constrain(
    p: ParamVector,
    mode: str = "soft",
    noise: dict[str, np.ndarray] | None = None,
    seed: int | None = None,
) -> RealizedParams:
    """Map a raw vector to realized values.

    Categorical entries become simplex weights (``soft``) or argmax
    indices (``hard``).  Gumbel noise is taken from ``noise`` if given,
    else drawn from ``seed``, else zero.  Deterministic given
    (p, mode, noise/seed).
    """
    if mode not in ("soft", "hard"):
        raise ValidationError(f"unknown mode {mode!r}")
    if noise is None and seed is not None:
        noise = gumbel_noise(p.schema, seed)
    values: dict[str, object] = {}
    sl = p.schema.slices()
    for s in p.schema.specs:
        u = p.raw[sl[s.name]]
        if s.kind == "bounded_scalar":
            values[s.name] = float(s.lo + (s.hi - s.lo) * expit(u[0]))
        elif s.kind == "bounded_vector":
            values[s.name] = s.lo + (s.hi - s.lo) * expit(u)
        elif s.kind == "ordered_pair":
            a = s.lo + (s.hi - s.lo) * expit(u[0])
            b = a + (s.hi - a) * expit(u[1])
            values[s.name] = np.array([a, b])
        elif s.kind == "unit_interval_vector":
            values[s.name] = expit(u)
        elif s.kind == "positive_scalar":
            # softplus, overflow-safe
            values[s.name] = float(-log_expit(-u[0]))
        elif s.kind == "categorical":
            z = u + _noise_for(s, noise)
            if mode == "hard":
                values[s.name] = int(np.argmax(z))
            else:
                values[s.name] = _softmax(z / s.temperature)
    return RealizedParams(p.schema, values)


def harden(r: RealizedParams) -> RealizedParams:
    """Commit every soft categorical to the index of its largest weight
    (ties break to the lowest index); continuous values pass through.
    Idempotent."""
    values = dict(r.values)
    for s in r.schema.specs:
        if s.kind == "categorical" and not r.is_hard(s.name):
            values[s.name] = int(np.argmax(r.values[s.name]))
    return RealizedParams(r.schema, values)


def unconstrain(r: RealizedParams) -> ParamVector:
    """Invert ``constrain`` for strictly interior realizations.

    Boundary values and hard categorical indices are rejected: the
    logistic inverse is undefined there.  Soft categorical weights map to
    mean-zero logits, the canonical preimage.
    """
    raw = np.empty(r.schema.raw_dim)
    sl = r.schema.slices()
    for s in r.schema.specs:
        v = r.values[s.name]
        dst = sl[s.name]
        if s.kind == "bounded_scalar":
            raw[dst] = _interior_logit(float(v), s.lo, s.hi, s.name)
        elif s.kind == "bounded_vector":
            arr = np.asarray(v, dtype=np.float64)
            raw[dst] = [_interior_logit(x, s.lo, s.hi, s.name) for x in arr]
        elif s.kind == "ordered_pair":
            a, b = np.asarray(v, dtype=np.float64)
            u1 = _interior_logit(a, s.lo, s.hi, s.name)
            u2 = _interior_logit(b, a, s.hi, s.name)
            raw[dst] = [u1, u2]
        elif s.kind == "unit_interval_vector":
            arr = np.asarray(v, dtype=np.float64)
            raw[dst] = [_interior_logit(x, 0.0, 1.0, s.name) for x in arr]
        elif s.kind == "positive_scalar":
            x = float(v)
            if not x > 0.0:
                raise ValidationError(f"{s.name!r}: positive scalar must be > 0")
            # inverse softplus; for large x, expm1 ~ exp and log gives x back
            raw[dst] = float(np.log(np.expm1(x))) if x < 30 else x
        elif s.kind == "categorical":
            if r.is_hard(s.name):
                raise ValidationError(f"{s.name!r}: hard index is not invertible")
            w = np.asarray(v, dtype=np.float64)
            if np.any(w <= 0.0) or abs(float(w.sum()) - 1.0) > SIMPLEX_TOL:
                raise ValidationError(f"{s.name!r}: weights must be a strictly positive simplex")
            logw = np.log(w)
            raw[dst] = s.temperature * (logw - logw.mean())
    return ParamVector(r.schema, raw)


def _interior_logit(x: float, lo: float, hi: float, name: str) -> float:
    t = (x - lo) / (hi - lo)
    if not 0.0 < t < 1.0:
        raise ValidationError(f"{name!r}: value {x} not strictly inside ({lo}, {hi})")
    return float(logit(t))


def constrain_vjp(
    p: ParamVector,
    cotangent: dict[str, object],
    mode: str = "soft",
    noise: dict[str, np.ndarray] | None = None,
    seed: int | None = None,
    straight_through: bool = False,
) -> np.ndarray:
    """Exact vector-Jacobian product of the soft-mode ``constrain``.

    ``cotangent`` holds upstream gradients keyed by spec name, shaped like
    the realized values (categorical entries are length-K vectors over the
    weights); missing entries count as zero.  Hard mode has no gradient
    unless ``straight_through`` is set, in which case the backward pass
    uses the soft softmax Jacobian at the same logits and noise.
    """
    if mode == "hard" and not straight_through:
        raise ValidationError("hard mode is non-differentiable without straight_through")
    if noise is None and seed is not None:
        noise = gumbel_noise(p.schema, seed)
    grad = np.zeros(p.schema.raw_dim)
    sl = p.schema.slices()
    for s in p.schema.specs:
        c = cotangent.get(s.name)
        if c is None:
            continue
        u = p.raw[sl[s.name]]
        dst = sl[s.name]
        if s.kind == "bounded_scalar":
            sig = expit(u[0])
            grad[dst] = float(np.asarray(c)) * (s.hi - s.lo) * sig * (1.0 - sig)
        elif s.kind == "bounded_vector":
            sig = expit(u)
            grad[dst] = np.asarray(c, dtype=np.float64) * (s.hi - s.lo) * sig * (1.0 - sig)
        elif s.kind == "ordered_pair":
            ca, cb = np.asarray(c, dtype=np.float64)
            s1, s2 = expit(u[0]), expit(u[1])
            a = s.lo + (s.hi - s.lo) * s1
            gu1 = (ca + cb * (1.0 - s2)) * (s.hi - s.lo) * s1 * (1.0 - s1)
            gu2 = cb * (s.hi - a) * s2 * (1.0 - s2)
            grad[dst] = [gu1, gu2]
        elif s.kind == "unit_interval_vector":
            sig = expit(u)
            grad[dst] = np.asarray(c, dtype=np.float64) * sig * (1.0 - sig)
        elif s.kind == "positive_scalar":
            grad[dst] = float(np.asarray(c)) * expit(u[0])
        elif s.kind == "categorical":
            cw = np.asarray(c, dtype=np.float64)
            w = _softmax((u + _noise_for(s, noise)) / s.temperature)
            # d w_k / d u_j = w_k (delta_kj - w_j) / tau
            grad[dst] = w * (cw - float(cw @ w)) / s.temperature
    return grad
