"""Differentiable chart rendering with judge-driven parameter search.

A chart is a differentiable function of a raw parameter vector: raw
values pass through constraint maps, data encodings, a colormap, and a
soft rasterizer, giving pixels whose gradients flow back to every
parameter.  Judges score images (analytically, or through a remote
text-model protocol) and optimizers push the parameters toward the
goal using those gradients, scalar scores, or pairwise preferences.
"""

from .chart import (
    ChartSpec,
    ColorEncoding,
    Colormap,
    EncodingMap,
    Layout,
    View,
    validate_spec,
)
from .config import RunConfig, load_config, parse_config
from .datagen import correlated_pairs, gaussian_blobs, generate, uniform_noise
from .dataset import (
    Attribute,
    Dataset,
    bootstrap_resample,
    ingest_csv,
    serialize_csv,
)
from .errors import (
    DataError,
    JudgeError,
    JudgeParseError,
    JudgeTransportError,
    NumericError,
    ValidationError,
    VizgradError,
)
from .image import Image, encode_png, read_vgimg, write_vgimg
from .judges import (
    ContrastJudge,
    Goal,
    InkJudge,
    Judgment,
    OverplotJudge,
    Preference,
    judge_contrast,
    judge_ink,
    judge_overplot,
    mock_comparative_from_scalar,
    overplot_fraction,
)
from .optim import (
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
from .params import (
    ParamSchema,
    ParamSpec,
    ParamVector,
    RealizedParams,
    bounded_scalar,
    bounded_vector,
    categorical,
    constrain,
    constrain_vjp,
    gumbel_noise,
    harden,
    ordered_pair,
    positive_scalar,
    unconstrain,
    unit_interval_vector,
)
from .remote import (
    RemoteCompareJudge,
    RemoteJudgeConfig,
    RemoteScoreJudge,
    parse_preference,
    parse_score,
    with_transcript,
)
from .render import (
    eval_encoding,
    layout_penalty,
    layout_penalty_vjp,
    render,
    render_vjp,
    render_with_vjp,
)
from .rng import StreamRng, derive_key, derive_seed

__version__ = "0.1.0"

__all__ = [
    "Attribute",
    "ChartSpec",
    "ColorEncoding",
    "Colormap",
    "ContrastJudge",
    "DataError",
    "Dataset",
    "EncodingMap",
    "Goal",
    "Image",
    "InkJudge",
    "Judgment",
    "JudgeError",
    "JudgeParseError",
    "JudgeTransportError",
    "Layout",
    "NumericError",
    "Objective",
    "OptimizerConfig",
    "OverplotJudge",
    "ParamSchema",
    "ParamSpec",
    "ParamVector",
    "Preference",
    "RealizedParams",
    "RemoteCompareJudge",
    "RemoteJudgeConfig",
    "RemoteScoreJudge",
    "RunConfig",
    "StreamRng",
    "Trace",
    "TraceRecord",
    "ValidationError",
    "View",
    "VizgradError",
    "bootstrap_resample",
    "bounded_scalar",
    "bounded_vector",
    "categorical",
    "constrain",
    "constrain_vjp",
    "correlated_pairs",
    "derive_key",
    "derive_seed",
    "encode_png",
    "eval_encoding",
    "evaluate_consistency",
    "gaussian_blobs",
    "generate",
    "gradcheck",
    "gumbel_noise",
    "harden",
    "ingest_csv",
    "judge_contrast",
    "judge_ink",
    "judge_overplot",
    "layout_penalty",
    "layout_penalty_vjp",
    "load_config",
    "mock_comparative_from_scalar",
    "optimize_comparative",
    "optimize_gradient",
    "optimize_spsa",
    "ordered_pair",
    "overplot_fraction",
    "parse_config",
    "parse_preference",
    "parse_score",
    "positive_scalar",
    "read_vgimg",
    "render",
    "render_vjp",
    "render_with_vjp",
    "serialize_csv",
    "unconstrain",
    "unit_interval_vector",
    "uniform_noise",
    "validate_spec",
    "with_transcript",
    "write_vgimg",
]
