"""Differentiable scatter rasterizer and its reverse pass.

Every output pixel is a smooth function of the raw parameters.  Marks are
soft discs: coverage sigma((radius - dist)/s) times a C1 window that is
identically 1 out to radius + 4s and exactly 0 beyond radius + 6s, so a
mark has strictly local support.  Per-pixel alpha composites
order-independently as A = 1 - prod(1 - alpha*c_i); color is the
alpha-coverage-weighted mean of mark colors over the background.  Chart
furniture (frame and ticks) is drawn from smooth separable rectangles;
its strokes carry no parameters of their own but do follow the view
rectangle, so layout gradients stay exact.

The reverse pass (render_vjp) re-walks the same primitives, gathering
cotangents from the composited accumulators, and hands per-parameter
gradients to the constraint layer.  No autodiff framework is involved.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.special import expit

from .chart import ChartSpec, ColorEncoding, EncodingMap, Layout, View, validate_spec
from .dataset import Dataset
from .errors import NumericError, ValidationError
from .image import Image
from .params import ParamVector, RealizedParams, constrain, constrain_vjp

__all__ = [
    "render",
    "render_vjp",
    "render_with_vjp",
    "eval_encoding",
    "layout_penalty",
    "layout_penalty_vjp",
    "SMOOTHING_DEFAULT",
]

SMOOTHING_DEFAULT = 0.7
MARGIN_FRAC = 0.12
EPS_D = 1e-12  # inside sqrt: keeps dist differentiable at the mark center
EPS_W = 1e-12  # color-average denominator guard
AC_CAP = 1.0 - 1e-12  # keeps log1p(-ac) finite at alpha = coverage = 1

FRAME_ALPHA = 0.9
FRAME_COLOR = np.array([0.15, 0.15, 0.15])
STROKE_HALF = 0.6  # px half-width of frame strokes
STROKE_SMOOTH = 0.5  # px edge smoothness of strokes
TICK_POSITIONS = (0.2, 0.4, 0.6, 0.8)
TICK_LEN = 3.0  # px

# pairwise view-overlap penalty: LogSumExp interval smoothing + C1 hinge
OVERLAP_BETA = 2.0e4
OVERLAP_HINGE = 2.0e-4

CHUNK = 512  # marks per rasterization job (memory bound + thread unit)

# luminance/chroma -> linear RGB (rows R,G,B; columns L,u,v)
LUV_TO_RGB = np.array(
    [
        [1.0, 0.0, 1.13983],
        [1.0, -0.39465, -0.58060],
        [1.0, 2.03211, 0.0],
    ]
)


def _as_layout(spec: ChartSpec | Layout) -> Layout:
    if isinstance(spec, Layout):
        return spec
    return Layout(
        views=(View(chart=spec, rect=(0.5, 0.5, 1.0, 1.0)),),
        canvas=spec.canvas,
        background=spec.background,
        overlap_weight=0.0,
    )


# ---------------------------------------------------------------------------
# encoding evaluation (shared by every channel that maps data to visuals)


def _poly_and_derivative(theta: np.ndarray, t: np.ndarray):
    tpow = t[:, None] ** np.arange(len(theta))[None, :]
    poly = tpow @ theta
    if len(theta) > 1:
        dpoly_dt = tpow[:, :-1] @ (theta[1:] * np.arange(1, len(theta)))
    else:
        dpoly_dt = np.zeros_like(t)
    return tpow, poly, dpoly_dt


def _enc_ctx(enc: EncodingMap, d: Dataset, r: RealizedParams, what: str) -> dict:
    """Evaluate an encoding over the whole dataset, keeping intermediates."""
    n = d.n_items
    ctx: dict = {"enc": enc, "what": what, "n": n}
    if enc.attr is not None:
        val = d.column(enc.attr)
        a = d.attribute(enc.attr)
        default_domain = (a.observed_min, a.observed_max)
    else:
        norms = []
        for name in enc.attr_options:
            a = d.attribute(name)
            span = a.observed_max - a.observed_min
            if span < 1e-9:
                raise NumericError(f"{what}: attribute {name!r} has degenerate extent")
            norms.append((d.column(name) - a.observed_min) / span)
        norms_m = np.stack(norms)  # (K, N)
        wv = r[enc.attr_choice]
        if isinstance(wv, (int, np.integer)):
            w = np.zeros(norms_m.shape[0])
            w[int(wv)] = 1.0
        else:
            w = np.asarray(wv, dtype=np.float64)
        val = w @ norms_m
        ctx["norms"] = norms_m
        default_domain = (0.0, 1.0)

    if isinstance(enc.domain, str):
        d_lo, d_hi = np.asarray(r[enc.domain], dtype=np.float64)
        ctx["domain_param"] = enc.domain
    elif enc.domain is not None:
        d_lo, d_hi = float(enc.domain[0]), float(enc.domain[1])
    else:
        d_lo, d_hi = default_domain
    span = d_hi - d_lo
    if span < 1e-9:
        raise NumericError(f"{what}: degenerate encoding domain (width {span:g})")

    t_raw = (val - d_lo) / span
    t = expit(4.0 * (t_raw - 0.5))

    if isinstance(enc.coeffs, str):
        theta = np.asarray(r[enc.coeffs], dtype=np.float64)
        ctx["coeff_param"] = enc.coeffs
    else:
        theta = np.asarray(enc.coeffs, dtype=np.float64)
    tpow, poly, dpoly_dt = _poly_and_derivative(theta, t)
    spoly = expit(poly)

    rr = enc.out_range
    if isinstance(rr, str):
        r_lo, r_hi = np.asarray(r[rr], dtype=np.float64)
        ctx["range_pair_param"] = rr
    elif len(rr) == 2 and all(isinstance(v, str) for v in rr):
        r_lo, r_hi = float(r[rr[0]]), float(r[rr[1]])
        ctx["range_scalar_params"] = (rr[0], rr[1])
    else:
        r_lo, r_hi = float(rr[0]), float(rr[1])

    ctx.update(
        val=val, d_lo=d_lo, d_hi=d_hi, span=span, t_raw=t_raw, t=t,
        theta=theta, tpow=tpow, poly=poly, dpoly_dt=dpoly_dt, spoly=spoly,
        r_lo=r_lo, r_hi=r_hi, out=r_lo + (r_hi - r_lo) * spoly,
    )
    return ctx


def _add_cot(cot: dict, name: str, g):
    if name in cot:
        cot[name] = cot[name] + g
    else:
        cot[name] = g


def _enc_bwd(ctx: dict, dout: np.ndarray, cot: dict) -> None:
    spoly = ctx["spoly"]
    dspoly = dout * (ctx["r_hi"] - ctx["r_lo"])
    if "range_pair_param" in ctx:
        _add_cot(cot, ctx["range_pair_param"],
                 np.array([float(np.sum(dout * (1.0 - spoly))), float(np.sum(dout * spoly))]))
    elif "range_scalar_params" in ctx:
        lo_p, hi_p = ctx["range_scalar_params"]
        _add_cot(cot, lo_p, float(np.sum(dout * (1.0 - spoly))))
        _add_cot(cot, hi_p, float(np.sum(dout * spoly)))
    dpoly = dspoly * spoly * (1.0 - spoly)
    if "coeff_param" in ctx:
        _add_cot(cot, ctx["coeff_param"], ctx["tpow"].T @ dpoly)
    t = ctx["t"]
    dt = dpoly * ctx["dpoly_dt"]
    dt_raw = dt * 4.0 * t * (1.0 - t)
    dval = dt_raw / ctx["span"]
    if "domain_param" in ctx:
        val, d_lo, d_hi, span = ctx["val"], ctx["d_lo"], ctx["d_hi"], ctx["span"]
        g_lo = float(np.sum(dt_raw * (val - d_hi) / span**2))
        g_hi = float(np.sum(dt_raw * (d_lo - val) / span**2))
        _add_cot(cot, ctx["domain_param"], np.array([g_lo, g_hi]))
    enc = ctx["enc"]
    if enc.attr_choice is not None:
        _add_cot(cot, enc.attr_choice, ctx["norms"] @ dval)


def eval_encoding(enc: EncodingMap, value: float, r: RealizedParams,
                  dataset: Dataset | None = None) -> float:
    """Scalar form of the encoding map: normalize ``value`` into the
    domain, apply the polynomial, squash into the output range.

    For mixed-attribute encodings ``value`` is interpreted as the already
    mixed normalized value on the unit interval.  ``dataset`` is required
    only when the domain defaults to an attribute extent.
    """
    if not np.isfinite(value):
        raise ValidationError("eval_encoding: value must be finite")
    if isinstance(enc.domain, str):
        d_lo, d_hi = np.asarray(r[enc.domain], dtype=np.float64)
    elif enc.domain is not None:
        d_lo, d_hi = float(enc.domain[0]), float(enc.domain[1])
    elif enc.attr is not None:
        if dataset is None:
            raise ValidationError("eval_encoding: dataset needed for attribute-extent domain")
        a = dataset.attribute(enc.attr)
        d_lo, d_hi = a.observed_min, a.observed_max
    else:
        d_lo, d_hi = 0.0, 1.0
    span = d_hi - d_lo
    if span < 1e-9:
        raise NumericError(f"degenerate encoding domain (width {span:g})")
    t = float(expit(4.0 * ((value - d_lo) / span - 0.5)))
    if isinstance(enc.coeffs, str):
        theta = np.asarray(r[enc.coeffs], dtype=np.float64)
    else:
        theta = np.asarray(enc.coeffs, dtype=np.float64)
    poly = float(np.polyval(theta[::-1], t))
    rr = enc.out_range
    if isinstance(rr, str):
        r_lo, r_hi = np.asarray(r[rr], dtype=np.float64)
    elif len(rr) == 2 and all(isinstance(v, str) for v in rr):
        r_lo, r_hi = float(r[rr[0]]), float(r[rr[1]])
    else:
        r_lo, r_hi = float(rr[0]), float(rr[1])
    return float(r_lo + (r_hi - r_lo) * expit(poly))


# ---------------------------------------------------------------------------
# view realization: rectangles, channels, stroke primitives


def _rect_ctx(view: View, layout: Layout, r: RealizedParams) -> dict:
    wmin = layout.min_view_fraction
    if isinstance(view.rect, str):
        cx, cy, wu, hu = np.asarray(r[view.rect], dtype=np.float64)
        param = view.rect
    else:
        cx, cy, wu, hu = (float(v) for v in view.rect)
        param = None
    wcan, hcan = layout.canvas
    wn = wmin + (1.0 - wmin) * wu
    hn = wmin + (1.0 - wmin) * hu
    left = cx * (1.0 - wn)
    top = cy * (1.0 - hn)
    x0, y0 = left * wcan, top * hcan
    wpx, hpx = wn * wcan, hn * hcan
    px0 = x0 + MARGIN_FRAC * wpx
    px1 = x0 + (1.0 - MARGIN_FRAC) * wpx
    py0 = y0 + MARGIN_FRAC * hpx
    py1 = y0 + (1.0 - MARGIN_FRAC) * hpx
    return dict(param=param, cx=cx, cy=cy, wu=wu, hu=hu, wn=wn, hn=hn,
                wmin=wmin, wcan=wcan, hcan=hcan,
                px0=px0, px1=px1, py0=py0, py1=py1,
                norm_x=(left, left + wn), norm_y=(top, top + hn))


def _rect_bwd(rc: dict, dpx0, dpx1, dpy0, dpy1, cot: dict) -> None:
    if rc["param"] is None:
        return
    mf = MARGIN_FRAC
    dx0 = dpx0 + dpx1
    dwpx = mf * dpx0 + (1.0 - mf) * dpx1
    dy0 = dpy0 + dpy1
    dhpx = mf * dpy0 + (1.0 - mf) * dpy1
    wcan, hcan = rc["wcan"], rc["hcan"]
    dcx = dx0 * (1.0 - rc["wn"]) * wcan
    dwn = -dx0 * rc["cx"] * wcan + dwpx * wcan
    dcy = dy0 * (1.0 - rc["hn"]) * hcan
    dhn = -dy0 * rc["cy"] * hcan + dhpx * hcan
    k = 1.0 - rc["wmin"]
    _add_cot(cot, rc["param"], np.array([dcx, dcy, dwn * k, dhn * k]))


def _strokes_for_view(rc: dict) -> list[dict]:
    """Frame borders plus outward ticks, as smooth rect primitives.

    Edges are recorded as (a0, a1, b): edge = a0*p0 + a1*p1 + b over the
    plot box coordinates, so the reverse pass can push gradients back
    into the view rectangle.
    """
    sh, tl = STROKE_HALF, STROKE_HALF + TICK_LEN
    rects = []

    def rect(xe0, xe1, ye0, ye1):
        rects.append(dict(xe0=xe0, xe1=xe1, ye0=ye0, ye1=ye1))

    full_y = ((1.0, 0.0, -sh), (0.0, 1.0, sh))
    full_x = ((1.0, 0.0, -sh), (0.0, 1.0, sh))
    rect((1.0, 0.0, -sh), (1.0, 0.0, sh), *full_y)   # left border
    rect((0.0, 1.0, -sh), (0.0, 1.0, sh), *full_y)   # right border
    rect(*full_x, (1.0, 0.0, -sh), (1.0, 0.0, sh))   # top border
    rect(*full_x, (0.0, 1.0, -sh), (0.0, 1.0, sh))   # bottom border
    for tp in TICK_POSITIONS:
        ax = (1.0 - tp, tp)
        rect((ax[0], ax[1], -sh), (ax[0], ax[1], sh), (0.0, 1.0, sh), (0.0, 1.0, tl))
        rect((1.0, 0.0, -tl), (1.0, 0.0, -sh), (ax[0], ax[1], -sh), (ax[0], ax[1], sh))
    return rects


def _stroke_edges(rc: dict, rect: dict) -> tuple[float, float, float, float]:
    def ev(coef, p0, p1):
        a0, a1, b = coef
        return a0 * p0 + a1 * p1 + b

    return (
        ev(rect["xe0"], rc["px0"], rc["px1"]),
        ev(rect["xe1"], rc["px0"], rc["px1"]),
        ev(rect["ye0"], rc["py0"], rc["py1"]),
        ev(rect["ye1"], rc["py0"], rc["py1"]),
    )


def _view_ctx(view: View, layout: Layout, d: Dataset, r: RealizedParams,
              smoothing: float, marks_only: bool) -> dict:
    chart = view.chart
    rc = _rect_ctx(view, layout, r)
    n = d.n_items

    xc = _enc_ctx(chart.x, d, r, "x channel")
    yc = _enc_ctx(chart.y, d, r, "y channel")
    nx, ny = xc["out"], yc["out"]
    X = rc["px0"] + nx * (rc["px1"] - rc["px0"])
    Y = rc["py1"] - ny * (rc["py1"] - rc["py0"])

    ctx: dict = dict(chart=chart, rc=rc, xc=xc, yc=yc, n=n, smoothing=smoothing)

    if isinstance(chart.size, EncodingMap):
        sc = _enc_ctx(chart.size, d, r, "size channel")
        R = sc["out"]
        ctx["size_ctx"] = sc
    elif isinstance(chart.size, str):
        R = np.full(n, float(r[chart.size]))
        ctx["size_param"] = chart.size
    else:
        R = np.full(n, float(chart.size))

    if isinstance(chart.color, ColorEncoding):
        cc = _enc_ctx(chart.color.encoding, d, r, "color channel")
        cm = chart.color.colormap
        tc = cc["out"]
        dl = cm.delta_l
        if isinstance(dl, str):
            delta = float(r[dl])
            ctx["delta_param"] = dl
        else:
            delta = float(dl)
        c0 = np.asarray(cm.c0, dtype=np.float64)
        c1 = np.array([c0[0] + delta, cm.chroma1[0], cm.chroma1[1]])
        luv = c0[None, :] + tc[:, None] * (c1 - c0)[None, :]
        lin = luv @ LUV_TO_RGB.T
        RGB = expit(4.0 * (lin - 0.5))
        ctx.update(color_ctx=cc, tc=tc, c0=c0, c1=c1, rgb_soft=RGB)
    else:
        RGB = np.tile(np.asarray(chart.color, dtype=np.float64), (n, 1))

    if isinstance(chart.opacity, str):
        AL = np.full(n, float(r[chart.opacity]))
        ctx["alpha_param"] = chart.opacity
    else:
        AL = np.full(n, float(chart.opacity))

    ctx.update(X=X, Y=Y, R=R, RGB=RGB, AL=AL)
    ctx["strokes"] = [] if marks_only else _strokes_for_view(rc)
    return ctx


# ---------------------------------------------------------------------------
# rasterization jobs (forward contributions and backward gathers)


def _window_shift(x: float) -> float:
    return np.floor(x)


def _circle_window(vc: dict, sl: slice, wcan: int, hcan: int):
    s = vc["smoothing"]
    X, Y, R = vc["X"][sl], vc["Y"][sl], vc["R"][sl]
    b = int(np.ceil(np.max(R) + 6.0 * s + 1.5)) if len(R) else 1
    offs = np.arange(-b, b + 1)
    basex = np.floor(X).astype(np.int64)
    basey = np.floor(Y).astype(np.int64)
    cols = basex[:, None] + offs[None, :]
    rows = basey[:, None] + offs[None, :]
    dxc = cols + 0.5 - X[:, None]
    dyr = rows + 0.5 - Y[:, None]
    dist = np.sqrt(dyr[:, :, None] ** 2 + dxc[:, None, :] ** 2 + EPS_D)
    valid = ((rows >= 0) & (rows < hcan))[:, :, None] & ((cols >= 0) & (cols < wcan))[:, None, :]
    idx = np.where(valid,
                   np.clip(rows, 0, hcan - 1)[:, :, None] * wcan
                   + np.clip(cols, 0, wcan - 1)[:, None, :], 0)
    return dist, valid, idx, dxc, dyr


def _circle_cov(dist: np.ndarray, R: np.ndarray, s: float):
    z = (R[:, None, None] - dist) / s
    sig = expit(z)
    tg = np.clip((dist - R[:, None, None] - 4.0 * s) / (2.0 * s), 0.0, 1.0)
    g = 1.0 - (3.0 * tg * tg - 2.0 * tg * tg * tg)
    return sig, tg, g, sig * g


def _job_circle_fwd(vc: dict, sl: slice, wcan: int, hcan: int):
    dist, valid, idx, _, _ = _circle_window(vc, sl, wcan, hcan)
    _, _, _, c = _circle_cov(dist, vc["R"][sl], vc["smoothing"])
    ac = np.minimum(vc["AL"][sl][:, None, None] * c, AC_CAP)
    ac = np.where(valid, ac, 0.0)
    flat = idx.ravel()
    nbin = wcan * hcan
    out = np.empty((5, nbin))
    out[0] = np.bincount(flat, weights=np.log1p(-ac).ravel(), minlength=nbin)
    out[1] = np.bincount(flat, weights=ac.ravel(), minlength=nbin)
    rgb = vc["RGB"][sl]
    for ch in range(3):
        out[2 + ch] = np.bincount(
            flat, weights=(ac * rgb[:, ch][:, None, None]).ravel(), minlength=nbin
        )
    return out


def _job_circle_bwd(vc: dict, sl: slice, wcan: int, hcan: int, grads: dict):
    s = vc["smoothing"]
    R, AL, RGB = vc["R"][sl], vc["AL"][sl], vc["RGB"][sl]
    dist, valid, idx, dxc, dyr = _circle_window(vc, sl, wcan, hcan)
    sig, tg, g, c = _circle_cov(dist, R, s)
    ac_raw = AL[:, None, None] * c
    capped = ac_raw >= AC_CAP
    ac = np.where(valid, np.minimum(ac_raw, AC_CAP), 0.0)

    dL = np.where(valid, grads["dLsum"][idx], 0.0)
    dW = np.where(valid, grads["dWsum"][idx], 0.0)
    dac = dL * (-1.0 / (1.0 - ac)) + dW
    dRGB_loc = np.empty_like(RGB)
    for ch in range(3):
        dS = np.where(valid, grads["dS"][ch][idx], 0.0)
        dac += dS * RGB[:, ch][:, None, None]
        dRGB_loc[:, ch] = np.sum(dS * ac, axis=(1, 2))
    dac = np.where(capped, 0.0, dac)  # cap is flat; measure-zero in practice

    dAL_loc = np.sum(dac * np.where(valid, c, 0.0), axis=(1, 2))
    dc = dac * AL[:, None, None]
    dz = dc * sig * (1.0 - sig) * g
    dgw = dc * sig
    qp = 6.0 * tg * (1.0 - tg)
    dd = dz * (-1.0 / s) + dgw * (-qp / (2.0 * s))
    dR_loc = np.sum(dz * (1.0 / s) + dgw * (qp / (2.0 * s)), axis=(1, 2))
    # dist = sqrt(dy^2 + dx^2 + eps); dx = col + .5 - X
    dX_loc = np.sum(dd * (-(dxc[:, None, :]) / dist), axis=(1, 2))
    dY_loc = np.sum(dd * (-(dyr[:, :, None]) / dist), axis=(1, 2))
    return dX_loc, dY_loc, dR_loc, dRGB_loc, dAL_loc


def _stroke_profiles(edges, wcan: int, hcan: int):
    ex0, ex1, ey0, ey1 = edges
    xs = np.arange(wcan) + 0.5
    ys = np.arange(hcan) + 0.5
    sx0 = expit((xs - ex0) / STROKE_SMOOTH)
    sx1 = expit((ex1 - xs) / STROKE_SMOOTH)
    sy0 = expit((ys - ey0) / STROKE_SMOOTH)
    sy1 = expit((ey1 - ys) / STROKE_SMOOTH)
    return sx0, sx1, sy0, sy1


def _job_stroke_fwd(edges, wcan: int, hcan: int):
    sx0, sx1, sy0, sy1 = _stroke_profiles(edges, wcan, hcan)
    inten = np.outer(sy0 * sy1, sx0 * sx1)
    ac = np.minimum(FRAME_ALPHA * inten, AC_CAP).ravel()
    out = np.empty((5, wcan * hcan))
    out[0] = np.log1p(-ac)
    out[1] = ac
    for ch in range(3):
        out[2 + ch] = ac * FRAME_COLOR[ch]
    return out


def _job_stroke_bwd(edges, wcan: int, hcan: int, grads: dict):
    sx0, sx1, sy0, sy1 = _stroke_profiles(edges, wcan, hcan)
    inten = np.outer(sy0 * sy1, sx0 * sx1)
    ac = np.minimum(FRAME_ALPHA * inten, AC_CAP)
    dac = grads["dLsum"].reshape(hcan, wcan) * (-1.0 / (1.0 - ac)) \
        + grads["dWsum"].reshape(hcan, wcan)
    for ch in range(3):
        dac = dac + grads["dS"][ch].reshape(hcan, wcan) * FRAME_COLOR[ch]
    dac = np.where(FRAME_ALPHA * inten >= AC_CAP, 0.0, dac)
    dI = dac * FRAME_ALPHA
    gy = dI @ (sx0 * sx1)          # (H,) row weights
    gx = (sy0 * sy1) @ dI          # (W,) col weights
    de_x0 = float(np.sum(gx * sx1 * (-sx0 * (1.0 - sx0) / STROKE_SMOOTH)))
    de_x1 = float(np.sum(gx * sx0 * (sx1 * (1.0 - sx1) / STROKE_SMOOTH)))
    de_y0 = float(np.sum(gy * sy1 * (-sy0 * (1.0 - sy0) / STROKE_SMOOTH)))
    de_y1 = float(np.sum(gy * sy0 * (sy1 * (1.0 - sy1) / STROKE_SMOOTH)))
    return de_x0, de_x1, de_y0, de_y1


# ---------------------------------------------------------------------------
# forward render


def _build_ctx(d: Dataset, layout: Layout, r: RealizedParams,
               smoothing: float, marks_only: bool) -> dict:
    validate_spec(layout, d, r.schema)
    r.validate()
    if smoothing <= 0:
        raise ValidationError("smoothing width must be > 0")
    views = [_view_ctx(v, layout, d, r, smoothing, marks_only) for v in layout.views]
    return dict(layout=layout, views=views)


def _jobs(ctx: dict) -> list[tuple]:
    jobs = []
    for vi, vc in enumerate(ctx["views"]):
        for lo in range(0, vc["n"], CHUNK):
            jobs.append(("circle", vi, slice(lo, min(lo + CHUNK, vc["n"]))))
        for ri in range(len(vc["strokes"])):
            jobs.append(("stroke", vi, ri))
    return jobs


def _run_jobs(fn_list, threads: int):
    if threads <= 1 or len(fn_list) <= 1:
        return [fn() for fn in fn_list]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        futs = [ex.submit(fn) for fn in fn_list]
        return [f.result() for f in futs]


def _forward(ctx: dict, threads: int) -> dict:
    layout = ctx["layout"]
    wcan, hcan = layout.canvas
    nbin = wcan * hcan

    def make_fn(job):
        kind, vi, key = job
        vc = ctx["views"][vi]
        if kind == "circle":
            return lambda: _job_circle_fwd(vc, key, wcan, hcan)
        edges = _stroke_edges(vc["rc"], vc["strokes"][key])
        return lambda: _job_stroke_fwd(edges, wcan, hcan)

    parts = _run_jobs([make_fn(j) for j in _jobs(ctx)], threads)
    acc = np.zeros((5, nbin))
    for p in parts:  # fixed job order: deterministic reduction
        acc += p
    lsum, wsum = acc[0], acc[1]
    A = -np.expm1(lsum)
    denom = wsum + EPS_W
    bg = np.asarray(layout.background, dtype=np.float64)
    px = np.empty((hcan, wcan, 4))
    cavg = np.empty((3, nbin))
    for ch in range(3):
        cavg[ch] = acc[2 + ch] / denom
        px[:, :, ch] = (bg[ch] + A * (cavg[ch] - bg[ch])).reshape(hcan, wcan)
    px[:, :, 3] = A.reshape(hcan, wcan)
    if not np.all(np.isfinite(px)):
        raise NumericError("render produced non-finite pixels")
    return dict(acc=acc, A=A, denom=denom, cavg=cavg,
                pixels=np.clip(px, 0.0, 1.0), wcan=wcan, hcan=hcan)


def render(d: Dataset, spec: ChartSpec | Layout, r: RealizedParams, *,
           smoothing: float = SMOOTHING_DEFAULT, threads: int = 1,
           marks_only: bool = False) -> Image:
    """Rasterize a chart or layout under realized parameters.

    Deterministic for fixed inputs; with threads > 1 the contribution
    reduction keeps a fixed order so results stay within float
    reassociation noise of the single-threaded image.
    """
    layout = _as_layout(spec)
    ctx = _build_ctx(d, layout, r, smoothing, marks_only)
    return Image(_forward(ctx, threads)["pixels"])


# ---------------------------------------------------------------------------
# reverse pass


def _backward(ctx: dict, fwd: dict, cotangent: np.ndarray, threads: int) -> dict:
    layout = ctx["layout"]
    wcan, hcan = fwd["wcan"], fwd["hcan"]
    if cotangent.shape != (hcan, wcan, 4):
        raise ValidationError(
            f"cotangent shape {cotangent.shape} does not match image ({hcan}, {wcan}, 4)"
        )
    bg = np.asarray(layout.background, dtype=np.float64)
    A, denom, cavg, acc = fwd["A"], fwd["denom"], fwd["cavg"], fwd["acc"]

    cot_px = cotangent.reshape(-1, 4)
    dA = cot_px[:, 3].copy()
    dS = []
    dWsum = np.zeros(wcan * hcan)
    for ch in range(3):
        c_ch = cot_px[:, ch]
        dA += c_ch * (cavg[ch] - bg[ch])
        dC = c_ch * A
        dS_ch = dC / denom
        dS.append(dS_ch)
        dWsum -= dS_ch * cavg[ch]
    dLsum = dA * (A - 1.0)
    grads = dict(dLsum=dLsum, dWsum=dWsum, dS=dS)

    jobs = _jobs(ctx)

    def make_fn(job):
        kind, vi, key = job
        vc = ctx["views"][vi]
        if kind == "circle":
            return lambda: _job_circle_bwd(vc, key, wcan, hcan, grads)
        edges = _stroke_edges(vc["rc"], vc["strokes"][key])
        return lambda: _job_stroke_bwd(edges, wcan, hcan, grads)

    parts = _run_jobs([make_fn(j) for j in jobs], threads)

    cot: dict = {}
    for vc in ctx["views"]:
        vc["_acc"] = dict(
            dX=np.zeros(vc["n"]), dY=np.zeros(vc["n"]), dR=np.zeros(vc["n"]),
            dRGB=np.zeros((vc["n"], 3)), dAL=np.zeros(vc["n"]),
            dpx0=0.0, dpx1=0.0, dpy0=0.0, dpy1=0.0,
        )
    for job, part in zip(jobs, parts):
        kind, vi, key = job
        vc = ctx["views"][vi]
        a = vc["_acc"]
        if kind == "circle":
            dX, dY, dR, dRGB, dAL = part
            a["dX"][key] += dX
            a["dY"][key] += dY
            a["dR"][key] += dR
            a["dRGB"][key] += dRGB
            a["dAL"][key] += dAL
        else:
            rect = vc["strokes"][key]
            de = part
            for i, ek in enumerate(("xe0", "xe1")):
                a0, a1, _ = rect[ek]
                a["dpx0"] += de[i] * a0
                a["dpx1"] += de[i] * a1
            for i, ek in enumerate(("ye0", "ye1")):
                a0, a1, _ = rect[ek]
                a["dpy0"] += de[2 + i] * a0
                a["dpy1"] += de[2 + i] * a1

    for vc in ctx["views"]:
        a = vc["_acc"]
        rc = vc["rc"]
        xc, yc = vc["xc"], vc["yc"]
        nx, ny = xc["out"], yc["out"]
        pw = rc["px1"] - rc["px0"]
        ph = rc["py1"] - rc["py0"]
        # X = px0 + nx*(px1-px0); Y = py1 - ny*(py1-py0)
        dnx = a["dX"] * pw
        dny = -a["dY"] * ph
        dpx0 = a["dpx0"] + float(np.sum(a["dX"] * (1.0 - nx)))
        dpx1 = a["dpx1"] + float(np.sum(a["dX"] * nx))
        dpy0 = a["dpy0"] + float(np.sum(a["dY"] * ny))
        dpy1 = a["dpy1"] + float(np.sum(a["dY"] * (1.0 - ny)))
        _enc_bwd(xc, dnx, cot)
        _enc_bwd(yc, dny, cot)
        _rect_bwd(rc, dpx0, dpx1, dpy0, dpy1, cot)

        if "size_ctx" in vc:
            _enc_bwd(vc["size_ctx"], a["dR"], cot)
        elif "size_param" in vc:
            _add_cot(cot, vc["size_param"], float(np.sum(a["dR"])))

        if "color_ctx" in vc:
            rgb = vc["rgb_soft"]
            dlin = a["dRGB"] * 4.0 * rgb * (1.0 - rgb)
            dluv = dlin @ LUV_TO_RGB
            span = vc["c1"] - vc["c0"]
            dtc = dluv @ span
            if "delta_param" in vc:
                _add_cot(cot, vc["delta_param"], float(np.sum(dluv[:, 0] * vc["tc"])))
            _enc_bwd(vc["color_ctx"], dtc, cot)

        if "alpha_param" in vc:
            _add_cot(cot, vc["alpha_param"], float(np.sum(a["dAL"])))
        del vc["_acc"]
    return cot


def render_with_vjp(d: Dataset, spec: ChartSpec | Layout, p: ParamVector, *,
                    mode: str = "soft", noise: dict | None = None,
                    seed: int | None = None, smoothing: float = SMOOTHING_DEFAULT,
                    threads: int = 1, marks_only: bool = False,
                    straight_through: bool = False):
    """Single forward render plus a pullback closure.

    Returns (image, pull) where pull(cotangent) gives the gradient of
    sum(cotangent * pixels) with respect to the raw parameter vector.
    """
    if mode == "hard" and not straight_through:
        raise ValidationError("hard mode is non-differentiable without straight_through")
    from .params import gumbel_noise

    if noise is None and seed is not None:
        noise = gumbel_noise(p.schema, seed)
    realized = constrain(p, mode=mode, noise=noise)
    layout = _as_layout(spec)
    ctx = _build_ctx(d, layout, realized, smoothing, marks_only)
    fwd = _forward(ctx, threads)
    img = Image(fwd["pixels"])

    def pull(cotangent: np.ndarray) -> np.ndarray:
        cot = _backward(ctx, fwd, np.asarray(cotangent, dtype=np.float64), threads)
        return constrain_vjp(p, cot, mode=mode, noise=noise,
                             straight_through=straight_through)

    return img, pull


def render_vjp(d: Dataset, spec: ChartSpec | Layout, p: ParamVector,
               cotangent: np.ndarray, *, mode: str = "soft",
               noise: dict | None = None, seed: int | None = None,
               smoothing: float = SMOOTHING_DEFAULT, threads: int = 1,
               marks_only: bool = False, straight_through: bool = False) -> np.ndarray:
    """Gradient of sum(cotangent * pixels) with respect to raw parameters,
    by reverse accumulation through compositing, coverage, encodings,
    colormap, layout, and the constraint maps."""
    _, pull = render_with_vjp(
        d, spec, p, mode=mode, noise=noise, seed=seed, smoothing=smoothing,
        threads=threads, marks_only=marks_only, straight_through=straight_through,
    )
    return pull(cotangent)


# ---------------------------------------------------------------------------
# view-overlap penalty (kept out of the pixels; added to objectives)


def _smooth_hinge(z: float) -> tuple[float, float]:
    s = OVERLAP_HINGE
    if z <= 0.0:
        return 0.0, 0.0
    if z >= s:
        return z - 0.5 * s, 1.0
    return z * z / (2.0 * s), z / s


def _interval_overlap(a: tuple[float, float], b: tuple[float, float]):
    """C1 overlap length of two intervals via LogSumExp min/max."""
    beta = OVERLAP_BETA
    lo_a, hi_a = a
    lo_b, hi_b = b
    smin = -np.logaddexp(-beta * hi_a, -beta * hi_b) / beta
    smax = np.logaddexp(beta * lo_a, beta * lo_b) / beta
    # softmax weights = partials of smin/smax wrt their inputs
    w_hi_a = expit(-beta * (hi_a - hi_b))
    w_lo_a = expit(beta * (lo_a - lo_b))
    z = smin - smax
    val, dval = _smooth_hinge(float(z))
    partials = dict(hi_a=dval * w_hi_a, hi_b=dval * (1.0 - w_hi_a),
                    lo_a=-dval * w_lo_a, lo_b=-dval * (1.0 - w_lo_a))
    return val, partials


def layout_penalty(spec: ChartSpec | Layout, r: RealizedParams) -> float:
    """Weighted sum of smoothed pairwise view-overlap areas in normalized
    canvas units; exactly 0 for disjoint views, differentiable everywhere."""
    layout = _as_layout(spec)
    rects = [_rect_ctx(v, layout, r) for v in layout.views]
    if len(rects) < 2 or layout.overlap_weight == 0.0:
        return 0.0
    total = 0.0
    for i in range(len(rects)):
        for j in range(i + 1, len(rects)):
            ox, _ = _interval_overlap(rects[i]["norm_x"], rects[j]["norm_x"])
            oy, _ = _interval_overlap(rects[i]["norm_y"], rects[j]["norm_y"])
            total += ox * oy
    return layout.overlap_weight * total


def layout_penalty_vjp(spec: ChartSpec | Layout, r: RealizedParams) -> tuple[float, dict]:
    """Penalty value plus cotangents for the view rectangle parameters
    (keyed by parameter name, shaped like the realized (cx, cy, w, h))."""
    layout = _as_layout(spec)
    rects = [_rect_ctx(v, layout, r) for v in layout.views]
    lam = layout.overlap_weight
    cot: dict = {}
    total = 0.0
    if len(rects) < 2 or lam == 0.0:
        return 0.0, cot

    def push(rc: dict, d_lo: float, d_hi: float, axis: str):
        if rc["param"] is None:
            return
        # lo = c*(1-wn); hi = lo + wn; wn = wmin + (1-wmin)*u
        c = rc["cx"] if axis == "x" else rc["cy"]
        wn = rc["wn"] if axis == "x" else rc["hn"]
        dc = (d_lo + d_hi) * (1.0 - wn)
        dwn = -(d_lo + d_hi) * c + d_hi
        du = dwn * (1.0 - rc["wmin"])
        vec = np.zeros(4)
        if axis == "x":
            vec[0], vec[2] = dc, du
        else:
            vec[1], vec[3] = dc, du
        _add_cot(cot, rc["param"], vec)

    for i in range(len(rects)):
        for j in range(i + 1, len(rects)):
            ox, px = _interval_overlap(rects[i]["norm_x"], rects[j]["norm_x"])
            oy, py = _interval_overlap(rects[i]["norm_y"], rects[j]["norm_y"])
            total += ox * oy
            push(rects[i], lam * oy * px["lo_a"], lam * oy * px["hi_a"], "x")
            push(rects[j], lam * oy * px["lo_b"], lam * oy * px["hi_b"], "x")
            push(rects[i], lam * ox * py["lo_a"], lam * ox * py["hi_a"], "y")
            push(rects[j], lam * ox * py["lo_b"], lam * ox * py["hi_b"], "y")
    return lam * total, cot
