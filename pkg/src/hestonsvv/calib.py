"""Joint calibration to SPX and VIX implied-vol surfaces.

The objective is the weighted least-squares functional

    (1/(M_S+M_V)) * ( M_S * sum_i (sig_S_i - mkt_S_i)^2
                      + M_V * sum_i (sig_V_i - mkt_V_i)^2 )

over model-vs-market implied vols.  Model vols are produced by the
Fourier pricers and inverted Black-on-forward, using the market forward
of each quote so that vol residuals compare like for like.  The current
variance v0 is pinned to the observed index level through the affine
identity at each candidate (kappa, m) unless the config frees it.

Calibration runs in two stages: a pure Heston fit of
(kappa, m, eta_bar, rho_bar) with all corrections at zero, then a full
fit that frees the seven group parameters (corrections initialized to
zero) together with the Heston block.  The optimizer is deterministic
Nelder-Mead in logistic-transformed coordinates, so box bounds hold
exactly and reruns are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy.optimize import minimize

from .errors import InfeasibleVix, InvalidParameters, OutOfBounds, PricingFailure
from .implied import black_price, implied_vol
from .market import VolQuote
from .params import CorrectionGroups, HestonParams
from .quadrature import QuadratureConfig, SPX_QUAD, VIX_QUAD
from . import spx as spx_mod
from . import vix as vix_mod

HESTON_NAMES = ("kappa", "m", "eta_bar", "rho_bar")
CORRECTION_NAMES = (
    "v12_eps",
    "v21_eps",
    "v03_eps",
    "v10_eta_delta",
    "v01_eta_delta",
    "v10_rho_delta",
    "v01_rho_delta",
)

DEFAULT_BOUNDS = {
    "kappa": (0.5, 60.0),
    "m": (1e-3, 1.0),
    "eta_bar": (0.05, 6.0),
    "rho_bar": (-0.999, 0.999),
    "v0": (1e-6, 1.0),
    "corrections": (-0.5, 0.5),
}


@dataclass(frozen=True)
class CalibrationConfig:
    max_iterations: int = 800  # objective evaluations per stage
    stage2_max_iterations: int = 600
    tolerance: float = 1e-12  # simplex absolute objective tolerance
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    optimizer: str = "nelder-mead"
    stage: str = "full"  # "heston" stops after stage 1
    pin_v0: bool = True
    penalty_vol: float = 1.0
    weight_spx: float | None = None  # None: quote counts per the objective
    weight_vix: float | None = None
    spx_quad: QuadratureConfig = SPX_QUAD
    vix_quad: QuadratureConfig = VIX_QUAD

    def __post_init__(self):
        if self.optimizer != "nelder-mead":
            raise InvalidParameters(f"unsupported optimizer {self.optimizer!r}")
        if self.stage not in ("heston", "full"):
            raise InvalidParameters("stage must be 'heston' or 'full'")
        lo, hi = self.bounds["rho_bar"]
        if lo < -0.999 or hi > 0.999:
            raise InvalidParameters("rho_bar bounds must stay inside (-0.999, 0.999)")


@dataclass(frozen=True)
class MarketSurfaces:
    """Cleaned calibration inputs: quote lists plus index levels."""

    spot: float
    vix0: float
    spx: tuple
    vix: tuple
    r: float = 0.0
    q: float = 0.0

    def __post_init__(self):
        if not self.spx and not self.vix:
            raise InvalidParameters("need quotes on at least one underlying")


@dataclass
class QuoteResidual:
    underlying: str
    kind: str
    strike: float
    expiry_tau: float
    forward: float
    market_vol: float
    model_vol: float


@dataclass
class StageResult:
    name: str
    params: HestonParams
    corrections: CorrectionGroups
    objective: float
    iterations: int
    converged: bool


@dataclass
class CalibrationResult:
    params: HestonParams
    corrections: CorrectionGroups
    objective: float
    residuals: list
    iterations: int
    converged: bool
    stages: list


def param_names(config: CalibrationConfig, stage: str) -> tuple:
    names = list(HESTON_NAMES)
    if not config.pin_v0:
        names.append("v0")
    if stage == "full":
        names.extend(CORRECTION_NAMES)
    return tuple(names)


def _bounds_for(name: str, config: CalibrationConfig):
    if name in config.bounds:
        return config.bounds[name]
    return config.bounds["corrections"]


def _to_internal(values, names, config):
    out = []
    for v, name in zip(values, names):
        lo, hi = _bounds_for(name, config)
        frac = np.clip((v - lo) / (hi - lo), 1e-9, 1.0 - 1e-9)
        out.append(np.log(frac / (1.0 - frac)))
    return np.asarray(out)


def _from_internal(x, names, config):
    out = []
    for xi, name in zip(x, names):
        lo, hi = _bounds_for(name, config)
        out.append(lo + (hi - lo) / (1.0 + np.exp(-xi)))
    return out


def _theta_to_model(theta, names, surfaces, config):
    vals = dict(zip(names, theta))
    mapping = vix_mod.VixMapping.from_params(vals["kappa"], vals["m"])
    if config.pin_v0:
        v0 = vix_mod.variance_from_vix(surfaces.vix0, mapping)
    else:
        v0 = vals["v0"]
    p = HestonParams(
        kappa=vals["kappa"],
        m=vals["m"],
        eta_bar=vals["eta_bar"],
        rho_bar=vals["rho_bar"],
        v0=v0,
        r=surfaces.r,
        q=surfaces.q,
    )
    cg = CorrectionGroups(**{k: vals.get(k, 0.0) for k in CORRECTION_NAMES})
    return p, cg


def _model_vols(p, cg, surfaces, config):
    """Model implied vols per quote, penalty-marked where inversion fails."""
    out = {}
    use_cg = cg if not cg.is_zero() else None

    by_expiry = {}
    for i, q in enumerate(surfaces.spx):
        by_expiry.setdefault(q.expiry_tau, []).append((i, q))
    for tau, items in by_expiry.items():
        strikes = [q.strike for _, q in items]
        kinds = [q.kind for _, q in items]
        disc = float(np.exp(-surfaces.r * tau))
        try:
            prices = spx_mod.price_strikes(
                surfaces.spot, strikes, tau, p,
                cg=use_cg, q=config.spx_quad, kinds=kinds,
            )
        except Exception as exc:
            raise PricingFailure(
                f"spx pricing failed at tau={tau}: {exc}", quote=items[0][1]
            ) from exc
        for (i, q), price in zip(items, prices):
            try:
                out[("spx", i)] = implied_vol(
                    float(price), q.forward, q.strike, tau, disc, q.kind
                )
            except OutOfBounds:
                out[("spx", i)] = None

    by_expiry = {}
    for i, q in enumerate(surfaces.vix):
        by_expiry.setdefault(q.expiry_tau, []).append((i, q))
    for tau, items in by_expiry.items():
        strikes = [q.strike for _, q in items]
        disc = float(np.exp(-surfaces.r * tau))
        try:
            prices = vix_mod.price_vix_calls(
                p.v0, strikes, tau, p, cg=use_cg, q=config.vix_quad
            )
        except Exception as exc:
            raise PricingFailure(
                f"vix pricing failed at tau={tau}: {exc}", quote=items[0][1]
            ) from exc
        for (i, q), price in zip(items, prices):
            if q.kind != "call":
                raise InvalidParameters("vix surface quotes must be calls")
            try:
                out[("vix", i)] = implied_vol(
                    float(price), q.forward, q.strike, tau, disc, "call"
                )
            except OutOfBounds:
                out[("vix", i)] = None
    return out


def _objective_from_vols(vols, surfaces, config):
    m_s, m_v = len(surfaces.spx), len(surfaces.vix)
    w_s = m_s if config.weight_spx is None else config.weight_spx
    w_v = m_v if config.weight_vix is None else config.weight_vix
    sum_s = 0.0
    for i, q in enumerate(surfaces.spx):
        model = vols[("spx", i)]
        res = config.penalty_vol if model is None else model - q.implied_vol
        sum_s += res * res
    sum_v = 0.0
    for i, q in enumerate(surfaces.vix):
        model = vols[("vix", i)]
        res = config.penalty_vol if model is None else model - q.implied_vol
        sum_v += res * res
    return (w_s * sum_s + w_v * sum_v) / (m_s + m_v)


def objective(
    theta,
    surfaces: MarketSurfaces,
    config: CalibrationConfig = CalibrationConfig(),
    stage: str = "full",
) -> float:
    """Weighted least-squares objective at a full parameter vector.

    theta follows param_names(config, stage): the Heston block, v0 if
    freed, then the seven correction parameters for the full stage.
    """
    names = param_names(config, stage)
    if len(theta) != len(names):
        raise InvalidParameters(f"theta must have entries {names}")
    try:
        p, cg = _theta_to_model(theta, names, surfaces, config)
    except (InvalidParameters, InfeasibleVix):
        return config.penalty_vol**2  # all-quote penalty, keeps NM total
    vols = _model_vols(p, cg, surfaces, config)
    return _objective_from_vols(vols, surfaces, config)


def _run_stage(name, names, x0_values, surfaces, config, budget):
    x0 = _to_internal(x0_values, names, config)
    evals = [0]

    def fun(x):
        evals[0] += 1
        return objective(
            _from_internal(x, names, config), surfaces, config,
            stage="full" if any(n in CORRECTION_NAMES for n in names) else "heston",
        )

    res = minimize(
        fun,
        x0,
        method="Nelder-Mead",
        options={
            "maxfev": budget,
            "fatol": config.tolerance,
            "xatol": 1e-8,
            "adaptive": len(names) > 6,
        },
    )
    theta = _from_internal(res.x, names, config)
    p, cg = _theta_to_model(theta, names, surfaces, config)
    return StageResult(
        name=name,
        params=p,
        corrections=cg,
        objective=float(res.fun),
        iterations=evals[0],
        converged=bool(res.success),
    )


def calibrate(
    surfaces: MarketSurfaces,
    config: CalibrationConfig = CalibrationConfig(),
    initial: HestonParams | None = None,
) -> CalibrationResult:
    """Two-stage fit: Heston-only, then all correction parameters.

    Stage 2 starts from the stage-1 point with corrections at zero, so
    its objective can only improve on stage 1.  If an iteration budget
    runs out the best point so far is still returned, flagged
    unconverged.
    """
    if initial is None:
        level = np.mean([q.implied_vol for q in surfaces.spx]) if surfaces.spx else 0.2
        initial = HestonParams(
            kappa=5.0,
            m=float(np.clip(level * level, 2e-3, 0.9)),
            eta_bar=1.0,
            rho_bar=-0.5,
            v0=float(np.clip(surfaces.vix0**2, 1e-5, 0.9)),
            r=surfaces.r,
            q=surfaces.q,
        )

    names1 = param_names(config, "heston")
    x0 = [getattr(initial, n) for n in names1]
    stage1 = _run_stage("heston", names1, x0, surfaces, config, config.max_iterations)
    stages = [stage1]

    final = stage1
    if config.stage == "full":
        names2 = param_names(config, "full")
        x0 = [getattr(stage1.params, n) for n in names1] + [0.0] * len(
            CORRECTION_NAMES
        )
        stage2 = _run_stage(
            "full", names2, x0, surfaces, config, config.stage2_max_iterations
        )
        # the stage-1 point is feasible for stage 2; never regress
        final = stage2 if stage2.objective <= stage1.objective else replace(
            stage2,
            params=stage1.params,
            corrections=CorrectionGroups(),
            objective=stage1.objective,
        )
        stages.append(stage2)

    vols = _model_vols(final.params, final.corrections, surfaces, config)
    residuals = []
    for tag, quotes in (("spx", surfaces.spx), ("vix", surfaces.vix)):
        for i, q in enumerate(quotes):
            model = vols[(tag, i)]
            residuals.append(
                QuoteResidual(
                    underlying=tag,
                    kind=q.kind,
                    strike=q.strike,
                    expiry_tau=q.expiry_tau,
                    forward=q.forward,
                    market_vol=q.implied_vol,
                    model_vol=float("nan") if model is None else model,
                )
            )
    return CalibrationResult(
        params=final.params,
        corrections=final.corrections,
        objective=final.objective,
        residuals=residuals,
        iterations=sum(s.iterations for s in stages),
        converged=all(s.converged for s in stages),
        stages=stages,
    )


# ---------------------------------------------------------------------------
# synthetic surfaces and result files
# ---------------------------------------------------------------------------


def synthetic_surfaces(
    p: HestonParams,
    cg: CorrectionGroups,
    spot: float,
    spx_grid,
    vix_grid,
    config: CalibrationConfig = CalibrationConfig(),
) -> MarketSurfaces:
    """Model-generated joint surfaces at known parameters.

    spx_grid and vix_grid are (tau, strikes) pairs; forwards and the
    spot index level come from the model itself, so the generator
    parameters reproduce the surfaces with zero residual.
    """
    mapping = vix_mod.VixMapping.from_params(p.kappa, p.m)
    vix0 = vix_mod.vix_from_variance(p.v0, mapping)
    use_cg = cg if not cg.is_zero() else None

    spx_quotes = []
    for tau, strikes in spx_grid:
        fwd = spot * float(np.exp((p.r - p.q) * tau))
        disc = float(np.exp(-p.r * tau))
        prices = spx_mod.price_strikes(
            spot, strikes, tau, p, cg=use_cg, q=config.spx_quad
        )
        for k, price in zip(strikes, prices):
            spx_quotes.append(
                VolQuote(
                    underlying="spx",
                    kind="call",
                    forward=fwd,
                    strike=float(k),
                    expiry_tau=tau,
                    implied_vol=implied_vol(float(price), fwd, float(k), tau, disc),
                )
            )

    vix_quotes = []
    for tau, strikes in vix_grid:
        inst = vix_mod.VixInstrument("future", tau)
        if use_cg is not None:
            fut = vix_mod.price_vix_first_order(p.v0, inst, p, use_cg, config.vix_quad)
        else:
            fut = vix_mod.price_vix_order0(p.v0, inst, p, config.vix_quad)
        disc = float(np.exp(-p.r * tau))
        prices = vix_mod.price_vix_calls(
            p.v0, strikes, tau, p, cg=use_cg, q=config.vix_quad
        )
        for k, price in zip(strikes, prices):
            vix_quotes.append(
                VolQuote(
                    underlying="vix",
                    kind="call",
                    forward=fut,
                    strike=float(k),
                    expiry_tau=tau,
                    implied_vol=implied_vol(float(price), fut, float(k), tau, disc),
                )
            )
    return MarketSurfaces(
        spot=spot, vix0=vix0, spx=tuple(spx_quotes), vix=tuple(vix_quotes)
    )


def write_result(result: CalibrationResult, prefix: str) -> None:
    """Flat key=value parameter dump plus a per-quote residual CSV."""
    with open(prefix + ".params", "w", encoding="utf-8") as fh:
        p = result.params
        for f in fields(p):
            fh.write(f"{f.name}={getattr(p, f.name)!r}\n")
        for k, v in result.corrections.as_dict().items():
            fh.write(f"{k}={v!r}\n")
        fh.write(f"objective={result.objective!r}\n")
        fh.write(f"iterations={result.iterations}\n")
        fh.write(f"converged={result.converged}\n")
    with open(prefix + ".residuals.csv", "w", encoding="utf-8") as fh:
        fh.write("underlying,kind,strike,expiry_tau,forward,market_vol,model_vol\n")
        for r in result.residuals:
            fh.write(
                f"{r.underlying},{r.kind},{r.strike:.10g},{r.expiry_tau:.10g},"
                f"{r.forward:.10g},{r.market_vol:.10g},{r.model_vol:.10g}\n"
            )


def parse_config_file(path) -> CalibrationConfig:
    """Plain key=value overrides of the calibration settings."""
    kwargs = {}
    bounds = dict(DEFAULT_BOUNDS)
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InvalidParameters(f"line {line_no}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key.startswith("bounds."):
                name = key.split(".", 1)[1]
                lo, hi = (float(x) for x in val.split(","))
                bounds[name] = (lo, hi)
            elif key in ("max_iterations", "stage2_max_iterations"):
                kwargs[key] = int(val)
            elif key in ("tolerance", "penalty_vol", "weight_spx", "weight_vix"):
                kwargs[key] = float(val)
            elif key == "pin_v0":
                kwargs[key] = val.lower() in ("1", "true", "yes")
            elif key in ("stage", "optimizer"):
                kwargs[key] = val
            else:
                raise InvalidParameters(f"line {line_no}: unknown key {key!r}")
    return CalibrationConfig(bounds=bounds, **kwargs)
