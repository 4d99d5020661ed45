"""VIX futures and European VIX options via the square-root-process transform.

The model's volatility index squared is affine in instantaneous
variance, VIX_t^2 = m*(1-theta) + theta*V_t with
theta = (1 - e^{-kappa*tau0})/(kappa*tau0), tau0 = 30/360, so an index
derivative is a variance derivative with payoff phi(gamma(v)),
gamma(v) = sqrt(m*(1-theta) + theta*v).

Prices are recovered from the moment transform
G_V(tau, mu, v) = E[exp(mu*V_T) | V_t = v] paired against the payoff
transform  phat(nu) = Int_0^inf e^{nu v} phi(gamma(v)) dv  along a
vertical contour nu = nu_r + i*nu_i with fixed nu_r < 0:

    price = (disc / pi) * Int_0^inf Re[ mult * G_V(tau, -nu, v)
            * phat(nu) ] d nu_i,

mult = 1 at zeroth order or 1 + h0 + v*h1 + v^2*h2 at first order.
Futures carry no discount factor.  The transform argument is reflected
(mu = -nu) because phat uses the e^{+nu v} kernel; the pairing holds by
Bromwich inversion of the payoff's Laplace transform.

The payoff transforms integrate from the point where the (extended)
payoff vanishes -- v = -a with a = m*(1-theta)/theta for the future,
v = (K^2 - m*(1-theta))/theta for calls -- rather than from 0.  Both
choices price identically (the variance density lives on [0, inf)), but
starting at 0 introduces a jump at the integration edge whose 1/nu
transform component does not oscillate and kills quadrature convergence.
With s = -nu the closed forms are

    future:  sqrt(theta) * (sqrt(pi)/2) * e^{s*a} / s^{3/2}
    call:    sqrt(theta) * (sqrt(pi)/2) * e^{s*(a - K^2/theta)}
             * erfcx(K*sqrt(s/theta)) / s^{3/2}

(the call form holds for every K > 0 and reduces to the future as
K -> 0; erfcx keeps all exponentials bounded on the contour).  The
integrand decays polynomially in nu_i while oscillating at an asymptotic
rate |a - K^2/theta| (a for futures), so panels are sized to span one
oscillation period.  Because the polynomial tail (~nu^-1.8 at
2*kappa*m/eta^2 = 0.3) would need nu_i ~ 1e5 for 1e-7 accuracy, the
sweep switches, once the bulk is captured, onto a ray rotated 45 degrees
into the upper half plane, where the integrand is analytic and e^{s*a}
decays exponentially; by Cauchy's theorem the value is unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx

from . import corrections, kernel
from .errors import (
    ContourViolation,
    DegenerateFrequency,
    InfeasibleVix,
    InvalidParameters,
    QuadratureDivergence,
)
from .params import CorrectionGroups, HestonParams
from .quadrature import VIX_QUAD, QuadratureConfig, panel_nodes

TAU0 = 30.0 / 360.0


@dataclass(frozen=True)
class VixMapping:
    """Affine map between instantaneous variance and the squared index."""

    theta: float
    m: float
    kappa: float

    @classmethod
    def from_params(cls, kappa: float, m: float) -> "VixMapping":
        theta = (1.0 - np.exp(-kappa * TAU0)) / (kappa * TAU0)
        return cls(theta=float(theta), m=m, kappa=kappa)

    @property
    def floor_var(self) -> float:
        """m*(1-theta): squared index level at zero variance."""
        return self.m * (1.0 - self.theta)


@dataclass(frozen=True)
class VixInstrument:
    kind: str  # "future" | "call"
    expiry_tau: float
    strike: float | None = None

    def __post_init__(self):
        if self.kind not in ("future", "call"):
            raise InvalidParameters(f"kind must be future or call, got {self.kind!r}")
        if self.kind == "call" and not (self.strike and self.strike > 0):
            raise InvalidParameters("call needs a positive strike")
        if self.expiry_tau < 0:
            raise InvalidParameters("expiry_tau must be nonnegative")


def vix_from_variance(v: float, mapping: VixMapping) -> float:
    """Index level sqrt(m*(1-theta) + theta*v)."""
    if v < 0:
        raise InvalidParameters("variance must be nonnegative")
    return float(np.sqrt(mapping.floor_var + mapping.theta * v))


def variance_from_vix(vix: float, mapping: VixMapping) -> float:
    """Invert the affine identity; fails when vix^2 < m*(1-theta)."""
    v2 = vix * vix
    if v2 < mapping.floor_var:
        raise InfeasibleVix(
            f"vix^2 = {v2:.6g} below the model floor m*(1-theta) = "
            f"{mapping.floor_var:.6g}; (kappa, m) inconsistent with the index"
        )
    return float((v2 - mapping.floor_var) / mapping.theta)


# ---------------------------------------------------------------------------
# payoff transforms
# ---------------------------------------------------------------------------

_SQRT_PI_HALF = 0.5 * np.sqrt(np.pi)


def _phat_future(s, mapping: VixMapping):
    a = mapping.floor_var / mapping.theta
    rs = np.sqrt(s)
    return np.sqrt(mapping.theta) * _SQRT_PI_HALF * np.exp(s * a) / (s * rs)


def _phat_call(s, strike: float, mapping: VixMapping):
    a = mapping.floor_var / mapping.theta
    k2t = strike * strike / mapping.theta
    rs = np.sqrt(s)
    return (
        np.sqrt(mapping.theta)
        * _SQRT_PI_HALF
        * np.exp(s * (a - k2t))
        * erfcx(strike * rs / np.sqrt(mapping.theta))
        / (s * rs)
    )


def vix_payoff_transform(inst: VixInstrument, nu, mapping: VixMapping):
    """Closed-form transform Int_0^inf e^{nu v} phi(gamma(v)) dv, Re(nu) <= 0."""
    nu = np.asarray(nu, dtype=complex)
    if np.any(np.real(nu) > 0):
        raise ContourViolation("payoff transform needs Re(nu) <= 0")
    if np.any(np.abs(nu) == 0.0):
        raise DegenerateFrequency("payoff transform undefined at nu = 0")
    s = -nu
    if inst.kind == "future":
        out = _phat_future(s, mapping)
    else:
        out = _phat_call(s, inst.strike, mapping)
    return complex(out) if np.ndim(nu) == 0 else out


# ---------------------------------------------------------------------------
# pricing
# ---------------------------------------------------------------------------


def _rate_dir(v0: float, tau: float, mapping: VixMapping, strike: float | None):
    """Asymptotic oscillation rate and decaying half-plane of one payoff."""
    a = mapping.floor_var / mapping.theta
    coef = a if strike is None else a - strike * strike / mapping.theta
    rate = max(abs(coef) + v0 * np.exp(-mapping.kappa * tau), 0.01)
    return rate, (1 if coef >= 0 else -1)


def _sweep(v0, tau, p, cfg, phats, rates, dirs, cg, ode_steps=None):
    """Shared panel sweep over the index contour for a batch of payoffs.

    phats(nu) returns an (n_payoffs, n_nodes) array; ``rates`` the
    per-payoff asymptotic oscillation rates and ``dirs`` the half-plane
    (+1 or -1) in which each payoff's exponential factor decays, fixing
    the direction of the 45-degree tail ray (up-right for futures and
    low strikes, up-left for strikes with K^2/theta > a).  Returns the
    raw integrals Int_0^inf Re[...] d nu_i, one per payoff; a ray
    contribution carries the weight e^{-+i pi/4} dt of the d nu_i
    parametrization.
    """
    if cfg.contour_offset >= 0:
        raise ContourViolation(
            f"index contour needs nu_r < 0, got {cfg.contour_offset}"
        )
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    dirs = np.atleast_1d(np.asarray(dirs, dtype=int))
    if cfg.panel_width is not None:
        main_width = cfg.panel_width
    else:
        main_width = min(1.25 * 2.0 * np.pi / np.max(rates), 800.0)
    tol = cfg.decay_tol * np.pi * max(0.05, np.sqrt(v0 + p.m))
    # vertical extent before rotating the contour into the decaying
    # direction: the width ramp plus ~2.5 oscillation periods
    switch = 425.0 + 2.5 * main_width

    total = np.zeros(len(rates))
    kept = []  # (mu, cw, gp, payoff row indices)
    with_corr = cg is not None and not cg.is_zero()

    def add_panel(nu, cw, rows):
        mu = -nu
        terms = kernel.cir_terms_grid(np.array([tau]), mu, p)
        g = np.exp(terms["A"][0] + v0 * terms["B"][0])
        gp = g * phats(nu)[rows]
        total[rows] += np.real(gp * cw).sum(axis=1)
        if with_corr:
            kept.append((mu, cw, gp, rows))
        return float(np.max(np.abs(gp @ cw)))

    all_rows = np.arange(len(rates))
    a, k = 0.0, 0
    while a < switch:
        width = min(main_width, 5.0 * 4.0 ** min(k, 8))
        b = min(a + width, switch)
        ni, wts = panel_nodes(a, b, cfg.nodes)
        add_panel(cfg.contour_offset + 1j * ni, wts.astype(complex), all_rows)
        a, k = b, k + 1

    ray_width = main_width * np.sqrt(2.0)
    base = cfg.contour_offset + 1j * switch
    for sgn in (1, -1):
        rows = all_rows[dirs == sgn]
        if len(rows) == 0:
            continue
        # ray direction: 45 degrees off vertical, toward Re(nu) -> +inf
        # (sgn=+1) or -inf (sgn=-1); contribution (1/i) * f dnu
        rot = np.exp(1j * (np.pi / 2.0 - sgn * np.pi / 4.0))
        below, t = 0, 0.0
        while t < cfg.truncation:
            t2 = min(t + ray_width, cfg.truncation)
            tt, wts = panel_nodes(t, t2, cfg.nodes)
            mag = add_panel(base + rot * tt, wts * (rot / 1j), rows)
            below = below + 1 if mag < tol else 0
            if below >= 2:
                break
            t = t2
        else:
            raise QuadratureDivergence(
                f"index integrand not decayed below tolerance within "
                f"{cfg.truncation}"
            )

    if with_corr:
        groups = {}
        for mu, cw, gp, rows in kept:
            g = groups.setdefault(rows.tobytes(), {"rows": rows, "parts": []})
            g["parts"].append((mu, cw, gp))
        for g in groups.values():
            rows = g["rows"]
            mu = np.concatenate([m for m, _, _ in g["parts"]])
            cw = np.concatenate([c for _, c, _ in g["parts"]])
            gp = np.concatenate([q for _, _, q in g["parts"]], axis=1)
            mults = np.empty_like(mu)
            for lo in range(0, len(mu), 8192):
                sl = slice(lo, lo + 8192)
                h0, h1, h2 = corrections.solve_hv_system(
                    tau, mu[sl], p, cg, n_steps=ode_steps
                )
                mults[sl] = h0 + v0 * h1 + v0 * v0 * h2
            total[rows] += np.real(gp * (mults * cw)).sum(axis=1)
    return total


def _price(v0, inst, p, cfg, cg, ode_steps=None):
    if v0 < 0:
        raise InvalidParameters("v0 must be nonnegative")
    mapping = VixMapping.from_params(p.kappa, p.m)
    tau = inst.expiry_tau
    if tau == 0.0:
        level = vix_from_variance(v0, mapping)
        return level if inst.kind == "future" else max(level - inst.strike, 0.0)
    strike = inst.strike if inst.kind == "call" else None

    def phats(nu):
        s = -nu
        if inst.kind == "future":
            return _phat_future(s, mapping)[None, :]
        return _phat_call(s, strike, mapping)[None, :]

    rate, sgn = _rate_dir(v0, tau, mapping, strike)
    raw = _sweep(v0, tau, p, cfg, phats, [rate], [sgn], cg, ode_steps)[0]
    disc = np.exp(-p.r * tau) if inst.kind == "call" else 1.0
    return float(disc * raw / np.pi)


def price_vix_order0(
    v0: float,
    inst: VixInstrument,
    p: HestonParams,
    q: QuadratureConfig = VIX_QUAD,
) -> float:
    """Zeroth-order price of a VIX future or call (futures undiscounted)."""
    return _price(v0, inst, p, q, cg=None)


def price_vix_first_order(
    v0: float,
    inst: VixInstrument,
    p: HestonParams,
    cg: CorrectionGroups,
    q: QuadratureConfig = VIX_QUAD,
    ode_steps: int | None = None,
) -> float:
    """First-order price including fast and slow index corrections."""
    return _price(v0, inst, p, q, cg=cg, ode_steps=ode_steps)


def price_vix_calls(
    v0: float,
    strikes,
    tau: float,
    p: HestonParams,
    cg: CorrectionGroups | None = None,
    q: QuadratureConfig = VIX_QUAD,
    ode_steps: int | None = None,
) -> np.ndarray:
    """Price several VIX calls of one expiry on shared nodes and one
    correction solve (the correction multiplier is strike-free)."""
    strikes = np.atleast_1d(np.asarray(strikes, dtype=float))
    if np.any(strikes <= 0):
        raise InvalidParameters("strikes must be positive")
    mapping = VixMapping.from_params(p.kappa, p.m)
    if tau == 0.0:
        level = vix_from_variance(v0, mapping)
        return np.maximum(level - strikes, 0.0)

    def phats(nu):
        s = -nu
        return np.stack([_phat_call(s, k, mapping) for k in strikes])

    rd = [_rate_dir(v0, tau, mapping, k) for k in strikes]
    rates = [r for r, _ in rd]
    dirs = [d for _, d in rd]
    raw = _sweep(v0, tau, p, q, phats, rates, dirs, cg, ode_steps)
    return np.exp(-p.r * tau) * raw / np.pi
