"""Equity-index option pricing via the contour Fourier integral.

Prices are computed in log-forward coordinates x = log(spot) + (r-q)*tau,
where the call payoff transform is tau-free:

    price = (e^{-r tau} / pi) * Int_0^inf Re[ e^{-i xi x} * mult(tau, xi)
            * exp(C + v*D) * payoff_hat(xi) ] d xi_r,

with xi = xi_r + i*xi_i on a contour xi_i > 1 and mult = 1 at zeroth
order or 1 + (f0+g0) + v*(f1+g1) + v^2*g2 at first order.  Puts are
priced from calls by parity.  The integral runs over fixed-width
Gauss-Legendre panels until a panel's contribution decays below
tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import corrections, kernel
from .errors import ContourViolation, InvalidParameters, QuadratureDivergence
from .params import CorrectionGroups, HestonParams, RateCurve
from .quadrature import SPX_QUAD, QuadratureConfig, panel_nodes


@dataclass(frozen=True)
class EquityOption:
    strike: float
    expiry_tau: float
    kind: str = "call"

    def __post_init__(self):
        if not (self.strike > 0):
            raise InvalidParameters(f"strike must be positive, got {self.strike}")
        if not (self.expiry_tau > 0):
            raise InvalidParameters("expiry_tau must be positive")
        if self.kind not in ("call", "put"):
            raise InvalidParameters(f"kind must be call or put, got {self.kind!r}")


def call_payoff_transform(strike: float, xi: complex) -> complex:
    """Fourier transform of the call payoff in log-price coordinates.

    With w(x) = (e^x - K)^+ and the transform Int w(x) e^{i xi x} dx,
    convergent for Im(xi) > 1:  K^{1 + i xi} / (i xi (1 + i xi)).
    """
    if np.imag(xi) <= 1.0:
        raise ContourViolation(f"call transform needs Im(xi) > 1, got {np.imag(xi)}")
    return strike ** (1.0 + 1j * xi) / (1j * xi * (1.0 + 1j * xi))


def _carry(tau: float, p: HestonParams, r_curve, q_curve):
    """Integrated rate/dividend over [0, tau] -> (discount, log forward shift)."""
    rint = r_curve.integral(tau) if r_curve is not None else p.r * tau
    qint = q_curve.integral(tau) if q_curve is not None else p.q * tau
    return float(np.exp(-rint)), rint - qint


def price_strikes(
    spot: float,
    strikes,
    tau: float,
    p: HestonParams,
    cg: CorrectionGroups | None = None,
    q: QuadratureConfig = SPX_QUAD,
    kinds=None,
    r_curve: RateCurve | None = None,
    q_curve: RateCurve | None = None,
) -> np.ndarray:
    """Price several strikes of one maturity on shared quadrature nodes.

    ``cg=None`` prices at zeroth order; otherwise the first-order
    multiplier is applied.  ``kinds`` is a matching sequence of
    "call"/"put" (default all calls; puts via parity).
    """
    if spot <= 0:
        raise InvalidParameters("spot must be positive")
    if tau <= 0:
        raise InvalidParameters("tau must be positive")
    if q.contour_offset <= 1.0:
        raise ContourViolation(
            f"equity contour needs xi_i > 1, got {q.contour_offset}"
        )
    strikes = np.atleast_1d(np.asarray(strikes, dtype=float))
    if np.any(strikes <= 0):
        raise InvalidParameters("strikes must be positive")
    kinds = ["call"] * len(strikes) if kinds is None else list(kinds)

    disc, carry = _carry(tau, p, r_curve, q_curve)
    x = np.log(spot) + carry  # log forward
    lnk = np.log(strikes)
    v = p.v0
    with_corr = cg is not None and not cg.is_zero()

    # Zeroth-order sweep fixes the truncation point; the first-order
    # multiplier is 1 + O(group params), so its tail obeys the same
    # decay rule.
    width = q.panel_width if q.panel_width is not None else 10.0
    tol = q.decay_tol * spot * np.pi / disc  # tolerance on the raw integral
    total = np.zeros(len(strikes))
    kept_xi, kept_w, kept_cd = [], [], []
    below, a = 0, 0.0
    while a < q.truncation:
        b = min(a + width, q.truncation)
        xr, wts = panel_nodes(a, b, q.nodes)
        xi = xr + 1j * q.contour_offset
        terms = kernel.equity_terms_grid(np.array([tau]), xi, p)
        cd = terms["C"][0] + v * terms["D"][0]
        base = np.exp(cd) / (1j * xi * (1.0 + 1j * xi))
        # e^{-i xi x} * K^{1+i xi} = K * e^{-i xi (x - ln K)}
        phase = np.exp(-1j * np.outer(x - lnk, xi))
        panel = strikes * np.real((phase * base) @ wts)
        total += panel
        if with_corr:
            kept_xi.append(xi)
            kept_w.append(wts)
            kept_cd.append(cd)
        below = below + 1 if np.all(np.abs(panel) < tol) else 0
        if below >= 2:
            break
        a = b
    else:
        raise QuadratureDivergence(
            f"equity integrand not decayed below tolerance by xi_r = {q.truncation}"
        )

    if with_corr:
        xi = np.concatenate(kept_xi)
        wts = np.concatenate(kept_w)
        cd = np.concatenate(kept_cd)
        f0, f1, g0, g1, g2 = corrections.solve_equity_systems(tau, xi, p, cg)
        mult = (f0 + g0) + v * (f1 + g1) + v * v * g2
        base = mult * np.exp(cd) / (1j * xi * (1.0 + 1j * xi))
        phase = np.exp(-1j * np.outer(x - lnk, xi))
        total += strikes * np.real((phase * base) @ wts)

    calls = disc / np.pi * total
    forward = spot * np.exp(carry)
    out = calls.copy()
    for i, kind in enumerate(kinds):
        if kind == "put":
            out[i] = calls[i] - disc * (forward - strikes[i])
        elif kind != "call":
            raise InvalidParameters(f"unknown option kind {kind!r}")
    return out


def price_order0(
    spot: float,
    option: EquityOption,
    p: HestonParams,
    q: QuadratureConfig = SPX_QUAD,
    r_curve: RateCurve | None = None,
    q_curve: RateCurve | None = None,
) -> float:
    """Zeroth-order (effective Heston) price of a European option."""
    return float(
        price_strikes(
            spot, [option.strike], option.expiry_tau, p,
            cg=None, q=q, kinds=[option.kind], r_curve=r_curve, q_curve=q_curve,
        )[0]
    )


def price_first_order(
    spot: float,
    option: EquityOption,
    p: HestonParams,
    cg: CorrectionGroups,
    q: QuadratureConfig = SPX_QUAD,
    r_curve: RateCurve | None = None,
    q_curve: RateCurve | None = None,
) -> float:
    """First-order price: zeroth order plus fast and slow corrections."""
    return float(
        price_strikes(
            spot, [option.strike], option.expiry_tau, p,
            cg=cg, q=q, kinds=[option.kind], r_curve=r_curve, q_curve=q_curve,
        )[0]
    )
