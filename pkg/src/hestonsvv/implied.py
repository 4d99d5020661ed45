"""Black (lognormal-forward) pricing and implied volatility.

Index options are quoted Black-on-forward; VIX options Black on the VIX
future, the usual market convention.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

from .errors import InvalidParameters, OutOfBounds

VOL_BRACKET = (1e-6, 5.0)
PRICE_TOL = 1e-10
MAX_ITER = 100


def black_price(
    forward: float,
    strike: float,
    tau: float,
    vol: float,
    discount: float = 1.0,
    kind: str = "call",
) -> float:
    """Discounted Black price on the forward."""
    if forward <= 0 or strike <= 0 or tau <= 0 or discount <= 0:
        raise InvalidParameters("forward, strike, tau, discount must be positive")
    if vol < 0:
        raise InvalidParameters("vol must be nonnegative")
    if kind not in ("call", "put"):
        raise InvalidParameters(f"kind must be call or put, got {kind!r}")
    sd = vol * np.sqrt(tau)
    if sd == 0.0:
        intrinsic = forward - strike if kind == "call" else strike - forward
        return discount * max(intrinsic, 0.0)
    d1 = np.log(forward / strike) / sd + 0.5 * sd
    d2 = d1 - sd
    if kind == "call":
        return float(discount * (forward * ndtr(d1) - strike * ndtr(d2)))
    return float(discount * (strike * ndtr(-d2) - forward * ndtr(-d1)))


def black_vega(
    forward: float, strike: float, tau: float, vol: float, discount: float = 1.0
) -> float:
    sd = vol * np.sqrt(tau)
    d1 = np.log(forward / strike) / sd + 0.5 * sd
    return float(
        discount * forward * np.sqrt(tau) * np.exp(-0.5 * d1 * d1) / np.sqrt(2 * np.pi)
    )


def implied_vol(
    price: float,
    forward: float,
    strike: float,
    tau: float,
    discount: float = 1.0,
    kind: str = "call",
) -> float:
    """Invert the Black formula.

    Bisection on [1e-6, 5.0] accelerated by safeguarded Newton steps;
    terminates within 100 iterations for any price strictly inside the
    static no-arbitrage bounds, else raises OutOfBounds naming the
    violated bound.
    """
    if kind == "call":
        lower = discount * max(forward - strike, 0.0)
        upper = discount * forward
    else:
        lower = discount * max(strike - forward, 0.0)
        upper = discount * strike
    if not (price > lower):
        raise OutOfBounds(
            f"price {price} at or below intrinsic bound {lower}", bound="lower"
        )
    if not (price < upper):
        raise OutOfBounds(
            f"price {price} at or above forward bound {upper}", bound="upper"
        )

    lo, hi = VOL_BRACKET
    f_lo = black_price(forward, strike, tau, lo, discount, kind) - price
    f_hi = black_price(forward, strike, tau, hi, discount, kind) - price
    if f_lo >= 0.0:
        raise OutOfBounds(
            f"price {price} below the vol-bracket floor {lo}", bound="lower"
        )
    if f_hi <= 0.0:
        raise OutOfBounds(
            f"price {price} above the vol-bracket cap {hi}", bound="upper"
        )

    vol = 0.5 * (lo + hi)
    for _ in range(MAX_ITER):
        f = black_price(forward, strike, tau, vol, discount, kind) - price
        if abs(f) < PRICE_TOL:
            return float(vol)
        if f > 0.0:
            hi = vol
        else:
            lo = vol
        if hi - lo < 1e-14:
            return float(vol)
        vega = black_vega(forward, strike, tau, vol, discount)
        step = f / vega if vega > 1e-300 else np.inf
        candidate = vol - step
        if lo < candidate < hi:
            vol = candidate
        else:
            vol = 0.5 * (lo + hi)
    return float(vol)
