"""Model parameter containers.

The zeroth-order model is a Heston diffusion evaluated at the effective
(fast-scale averaged) vol-of-vol ``eta_bar`` and correlation ``rho_bar``,
with the slow state frozen.  First-order smile corrections enter through
seven small constant group parameters; the two parameters appearing in
volatility-index pricing are consistency-constrained views of two of them.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import InvalidParameters


@dataclass(frozen=True)
class HestonParams:
    """Heston parameters at a frozen slow-scale state.

    kappa   : mean-reversion rate of the variance (1/years)
    m       : long-run variance level
    eta_bar : effective vol-of-vol
    rho_bar : effective spot/variance correlation, in (-1, 1)
    v0      : current instantaneous variance
    r, q    : flat risk-free rate and dividend yield (1/years)
    """

    kappa: float
    m: float
    eta_bar: float
    rho_bar: float
    v0: float
    r: float = 0.0
    q: float = 0.0

    def __post_init__(self):
        if not (self.kappa > 0.0):
            raise InvalidParameters(f"kappa must be positive, got {self.kappa}")
        if not (self.m > 0.0):
            raise InvalidParameters(f"m must be positive, got {self.m}")
        if not (self.eta_bar > 0.0):
            raise InvalidParameters(f"eta_bar must be positive, got {self.eta_bar}")
        if not (-1.0 < self.rho_bar < 1.0):
            raise InvalidParameters(f"rho_bar must lie in (-1, 1), got {self.rho_bar}")
        if not (self.v0 >= 0.0):
            raise InvalidParameters(f"v0 must be nonnegative, got {self.v0}")

    @property
    def feller_ok(self) -> bool:
        """Soft diagnostic: 2*kappa*m >= eta_bar^2."""
        return 2.0 * self.kappa * self.m >= self.eta_bar**2

    def with_(self, **kwargs) -> "HestonParams":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class CorrectionGroups:
    """The seven first-order group parameters.

    Fast-scale (equity): v12_eps, v21_eps, v03_eps.
    Slow-scale (equity): v10_eta_delta, v01_eta_delta, v10_rho_delta,
    v01_rho_delta.

    The volatility-index pricer uses v3_eps == v03_eps and
    v1_delta == v01_eta_delta; they are stored once and exposed as views.
    """

    v12_eps: float = 0.0
    v21_eps: float = 0.0
    v03_eps: float = 0.0
    v10_eta_delta: float = 0.0
    v01_eta_delta: float = 0.0
    v10_rho_delta: float = 0.0
    v01_rho_delta: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            val = getattr(self, f.name)
            if not np.isfinite(val):
                raise InvalidParameters(f"{f.name} must be finite, got {val}")

    @property
    def v3_eps(self) -> float:
        """Fast parameter of the volatility-index correction (== v03_eps)."""
        return self.v03_eps

    @property
    def v1_delta(self) -> float:
        """Slow parameter of the volatility-index correction (== v01_eta_delta)."""
        return self.v01_eta_delta

    def is_zero(self) -> bool:
        return all(getattr(self, f.name) == 0.0 for f in fields(self))

    def scaled(self, factor: float) -> "CorrectionGroups":
        return CorrectionGroups(
            **{f.name: factor * getattr(self, f.name) for f in fields(self)}
        )

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


ZERO_CORRECTIONS = CorrectionGroups()


@dataclass(frozen=True)
class RateCurve:
    """Piecewise-constant short-rate term structure.

    ``times`` are the right edges of the constant segments (ascending,
    years); ``rates`` the rate on each segment.  The last rate extends
    beyond the final edge.  Enters pricing only through the integrated
    rate, i.e. discount and forward factors.
    """

    times: tuple
    rates: tuple

    def __post_init__(self):
        if len(self.times) != len(self.rates) or not self.times:
            raise InvalidParameters("times and rates must be equal-length, nonempty")
        if any(t2 <= t1 for t1, t2 in zip(self.times, self.times[1:])):
            raise InvalidParameters("times must be strictly increasing")

    @classmethod
    def flat(cls, rate: float) -> "RateCurve":
        return cls(times=(1.0,), rates=(float(rate),))

    def integral(self, tau: float) -> float:
        """Integrated rate over [0, tau]."""
        total, prev = 0.0, 0.0
        for t, rr in zip(self.times, self.rates):
            if tau <= t:
                return total + rr * (tau - prev)
            total += rr * (t - prev)
            prev = t
        return total + self.rates[-1] * (tau - prev)

    def discount(self, tau: float) -> float:
        return float(np.exp(-self.integral(tau)))
