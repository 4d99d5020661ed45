"""Gauss-Legendre panel quadrature configuration and node generation."""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .errors import InvalidParameters


@dataclass(frozen=True)
class QuadratureConfig:
    """Contour Fourier integral settings.

    contour_offset : fixed part of the transform variable.  Equity
        integrals fix the imaginary part (xi_i > 1 for calls); index
        integrals fix the real part (nu_r < 0).
    truncation : hard cap on the integration extent.
    nodes : Gauss-Legendre nodes per panel (>= 64).
    scheme : fixed at "gauss-legendre".
    panel_width : panel length; None lets the pricer match it to the
        integrand's oscillation period.
    decay_tol : a panel contribution below decay_tol * scale (twice in a
        row) terminates the sweep.
    """

    contour_offset: float = 1.5
    truncation: float = 400.0
    nodes: int = 64
    scheme: str = "gauss-legendre"
    panel_width: float | None = 10.0
    decay_tol: float = 1e-12

    def __post_init__(self):
        if self.nodes < 64:
            raise InvalidParameters(f"nodes must be >= 64, got {self.nodes}")
        if not (self.truncation > 0):
            raise InvalidParameters("truncation must be positive")
        if self.scheme != "gauss-legendre":
            raise InvalidParameters(f"unsupported scheme {self.scheme!r}")
        if self.panel_width is not None and not (self.panel_width > 0):
            raise InvalidParameters("panel_width must be positive")

    def with_(self, **kwargs) -> "QuadratureConfig":
        return replace(self, **kwargs)


SPX_QUAD = QuadratureConfig(contour_offset=1.5, truncation=400.0, panel_width=10.0)
VIX_QUAD = QuadratureConfig(
    contour_offset=-0.5, truncation=300000.0, panel_width=None, decay_tol=1e-11
)


@lru_cache(maxsize=8)
def _gl_nodes(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def panel_nodes(a: float, b: float, n: int):
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = _gl_nodes(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w
