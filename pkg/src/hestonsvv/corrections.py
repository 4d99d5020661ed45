"""First-order correction multipliers.

Three linear ODE systems in tau produce the polynomial-in-v multipliers
that turn zeroth-order transforms into first-order prices:

* fast-scale equity pair (f0, f1),
* slow-scale equity triple (g0, g1, g2),
* volatility-index triple (h0, h1, h2).

All systems share the structure  y' = a(tau)*y + s(tau)  with
coefficients built from the analytic kernel, zero initial conditions,
and sources linear in the group parameters.  They are integrated with a
classical fixed-step RK4 scheme, N = max(64, ceil(512*tau)) steps, with
kernel coefficients evaluated analytically at the half-step ladder, so
results are deterministic and bit-reproducible.

Note: the slow-scale g1 equation carries the coefficient
(2*kappa*m + eta_bar^2) on g2.  This follows from substituting the
polynomial ansatz into the transformed pricing PDE (the same structure
appears in the volatility-index h1 equation) and is verified numerically
by a PDE-residual test.
"""

from __future__ import annotations

import numpy as np

from . import kernel
from .params import CorrectionGroups, HestonParams


def default_steps(tau: float) -> int:
    return max(64, int(np.ceil(512.0 * tau)))


def _half_grid(tau: float, n_steps: int) -> np.ndarray:
    return np.linspace(0.0, tau, 2 * n_steps + 1)


def _rk4(n_steps: int, h: float, rhs, y0: np.ndarray) -> np.ndarray:
    y = y0
    for k in range(n_steps):
        j0, jh, j1 = 2 * k, 2 * k + 1, 2 * k + 2
        k1 = rhs(j0, y)
        k2 = rhs(jh, y + 0.5 * h * k1)
        k3 = rhs(jh, y + 0.5 * h * k2)
        k4 = rhs(j1, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


def _as_given(values, xi):
    """Return scalars if xi was scalar, else 1-d arrays."""
    if np.ndim(xi) == 0:
        return tuple(complex(v[0]) for v in values)
    return tuple(values)


def solve_equity_systems(
    tau: float,
    xi,
    p: HestonParams,
    cg: CorrectionGroups,
    n_steps: int | None = None,
    return_terms: bool = False,
):
    """Fast and slow equity corrections (f0, f1, g0, g1, g2) on one ladder.

    With ``return_terms`` also returns the kernel terms at tau (the last
    ladder point), letting pricers reuse the grid evaluation.
    """
    xi_arr = np.atleast_1d(np.asarray(xi, dtype=complex))
    n = n_steps or default_steps(tau)
    if tau == 0.0:
        z = np.zeros_like(xi_arr)
        vals = _as_given((z,) * 5, xi)
        return (vals, None) if return_terms else vals
    grid = _half_grid(tau, n)
    terms = kernel.equity_terms_grid(grid, xi_arr, p)
    D = terms["D"]
    a = p.eta_bar**2 * D - (p.kappa + 1j * p.rho_bar * p.eta_bar * xi_arr)
    sf = (
        -1j * xi_arr * cg.v12_eps * D**2
        - xi_arr**2 * cg.v21_eps * D
        + cg.v03_eps * D**3
    )
    se = cg.v01_eta_delta - 1j * xi_arr * cg.v10_eta_delta
    sr = cg.v01_rho_delta - 1j * xi_arr * cg.v10_rho_delta
    sg2 = se * terms["dD_deta"] + sr * terms["dD_drho"]
    sg1 = (
        se * terms["dC_deta"]
        + sr * terms["dC_drho"]
        + cg.v01_eta_delta * terms["dD_deta"]
        + cg.v01_rho_delta * terms["dD_drho"]
    )
    km = p.kappa * p.m
    feed = 2.0 * km + p.eta_bar**2

    def rhs(j, y):
        f0, f1, g0, g1, g2 = y
        return np.stack(
            [
                km * f1,
                a[j] * f1 + sf[j],
                km * g1,
                a[j] * g1 + feed * g2 + sg1[j],
                2.0 * a[j] * g2 + sg2[j],
            ]
        )

    y = _rk4(n, tau / n, rhs, np.zeros((5,) + xi_arr.shape, dtype=complex))
    vals = _as_given(tuple(y), xi)
    if return_terms:
        at_tau = {k: v[-1] for k, v in terms.items()}
        return vals, at_tau
    return vals


def solve_f_system(
    tau: float,
    xi,
    p: HestonParams,
    cg: CorrectionGroups,
    n_steps: int | None = None,
):
    """Fast-scale equity corrections (f0, f1) at (tau, xi).

    f1' = (eta^2*D - (kappa + i*rho*eta*xi))*f1
          - i*xi*V12*D^2 - xi^2*V21*D + V03*D^3
    f0' = kappa*m*f1,    f0(0) = f1(0) = 0.
    """
    return solve_equity_systems(tau, xi, p, cg, n_steps)[:2]


def solve_g_system(
    tau: float,
    xi,
    p: HestonParams,
    cg: CorrectionGroups,
    n_steps: int | None = None,
):
    """Slow-scale equity corrections (g0, g1, g2) at (tau, xi).

    g2' = 2*a*g2 + se*dD/deta + sr*dD/drho
    g1' = a*g1 + (2*kappa*m + eta^2)*g2
          + se*dC/deta + sr*dC/drho + V01e*dD/deta + V01r*dD/drho
    g0' = kappa*m*g1
    with a = eta^2*D - (kappa + i*rho*eta*xi),
    se = V01e - i*xi*V10e, sr = V01r - i*xi*V10r.
    """
    return solve_equity_systems(tau, xi, p, cg, n_steps)[2:]


def solve_hv_system(
    tau: float,
    nu,
    p: HestonParams,
    cg: CorrectionGroups,
    n_steps: int | None = None,
    return_terms: bool = False,
):
    """Volatility-index corrections (h0, h1, h2) at (tau, nu).

    h2' = 2*(-kappa + B*eta^2)*h2 + V1*B*dB/deta
    h1' = (-kappa + B*eta^2)*h1 + (2*kappa*m + eta^2)*h2
          + V3*B^3 + V1*(dB/deta + B*dA/deta)
    h0' = kappa*m*h1
    """
    nu_arr = np.atleast_1d(np.asarray(nu, dtype=complex))
    n = n_steps or default_steps(tau)
    if tau == 0.0:
        z = np.zeros_like(nu_arr)
        vals = _as_given((z, z, z), nu)
        return (vals, None) if return_terms else vals
    grid = _half_grid(tau, n)
    terms = kernel.cir_terms_grid(grid, nu_arr, p)
    B, dB, dA = terms["B"], terms["dB_deta"], terms["dA_deta"]
    a = -p.kappa + B * p.eta_bar**2
    v3, v1 = cg.v3_eps, cg.v1_delta
    src2 = v1 * B * dB
    src1 = v3 * B**3 + v1 * (dB + B * dA)
    km = p.kappa * p.m
    feed = 2.0 * km + p.eta_bar**2

    def rhs(j, y):
        h0, h1, h2 = y
        return np.stack(
            [
                km * h1,
                a[j] * h1 + feed * h2 + src1[j],
                2.0 * a[j] * h2 + src2[j],
            ]
        )

    y = _rk4(n, tau / n, rhs, np.zeros((3,) + nu_arr.shape, dtype=complex))
    vals = _as_given(tuple(y), nu)
    if return_terms:
        at_tau = {k: v[-1] for k, v in terms.items()}
        return vals, at_tau
    return vals
