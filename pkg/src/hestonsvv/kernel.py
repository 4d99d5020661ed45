"""Complex-valued transform building blocks.

Equity side: the exponents C, D of the log-forward transform
G_S(tau, xi, v) = exp(C + v*D) = E[exp(-i*xi*X_T) | X_t] * exp(i*xi*X_t),
where X is the log forward.  They solve the Riccati system

    dD/dtau = (i*xi - xi^2)/2 - (kappa + i*rho_bar*eta_bar*xi)*D
              + eta_bar^2*D^2 / 2,        D(0) = 0,
    dC/dtau = kappa*m*D,                  C(0) = 0.

Variance side: the exponents A, B of the square-root-process moment
transform G_V(tau, nu, v) = exp(A + v*B) = E[exp(nu*V_T) | V_t = v],

    dB/dtau = -kappa*B + eta_bar^2*B^2 / 2,   B(0) = nu,
    dA/dtau = kappa*m*B,                      A(0) = 0.

Both are evaluated in closed form, in the algebraically stable
variant (numerator b - d computed as -eta_bar^2*(xi^2 - i*xi)/(b + d),
so the xi -> 0 limit and the small-eta_bar limit are exact).  The
complex logarithm in C is tracked continuously in tau by accumulating
phase increments along a ladder fine enough that no single step can
rotate by pi.

Partial derivatives with respect to eta_bar and rho_bar, needed by the
slow-scale correction sources, are differentiated analytically from the
same closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFrequency
from .params import HestonParams

DEFAULT_FLOOR = 1e-13
ZERO_FREQ_CUTOFF = 1e-12
_PHASE_BUDGET = 1.0  # max radians per tracking step


@dataclass(frozen=True)
class EquityCfTerms:
    """C, D and their eta_bar / rho_bar derivatives at one (tau, xi)."""

    C: complex
    D: complex
    dC_deta: complex
    dD_deta: complex
    dC_drho: complex
    dD_drho: complex


@dataclass(frozen=True)
class CirTransformTerms:
    """A, B and their eta_bar derivatives at one (tau, nu)."""

    A: complex
    B: complex
    dA_deta: complex
    dB_deta: complex


def _clog1p(w):
    """Principal log(1 + w) for complex arrays, series-accurate near 0."""
    w = np.asarray(w, dtype=complex)
    out = np.empty_like(w)
    small = np.abs(w) < 1e-4
    ws = w[small]
    out[small] = ws * (1 - ws * (1 / 2 - ws * (1 / 3 - ws * (1 / 4 - ws / 5))))
    out[~small] = np.log(1.0 + w[~small])
    return out


# ---------------------------------------------------------------------------
# equity transform
# ---------------------------------------------------------------------------


def _equity_pieces(xi, p: HestonParams, floor: float):
    """tau-independent quantities entering C, D and their derivatives."""
    eta, rho, kappa = p.eta_bar, p.rho_bar, p.kappa
    q = xi * xi - 1j * xi
    b = kappa + 1j * rho * eta * xi
    d = np.sqrt(eta * eta * q + b * b)
    if np.any(np.abs(d) < floor):
        raise DegenerateFrequency("discriminant d ~ 0")
    bpd = b + d
    # b - d ~ 0 is the benign xi -> 0 / eta -> 0 limit in this stable
    # form; the factor ratio g degenerates when b + d ~ 0 instead.
    if np.any(np.abs(bpd) < floor * np.maximum(1.0, np.abs(b))):
        raise DegenerateFrequency("b + d below floor (g denominator)")
    bmd = -eta * eta * q / bpd  # stable b - d
    gt = bmd / bpd

    # parameter derivatives of the pieces; index 0 = eta_bar, 1 = rho_bar
    db = (1j * rho * xi, 1j * eta * xi)
    dd = ((eta * q + b * db[0]) / d, b * db[1] / d)
    dbpd = (db[0] + dd[0], db[1] + dd[1])
    dbmd = (
        -2.0 * eta * q / bpd + eta * eta * q * dbpd[0] / bpd**2,
        eta * eta * q * dbpd[1] / bpd**2,
    )
    dgt = (
        dbmd[0] / bpd - bmd * dbpd[0] / bpd**2,
        dbmd[1] / bpd - bmd * dbpd[1] / bpd**2,
    )
    return q, b, d, bpd, gt, db, dd, dbpd, dgt


def _tracking_times(tau_grid, max_rate):
    """Refine tau_grid so each step rotates the log argument < pi."""
    times = [0.0]
    src_index = []
    for t in tau_grid:
        t = float(t)
        prev = times[-1]
        if t < prev - 1e-15:
            raise ValueError("tau_grid must be ascending")
        if t > prev:
            nsub = int(np.ceil((t - prev) * max_rate / _PHASE_BUDGET))
            nsub = max(nsub, 1)
            for k in range(1, nsub):
                times.append(prev + (t - prev) * k / nsub)
            times.append(t)
        src_index.append(len(times) - 1)
    return np.array(times), src_index


def equity_terms_grid(tau_grid, xi, p: HestonParams, floor: float = DEFAULT_FLOOR):
    """C, D and parameter derivatives on an ascending tau grid.

    Parameters
    ----------
    tau_grid : ascending array of year fractions (>= 0)
    xi : complex scalar or array of transform frequencies
    p : HestonParams

    Returns
    -------
    dict with keys C, D, dC_deta, dD_deta, dC_drho, dD_drho; each an
    array of shape (len(tau_grid),) + shape(xi).
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=complex))
    tau_grid = np.atleast_1d(np.asarray(tau_grid, dtype=float))
    eta, kappa, m = p.eta_bar, p.kappa, p.m

    zero = np.abs(xi) < ZERO_FREQ_CUTOFF
    xi_safe = np.where(zero, 1.0 + 1.5j, xi)

    q, b, d, bpd, gt, db, dd, dbpd, dgt = _equity_pieces(xi_safe, p, floor)

    max_rate = float(np.max(np.abs(d))) + 1.0
    times, idx = _tracking_times(tau_grid, max_rate)

    m0 = 1.0 - gt  # log argument at tau = 0
    if np.any(np.abs(m0) < floor):
        raise DegenerateFrequency("1 - g ~ 0 at tau = 0")
    dm0 = (-dgt[0], -dgt[1])

    e_all = np.exp(-np.multiply.outer(times, d))  # (R,) + xi.shape
    m_all = 1.0 - gt * e_all
    if np.any(np.abs(m_all) < floor):
        raise DegenerateFrequency("1 - g*exp(-d*tau) below floor")
    # phase of M(t)/M(0) accumulated step by step along the ladder
    arg_all = np.zeros_like(e_all, dtype=float)
    if len(times) > 1:
        np.cumsum(np.angle(m_all[1:] / m_all[:-1]), axis=0, out=arg_all[1:])

    sel = np.asarray(idx)
    t = times[sel].reshape((-1,) + (1,) * xi.ndim)
    e, mm, arg = e_all[sel], m_all[sel], arg_all[sel]

    wm1 = gt * (1.0 - e) / m0  # M/M0 - 1
    logw = np.where(
        (np.abs(wm1) < 1e-6) & (np.abs(arg - np.angle(mm / m0)) < 1.0),
        _clog1p(wm1),
        np.log(np.abs(mm / m0)) + 1j * arg,
    )
    ee = (1.0 - e) / mm
    out = {
        "D": -q * ee / bpd,
        "C": kappa * m * (-q * t / bpd - 2.0 * logw / eta**2),
    }
    for pi, suf in ((0, "eta"), (1, "rho")):
        dmm = -dgt[pi] * e + gt * t * e * dd[pi]
        dee = t * e * dd[pi] / mm - (1.0 - e) * dmm / mm**2
        out["dD_d" + suf] = -q * (dee / bpd - ee * dbpd[pi] / bpd**2)
        dlogw = dmm / mm - dm0[pi] / m0
        dC = kappa * m * (q * t * dbpd[pi] / bpd**2 - 2.0 * dlogw / eta**2)
        if suf == "eta":
            dC = dC + kappa * m * 4.0 * logw / eta**3
        out["dC_d" + suf] = dC

    if np.any(zero):
        for k in out:
            out[k] = np.where(zero, 0.0, out[k])
    return out


def equity_cf_terms(
    tau: float, xi: complex, p: HestonParams, floor: float = DEFAULT_FLOOR
) -> EquityCfTerms:
    """Closed-form C, D and eta/rho derivatives at one (tau, xi).

    The xi -> 0 limit returns zeros (characteristic function is 1 there);
    raises DegenerateFrequency when a transform denominator falls below
    ``floor``.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if tau == 0.0 or abs(xi) < ZERO_FREQ_CUTOFF:
        z = 0.0 + 0.0j
        return EquityCfTerms(z, z, z, z, z, z)
    g = equity_terms_grid(np.array([tau]), np.array([xi], dtype=complex), p, floor)
    return EquityCfTerms(
        C=complex(g["C"][0, 0]),
        D=complex(g["D"][0, 0]),
        dC_deta=complex(g["dC_deta"][0, 0]),
        dD_deta=complex(g["dD_deta"][0, 0]),
        dC_drho=complex(g["dC_drho"][0, 0]),
        dD_drho=complex(g["dD_drho"][0, 0]),
    )


# ---------------------------------------------------------------------------
# square-root-process (CIR) transform
# ---------------------------------------------------------------------------


def cir_terms_grid(tau_grid, nu, p: HestonParams, floor: float = DEFAULT_FLOOR):
    """A, B and eta_bar derivatives on an ascending tau grid.

    The log argument L(tau) = 1 - nu*(eta_bar^2/2kappa)*(1 - e^{-kappa tau})
    traces a straight segment from 1, so it can never wind around the
    origin and leaves the real axis immediately unless nu is real; the
    principal branch is therefore continuous in tau.
    """
    nu = np.atleast_1d(np.asarray(nu, dtype=complex))
    tau_grid = np.atleast_1d(np.asarray(tau_grid, dtype=float))
    eta, kappa, m = p.eta_bar, p.kappa, p.m

    zero = np.abs(nu) < ZERO_FREQ_CUTOFF
    nu_safe = np.where(zero, -1.0 + 1.0j, nu)

    u = np.exp(-kappa * tau_grid)[:, None]  # (n_tau, 1)
    s = 1.0 - u
    w = -nu_safe[None, :] * (eta * eta / (2.0 * kappa)) * s  # L - 1
    L = 1.0 + w
    if np.any(np.abs(L) < floor):
        raise DegenerateFrequency("CIR log argument below floor")

    logL = _clog1p(w)
    A = -(2.0 * kappa * m / eta**2) * logL
    B = nu_safe[None, :] * u / L
    dA = (4.0 * kappa * m / eta**3) * logL + 2.0 * m * nu_safe[None, :] * s / (eta * L)
    dB = nu_safe[None, :] ** 2 * u * s * eta / (kappa * L**2)

    zero_b = np.broadcast_to(zero[None, :], A.shape)
    zcplx = np.zeros_like(A)
    return {
        "A": np.where(zero_b, zcplx, A),
        "B": np.where(zero_b, zcplx, B),
        "dA_deta": np.where(zero_b, zcplx, dA),
        "dB_deta": np.where(zero_b, zcplx, dB),
    }


def cir_transform_terms(
    tau: float, nu: complex, p: HestonParams, floor: float = DEFAULT_FLOOR
) -> CirTransformTerms:
    """Closed-form A, B and eta_bar derivatives at one (tau, nu).

    B(0, nu) = nu and A(0, nu) = 0; the nu -> 0 limit returns zeros.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if abs(nu) < ZERO_FREQ_CUTOFF:
        z = 0.0 + 0.0j
        return CirTransformTerms(z, z, z, z)
    g = cir_terms_grid(np.array([tau]), np.array([nu], dtype=complex), p, floor)
    return CirTransformTerms(
        A=complex(g["A"][0, 0]),
        B=complex(g["B"][0, 0]),
        dA_deta=complex(g["dA_deta"][0, 0]),
        dB_deta=complex(g["dB_deta"][0, 0]),
    )
