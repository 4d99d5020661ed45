"""Monte Carlo reference engine.

Two jobs: validate zeroth-order Fourier prices against plain Heston /
square-root-process simulation, and validate the first-order accuracy
claim against the full four-factor system

    dS = (r-q) S dt + sqrt(V) S dW_S
    dV = kappa (m - V) dt + eta(Y, Z) sqrt(V) dW_V
    dY = (V/eps) alpha(Y) dt + sqrt(V/eps) beta(Y) dW_Y
    dZ = V delta c(Z) dt + sqrt(delta V) g(Z) dW_Z

with a concrete eta specification whose group parameters are computed by
quadrature from the fast factor's invariant density (Poisson-equation
solutions enter only through the primitive G(y) = Int_-inf^y F pi du,
e.g. <beta phi'> = Int 2 G_phi / beta dy).

Discretization is Euler with full truncation (V clamped nonnegative in
drift and diffusion arguments; reported states are clamped).  Paths are
generated by the counter-based Philox generator in fixed-size batches
with per-batch seeds spawned from the master seed, so results do not
depend on scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import InvalidParameters, QuadratureFailure, UnresolvedFastScale
from .params import CorrectionGroups, HestonParams
from .quadrature import QuadratureConfig, SPX_QUAD, VIX_QUAD
from . import spx as spx_mod
from . import vix as vix_mod

BATCH = 1 << 14
MIN_HESTON_STEPS_PER_YEAR = 250.0
MIN_FAST_RESOLUTION = 50.0


@dataclass(frozen=True)
class McEstimate:
    mean: float
    standard_error: float
    paths: int
    steps_per_year: float
    seed: int

    def within(self, reference: float, n_se: float = 3.0) -> bool:
        return abs(self.mean - reference) <= n_se * self.standard_error


def estimate(samples: np.ndarray, steps_per_year: float, seed: int) -> McEstimate:
    n = len(samples)
    return McEstimate(
        mean=float(np.mean(samples)),
        standard_error=float(np.std(samples, ddof=1) / np.sqrt(n)),
        paths=n,
        steps_per_year=steps_per_year,
        seed=seed,
    )


@dataclass(frozen=True)
class SvvSpec:
    """Concrete fast/slow vol-of-vol specification.

    eta(y, z) must be positive; alpha/beta define the fast factor (unit
    epsilon), c/g the slow one; corr is the 4x4 correlation matrix of
    (W_S, W_V, W_Y, W_Z).
    """

    eta: callable
    alpha: callable
    beta: callable
    c: callable
    g: callable
    corr: np.ndarray
    epsilon: float
    delta: float

    def __post_init__(self):
        corr = np.asarray(self.corr, dtype=float)
        if corr.shape != (4, 4) or not np.allclose(corr, corr.T):
            raise InvalidParameters("corr must be a symmetric 4x4 matrix")
        if not np.allclose(np.diag(corr), 1.0):
            raise InvalidParameters("corr must have unit diagonal")
        try:
            np.linalg.cholesky(corr)
        except np.linalg.LinAlgError:
            raise InvalidParameters("corr must be positive-definite") from None
        if not (self.epsilon > 0 and self.delta > 0):
            raise InvalidParameters("epsilon and delta must be positive")

    @property
    def rho_sv(self) -> float:
        return float(self.corr[0, 1])


def reference_spec(epsilon: float, delta: float) -> SvvSpec:
    """Ornstein-Uhlenbeck fast factor (invariant law N(0,1)) with
    eta(y, z) = z * (1 + 0.25 tanh y), slow drift c(z) = 1 - z, g = 1."""
    corr = np.array(
        [
            [1.0, -0.5, -0.2, -0.2],
            [-0.5, 1.0, 0.2, 0.2],
            [-0.2, 0.2, 1.0, 0.0],
            [-0.2, 0.2, 0.0, 1.0],
        ]
    )
    return SvvSpec(
        eta=lambda y, z: z * (1.0 + 0.25 * np.tanh(y)),
        alpha=lambda y: -y,
        beta=lambda y: np.sqrt(2.0) * np.ones_like(np.asarray(y, dtype=float)),
        c=lambda z: 1.0 - z,
        g=lambda z: np.ones_like(np.asarray(z, dtype=float)),
        corr=corr,
        epsilon=epsilon,
        delta=delta,
    )


# ---------------------------------------------------------------------------
# path generation
# ---------------------------------------------------------------------------


def _batch_rngs(seed: int, paths: int):
    out = []
    for i, lo in enumerate(range(0, paths, BATCH)):
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(i,))
        out.append((np.random.Generator(np.random.Philox(ss)), min(BATCH, paths - lo)))
    return out


def _run_batches(step_fn, seed, paths, threads=1):
    rngs = _batch_rngs(seed, paths)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda rn: step_fn(*rn), rngs))
    else:
        parts = [step_fn(rng, n) for rng, n in rngs]
    return [np.concatenate(cols) for cols in zip(*parts)]


def simulate_heston(
    p: HestonParams,
    horizon: float,
    paths: int,
    steps: int,
    seed: int,
    s0: float = 1.0,
    antithetic: bool = False,
    threads: int = 1,
):
    """Terminal (S_T, V_T) under the effective Heston model.

    Euler full truncation on V; the log price integrates exactly over
    each step conditional on the left-endpoint variance.
    """
    if steps / horizon < MIN_HESTON_STEPS_PER_YEAR:
        raise InvalidParameters(
            f"need at least {MIN_HESTON_STEPS_PER_YEAR} steps/year"
        )
    dt = horizon / steps
    sq_dt = np.sqrt(dt)
    rho = p.rho_bar
    rho_perp = np.sqrt(1.0 - rho * rho)

    def run(rng, n):
        x = np.full(n, np.log(s0))
        v = np.full(n, p.v0)
        for _ in range(steps):
            if antithetic:
                half = rng.standard_normal((2, (n + 1) // 2))
                zv = np.concatenate([half[0], -half[0]])[:n]
                zp = np.concatenate([half[1], -half[1]])[:n]
            else:
                zv = rng.standard_normal(n)
                zp = rng.standard_normal(n)
            zs = rho * zv + rho_perp * zp
            vp = np.maximum(v, 0.0)
            sq_v = np.sqrt(vp)
            x += (p.r - p.q - 0.5 * vp) * dt + sq_v * sq_dt * zs
            v = v + p.kappa * (p.m - vp) * dt + p.eta_bar * sq_v * sq_dt * zv
        return np.exp(x), np.maximum(v, 0.0)

    s_t, v_t = _run_batches(run, seed, paths, threads)
    return s_t, v_t


def simulate_svv(
    spec: SvvSpec,
    p: HestonParams,
    horizon: float,
    paths: int,
    steps: int,
    seed: int,
    z0: float,
    s0: float = 1.0,
    y0: float | None = None,
    threads: int = 1,
):
    """Terminal (S_T, V_T, Y_T, Z_T) of the full four-factor system.

    y0=None draws the fast factor from its invariant law.  Raises
    UnresolvedFastScale unless steps/horizon >= 50/epsilon per year.
    """
    if steps / horizon < MIN_FAST_RESOLUTION / spec.epsilon:
        raise UnresolvedFastScale(
            f"steps/year = {steps / horizon:.0f} cannot resolve the fast factor; "
            f"need >= {MIN_FAST_RESOLUTION / spec.epsilon:.0f}"
        )
    dt = horizon / steps
    sq_dt = np.sqrt(dt)
    chol = np.linalg.cholesky(np.asarray(spec.corr, dtype=float))
    ygrid, pi = _invariant_density(spec)
    cdf = np.cumsum(pi)
    cdf /= cdf[-1]

    def run(rng, n):
        x = np.full(n, np.log(s0))
        v = np.full(n, p.v0)
        if y0 is None:
            y = np.interp(rng.uniform(size=n), cdf, ygrid)
        else:
            y = np.full(n, float(y0))
        z = np.full(n, float(z0))
        for _ in range(steps):
            dw = chol @ rng.standard_normal((4, n))
            vp = np.maximum(v, 0.0)
            sq_v = np.sqrt(vp)
            eta = spec.eta(y, z)
            x += (p.r - p.q - 0.5 * vp) * dt + sq_v * sq_dt * dw[0]
            v_new = v + p.kappa * (p.m - vp) * dt + eta * sq_v * sq_dt * dw[1]
            y_new = y + (vp / spec.epsilon) * spec.alpha(y) * dt + np.sqrt(
                vp / spec.epsilon
            ) * spec.beta(y) * sq_dt * dw[2]
            z_new = z + vp * spec.delta * spec.c(z) * dt + np.sqrt(
                spec.delta * vp
            ) * spec.g(z) * sq_dt * dw[3]
            v, y, z = v_new, y_new, z_new
        return np.exp(x), np.maximum(v, 0.0), y, z

    return _run_batches(run, seed, paths, threads)


# ---------------------------------------------------------------------------
# group parameters from the spec (Poisson-equation quadrature)
# ---------------------------------------------------------------------------


def _invariant_density(spec: SvvSpec, lo: float = -10.0, hi: float = 10.0, n: int = 8001):
    """Invariant density of the unit-epsilon fast factor on a grid.

    pi(y) proportional to exp(Int 2 alpha / beta^2) / beta^2, normalized
    by trapezoid weights.
    """
    y = np.linspace(lo, hi, n)
    a = spec.alpha(y)
    b2 = spec.beta(y) ** 2
    expo = _cumtrapz(2.0 * a / b2, y)
    expo -= expo.max()
    pi = np.exp(expo) / b2
    pi /= np.trapezoid(pi, y)
    return y, pi


def _cumtrapz(f, y):
    out = np.zeros_like(f)
    out[1:] = np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(y))
    return out


def _fast_averages(spec: SvvSpec, z: float):
    """<eta>, <eta^2> and the Poisson-bracket averages at slow state z."""
    y, pi = _invariant_density(spec)
    eta = spec.eta(y, z)
    beta = spec.beta(y)
    mean_eta = np.trapezoid(eta * pi, y)
    mean_eta2 = np.trapezoid(eta * eta * pi, y)

    # tail check: the grid must carry essentially all invariant mass
    inner = slice(400, -400)
    if abs(np.trapezoid(pi[inner], y[inner]) - 1.0) > 1e-10:
        raise QuadratureFailure("invariant-density mass beyond the quadrature grid")

    g_phi = _cumtrapz((eta * eta - mean_eta2) * pi, y)
    g_psi = _cumtrapz((eta - mean_eta) * pi, y)
    brackets = {
        "beta_phi": np.trapezoid(2.0 * g_phi / beta, y),
        "eta_beta_phi": np.trapezoid(2.0 * eta * g_phi / beta, y),
        "beta_psi": np.trapezoid(2.0 * g_psi / beta, y),
        "eta_beta_psi": np.trapezoid(2.0 * eta * g_psi / beta, y),
    }
    return float(mean_eta), float(mean_eta2), {k: float(v) for k, v in brackets.items()}


def effective_coefficients(spec: SvvSpec, z: float):
    """Averaged vol-of-vol and correlation (eta_bar(z), rho_bar(z))."""
    mean_eta, mean_eta2, _ = _fast_averages(spec, z)
    eta_bar = np.sqrt(mean_eta2)
    return float(eta_bar), float(spec.rho_sv * mean_eta / eta_bar)


def group_params_from_spec(spec: SvvSpec, z: float, dz: float = 1e-5):
    """Correction group parameters and (eta_bar, rho_bar) at slow state z.

    Fast-scale brackets come from the quadrature solution of the Poisson
    equations; slow-scale parameters need eta_bar'(z) and rho_bar'(z),
    taken by central differences in z.
    """
    mean_eta, mean_eta2, br = _fast_averages(spec, z)
    eta_bar = float(np.sqrt(mean_eta2))
    rho_bar = float(spec.rho_sv * mean_eta / eta_bar)

    h = dz * max(1.0, abs(z))
    up = effective_coefficients(spec, z + h)
    dn = effective_coefficients(spec, z - h)
    deta_bar = (up[0] - dn[0]) / (2 * h)
    drho_bar = (up[1] - dn[1]) / (2 * h)

    corr = spec.corr
    rho_sv, rho_sy, rho_vy = corr[0, 1], corr[0, 2], corr[1, 2]
    rho_sz, rho_vz = corr[0, 3], corr[1, 3]
    se = np.sqrt(spec.epsilon)
    sd = np.sqrt(spec.delta)
    gz = float(spec.g(np.asarray(z, dtype=float)))

    cg = CorrectionGroups(
        v12_eps=-se * 0.5 * rho_sy * br["beta_phi"]
        - se * rho_sv * rho_vy * br["eta_beta_psi"],
        v21_eps=-se * rho_sv * rho_sy * br["beta_psi"],
        v03_eps=-se * 0.5 * rho_vy * br["eta_beta_phi"],
        v01_eta_delta=sd * rho_vz * gz * mean_eta * deta_bar,
        v01_rho_delta=sd * rho_vz * gz * mean_eta * drho_bar,
        v10_eta_delta=sd * rho_sz * gz * deta_bar,
        v10_rho_delta=sd * rho_sz * gz * drho_bar,
    )
    return cg, eta_bar, rho_bar


# ---------------------------------------------------------------------------
# first-order accuracy study
# ---------------------------------------------------------------------------


def _paired_terminals(spec, p_eff, p_base, horizon, paths, steps, seed, z0, threads=1):
    """Full-model and effective-Heston terminal states driven by common
    random numbers.

    Both legs share the V innovation and the orthogonal S component, so
    payoff differences estimate the model gap with far smaller variance
    than independent runs.  Returns (s_svv, v_svv, s_eff, v_eff).
    """
    if steps / horizon < MIN_FAST_RESOLUTION / spec.epsilon:
        raise UnresolvedFastScale(
            f"steps/year = {steps / horizon:.0f} cannot resolve the fast factor"
        )
    dt = horizon / steps
    sq_dt = np.sqrt(dt)
    # order (V, S, Y, Z): the S row of the Cholesky factor is then
    # (rho_sv, sqrt(1-rho_sv^2), 0, 0), so swapping rho_sv for rho_bar
    # reuses the same innovations for the effective leg
    order = [1, 0, 2, 3]
    corr = np.asarray(spec.corr, dtype=float)[np.ix_(order, order)]
    chol = np.linalg.cholesky(corr)
    rho_eff = p_eff.rho_bar
    rho_eff_perp = np.sqrt(1.0 - rho_eff * rho_eff)
    ygrid, pi = _invariant_density(spec)
    cdf = np.cumsum(pi)
    cdf /= cdf[-1]

    def run(rng, n):
        x = np.full(n, 0.0)
        v = np.full(n, p_base.v0)
        xe = np.full(n, 0.0)
        ve = np.full(n, p_base.v0)
        y = np.interp(rng.uniform(size=n), cdf, ygrid)
        z = np.full(n, float(z0))
        drift = p_base.r - p_base.q
        for _ in range(steps):
            zeta = rng.standard_normal((4, n))
            dw = chol @ zeta  # rows: V, S, Y, Z
            vp = np.maximum(v, 0.0)
            sq_v = np.sqrt(vp)
            eta = spec.eta(y, z)
            x += (drift - 0.5 * vp) * dt + sq_v * sq_dt * dw[1]
            v_new = v + p_base.kappa * (p_base.m - vp) * dt + eta * sq_v * sq_dt * dw[0]
            y_new = y + (vp / spec.epsilon) * spec.alpha(y) * dt + np.sqrt(
                vp / spec.epsilon
            ) * spec.beta(y) * sq_dt * dw[2]
            z_new = z + vp * spec.delta * spec.c(z) * dt + np.sqrt(
                spec.delta * vp
            ) * spec.g(z) * sq_dt * dw[3]
            v, y, z = v_new, y_new, z_new

            vpe = np.maximum(ve, 0.0)
            sq_ve = np.sqrt(vpe)
            zse = rho_eff * zeta[0] + rho_eff_perp * zeta[1]
            xe += (drift - 0.5 * vpe) * dt + sq_ve * sq_dt * zse
            ve = ve + p_eff.kappa * (p_eff.m - vpe) * dt + p_eff.eta_bar * sq_ve * sq_dt * zeta[0]
        return np.exp(x), np.maximum(v, 0.0), np.exp(xe), np.maximum(ve, 0.0)

    return _run_batches(run, seed, paths, threads)


def convergence_study(
    scales,
    kappa: float = 15.0,
    m: float = 0.09,
    v0: float = 0.09,
    z0: float = 1.5,
    tau: float = 0.5,
    s0: float = 100.0,
    paths: int = 400_000,
    steps_per_year: float | None = None,
    seed: int = 20150821,
    threads: int = 1,
    spx_quad: QuadratureConfig = SPX_QUAD,
    vix_quad: QuadratureConfig = VIX_QUAD,
):
    """Gap between full-model MC and first-order prices across (eps, delta).

    Returns one row per scale pair with ATM equity-call and ATM
    index-call gaps, their common-random-number standard errors, and
    first-order prices.  The Euler step is shared across rows (sized by
    the smallest epsilon) so discretization bias cancels in ratios.
    """
    min_eps = min(e for e, _ in scales)
    spy = steps_per_year or MIN_FAST_RESOLUTION / min_eps
    steps = int(np.ceil(spy * tau))
    rows = []
    for eps, delta in scales:
        spec = reference_spec(eps, delta)
        cg, eta_bar, rho_bar = group_params_from_spec(spec, z0)
        p_eff = HestonParams(
            kappa=kappa, m=m, eta_bar=eta_bar, rho_bar=rho_bar, v0=v0
        )
        k_spx = s0  # ATM: zero carry
        fut0 = vix_mod.price_vix_order0(
            v0, vix_mod.VixInstrument("future", tau), p_eff, vix_quad
        )
        k_vix = fut0
        mapping = vix_mod.VixMapping.from_params(kappa, m)

        opt = spx_mod.EquityOption(k_spx, tau, "call")
        spx0 = spx_mod.price_order0(s0, opt, p_eff, spx_quad)
        spx1 = spx_mod.price_first_order(s0, opt, p_eff, cg, spx_quad)
        vix_inst = vix_mod.VixInstrument("call", tau, k_vix)
        vix0 = vix_mod.price_vix_order0(v0, vix_inst, p_eff, vix_quad)
        vix1 = vix_mod.price_vix_first_order(v0, vix_inst, p_eff, cg, vix_quad)

        s_svv, v_svv, s_eff, v_eff = _paired_terminals(
            spec, p_eff, p_eff, tau, paths, steps, seed, z0, threads
        )
        d_spx = np.maximum(s0 * s_svv - k_spx, 0.0) - np.maximum(
            s0 * s_eff - k_spx, 0.0
        )
        gam = lambda v: np.sqrt(mapping.floor_var + mapping.theta * v)  # noqa: E731
        d_vix = np.maximum(gam(v_svv) - k_vix, 0.0) - np.maximum(
            gam(v_eff) - k_vix, 0.0
        )
        est_spx = estimate(d_spx, spy, seed)
        est_vix = estimate(d_vix, spy, seed)
        rows.append(
            {
                "epsilon": eps,
                "delta": delta,
                "spx_mc": spx0 + est_spx.mean,
                "spx_se": est_spx.standard_error,
                "spx_first_order": spx1,
                "spx_gap": abs(est_spx.mean - (spx1 - spx0)),
                "vix_mc": vix0 + est_vix.mean,
                "vix_se": est_vix.standard_error,
                "vix_first_order": vix1,
                "vix_gap": abs(est_vix.mean - (vix1 - vix0)),
            }
        )
    return rows


def format_validate_report(rows) -> str:
    """Plain-text table: (eps, delta, MC price, SE, first-order, gap, ratio)."""
    lines = []
    for tag in ("spx", "vix"):
        lines.append(f"[{tag}]")
        lines.append(
            f"{'epsilon':>9} {'delta':>9} {'mc_price':>12} {'se':>10} "
            f"{'first_order':>12} {'gap':>11} {'ratio':>7}"
        )
        prev = None
        for r in rows:
            ratio = prev / r[f"{tag}_gap"] if prev else float("nan")
            lines.append(
                f"{r['epsilon']:9.4f} {r['delta']:9.4f} {r[f'{tag}_mc']:12.6f} "
                f"{r[f'{tag}_se']:10.2e} {r[f'{tag}_first_order']:12.6f} "
                f"{r[f'{tag}_gap']:11.3e} {ratio:7.2f}"
            )
            prev = r[f"{tag}_gap"]
        lines.append("")
    return "\n".join(lines)
