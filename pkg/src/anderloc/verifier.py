"""Decay fitting and the deterministic bookkeeping of the multiscale argument.

Constants such as the rescaling constant C or the rate nu_2 are existence
level in the theory; here they are always inputs (or fit outputs) and
every report carries the values it was evaluated with.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .model import InteractionSpec, SparseOperator
from .spectral import ResolventSolver

__all__ = [
    "DecayFit",
    "RescalingConstants",
    "RescalingReport",
    "CorollaryReport",
    "Schedule",
    "InitialScaleReport",
    "SubadditivityReport",
    "CTReport",
    "DEFAULT_GAMMA_GRID",
    "fit_decay",
    "rescaling_scales",
    "rescaling_check",
    "corollary_nu_prime",
    "corollary_terms",
    "iterate_corollary",
    "exponent_schedule",
    "initial_scale_check",
    "subadditivity_check",
    "ct_check",
    "resolvent_decay_samples",
    "LinearFit",
    "linear_fit",
]

DEFAULT_GAMMA_GRID = (1 / 4, 1 / 3, 1 / 2, 2 / 3, 1.0)


def _mean_se(v):
    """(mean, stderr) from an EnsembleEstimate, a pair, or a bare number."""
    if hasattr(v, "mean") and hasattr(v, "stderr"):
        se = v.stderr
        return float(v.mean), 0.0 if se is None or not np.isfinite(se) else float(se)
    if isinstance(v, (tuple, list)):
        return float(v[0]), float(v[1])
    return float(v), 0.0


@dataclass
class DecayFit:
    C: float
    mu: float
    gamma: float
    residual: float
    method: str
    mu_stderr: float = float("nan")
    chi2: float = float("nan")
    candidates: dict = field(default_factory=dict)

    @property
    def localized(self) -> bool:
        return self.mu > 0

    def __call__(self, dist):
        return self.C * np.exp(-self.mu * np.asarray(dist, dtype=float) ** self.gamma)


def _wls(X, y, w):
    A = np.column_stack([np.ones_like(X), -X])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
    resid = y - A @ coef
    chi2 = float(np.sum(w * resid**2))
    cov = np.linalg.pinv((A * w[:, None]).T @ A)
    return coef, resid, chi2, cov


def fit_decay(samples, gamma_grid: Sequence[float] | None = DEFAULT_GAMMA_GRID,
              free: bool = False) -> DecayFit:
    """Fit value ~ C exp(-mu dist^gamma) by weighted least squares in log space.

    ``samples`` is a sequence of (dist, value) or (dist, value, stderr).
    Weights are 1/(stderr/value)^2 when every stderr is positive, uniform
    otherwise. For each gamma on the grid the linear problem in (log C, mu)
    is solved and the gamma with the smallest weighted residual wins. With
    ``free=True`` gamma is also optimized over (0, 1] starting from the
    grid winner; this problem is nonconvex, the method field says so.
    """
    arr = [tuple(s) for s in samples]
    dist = np.array([a[0] for a in arr], dtype=float)
    val = np.array([a[1] for a in arr], dtype=float)
    se = np.array([a[2] if len(a) > 2 and a[2] is not None else 0.0 for a in arr], dtype=float)
    if np.any(val <= 0):
        raise ValueError("decay fit needs strictly positive values")
    if len(np.unique(dist)) < 3:
        raise ValueError("decay fit needs at least three distinct distances")
    if np.any(dist < 0):
        raise ValueError("distances must be nonnegative")
    y = np.log(val)
    weighted = bool(np.all(se > 0))
    w = (val / se) ** 2 if weighted else np.ones_like(y)
    grid = tuple(gamma_grid) if gamma_grid else (1.0,)
    best = None
    cands = {}
    for g in grid:
        coef, resid, chi2, cov = _wls(dist**g, y, w)
        cands[g] = (float(np.exp(coef[0])), float(coef[1]), chi2)
        dof = max(len(y) - 2, 1)
        scale = 1.0 if weighted else chi2 / dof
        mu_se = float(np.sqrt(max(cov[1, 1] * scale, 0.0)))
        rms = float(np.sqrt(np.mean(resid**2)))
        if best is None or chi2 < best.chi2 - 1e-15 * max(1.0, abs(best.chi2)):
            best = DecayFit(float(np.exp(coef[0])), float(coef[1]), float(g), rms,
                            "gamma-grid" + (" weighted" if weighted else ""), mu_se, chi2)
    best.candidates = cands
    if not free:
        return best

    def resid_fn(p):
        logC, mu, g = p
        return np.sqrt(w) * (y - (logC - mu * dist**g))

    sol = optimize.least_squares(resid_fn, [math.log(best.C), best.mu, best.gamma],
                                 bounds=([-np.inf, -np.inf, 1e-3], [np.inf, np.inf, 1.0]))
    logC, mu, g = sol.x
    r = y - (logC - mu * dist**g)
    return DecayFit(float(np.exp(logC)), float(mu), float(g), float(np.sqrt(np.mean(r**2))),
                    "free (nonconvex)", best.mu_stderr, float(np.sum(w * r**2)), cands)


@dataclass
class RescalingConstants:
    """Inputs of the rescaling inequality. ``C=None`` means 'not pinned'."""

    nu2: float
    alpha: float
    gamma_star: float
    s: float
    d: int
    n: int
    R: float
    interaction: InteractionSpec
    C: float | None = None

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 < self.s < 1 / 3:
            raise ValueError("s must lie in (0, 1/3)")
        if not 0 < self.gamma_star <= 1:
            raise ValueError("gamma* must lie in (0, 1]")
        if self.nu2 <= 0 or self.R <= 0 or self.d < 1 or self.n < 1:
            raise ValueError("nu2, R, d, n must be positive")
        if self.C is not None and self.C <= 0:
            raise ValueError("C must be positive")

    def w_b(self, r: float) -> float:
        return float(self.interaction.bound(r))


def rescaling_scales(L: float, alpha: float, R: float) -> tuple:
    """(L + L^alpha, 2L, 2L + 2L^alpha + 9R)."""
    La = L**alpha
    return L + La, 2 * L, 2 * L + 2 * La + 9 * R


@dataclass
class RescalingReport:
    L: float
    scales: tuple
    lhs: float
    lhs_stderr: float
    bracket: tuple
    bracket_stderr: float
    C: float | None
    C_min: float
    rhs: float | None
    satisfied: bool | None


def rescaling_check(B_small, B_double, B_large, k: RescalingConstants, L: float) -> RescalingReport:
    """Compare B(2L+2L^a+9R) with C(L^{8dn} B(L+L^a)^2 + e^{-nu2 L^{a g*}} + ...).

    B_small, B_double, B_large are the estimates at L + L^a, 2L and
    2L + 2L^a + 9R. For n = 1 only the first summand is kept. Errors are
    propagated to first order; the verdict holds at 2 sigma. Without a
    pinned C the report gives the smallest C that makes the inequality hold.
    """
    b1, s1 = _mean_se(B_small)
    b2, s2 = _mean_se(B_double)
    bl, sl = _mean_se(B_large)
    dn = k.d * k.n
    first = L ** (8 * dn) * b1**2
    d_first = L ** (8 * dn) * 2 * b1 * s1
    if k.n == 1:
        second = third = 0.0
        d_third = 0.0
    else:
        second = math.exp(-k.nu2 * L ** (k.alpha * k.gamma_star))
        pref = L ** ((5 + k.alpha) * dn) * k.w_b(L**k.alpha / (4 * k.n)) ** k.s
        third = pref * b2
        d_third = pref * s2
    bracket = (first, second, third)
    total = first + second + third
    d_total = math.hypot(d_first, d_third)
    C_min = bl / total if total > 0 else (0.0 if bl == 0 else math.inf)
    rhs = satisfied = None
    if k.C is not None:
        rhs = k.C * total
        satisfied = bool(bl <= rhs + 2 * math.hypot(sl, k.C * d_total))
    return RescalingReport(L, rescaling_scales(L, k.alpha, k.R), bl, sl, bracket, d_total,
                           k.C, C_min, rhs, satisfied)


def corollary_nu_prime(L1: float, k: RescalingConstants, variant: str) -> tuple:
    """(nu', beta, candidates) as chosen in the iteration argument.

    poly: beta = min(a g*, 1 - a), nu' = min(ln2/(4 L1)^beta, nu2/(2 5^beta))
    exp : alpha = 1, beta = g*,
          nu' = min(ln2/(4 L1 + 9R)^g*, nu2/(2 5^g*), s mu_w/(2 (20 n)^g*))
    """
    if variant == "poly":
        beta = min(k.alpha * k.gamma_star, 1 - k.alpha)
        cands = (math.log(2) / (4 * L1) ** beta, k.nu2 / (5**beta * 2))
    elif variant == "exp":
        g = k.gamma_star
        beta = g
        cands = (
            math.log(2) / (4 * L1 + 9 * k.R) ** g,
            k.nu2 / (5**g * 2),
            k.s * k.interaction.mu_w / (2 * (20 * k.n) ** g),
        )
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return min(cands), beta, cands


def _log_terms(L: float, nu: float, beta: float, k: RescalingConstants, C: float,
               C_prime: float, q_prime: float, variant: str) -> tuple:
    dn = k.d * k.n
    R, g = k.R, k.gamma_star
    w = k.interaction
    if variant == "poly":
        a = k.alpha
        big = 2 * L + 2 * L**a + 9 * R
        t1 = (q_prime * math.log(5) + math.log(2 * C_prime * C) + (8 * dn - q_prime) * math.log(L)
              + nu * big**beta - 2 * nu * (L + L**a) ** beta)
        t2 = (math.log(C / (2 * C_prime)) + q_prime * math.log(5) + q_prime * math.log(L)
              + nu * 5**beta * L**beta - k.nu2 * L ** (a * g))
        t3 = (q_prime * math.log(3) + math.log(C) + (5 + a) * dn * math.log(L)
              + k.s * math.log(w.c_w) - w.p_w * k.s * math.log(L**a / (4 * k.n))
              + nu * (big**beta - (2 * L) ** beta))
    else:
        t1 = (q_prime * math.log(5) + math.log(2 * C_prime * C) + (8 * dn - q_prime) * math.log(L)
              + nu * (4 * L + 9 * R) ** g - 2 * nu * (2 * L) ** g)
        t2 = (math.log(C / (2 * C_prime)) + q_prime * math.log(5) + q_prime * math.log(L)
              + nu * (5 * L) ** g - k.nu2 * L**g)
        t3 = (q_prime * math.log(3) + math.log(C) + 6 * dn * math.log(L) + k.s * math.log(w.c_w)
              - k.s * w.mu_w * (L / (4 * k.n)) ** g + nu * ((5 * L) ** g - (2 * L) ** g))
    if k.n == 1:
        t2 = t3 = -math.inf
    return t1, t2, t3


def corollary_terms(L: float, L1: float, k: RescalingConstants, C_prime: float, q_prime: float,
                    variant: str) -> tuple:
    """The three summands of one iteration step at scale L (each must be <= 1/3)."""
    if k.C is None:
        raise ValueError("the iteration needs a pinned rescaling constant C")
    nu, beta, _ = corollary_nu_prime(L1, k, variant)
    return tuple(math.exp(t) if t > -745 else 0.0
                 for t in _log_terms(L, nu, beta, k, k.C, C_prime, q_prime, variant))


@dataclass
class StepRecord:
    L_range: tuple
    covered: tuple
    max_terms: tuple
    closed: bool
    failing_L: float | None


@dataclass
class CorollaryReport:
    variant: str
    beta: float
    nu_prime: float
    nu_candidates: tuple
    steps: list
    verdict: bool
    first_failure: float | None
    violations: list
    initial_ok: bool | None = None
    bound_ok: bool | None = None
    notes: list = field(default_factory=list)

    def bound(self, L, C_prime: float):
        return 2 * C_prime * np.exp(-self.nu_prime * np.asarray(L, dtype=float) ** self.beta)


def iterate_corollary(C_prime: float, q_prime: float, L1: float, k: RescalingConstants,
                      variant: str = "exp", steps: int = 8, samples: int = 33,
                      B: Callable[[float], float] | None = None) -> CorollaryReport:
    """Replay the iteration that upgrades B(L) <= C' L^{-q'} to (sub)exponential decay.

    Starting from the verified range [L1, U] (U = 4L1 for 'poly',
    4L1 + 9R for 'exp'), each step checks the three summands at sampled
    L in [previous L_hi, U/2] and, if all are <= 1/3, extends the range to
    U' = 2(U/2) + 2(U/2)^alpha + 9R. Hypothesis violations are listed, not
    corrected. If ``B`` is given, the initial hypothesis and the resulting
    bound 2C' exp(-nu' L^beta) are checked against it on every sample.
    """
    violations = []
    notes = []
    dn = k.d * k.n
    if q_prime <= 8 * dn:
        violations.append(f"q' = {q_prime} must exceed 8dn = {8 * dn}")
    if variant == "poly":
        if not 0 < k.alpha < 1:
            violations.append("poly variant needs alpha in (0, 1)")
        if not k.alpha * k.interaction.p_w * k.s > (5 + k.alpha) * dn:
            violations.append(
                f"alpha p_w s = {k.alpha * k.interaction.p_w * k.s:.4g} must exceed "
                f"(5 + alpha) n d = {(5 + k.alpha) * dn:.4g}"
            )
        alpha = k.alpha
        U = 4 * L1
    elif variant == "exp":
        if k.alpha != 1:
            notes.append(f"exp variant uses alpha = 1; the given alpha = {k.alpha} is ignored")
        alpha = 1.0
        U = 4 * L1 + 9 * k.R
    else:
        raise ValueError(f"unknown variant {variant!r}")
    if k.C is None:
        raise ValueError("the iteration needs a pinned rescaling constant C")
    kk = RescalingConstants(k.nu2, alpha, k.gamma_star, k.s, k.d, k.n, k.R, k.interaction, k.C)
    nu, beta, cands = corollary_nu_prime(L1, kk, variant)

    initial_ok = bound_ok = None
    if B is not None:
        grid0 = np.geomspace(L1, U, samples)
        initial_ok = bool(all(_log_le(B(L), math.log(C_prime) - q_prime * math.log(L)) for L in grid0))
        bound_ok = True

    records = []
    first_failure = None
    lo = L1
    for _ in range(steps):
        hi = U / 2
        Ls = np.unique(np.concatenate([np.geomspace(lo, hi, samples), [lo, hi]]))
        worst = [-math.inf] * 3
        failing = None
        for L in Ls:
            t = _log_terms(float(L), nu, beta, kk, kk.C, C_prime, q_prime, variant)
            worst = [max(a, b) for a, b in zip(worst, t)]
            if failing is None and max(t) > math.log(1 / 3):
                failing = float(L)
        new_U = 2 * hi + 2 * hi**alpha + 9 * kk.R
        closed = failing is None
        records.append(StepRecord((lo, hi), (L1, new_U if closed else U),
                                  tuple(math.exp(v) if v > -745 else 0.0 for v in worst),
                                  closed, failing))
        if not closed:
            first_failure = failing
            break
        if B is not None:
            for L in np.geomspace(U, new_U, samples):
                bound_log = math.log(2 * C_prime) - nu * L**beta - q_prime * math.log(L)
                if not _log_le(B(L), bound_log):
                    bound_ok = False
        lo, U = hi, new_U
    verdict = first_failure is None and not violations
    return CorollaryReport(variant, beta, nu, cands, records, verdict, first_failure, violations,
                           initial_ok, bound_ok, notes)


def _log_le(value, log_bound: float) -> bool:
    """value <= exp(log_bound) without overflow; ``value`` may be a float or a log-tagged tuple."""
    if isinstance(value, tuple) and value[0] == "log":
        return value[1] <= log_bound + 1e-12
    if value <= 0:
        return True
    return math.log(value) <= log_bound + 1e-12


@dataclass
class Schedule:
    beta1: float
    n: int
    d: int
    p_w: float
    alpha: dict
    beta: dict
    particle_bound: float
    max_n: int
    admissible: bool


def exponent_schedule(beta1: float, n: int, d: int, p_w: float) -> Schedule:
    """Decay orders beta^{(k)} and step exponents alpha^{(k)} for k <= n.

    beta^{(k)} = beta1 / (1 + (k-1) beta1), alpha^{(k)} = (1 + (k-2) beta1) / (1 + (k-1) beta1)
    for k >= 2; the polynomial-interaction argument needs n < (p_w + 8d)/(48d).
    """
    if not 0 < beta1 <= 1:
        raise ValueError("beta1 must lie in (0, 1]")
    if n < 1 or d < 1 or p_w <= 0:
        raise ValueError("need n, d >= 1 and p_w > 0")
    beta = {1: float(beta1)}
    alpha = {}
    for k in range(2, n + 1):
        beta[k] = beta1 / (1 + (k - 1) * beta1)
        alpha[k] = (1 + (k - 2) * beta1) / (1 + (k - 1) * beta1)
    bound = (p_w + 8 * d) / (48 * d)
    max_n = math.ceil(bound) - 1
    return Schedule(beta1, n, d, p_w, alpha, beta, bound, max_n, n < bound)


@dataclass
class InitialScaleReport:
    Ls: list
    means: list
    bounds: list
    passed: list
    verdict: bool
    margin: float
    perturbative: dict | None


def initial_scale_check(estimates, C_prime: float, q_prime: float, L1: float | None = None,
                        R: float | None = None, alpha_W: float | None = None,
                        s: float | None = None, C: float | None = None) -> InitialScaleReport:
    """Check B(L) <= C' L^{-q'} at each sampled scale (2 sigma allowance).

    ``estimates`` is a sequence of (L, estimate). With L1 and R given, all
    scales must lie in [L1, 4L1 + 9R]. The margin is min_L C'L^{-q'}/B(L).
    If alpha_W, s and C are given the report includes the perturbative
    condition alpha_W^s <= C'(4L1 + 9R)^{-q'}/(2C).
    """
    est = sorted(((float(L), *_mean_se(e)) for L, e in estimates), key=lambda t: t[0])
    if len({L for L, _, _ in est}) < 3:
        raise ValueError("initial-scale check needs estimates at three or more scales")
    if L1 is not None and R is not None:
        hi = 4 * L1 + 9 * R
        outside = [L for L, _, _ in est if not L1 <= L <= hi]
        if outside:
            raise ValueError(f"scales {outside} lie outside [{L1}, {hi}]")
    Ls, means, bounds, passed, ratios = [], [], [], [], []
    for L, m, se in est:
        b = C_prime * L ** (-q_prime)
        Ls.append(L)
        means.append(m)
        bounds.append(b)
        passed.append(bool(m <= b + 2 * se))
        ratios.append(math.inf if m <= 0 else b / m)
    pert = None
    if alpha_W is not None and s is not None and C is not None and L1 is not None and R is not None:
        lhs = alpha_W**s
        rhs = C_prime * (4 * L1 + 9 * R) ** (-q_prime) / (2 * C)
        pert = {"alpha_W^s": lhs, "threshold": rhs, "holds": bool(lhs <= rhs)}
    return InitialScaleReport(Ls, means, bounds, passed, all(passed), float(min(ratios)), pert)


@dataclass
class SubadditivityReport:
    lhs: float
    rhs: float
    sigma: float
    allowance: float
    holds: bool
    excess: float
    repulsive: bool


def subadditivity_check(e0_n, e0_parts: Sequence, allowance: float = 0.0, repulsive: bool = False,
                        box_n=None, box_parts: Sequence | None = None) -> SubadditivityReport:
    """Check E_0^{(n)} <= sum_i E_0^{(j_i)} up to 3 sigma plus a finite-volume allowance.

    Part errors are added linearly (the parts usually share realizations),
    then in quadrature with the n-particle error. ``excess`` is
    lhs - rhs; with repulsive interaction it is nonnegative in finite
    volume and expected to shrink as the box grows.
    """
    if box_parts is not None and box_n is not None and any(b != box_n for b in box_parts):
        raise ValueError("all ground-state estimates must refer to the same box")
    m, se = _mean_se(e0_n)
    parts = [_mean_se(p) for p in e0_parts]
    rhs = math.fsum(p[0] for p in parts)
    sigma = math.hypot(se, sum(p[1] for p in parts))
    # eigensolver rounding, relevant when the inputs are single deterministic values
    rounding = 1e-10 * (1 + abs(rhs))
    holds = bool(m <= rhs + 3 * sigma + allowance + rounding)
    return SubadditivityReport(m, rhs, sigma, allowance, holds, m - rhs, repulsive)


@dataclass
class CTReport:
    status: str
    gaps: list
    rates: list
    rate_stderr: list
    positive: bool
    nondecreasing: bool
    mu0_estimate: float | None
    amplitude_ok: bool | None


def ct_check(fits: dict, z_values: dict, C0: float | None = None, slack: float = 0.0) -> CTReport:
    """Check a Combes-Thomas form against per-gap decay fits.

    ``fits`` maps gap g to a DecayFit of block norms against distance,
    ``z_values`` maps g to the energy used. Rates must be positive and
    nondecreasing in g (within 2 combined fit sigmas). The empirical mu_0
    is the largest constant with mu(g) >= mu_0 g / (1 + |z| + g) for all g.
    A gap of zero voids the hypothesis and the check is skipped.
    """
    gaps = sorted(fits)
    if not gaps or any(g <= 0 for g in gaps):
        return CTReport("skipped: z not separated from the spectrum", gaps, [], [], False, False,
                        None, None)
    rates = [fits[g].mu for g in gaps]
    ses = [0.0 if not np.isfinite(fits[g].mu_stderr) else fits[g].mu_stderr for g in gaps]
    positive = all(r > 0 for r in rates)
    nondecreasing = all(
        rates[i + 1] >= rates[i] - 2 * math.hypot(ses[i], ses[i + 1]) for i in range(len(gaps) - 1)
    )
    mu0 = min(r * (1 + abs(z_values[g]) + g) / g for g, r in zip(gaps, rates))
    amp = None
    if C0 is not None:
        amp = all(fits[g].C <= C0 / g * (1 + slack) for g in gaps)
    status = "ok" if positive and nondecreasing and amp is not False else "failed"
    return CTReport(status, gaps, rates, ses, positive, nondecreasing, mu0, amp)


def resolvent_decay_samples(H: SparseOperator, z: complex, origin, offsets) -> list:
    """(distance, ||chi_origin (H - z)^{-1} chi_{origin + offset}||) pairs.

    Offsets are added to every coordinate of ``origin``; the distance
    reported is the max-norm length of the offset.
    """
    solver = ResolventSolver(H, z)
    o = np.asarray(origin, dtype=float).reshape(-1)
    out = []
    for off in offsets:
        off = np.broadcast_to(np.asarray(off, dtype=float), o.shape)
        shape = (H.grid.n, H.grid.d)
        out.append((float(np.max(np.abs(off))),
                    solver.block_norm(o.reshape(shape), (o + off).reshape(shape))))
    return out


@dataclass
class LinearFit:
    slope: float
    intercept: float
    slope_stderr: float
    intercept_stderr: float
    r2: float


def linear_fit(xs, estimates) -> LinearFit:
    """Weighted straight-line fit of Monte Carlo means against xs.

    Weights are 1/stderr^2 (uniform if any stderr vanishes); parameter
    errors come from the weights alone, R^2 is the weighted coefficient
    of determination.
    """
    x = np.asarray(xs, dtype=float)
    pairs = [_mean_se(e) for e in estimates]
    y = np.array([p[0] for p in pairs])
    se = np.array([p[1] for p in pairs])
    if len(np.unique(x)) < 2:
        raise ValueError("linear fit needs two distinct abscissae")
    w = 1 / se**2 if np.all(se > 0) else np.ones_like(y)
    A = np.column_stack([np.ones_like(x), x])
    cov = np.linalg.inv((A * w[:, None]).T @ A)
    coef = cov @ ((A * w[:, None]).T @ y)
    resid = y - A @ coef
    ybar = np.sum(w * y) / np.sum(w)
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    r2 = 1 - float(np.sum(w * resid**2)) / ss_tot if ss_tot > 0 else 1.0
    if not np.all(se > 0):
        cov = cov * float(np.sum(resid**2)) / max(len(y) - 2, 1)
    return LinearFit(float(coef[1]), float(coef[0]), float(math.sqrt(cov[1, 1])),
                     float(math.sqrt(cov[0, 0])), r2)
