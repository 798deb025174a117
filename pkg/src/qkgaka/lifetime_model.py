"""Analytic key-lifetime model and its Monte Carlo check.

Keys expire after a random time ``t_e``. Refreshes happen on a deterministic
grid of step ``w = sqrt(2*phi*t_h / lam)``, so the refresh rate is
``1 / w = sqrt(lam / (2*phi*t_h))``. Seen from an arbitrary instant, the
time to the next refresh (the excess life) is uniform on ``[0, w]``, and the
probability that a key is refreshed before it expires is

    P_DKGA = 1 - (1/w) * integral_0^w F_e(t) dt

where ``F_e`` is the CDF of ``t_e``.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DomainError, NumericalError
from .quadrature import DEFAULT_ABS_TOL, integrate

KINDS = ("exponential", "deterministic", "empirical")


@dataclass(frozen=True, eq=False)
class ExpiryDistribution:
    """Distribution of the key expiration time ``t_e``.

    Build one with :meth:`exponential`, :meth:`deterministic` or
    :meth:`empirical` rather than calling the constructor.
    """

    kind: str
    param: float = 0.0
    samples: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown expiry distribution {self.kind!r}; expected one of {KINDS}")
        if self.kind == "exponential" and not self.param > 0:
            raise DomainError("exponential mean must be positive")
        if self.kind == "deterministic" and not self.param >= 0:
            raise DomainError("deterministic expiry time must be non-negative")
        if self.kind == "empirical":
            s = np.sort(np.asarray(self.samples, dtype=float))
            if s.size == 0 or s[0] < 0 or not np.all(np.isfinite(s)):
                raise DomainError("empirical expiry samples must be a nonempty set of finite times >= 0")
            s.setflags(write=False)
            object.__setattr__(self, "samples", s)

    @classmethod
    def exponential(cls, mean: float) -> "ExpiryDistribution":
        return cls("exponential", float(mean))

    @classmethod
    def deterministic(cls, value: float) -> "ExpiryDistribution":
        return cls("deterministic", float(value))

    @classmethod
    def empirical(cls, samples: Iterable[float]) -> "ExpiryDistribution":
        return cls("empirical", 0.0, np.asarray(list(samples), dtype=float))

    @property
    def mean(self) -> float:
        if self.kind == "empirical":
            return float(self.samples.mean())
        return self.param

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "exponential":
            return np.where(t > 0, -np.expm1(-np.maximum(t, 0) / self.param), 0.0)
        if self.kind == "deterministic":
            return np.where(t >= self.param, 1.0, 0.0)
        return np.searchsorted(self.samples, t, side="right") / self.samples.size

    def pdf(self, t):
        if self.kind != "exponential":
            raise DomainError(f"{self.kind} expiry has no density")
        t = np.asarray(t, dtype=float)
        return np.where(t >= 0, np.exp(-np.maximum(t, 0) / self.param) / self.param, 0.0)

    def breakpoints(self) -> tuple[float, ...]:
        """Points where the CDF jumps."""
        if self.kind == "deterministic":
            return (self.param,)
        if self.kind == "empirical":
            return tuple(np.unique(self.samples))
        return ()

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "exponential":
            return rng.exponential(self.param, size)
        if self.kind == "deterministic":
            return np.full(size, self.param)
        return rng.choice(self.samples, size)

    def describe(self) -> tuple[str, float]:
        short = {"exponential": "exp", "deterministic": "det", "empirical": "emp"}[self.kind]
        return short, self.mean


@dataclass(frozen=True)
class LifetimeParams:
    lam: float      # expected key arrival rate
    phi: float      # key discontinuation rate
    t_h: float      # refresh horizon
    T_s: float      # session duration
    expiry: ExpiryDistribution

    def __post_init__(self):
        for name in ("lam", "phi", "t_h", "T_s"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be a positive finite number, got {v!r}")

    @property
    def step(self) -> float:
        """Refresh step width ``sqrt(2*phi*t_h/lam)``."""
        return math.sqrt(2.0 * self.phi * self.t_h / self.lam)


def refresh_rate(params: LifetimeParams) -> float:
    return math.sqrt(params.lam / (2.0 * params.phi * params.t_h))


def _steps_below(x: float, w: float) -> int:
    """Largest m with ``m*w <= x``, robust to rounding in ``x / w``."""
    m = math.floor(x / w)
    if (m + 1) * w <= x:
        m += 1
    elif m * w > x:
        m -= 1
    return m


def _full_steps(params: LifetimeParams) -> int:
    return _steps_below(params.T_s, params.step)


def refresh_cdf(params: LifetimeParams, t: float) -> float:
    """Staircase refresh CDF on ``[0, T_s]``.

    Equals ``m*w/T_s`` on the m-th step and jumps to 1 at the end of the last
    full step that fits inside the session.
    """
    if not 0.0 <= t <= params.T_s:
        raise DomainError(f"t={t!r} lies outside [0, T_s={params.T_s}]")
    w = params.step
    m = _steps_below(t, w)
    full = _full_steps(params)
    if full >= 1 and m >= full:
        return 1.0
    return m * w / params.T_s


def pmf_support(params: LifetimeParams) -> range:
    return range(math.ceil(params.T_s / params.step) + 1)


def refresh_pmf(params: LifetimeParams, m: int) -> float:
    """Mass of refresh step ``m``.

    Full steps carry ``w/T_s`` each. The step that straddles ``T_s`` takes
    the residual so the masses sum to one; later support cells are empty.
    """
    support = pmf_support(params)
    if m not in support:
        raise DomainError(f"m={m!r} outside support [0, {support[-1]}]")
    w = params.step
    full = _full_steps(params)
    if m < full:
        return w / params.T_s
    if m == full:
        return max(0.0, 1.0 - full * w / params.T_s)
    return 0.0


def p_dkga(params: LifetimeParams, abs_tol: float = DEFAULT_ABS_TOL) -> float:
    """Probability that a refresh lands before the key expires.

    The integral of ``F_e`` over one refresh step is evaluated by adaptive
    quadrature, with the tolerance tightened by the step width so that the
    returned probability itself is accurate to ``abs_tol``.
    """
    w = params.step
    res = integrate(params.expiry.cdf, 0.0, w, abs_tol=abs_tol * min(1.0, w),
                    points=params.expiry.breakpoints())
    p = 1.0 - res.value / w
    if p < -abs_tol or p > 1.0 + abs_tol:
        warnings.warn(f"P_DKGA quadrature strayed to {p!r}; clamping to [0, 1]", RuntimeWarning, stacklevel=2)
    return min(1.0, max(0.0, p))


@dataclass(frozen=True)
class MonteCarloEstimate:
    estimate: float
    stderr: float
    trials: int


MIN_TRIALS = 1000
_CHUNK = 1 << 18


def p_dkga_monte_carlo(params: LifetimeParams, trials: int, rng_seed: int, chunks: int | None = None) -> MonteCarloEstimate:
    """Estimate ``P(t_e > t_r)`` with ``t_r`` uniform over one refresh step.

    Trials are split into chunks, each with its own spawned RNG stream, and
    pooled; the split only depends on ``trials`` so results are reproducible.
    """
    if trials < MIN_TRIALS:
        raise DomainError(f"need at least {MIN_TRIALS} trials, got {trials}")
    if chunks is None:
        chunks = max(1, math.ceil(trials / _CHUNK))
    sizes = [trials // chunks + (i < trials % chunks) for i in range(chunks)]
    w = params.step
    hits = 0
    for size, ss in zip(sizes, np.random.SeedSequence(rng_seed).spawn(chunks)):
        rng = np.random.Generator(np.random.PCG64(ss))
        t_e = params.expiry.sample(rng, size)
        t_r = rng.uniform(0.0, w, size)
        hits += int(np.count_nonzero(t_e > t_r))
    est = hits / trials
    return MonteCarloEstimate(est, math.sqrt(est * (1.0 - est) / trials), trials)


def laplace_transform(dist: ExpiryDistribution, s: float, method: str = "auto", abs_tol: float = 1e-12) -> float:
    """``E[exp(-s * t_e)]``.

    ``method="closed"`` uses the exact expression for each kind;
    ``"quadrature"`` integrates ``s * exp(-s t) * F_e(t)`` over ``[0, inf)``
    after the substitution ``t = x / (1 - x)``. ``"auto"`` prefers the closed
    form.
    """
    if not (s >= 0 and math.isfinite(s)):
        raise DomainError(f"Laplace argument must be finite and >= 0, got {s!r}")
    if s == 0:
        return 1.0
    if method in ("auto", "closed"):
        if dist.kind == "exponential":
            mu = 1.0 / dist.param
            return mu / (mu + s)
        if dist.kind == "deterministic":
            return math.exp(-s * dist.param)
        return float(np.mean(np.exp(-s * dist.samples)))
    if method != "quadrature":
        raise DomainError(f"unknown method {method!r}")

    def integrand(x):
        t = x / (1.0 - x)
        return s * np.exp(-s * t) * dist.cdf(t) / (1.0 - x) ** 2

    pts = [b / (1.0 + b) for b in dist.breakpoints()]
    try:
        return integrate(integrand, 0.0, 1.0, abs_tol=abs_tol, points=pts).value
    except NumericalError as e:
        raise NumericalError(f"Laplace transform at s={s} did not converge: {e}") from None


SWEEP_COLUMNS = ("lambda", "phi", "t_h", "T_s", "dist_kind", "dist_mean",
                 "p_dkga_analytic", "p_dkga_mc", "mc_stderr")


def sweep(param_sets: Iterable[LifetimeParams], trials: int, rng_seed: int) -> list[dict]:
    """Analytic and Monte Carlo P_DKGA for each parameter set.

    Set ``i`` uses Monte Carlo seed ``(rng_seed, i)``.
    """
    rows = []
    for i, p in enumerate(param_sets):
        seed = int(np.random.SeedSequence([rng_seed, i]).generate_state(1, np.uint64)[0])
        mc = p_dkga_monte_carlo(p, trials, seed)
        kind, mean = p.expiry.describe()
        rows.append({
            "lambda": p.lam, "phi": p.phi, "t_h": p.t_h, "T_s": p.T_s,
            "dist_kind": kind, "dist_mean": mean,
            "p_dkga_analytic": p_dkga(p), "p_dkga_mc": mc.estimate, "mc_stderr": mc.stderr,
        })
    return rows


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def write_sweep_csv(rows: list[dict], path) -> None:
    Path(path).write_text(sweep_csv(rows))


def default_sweep_params(T_s: float = 10.0) -> list[LifetimeParams]:
    """24 parameter sets: lambda in {0.5, 2, 8}, phi in {0.5, 4}, t_h in
    {0.25, 4}, each with exponential (mean 1) and deterministic (0.5) expiry."""
    out = []
    for lam in (0.5, 2.0, 8.0):
        for phi in (0.5, 4.0):
            for t_h in (0.25, 4.0):
                for dist in (ExpiryDistribution.exponential(1.0), ExpiryDistribution.deterministic(0.5)):
                    out.append(LifetimeParams(lam, phi, t_h, T_s, dist))
    return out
