"""The scaled empirical sum G_n(f), its martingale split and limit covariances.

G_n(f) = n^{-1/2} sum_i { f(Z_i, i/n) - E f(Z_i, i/n) } for class members
f(z, u) = D(u) fbar(z).  Centering can be analytic (closed-form means for
affine recursive models with centered innovations and a few special bases),
Monte Carlo (independent replication batch) or in-sample (replication mean;
leaves the variance of G_n untouched up to a factor (R-1)/R).

The martingale part G_n^(1) replaces the unconditional mean by the one-step
conditional expectation, evaluated through the models' conditional
functionals; G_n^(2) is the smooth complement and the two parts sum to
G_n(f) exactly.

Long-run covariances are estimated from the stationary companion process:
global case   Sigma = int w(u)^2 sum_j Cov(fbar(X~_0(u)), gbar(X~_j(u))) du
local case    Sigma = int K^2 * w(v)^2 * sum_j Cov(fbar(X~_0(v)), gbar(X~_j(v)))
with the lag window chosen from the decay profile and a flagged tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from . import process_models as pm
from .dependence import DecayProfile, analytic_decay_bound, class_decay_profile
from .rng import substream
from .seminorm import (ClassMember, GlobalFactor, Kernel, LocalFactor, MCValue,
                       norm_nu_n, v_norm)

__all__ = [
    "CovarianceSpec",
    "LongRunCovariance",
    "VarianceBoundReport",
    "AnalyticCenteringUnavailable",
    "evaluate_gn",
    "gn_samples",
    "analytic_mean_total",
    "martingale_parts",
    "long_run_covariance",
    "variance_bound_check",
    "default_lag_truncation",
]


class AnalyticCenteringUnavailable(ValueError):
    pass


# ---------------------------------------------------------------------------
# centering


def _is_conditionally_deterministic(model) -> bool:
    """True when X_i = b(u) + sigma(u) eps_i (mean and scale free of x)."""
    return (isinstance(model, pm.RecursiveModel) and model.mean.chi == 0.0
            and model.scale.chi == 0.0)


def analytic_mean_total(member: ClassMember, model, n: int) -> float:
    """sum_i E f(Z_i, i/n) in closed form, where available.

    Supported: constant bases always; identity bases for affine recursive
    models with centered innovations (the mean recursion is explicit) and
    for linear models; indicator bases when the model is an independent
    scheme b(u) + sigma(u) eps.
    """
    u = np.arange(1, n + 1) / n
    d = member.factor.d(u)
    kind = getattr(member.base, "kind", None)
    if kind == "constant":
        return float(np.sum(d) * member.base.value)
    if kind == "identity":
        if isinstance(model, pm.LinearModel):
            return 0.0  # centered innovations
        b = model.default_burn_in()
        sched = pm._u_schedule(n, b)
        mean = 0.0
        means = np.empty(b + n)
        for t, ut in enumerate(sched):
            mean = float(model.mean.slope(ut)) * mean + float(model.mean.intercept(ut))
            means[t] = mean
        return float(np.sum(d * means[b:]))
    if kind == "indicator" and _is_conditionally_deterministic(model):
        g = model.innovation.cdf(
            (member.base.threshold - model.mean.intercept(u)) / model.scale.base(u)
        )
        return float(np.sum(d * g))
    raise AnalyticCenteringUnavailable(
        f"no closed-form mean for base {kind!r} under model {model.tag!r}"
    )


def _raw_sums(members: Sequence[ClassMember], model, n: int, reps: int, seed: int,
              rep_offset: int = 0) -> np.ndarray:
    """S_r = sum_i f(Z_i, i/n) per replication, one column per member."""
    u = np.arange(1, n + 1) / n
    ds = [mb.factor.d(u) for mb in members]
    out = np.empty((reps, len(members)))
    for start, vals in pm.iter_value_blocks(model, n, reps, seed, rep_offset=rep_offset):
        for c, (mb, d) in enumerate(zip(members, ds)):
            out[start : start + vals.shape[0], c] = (d * mb.base.fbar(vals)).sum(axis=1)
    return out


def gn_samples(members, model, n: int, reps: int, seed: int = 0,
               centering: str = "sample", centering_reps: Optional[int] = None) -> np.ndarray:
    """Replicated draws of G_n(f) for one member or a list of members.

    centering = "sample":   subtract the in-sample replication mean (default;
                            shrinks the variance by exactly (R-1)/R),
                "mc":       subtract the mean of an independent batch
                            (default size 4 * reps, separate stream),
                "analytic": closed-form centering where available.
    """
    single = isinstance(members, ClassMember)
    mlist = [members] if single else list(members)
    sums = _raw_sums(mlist, model, n, reps, seed)
    if centering == "sample":
        center = sums.mean(axis=0)
    elif centering == "mc":
        m = 4 * reps if centering_reps is None else centering_reps
        center = _raw_sums(mlist, model, n, m, seed, rep_offset=1_000_000_000).mean(axis=0)
    elif centering == "analytic":
        center = np.array([analytic_mean_total(mb, model, n) for mb in mlist])
    else:
        raise ValueError(f"unknown centering {centering!r}")
    out = (sums - center) / math.sqrt(n)
    return out[:, 0] if single else out


def evaluate_gn(member: ClassMember, path: pm.Path, model, centering: str = "mc",
                centering_reps: int = 2000, seed: int = 0) -> float:
    """G_n(f) on one realized path.

    The expectation is removed analytically when ``centering="analytic"``,
    otherwise by an independent Monte Carlo batch driven by its own stream.
    """
    u = path.u
    total = float(np.sum(member.factor.d(u) * member.base.fbar(path.values)))
    if centering == "analytic":
        center = analytic_mean_total(member, model, path.n)
    elif centering == "mc":
        center = float(_raw_sums([member], model, path.n, centering_reps, seed,
                                 rep_offset=1_000_000_000).mean())
    else:
        raise ValueError("centering must be 'analytic' or 'mc' for single paths")
    return (total - center) / math.sqrt(path.n)


# ---------------------------------------------------------------------------
# martingale decomposition


def martingale_parts(member: ClassMember, path: pm.Path, model: pm.RecursiveModel,
                     centering: str = "mc", centering_reps: int = 2000,
                     seed: int = 0) -> Tuple[float, float]:
    """(G_n^(1), G_n^(2)): conditional-centering martingale and smooth remainder.

    The parts reproduce evaluate_gn(member, path, ...) exactly:
    G_n^(1) + G_n^(2) = G_n(f) with the same centering.
    """
    if not isinstance(model, pm.RecursiveModel):
        raise TypeError("the martingale split needs one-step conditional expectations")
    u = path.u
    d = member.factor.d(u)
    fvals = d * member.base.fbar(path.values)
    kind = getattr(member.base, "kind", None)
    if kind == "indicator":
        prev = np.concatenate(([path.value(0)], path.values[:-1]))
        cond = model.innovation.cdf(
            (member.base.threshold - model.mean(prev, u)) / model.scale(prev, u)
        )
    else:
        cond = np.empty(path.n)
        for i in range(1, path.n + 1):
            cond[i - 1] = pm.conditional_functional(
                model, member.base, path.value(i - 1), u[i - 1], kappa=1
            )
    cond = d * cond
    g1 = float(np.sum(fvals - cond)) / math.sqrt(path.n)
    gn = evaluate_gn(member, path, model, centering=centering,
                     centering_reps=centering_reps, seed=seed)
    return g1, gn - g1


# ---------------------------------------------------------------------------
# long-run covariance


@dataclass(frozen=True)
class CovarianceSpec:
    """Which limit covariance to target: the global or the localized version."""

    case: str = "local"  # "global" | "local"
    weight: Optional[Callable] = field(default=None, compare=False)  # omega(u), default 1
    v: float = 0.5
    h: float = 0.1
    kernel: Optional[Kernel] = None
    lag_truncation: Optional[int] = None
    u_grid: int = 64

    def __post_init__(self):
        if self.case not in ("global", "local"):
            raise ValueError("case must be 'global' or 'local'")
        if self.case == "local":
            if not 0.0 < self.v < 1.0:
                raise ValueError("local case needs v in (0, 1)")
            if self.h <= 0.0:
                raise ValueError("local case needs h > 0")

    def omega(self, u):
        if self.weight is None:
            return np.ones_like(np.asarray(u, dtype=float))
        return np.asarray(self.weight(u), dtype=float)


@dataclass(frozen=True)
class LongRunCovariance:
    value: float
    se: float
    lag_truncation: int
    tail_fraction: float
    tail_flag: bool
    case: str

    def to_record(self):
        return {"case": self.case, "sigma": self.value, "mc_se": self.se,
                "lags": self.lag_truncation, "tail_fraction": self.tail_fraction,
                "tail_flag": self.tail_flag}


def default_lag_truncation(profile: DecayProfile, tol: float = 1e-3,
                           cap: int = 200) -> int:
    """Smallest J with beta(J+1)/beta(1) < tol (geometric forgetting of autocovariances)."""
    if profile.is_trivial:
        return 1
    b1 = profile.beta(1)
    j = 1
    while profile.beta(j + 1) / b1 >= tol and j < cap:
        j += 1
    return j


def _cross_covs(fa: np.ndarray, ga: np.ndarray, j_max: int) -> np.ndarray:
    """Per-replication Cov(f_t, g_{t+j}) for j = 0..j_max, demeaned per row."""
    reps, length = fa.shape
    f = fa - fa.mean(axis=1, keepdims=True)
    g = ga - ga.mean(axis=1, keepdims=True)
    out = np.empty((reps, j_max + 1))
    for j in range(j_max + 1):
        out[:, j] = (f[:, : length - j] * g[:, j:]).sum(axis=1) / length
    return out


def _stationary_sigma(f_base, g_base, model, u: float, j_max: int, reps: int,
                      length: int, seed: int, rep_offset: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-replication estimates of sum_{|j|<=J} Cov(fbar_0, gbar_j) at time u."""
    frozen = model.frozen_at(u)
    per_rep = np.zeros(reps)
    tail_mag = np.zeros(reps)
    for start, vals in pm.iter_value_blocks(frozen, length, reps, seed,
                                            rep_offset=rep_offset):
        fa, ga = f_base.fbar(vals), g_base.fbar(vals)
        cfg = _cross_covs(fa, ga, j_max)
        if f_base is g_base:
            total = cfg[:, 0] + 2.0 * cfg[:, 1:].sum(axis=1)
        else:
            cgf = _cross_covs(ga, fa, j_max)
            total = cfg[:, 0] + cfg[:, 1:].sum(axis=1) + cgf[:, 1:].sum(axis=1)
        per_rep[start : start + vals.shape[0]] = total
        tail_mag[start : start + vals.shape[0]] = np.abs(cfg[:, -1])
    return per_rep, tail_mag


def long_run_covariance(f: ClassMember, g: ClassMember, model, spec: CovarianceSpec,
                        reps: int = 200, length: int = 4096, seed: int = 0,
                        profile: Optional[DecayProfile] = None) -> LongRunCovariance:
    """Estimate the limit covariance Sigma_{f,g} of (G_n(f), G_n(g))."""
    if profile is None:
        profile = analytic_decay_bound(model, s=min(model.s, 1.0))
    j_max = spec.lag_truncation or default_lag_truncation(profile)
    j_max = min(j_max, length // 8)

    if spec.case == "local":
        per_rep, tail = _stationary_sigma(f.base, g.base, model, spec.v, j_max,
                                          reps, length, seed, rep_offset=0)
        kernel = spec.kernel or getattr(f.factor, "kernel", None)
        if kernel is None:
            raise ValueError("local covariance needs a kernel (spec.kernel or factor)")
        w2 = float(spec.omega(np.array([spec.v]))[0]) ** 2
        scale = kernel.l2 * w2
        sigma = scale * float(per_rep.mean())
        se = scale * float(per_rep.std(ddof=1)) / math.sqrt(reps)
        tail_est = scale * _tail_estimate(tail.mean(), profile, j_max)
    else:
        grid = (np.arange(spec.u_grid) + 0.5) / spec.u_grid
        means = np.empty(spec.u_grid)
        variances = np.empty(spec.u_grid)
        tails = np.empty(spec.u_grid)
        sub_reps = max(20, reps // 4)
        for idx, u in enumerate(grid):
            per_rep, tail = _stationary_sigma(f.base, g.base, model, float(u), j_max,
                                              sub_reps, length, seed,
                                              rep_offset=idx * 10_000_000)
            means[idx] = per_rep.mean()
            variances[idx] = per_rep.var(ddof=1) / sub_reps
            tails[idx] = tail.mean()
        w2 = spec.omega(grid) ** 2
        sigma = float(np.mean(w2 * means))  # midpoint rule on the unit interval
        se = float(np.sqrt(np.sum((w2 / spec.u_grid) ** 2 * variances)))
        tail_est = float(np.mean(w2) * _tail_estimate(float(tails.mean()), profile, j_max))

    denom = max(abs(sigma), 1e-300)
    tail_fraction = abs(tail_est) / denom
    return LongRunCovariance(value=sigma, se=se, lag_truncation=j_max,
                             tail_fraction=tail_fraction,
                             tail_flag=tail_fraction > 0.05, case=spec.case)


def _tail_estimate(last_cov: float, profile: DecayProfile, j_max: int) -> float:
    """Extrapolate the dropped lags by the decay-profile ratio beyond J."""
    if profile.is_trivial:
        return 0.0
    d_j = float(profile.delta(j_max))
    if d_j <= 0.0:
        return 0.0
    return 2.0 * abs(last_cov) * profile.beta(j_max + 1) / d_j


# ---------------------------------------------------------------------------
# variance bound


@dataclass(frozen=True)
class VarianceBoundReport:
    var_hat: float
    var_rel_se: float
    f2n: MCValue
    v_value: float
    v_squared: float
    passed: bool
    model_tag: str
    member_label: str

    def to_record(self):
        return {"model": self.model_tag, "member": self.member_label,
                "var_hat": self.var_hat, "v": self.v_value, "v_sq": self.v_squared,
                "rel_se": self.var_rel_se, "pass": self.passed}


def variance_bound_check(member: ClassMember, model, profile: Optional[DecayProfile] = None,
                         n: int = 2000, reps: int = 1000, seed: int = 0,
                         norm_reps: int = 400, v_scale: float = 1.0,
                         n_se: float = 4.0) -> VarianceBoundReport:
    """Check Var(G_n(f)) <= V(f)^2 by simulation.

    ``v_scale`` shrinks V for negative controls (v_scale = 0.1 must flip the
    verdict on dependent data).  The tolerance combines the MC error of the
    variance (sd ~ var * sqrt(2/R)) and of the plug-in norm estimate.
    """
    if profile is None:
        profile = class_decay_profile(model, member.base)
    samples = gn_samples(member, model, n, reps, seed=seed, centering="sample")
    var_hat = float(np.var(samples, ddof=1))
    f2n = norm_nu_n(member, model, 2.0, n, norm_reps, seed=seed + 1)
    d_n = member.factor.d_n(n)
    v_val = v_scale * v_norm(f2n.value, d_n, profile)
    rel = math.sqrt(2.0 / (reps - 1)) + 2.0 * (f2n.se / max(f2n.value, 1e-300))
    passed = var_hat <= v_val ** 2 * (1.0 + n_se * rel)
    label = f"{member.factor.label}:{getattr(member.base, 'kind', '?')}"
    return VarianceBoundReport(var_hat=var_hat, var_rel_se=rel, f2n=f2n,
                               v_value=v_val, v_squared=v_val ** 2, passed=passed,
                               model_tag=model.tag, member_label=label)
