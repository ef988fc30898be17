"""Semi-norm calculus for empirical-process classes.

A class member is a product f(z, u) = D(u) * fbar(z): a time-weighting
factor (a global weight or a localized kernel window) times a base function
of the current observation.  The module provides

* the norm ||f||_{nu,n} = ((1/n) sum_i ||f(Z_i, i/n)||_nu^nu)^(1/nu) by MC,
* the dependence-penalized semi-norm
      V(f)  = ||f||_{2,n} + sum_k min{||f||_{2,n}, D_n Delta(k)}
  and its log-weighted companion V~ used by the large-deviation envelope,
* closed-form two-sided bounds for V with the explicit constants of the
  summation lemmas (polynomial and geometric decay),
* the truncation threshold m(n, delta, k) = r(delta/D_n) D_n^inf sqrt(n)/sqrt(H(k)),
* weighted bracketing-entropy integrals with a guarded singular endpoint,
* the truncation pair phi_m^and / phi_m^vee.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import integrate

from .dependence import DecayProfile, BernsteinWeights, bernstein_functionals, r_of_delta
from .process_models import ProcessModel, iter_value_blocks

__all__ = [
    "Kernel",
    "epanechnikov",
    "triangular",
    "IdentityBase",
    "AbsDevBase",
    "IndicatorBase",
    "IndicatorBandBase",
    "KernelDensityBase",
    "ConstantBase",
    "CustomBase",
    "GlobalFactor",
    "LocalFactor",
    "ClassMember",
    "MCValue",
    "norm_nu_n",
    "v_norm",
    "v_closed_form",
    "v_tilde",
    "m_threshold",
    "entropy_integral",
    "truncate",
    "EntropyDivergenceError",
]


# ---------------------------------------------------------------------------
# kernels on [-1/2, 1/2]


def _epan(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 0.5, 6.0 * (0.25 - u * u), 0.0)


def _tri(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 0.5, 2.0 * (1.0 - 2.0 * np.abs(u)), 0.0)


@dataclass(frozen=True)
class Kernel:
    """Lipschitz kernel with unit integral and support inside [-1/2, 1/2]."""

    name: str
    fn: Callable = field(compare=False)
    lipschitz: float = 0.0
    sup: float = 0.0
    l2: float = 0.0  # integral of K^2

    def __call__(self, u):
        return self.fn(u)

    def validate(self, tol: float = 1e-10):
        total, _ = integrate.quad(self.fn, -0.5, 0.5, epsabs=1e-13, limit=200)
        if abs(total - 1.0) > tol:
            raise ValueError(f"kernel {self.name} integrates to {total}, not 1")
        if self.l2 <= 0.0:
            raise ValueError("kernel must have positive L2 norm")
        grid = np.linspace(0.51, 3.0, 64)
        if np.any(np.abs(self.fn(grid)) > 0) or np.any(np.abs(self.fn(-grid)) > 0):
            raise ValueError("kernel support exceeds [-1/2, 1/2]")
        return self


def epanechnikov() -> Kernel:
    """K(u) = 6 (1/4 - u^2) on [-1/2, 1/2]; integral 1, K^2 integral 6/5."""
    return Kernel("epanechnikov", _epan, lipschitz=6.0, sup=1.5, l2=1.2)


def triangular() -> Kernel:
    return Kernel("triangular", _tri, lipschitz=4.0, sup=2.0, l2=4.0 / 3.0)


# ---------------------------------------------------------------------------
# base families fbar(z)


@dataclass(frozen=True)
class IdentityBase:
    kind: str = "identity"

    def fbar(self, x):
        return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class AbsDevBase:
    theta: float = 0.0
    kind: str = "abs_dev"

    def fbar(self, x):
        return np.abs(np.asarray(x, dtype=float) - self.theta)


@dataclass(frozen=True)
class IndicatorBase:
    threshold: float = 0.0
    kind: str = "indicator"

    def fbar(self, x):
        return (np.asarray(x, dtype=float) <= self.threshold).astype(float)


@dataclass(frozen=True)
class IndicatorBandBase:
    """1{lo < z <= hi}: the difference of two indicator bases (bracket size checks)."""

    lo: float
    hi: float
    kind: str = "indicator_band"

    def fbar(self, x):
        x = np.asarray(x, dtype=float)
        return ((x > self.lo) & (x <= self.hi)).astype(float)


@dataclass(frozen=True)
class KernelDensityBase:
    """fbar(z) = sqrt(h2) * Ktilde_{h2}(z - x) = Ktilde((z - x)/h2) / sqrt(h2)."""

    kernel: Kernel
    bandwidth: float
    center: float
    kind: str = "kernel_density"

    def fbar(self, x):
        x = np.asarray(x, dtype=float)
        return self.kernel((x - self.center) / self.bandwidth) / math.sqrt(self.bandwidth)

    @property
    def sup(self):
        return self.kernel.sup / math.sqrt(self.bandwidth)


@dataclass(frozen=True)
class ConstantBase:
    value: float = 1.0
    kind: str = "constant"

    def fbar(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.value)


@dataclass(frozen=True)
class CustomBase:
    """Arbitrary scalar base for oracles (e.g. composed MAD influence functions)."""

    fn: Callable = field(compare=False)
    label: str = "custom"
    kind: str = "custom"

    def fbar(self, x):
        return self.fn(np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# time-weight factors D(u)


@dataclass(frozen=True)
class GlobalFactor:
    """D(u) = omega(u); default the constant weight 1."""

    weight: Optional[Callable] = field(default=None, compare=False)
    label: str = "global"

    def d(self, u):
        if self.weight is None:
            return np.ones_like(np.asarray(u, dtype=float))
        return np.asarray(self.weight(u), dtype=float)

    def d_n(self, n: int) -> float:
        u = np.arange(1, n + 1) / n
        return float(np.sqrt(np.mean(self.d(u) ** 2)))

    def d_n_inf(self, n: int, nu: float = math.inf) -> float:
        u = np.arange(1, n + 1) / n
        vals = np.abs(self.d(u))
        if math.isinf(nu):
            return float(np.max(vals))
        return float(np.mean(vals ** nu) ** (1.0 / nu))


@dataclass(frozen=True)
class LocalFactor:
    """D(u) = sqrt(h) K_h(u - v) = K((u - v)/h) / sqrt(h)."""

    kernel: Kernel
    h: float
    v: float
    label: str = "local"

    def __post_init__(self):
        if not 0.0 < self.h < 1.0:
            raise ValueError("bandwidth h must lie in (0, 1)")
        if not 0.0 < self.v < 1.0:
            raise ValueError("center v must lie in (0, 1)")

    def d(self, u):
        u = np.asarray(u, dtype=float)
        return self.kernel((u - self.v) / self.h) / math.sqrt(self.h)

    def d_n(self, n: int) -> float:
        u = np.arange(1, n + 1) / n
        return float(np.sqrt(np.mean(self.d(u) ** 2)))

    def d_n_inf(self, n: int, nu: float = math.inf) -> float:
        u = np.arange(1, n + 1) / n
        vals = np.abs(self.d(u))
        if math.isinf(nu):
            return float(np.max(vals))
        return float(np.mean(vals ** nu) ** (1.0 / nu))


@dataclass(frozen=True)
class ClassMember:
    """One function f(z, u) = factor.d(u) * base.fbar(z)."""

    factor: GlobalFactor | LocalFactor
    base: object

    def evaluate(self, x, u):
        return self.factor.d(u) * self.base.fbar(x)

    def sup_norm(self) -> float:
        """||f||_inf for bounded members (indicator / kernel / constant bases)."""
        kind = getattr(self.base, "kind", None)
        if kind in ("indicator", "indicator_band"):
            base_sup = 1.0
        elif kind == "kernel_density":
            base_sup = self.base.sup
        elif kind == "constant":
            base_sup = abs(self.base.value)
        else:
            raise ValueError(f"member with base kind {kind!r} is not uniformly bounded")
        if isinstance(self.factor, LocalFactor):
            return base_sup * self.factor.kernel.sup / math.sqrt(self.factor.h)
        u = np.linspace(0.0, 1.0, 2049)
        return base_sup * float(np.max(np.abs(self.factor.d(u))))


# ---------------------------------------------------------------------------
# Monte Carlo norms


@dataclass(frozen=True)
class MCValue:
    value: float
    se: float

    def __float__(self):
        return self.value


def norm_nu_n(member: ClassMember, model: ProcessModel, nu: float, n: int,
              reps: int, seed: int = 0) -> MCValue:
    """MC estimate of ||f||_{nu,n} averaging |f(Z_i, i/n)|^nu over i and replications."""
    if reps < 100:
        raise ValueError("reps must be >= 100")
    u = np.arange(1, n + 1) / n
    d = member.factor.d(u)
    means = np.empty(reps)
    for start, vals in iter_value_blocks(model, n, reps, seed):
        block = np.abs(d * member.base.fbar(vals)) ** nu
        means[start : start + block.shape[0]] = block.mean(axis=1)
    m = float(np.mean(means))
    se_m = float(np.std(means, ddof=1)) / math.sqrt(reps)
    if m <= 0.0:
        return MCValue(0.0, 0.0)
    value = m ** (1.0 / nu)
    return MCValue(value, se_m / (nu * m ** (1.0 - 1.0 / nu)))


# ---------------------------------------------------------------------------
# the V calculus


_SERIES_CAP = 50_000_000


def v_norm(f2n: float, d_n: float, profile: DecayProfile) -> float:
    """V(f) = f2n + sum_{k>=1} min{f2n, d_n Delta(k)} (exact tail via beta)."""
    if f2n < 0.0:
        raise ValueError("f2n must be nonnegative")
    if d_n <= 0.0:
        raise ValueError("d_n must be positive")
    if f2n == 0.0:
        return 0.0
    if profile.is_trivial:
        return f2n
    total, k = f2n, 1
    while d_n * float(profile.delta(k)) >= f2n:
        total += f2n
        k += 1
        if k > _SERIES_CAP:
            raise RuntimeError("saturated V series exceeds iteration cap")
    return total + d_n * profile.beta(k)


@dataclass(frozen=True)
class ClosedFormBounds:
    lower: float
    upper: float
    lower_constant: float
    upper_constant: float
    shape: str


def v_closed_form(f2n: float, d_n: float, profile: DecayProfile) -> ClosedFormBounds:
    """Two-sided closed forms for V with the explicit summation-lemma constants.

    Polynomial decay:  V ~ f2n * max(f2n^(-1/alpha), 1)
    Geometric decay:   V ~ f2n * max(log(1/f2n), 1)
    Both bounds are returned; the constants depend only on (c, alpha|rho, d_n).
    """
    if profile.is_trivial:
        return ClosedFormBounds(f2n, f2n, 1.0, 1.0, "iid")
    kappa2 = profile.c * d_n
    if f2n == 0.0:
        return ClosedFormBounds(0.0, 0.0, 0.0, 0.0, profile.kind)
    if profile.kind == "polynomial":
        a = profile.alpha
        b_up = 2.0 * a / (a - 1.0) * max(kappa2, 1.0) ** (1.0 / a)
        b_lo = a / (a - 1.0) * kappa2 ** (1.0 / a)
        shape_val = f2n * max(f2n ** (-1.0 / a), 1.0)
        return ClosedFormBounds(min(1.0, b_lo) * shape_val, (1.0 + b_up) * shape_val,
                                min(1.0, b_lo), 1.0 + b_up, "polynomial")
    rho = profile.rho
    log_inv = math.log(1.0 / rho)
    b_up = 2.0 * max(math.log(kappa2), 1.0) / log_inv * (1.0 + 2.0 * log_inv / (1.0 - rho))
    b_lo = 0.5 * (rho / (1.0 - rho) + 1.0 / log_inv)
    shape_val = f2n * max(math.log(1.0 / f2n), 1.0)
    return ClosedFormBounds(min(1.0, b_lo) * shape_val, (1.0 + b_up) * shape_val,
                            min(1.0, b_lo), 1.0 + b_up, "geometric")


def v_tilde(f2n: float, d_n: float, profile: DecayProfile, nu: float = 2.0) -> float:
    """V~(f) = f2n + sum_j min{f2n, d_n Delta(j) omega(j)} L(j)."""
    if f2n < 0.0:
        raise ValueError("f2n must be nonnegative")
    if f2n == 0.0:
        return 0.0
    if profile.is_trivial:
        return f2n
    bf = bernstein_functionals(profile, nu)
    w = bf.weights
    total, j = f2n, 1
    below = 0
    while True:
        weighted = d_n * float(profile.delta(j)) * float(w.omega(j))
        if weighted >= f2n:
            below = 0
            total += f2n * float(w.loglog(j))
        else:
            below += 1
            ratio_decreasing = (
                float(profile.delta(j + 1) * w.omega(j + 1))
                < float(profile.delta(j) * w.omega(j))
            )
            if below >= 3 and ratio_decreasing:
                # every later term equals d_n Delta omega L: finish with beta_tilde
                total += d_n * bf.beta_tilde(j)
                return total
            total += weighted * float(w.loglog(j))
        j += 1
        if j > _SERIES_CAP:
            raise RuntimeError("weighted V series exceeds iteration cap")


def m_threshold(n: int, delta: float, k_count: int, d_n: float, d_n_inf: float,
                profile: DecayProfile) -> float:
    """m(n, delta, k) = r(delta / D_n) * D_n^inf * sqrt(n) / sqrt(H(k))."""
    if n < 1 or k_count < 1:
        raise ValueError("n and k_count must be >= 1")
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    h = max(1.0, math.log(k_count))
    return r_of_delta(profile, delta / d_n) * d_n_inf * math.sqrt(n) / math.sqrt(h)


# ---------------------------------------------------------------------------
# entropy integrals


class EntropyDivergenceError(ValueError):
    def __init__(self, exponent):
        super().__init__(
            f"entropy integrand grows like eps^{exponent:.3f} near 0; not integrable"
        )
        self.exponent = exponent


def _psi(eps):
    eps = np.asarray(eps, dtype=float)
    inv = 1.0 / eps
    return np.sqrt(np.log(np.maximum(inv, 1.0))) * np.log(np.log(np.maximum(inv, math.e)))


def entropy_integral(h_fn: Callable, sigma_upper: float, weight: str = "one",
                     rel_tol: float = 1e-6, margin: float = 0.05,
                     depth: int = 60) -> float:
    """integral_0^sigma w(eps) sqrt(1 v H(eps)) deps, w = 1 or the psi log-weight.

    The singular endpoint is handled by geometric bisection of (0, sigma];
    divergence (integrand growing at least like eps^-(1-margin)) raises,
    naming the measured exponent.
    """
    if sigma_upper <= 0.0:
        raise ValueError("sigma_upper must be positive")
    if weight not in ("one", "psi"):
        raise ValueError("weight must be 'one' or 'psi'")

    def integrand(eps):
        eps = np.asarray(eps, dtype=float)
        val = np.sqrt(np.maximum(1.0, h_fn(eps)))
        if weight == "psi":
            val = val * _psi(eps)
        return val

    total = 0.0
    hi = sigma_upper
    last_vals = []
    for _ in range(depth):
        lo = hi / 2.0
        piece, _ = integrate.quad(integrand, lo, hi, epsrel=rel_tol / 10.0,
                                  epsabs=1e-300, limit=100)
        total += piece
        last_vals.append((lo, float(integrand(np.array([lo]))[0])))
        hi = lo
    # growth exponent from the deepest octaves
    (e1, v1), (e2, v2) = last_vals[-5], last_vals[-1]
    if v2 > 0 and v1 > 0:
        p_hat = math.log(v2 / v1) / math.log(e2 / e1)
        if p_hat <= -(1.0 - margin):
            raise EntropyDivergenceError(p_hat)
        # extrapolated remainder below the last octave (integrand ~ eps^p_hat)
        if p_hat > -1.0:
            total += v2 * e2 / (1.0 + p_hat)
    return total


# ---------------------------------------------------------------------------
# truncation pair


def truncate(x, m: float):
    """(phi_m^and(x), phi_m^vee(x)) with phi^and = clip to [-m, m], phi^vee the residual."""
    if m <= 0.0:
        raise ValueError("truncation level m must be positive")
    x = np.asarray(x, dtype=float)
    capped = np.minimum(np.maximum(x, -m), m)
    return capped, x - capped
