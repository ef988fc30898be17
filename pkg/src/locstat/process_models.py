"""Locally stationary process simulators and one-step conditional functionals.

Two generating mechanisms are implemented:

* recursive models  X_i = m(X_{i-1}, i/n) + sigma(X_{i-1}, i/n) * eps_i
  with affine mean m(x,u) = a(u) x + b(u) and either an affine-in-|x| or an
  ARCH-style scale, and
* linear models     X_i = sum_j a_j(i/n) eps_{i-j}
  with a_j(u) = shape(u) * template(j) for a summable decay template.

All coefficient functions are polynomials in the rescaled time u in [0,1],
which keeps models serializable; arbitrary callables can be substituted
through the dataclass fields when using the library directly.

Simulation starts from zero at index 1-B with the time argument frozen at
u = 1/n during the burn-in prefix; the contraction of the recursion makes
the initialization bias geometrically small (the default burn-in pushes it
below 1e-12).  Replications are driven by per-replication substreams, so
batch runs are reproducible and order-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np
from scipy import integrate

from .innovations import Innovation
from .rng import substream

__all__ = [
    "Poly",
    "AffineMean",
    "AffineScale",
    "ArchScale",
    "RecursiveModel",
    "CoefTemplate",
    "LinearModel",
    "Path",
    "ContractionError",
    "QuadratureError",
    "simulate_path",
    "simulate_stationary",
    "simulate_coupled",
    "conditional_functional",
    "iter_value_blocks",
    "batch_values",
    "stationary_draws",
]

BURN_IN_TOL = 1e-12
LINEAR_TAIL_TOL = 1e-10
LINEAR_ORDER_CAP = 2_000_000


class ContractionError(ValueError):
    """The recursion is not contracting for the configured moment order."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (achieved residual {residual:.3e})")
        self.residual = residual


# ---------------------------------------------------------------------------
# coefficient functions


@dataclass(frozen=True)
class Poly:
    """Polynomial in u with ascending coefficients, evaluated on [0, 1]."""

    coeffs: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    def __call__(self, u):
        return np.polynomial.polynomial.polyval(u, self.coeffs)

    def bounds(self) -> Tuple[float, float]:
        """Exact (min, max) over [0, 1] via the critical points."""
        crit = [0.0, 1.0]
        if len(self.coeffs) > 1:
            deriv = np.polynomial.polynomial.polyder(self.coeffs)
            for r in np.polynomial.polynomial.polyroots(deriv):
                if abs(r.imag) < 1e-12 and -1e-12 <= r.real <= 1 + 1e-12:
                    crit.append(min(max(r.real, 0.0), 1.0))
        vals = [float(self(c)) for c in crit]
        return min(vals), max(vals)

    def sup_abs(self) -> float:
        lo, hi = self.bounds()
        return max(abs(lo), abs(hi))


def const(value: float) -> Poly:
    return Poly((value,))


# ---------------------------------------------------------------------------
# recursive models


@dataclass(frozen=True)
class AffineMean:
    """m(x, u) = slope(u) * x + intercept(u)."""

    slope: Poly = const(0.0)
    intercept: Poly = const(0.0)

    def __call__(self, x, u):
        return self.slope(u) * x + self.intercept(u)

    @property
    def chi(self) -> float:
        """sup-slope in x."""
        return self.slope.sup_abs()

    @property
    def sup_at_zero(self) -> float:
        return self.intercept.sup_abs()


@dataclass(frozen=True)
class AffineScale:
    """sigma(x, u) = base(u) + slope(u) * |x|, base > 0, slope >= 0."""

    base: Poly = const(1.0)
    slope: Poly = const(0.0)

    def __post_init__(self):
        if self.base.bounds()[0] <= 0.0:
            raise ValueError("scale base must be positive on [0, 1]")
        if self.slope.bounds()[0] < 0.0:
            raise ValueError("scale slope must be nonnegative on [0, 1]")

    def __call__(self, x, u):
        return self.base(u) + self.slope(u) * np.abs(x)

    @property
    def chi(self) -> float:
        return self.slope.sup_abs()

    @property
    def sup_at_zero(self) -> float:
        return self.base.sup_abs()

    @property
    def sigma_min(self) -> float:
        return self.base.bounds()[0]


@dataclass(frozen=True)
class ArchScale:
    """sigma(x, u) = sqrt(base(u) + slope(u) * x^2), base > 0, slope >= 0."""

    base: Poly = const(1.0)
    slope: Poly = const(0.0)

    def __post_init__(self):
        if self.base.bounds()[0] <= 0.0:
            raise ValueError("scale base must be positive on [0, 1]")
        if self.slope.bounds()[0] < 0.0:
            raise ValueError("scale slope must be nonnegative on [0, 1]")

    def __call__(self, x, u):
        return np.sqrt(self.base(u) + self.slope(u) * np.square(x))

    @property
    def chi(self) -> float:
        # |d sigma/dx| = |slope*x| / sqrt(base + slope x^2) <= sqrt(slope)
        return math.sqrt(self.slope.sup_abs())

    @property
    def sup_at_zero(self) -> float:
        return math.sqrt(self.base.sup_abs())

    @property
    def sigma_min(self) -> float:
        return math.sqrt(self.base.bounds()[0])


@dataclass(frozen=True)
class RecursiveModel:
    """X_i = m(X_{i-1}, i/n) + sigma(X_{i-1}, i/n) eps_i with contracting m, sigma."""

    mean: AffineMean
    scale: AffineScale | ArchScale
    innovation: Innovation
    s: float = 1.0  # moment parameter: contraction uses ||eps||_{2s}
    holder_u: float = 1.0  # Hoelder exponent of the coefficients in u
    tag: str = "recursive"

    def __post_init__(self):
        rho = self.contraction()
        if not rho < 1.0:
            raise ContractionError(
                f"chi_m + ||eps||_{2 * self.s} * chi_sigma = {rho:.6g} >= 1 "
                f"(chi_m={self.mean.chi:.6g}, chi_sigma={self.scale.chi:.6g})"
            )

    # -- structural quantities ----------------------------------------------

    def contraction(self, s: Optional[float] = None) -> float:
        s = self.s if s is None else s
        return self.mean.chi + self.innovation.abs_moment(2.0 * s) * self.scale.chi

    def moment_bound(self, q: float) -> float:
        """Upper bound for sup_i ||X_i||_q from the zero start (needs contraction at q/2)."""
        rho = self.mean.chi + self.innovation.abs_moment(q) * self.scale.chi
        if not rho < 1.0:
            raise ContractionError(f"no contraction at moment order {q}: rho={rho:.6g}")
        drift = self.mean.sup_at_zero + self.scale.sup_at_zero * self.innovation.abs_moment(q)
        return drift / (1.0 - rho)

    def default_burn_in(self, tol: float = BURN_IN_TOL) -> int:
        try:
            rho = self.contraction(s=1.0)
        except ValueError:
            # heavy tails without a second moment: fall back on the configured order
            rho = self.contraction()
        if rho <= 0.0:
            return 1
        return max(1, math.ceil(math.log(tol) / math.log(rho)))

    def frozen_at(self, u: float) -> "RecursiveModel":
        """The stationary companion model with coefficients frozen at u."""
        if not 0.0 <= u <= 1.0:
            raise ValueError(f"u must lie in [0, 1], got {u}")
        mean = AffineMean(const(float(self.mean.slope(u))), const(float(self.mean.intercept(u))))
        scale = type(self.scale)(const(float(self.scale.base(u))), const(float(self.scale.slope(u))))
        return replace(self, mean=mean, scale=scale, tag=f"{self.tag}@u={u:g}")

    @property
    def sigma_min(self) -> float:
        return self.scale.sigma_min

    # -- evaluation ----------------------------------------------------------

    def mean_fn(self, x, u):
        return self.mean(x, u)

    def scale_fn(self, x, u):
        return self.scale(x, u)


# ---------------------------------------------------------------------------
# linear models


@dataclass(frozen=True)
class CoefTemplate:
    """Decay template t_j, j >= 0: geometric c*rho^j or polynomial c*(j+1)^(-alpha)."""

    kind: str  # "geometric" | "polynomial"
    c: float
    rho: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        if self.kind == "geometric":
            if not 0.0 <= self.rho < 1.0:
                raise ValueError("geometric template needs rho in [0, 1)")
        elif self.kind == "polynomial":
            if not self.alpha > 1.0:
                raise ValueError("polynomial template needs alpha > 1")
        else:
            raise ValueError(f"unknown template kind {self.kind!r}")
        if self.c <= 0.0:
            raise ValueError("template scale c must be positive")

    def __call__(self, j):
        j = np.asarray(j)
        if self.kind == "geometric":
            return self.c * self.rho ** j
        return self.c * (j + 1.0) ** (-self.alpha)

    def tail_sum(self, after: int) -> float:
        """sum_{j > after} t_j (exact for geometric, integral bound otherwise)."""
        if self.kind == "geometric":
            if self.rho == 0.0:
                return 0.0
            return self.c * self.rho ** (after + 1) / (1.0 - self.rho)
        # sum_{j>J} c (j+1)^(-alpha) <= c * integral_{J+1}^inf x^(-alpha) dx
        return self.c * (after + 1.0) ** (1.0 - self.alpha) / (self.alpha - 1.0)


@dataclass(frozen=True)
class LinearModel:
    """X_i = sum_{j=0}^J a_j(i/n) eps_{i-j} with a_j(u) = shape(u) * template(j)."""

    shape: Poly
    template: CoefTemplate
    innovation: Innovation
    s: float = 1.0
    holder_u: float = 1.0
    tag: str = "linear"

    def __post_init__(self):
        lo, hi = self.shape.bounds()
        if lo <= 0.0:
            raise ValueError("shape(u) must be strictly positive on [0, 1] (a_0 >= sigma_min > 0)")

    def coefficient(self, j, u):
        return self.shape(u) * self.template(j)

    def envelope(self, j):
        """A_j = sup_u |a_j(u)|."""
        return self.shape.sup_abs() * self.template(j)

    @property
    def a0_min(self) -> float:
        return self.shape.bounds()[0] * float(self.template(0))

    def truncation_order(self, tol: float = LINEAR_TAIL_TOL) -> int:
        """Smallest J with ||eps||_2 * sum_{j>J} A_j < tol."""
        try:
            eps_norm = self.innovation.abs_moment(2.0)
        except ValueError:
            eps_norm = self.innovation.abs_moment(2.0 * self.s)
        scale = eps_norm * self.shape.sup_abs()
        lo, hi = 0, 1
        while scale * self.template.tail_sum(hi) >= tol:
            hi *= 2
            if hi > LINEAR_ORDER_CAP:
                raise ValueError(
                    "linear template tail cannot reach the truncation tolerance "
                    f"within J <= {LINEAR_ORDER_CAP}; use faster decay"
                )
        while lo < hi:
            mid = (lo + hi) // 2
            if scale * self.template.tail_sum(mid) < tol:
                hi = mid
            else:
                lo = mid + 1
        return lo

    def frozen_at(self, u: float) -> "LinearModel":
        if not 0.0 <= u <= 1.0:
            raise ValueError(f"u must lie in [0, 1], got {u}")
        return replace(self, shape=const(float(self.shape(u))), tag=f"{self.tag}@u={u:g}")


ProcessModel = RecursiveModel | LinearModel


# ---------------------------------------------------------------------------
# paths


@dataclass(frozen=True)
class Path:
    """One simulated realization X_1..X_n together with its innovation record.

    ``innovations[j]`` stores eps_{j+1-burn_in}; consumed history runs from
    index 1-burn_in to n.  For recursive models ``prefix`` holds the burn-in
    values X_{1-B}..X_0.
    """

    values: np.ndarray
    innovations: np.ndarray
    n: int
    burn_in: int
    seed: int
    model_tag: str
    prefix: np.ndarray = field(default_factory=lambda: np.empty(0))

    def innovation(self, i: int) -> float:
        j = i - 1 + self.burn_in
        if j < 0 or j >= len(self.innovations):
            raise IndexError(f"innovation index {i} outside stored history")
        return float(self.innovations[j])

    def value(self, i: int) -> float:
        """X_i for -B <= i <= n (burn-in start X_{-B} = 0 for recursive models)."""
        if 1 <= i <= self.n:
            return float(self.values[i - 1])
        j = i - 1 + self.burn_in
        if 0 <= j < len(self.prefix):
            return float(self.prefix[j])
        if i == -self.burn_in and len(self.prefix) == self.burn_in:
            return 0.0
        raise IndexError(f"value index {i} outside stored history")

    @property
    def u(self) -> np.ndarray:
        return np.arange(1, self.n + 1) / self.n

    def to_rows(self):
        """(index, u, X) rows for CSV export."""
        for i, (u, x) in enumerate(zip(self.u, self.values), start=1):
            yield i, u, x


# ---------------------------------------------------------------------------
# simulation engines


def _u_schedule(n: int, burn_in: int) -> np.ndarray:
    idx = np.arange(1 - burn_in, n + 1)
    return np.maximum(idx, 1) / n


def _iterate_recursive(model: RecursiveModel, eps: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Run the recursion over columns of eps (shape (..., B+n)) from a zero start."""
    out = np.empty_like(eps)
    x = np.zeros(eps.shape[:-1])
    a = model.mean.slope(u)
    b = model.mean.intercept(u)
    sb = model.scale.base(u)
    ss = model.scale.slope(u)
    arch = isinstance(model.scale, ArchScale)
    for t in range(eps.shape[-1]):
        if arch:
            sigma = np.sqrt(sb[t] + ss[t] * np.square(x))
        else:
            sigma = sb[t] + ss[t] * np.abs(x)
        x = a[t] * x + b[t] + sigma * eps[..., t]
        out[..., t] = x
    return out


def _linear_values(model: LinearModel, eps: np.ndarray, n: int, order: int) -> np.ndarray:
    """X_i = sum_{j<=J} a_j(i/n) eps_{i-j} for i=1..n; eps holds eps_{1-J}..eps_n."""
    u = np.arange(1, n + 1) / n
    shape_u = model.shape(u)
    t = np.asarray(model.template(np.arange(order + 1)), dtype=float)
    x = np.zeros(eps.shape[:-1] + (n,))
    for j in range(order + 1):
        # eps_{i-j} occupies positions (i-j-1+J) = J-j .. J-j+n-1
        x += t[j] * eps[..., order - j : order - j + n]
    return shape_u * x


def _effective_burn_in(model: ProcessModel, burn_in: Optional[int]) -> int:
    if isinstance(model, LinearModel):
        return model.truncation_order()
    if burn_in is None:
        return model.default_burn_in()
    if burn_in < 0:
        raise ValueError("burn_in must be nonnegative")
    return burn_in


def simulate_path(model: ProcessModel, n: int, seed: int, burn_in: Optional[int] = None,
                  rep: int = 0) -> Path:
    """Simulate X_1..X_n; bit-identical for identical (model, n, seed, burn_in, rep)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    b = _effective_burn_in(model, burn_in)
    eps = model.innovation.sample(substream(seed, rep), b + n)
    if isinstance(model, RecursiveModel):
        full = _iterate_recursive(model, eps, _u_schedule(n, b))
        values, prefix = full[b:], full[:b]
    else:
        values, prefix = _linear_values(model, eps, n, b), np.empty(0)
    return Path(values=values, innovations=eps, n=n, burn_in=b, seed=seed,
                model_tag=model.tag, prefix=prefix)


def simulate_stationary(model: ProcessModel, u: float, n: int, seed: int,
                        burn_in: Optional[int] = None, rep: int = 0) -> Path:
    """Simulate the stationary companion process at rescaled time u."""
    return simulate_path(model.frozen_at(u), n, seed, burn_in=burn_in, rep=rep)


def simulate_coupled(model: ProcessModel, n: int, k: int, i: int, seed: int,
                     burn_in: Optional[int] = None, rep: int = 0) -> Tuple[Path, Path]:
    """Two paths sharing all innovations except eps_{i-k} (independent copy in the second)."""
    if k < 1:
        raise ValueError("lag k must be >= 1")
    if i > n:
        raise ValueError("index i must be <= n")
    base = simulate_path(model, n, seed, burn_in=burn_in, rep=rep)
    j = (i - k) - 1 + base.burn_in  # position of eps_{i-k}
    if j < 0:
        raise ValueError(
            f"replacement index i-k = {i - k} precedes the stored burn-in prefix "
            f"(history starts at {1 - base.burn_in})"
        )
    eps2 = base.innovations.copy()
    eps2[j] = model.innovation.sample(substream(seed, rep, 1), 1)[0]
    if isinstance(model, RecursiveModel):
        full = _iterate_recursive(model, eps2, _u_schedule(n, base.burn_in))
        values, prefix = full[base.burn_in:], full[:base.burn_in]
    else:
        values, prefix = _linear_values(model, eps2, n, base.burn_in), np.empty(0)
    twin = Path(values=values, innovations=eps2, n=n, burn_in=base.burn_in, seed=seed,
                model_tag=model.tag + "*", prefix=prefix)
    return base, twin


# -- batch engines -----------------------------------------------------------

_BLOCK_TARGET = 20_000_000  # floats per innovation block


def iter_value_blocks(model: ProcessModel, n: int, reps: int, seed: int,
                      burn_in: Optional[int] = None, rep_offset: int = 0,
                      block: Optional[int] = None):
    """Yield (first_rep_index, values[block, n]) with per-replication streams.

    Replication r always uses substream(seed, rep_offset + r), so the block
    size and iteration order never change the output.
    """
    b = _effective_burn_in(model, burn_in)
    width = b + n
    if block is None:
        block = max(1, min(reps, _BLOCK_TARGET // max(width, 1)))
    u = _u_schedule(n, b) if isinstance(model, RecursiveModel) else None
    done = 0
    while done < reps:
        m = min(block, reps - done)
        eps = np.empty((m, width))
        for r in range(m):
            rng = substream(seed, rep_offset + done + r)
            eps[r] = model.innovation.sample(rng, width)
        if isinstance(model, RecursiveModel):
            values = _iterate_recursive(model, eps, u)[:, b:]
        else:
            values = _linear_values(model, eps, n, b)
        yield done, values
        done += m


def batch_values(model: ProcessModel, n: int, reps: int, seed: int,
                 burn_in: Optional[int] = None, rep_offset: int = 0) -> np.ndarray:
    """Materialize all replications as a (reps, n) matrix."""
    out = np.empty((reps, n))
    for start, vals in iter_value_blocks(model, n, reps, seed, burn_in, rep_offset):
        out[start : start + vals.shape[0]] = vals
    return out


def stationary_draws(model: ProcessModel, u: float, draws: int, seed: int,
                     rep_offset: int = 0) -> np.ndarray:
    """Independent draws approximating the law of X~_0(u) (one per replication)."""
    frozen = model.frozen_at(u)
    return batch_values(frozen, 1, draws, seed, rep_offset=rep_offset)[:, 0]


# ---------------------------------------------------------------------------
# conditional functionals


def _quad(fn, lo, hi, rel_tol=1e-8):
    val, err = integrate.quad(fn, lo, hi, epsabs=1e-14, epsrel=rel_tol, limit=200)
    if err > max(rel_tol * abs(val), 1e-11):
        raise QuadratureError("conditional functional quadrature did not converge", err)
    return val


def conditional_functional(model: RecursiveModel, base, z_prev: float, u: float,
                           kappa: int = 1) -> float:
    """E[ fbar(m(z,u) + sigma(z,u) eps, u)^kappa ]^(1/kappa) for one-step transitions.

    ``base`` is any object with an ``fbar(x)`` evaluation; indicator bases
    (attribute ``kind == "indicator"`` with ``threshold``) use the exact
    innovation CDF, kernel bases (``kind == "kernel_density"``) integrate
    over the kernel support, everything else falls back to adaptive
    quadrature against the innovation density.
    """
    if not isinstance(model, RecursiveModel):
        raise TypeError("conditional functionals require a recursive model")
    if kappa not in (1, 2):
        raise ValueError("kappa must be 1 or 2")
    m = float(model.mean(z_prev, u))
    sd = float(model.scale(z_prev, u))
    kind = getattr(base, "kind", None)

    if kind == "indicator":
        g = model.innovation.cdf((base.threshold - m) / sd)
        return float(g) ** (1.0 / kappa)

    lo, hi = model.innovation.support
    if kind == "kernel_density":
        # fbar is supported on |z - center| <= h2/2
        half = base.bandwidth / 2.0
        lo = max(lo, (base.center - half - m) / sd)
        hi = min(hi, (base.center + half - m) / sd)
        if hi <= lo:
            return 0.0
    pdf = model.innovation.pdf

    def integrand(e):
        return base.fbar(m + sd * e) ** kappa * pdf(e)

    val = _quad(integrand, lo, hi)
    if kappa == 2:
        return max(val, 0.0) ** 0.5
    return val
