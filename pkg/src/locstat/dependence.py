"""Functional dependence measure and the decay-functional calculus.

The temporal dependence of a simulated process is summarized by a dominating
sequence Delta(k) of polynomial (c k^-alpha) or geometric (c rho^k) form.
From it the module computes

* beta(q)   = sum_{j>=q} Delta(j)                  (partial coupling mass)
* q_star(x) = min{q : beta(q) <= q x}              (block-length selector)
* r(delta)  = max{r > 0 : q_star(r) r <= delta}    (threshold inverse)

and the log-weighted companions used by the large-deviation envelope,

* omega(q) = q^(1/nu) log(e q)^(3/2),  L(q) = loglog(e^e q),  Phi(q) = q L(q)
* beta_tilde(q) = sum_{j>=q} Delta(j) omega(j) L(j)
* q_tilde_star(z) = min{q : beta_tilde(q) <= Phi(q) z}.

Monte Carlo estimation of the dependence measure itself uses the coupled
simulators: delta_nu(k) ~ max_i || X_i - X_i^{*(i-k)} ||_nu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, special

from . import process_models as pm
from .rng import substream

__all__ = [
    "DecayProfile",
    "BernsteinWeights",
    "BernsteinFunctionals",
    "DeltaEstimate",
    "SubmultReport",
    "estimate_delta_mc",
    "estimate_delta_profile_mc",
    "beta_direct",
    "analytic_decay_bound",
    "class_decay_profile",
    "beta",
    "q_star",
    "r_of_delta",
    "bernstein_functionals",
    "check_submultiplicativity",
]


# ---------------------------------------------------------------------------
# decay profiles


@dataclass(frozen=True)
class DecayProfile:
    """Dominating dependence sequence Delta(k), k >= 1.

    ``c == 0`` (or ``rho == 0``) encodes exact independence: Delta == 0 and
    the whole calculus degenerates to the i.i.d. case.
    """

    kind: str  # "polynomial" | "geometric"
    c: float
    alpha: float = 0.0
    rho: float = 0.0

    def __post_init__(self):
        if self.kind not in ("polynomial", "geometric"):
            raise ValueError(f"unknown decay kind {self.kind!r}")
        if self.c < 0.0:
            raise ValueError("c must be nonnegative")
        if self.kind == "polynomial" and self.c > 0.0 and not self.alpha > 1.0:
            raise ValueError("polynomial decay needs alpha > 1 for summability")
        if self.kind == "geometric" and not 0.0 <= self.rho < 1.0:
            raise ValueError("geometric decay needs rho in [0, 1)")

    @property
    def is_trivial(self) -> bool:
        return self.c == 0.0 or (self.kind == "geometric" and self.rho == 0.0)

    def delta(self, k):
        """Delta(k), vectorized over k >= 1 (Delta(0) extends the same formula)."""
        k = np.asarray(k, dtype=float)
        if self.is_trivial:
            return np.zeros_like(k)
        if self.kind == "geometric":
            return self.c * self.rho ** k
        return self.c * np.maximum(k, 1.0) ** (-self.alpha)

    def beta(self, q: int) -> float:
        """beta(q) = sum_{j >= q} Delta(j), exact (geometric) or Hurwitz-zeta."""
        if q < 1:
            raise ValueError("q must be >= 1")
        if self.is_trivial:
            return 0.0
        if self.kind == "geometric":
            return self.c * self.rho ** q / (1.0 - self.rho)
        return self.c * float(special.zeta(self.alpha, q))

    def to_record(self) -> Dict:
        rec = {"kind": self.kind, "c": self.c}
        if self.kind == "polynomial":
            rec["alpha"] = self.alpha
        else:
            rec["rho"] = self.rho
        return rec

    @classmethod
    def from_record(cls, rec: Dict) -> "DecayProfile":
        return cls(kind=rec["kind"], c=rec["c"], alpha=rec.get("alpha", 0.0),
                   rho=rec.get("rho", 0.0))


def beta(profile: DecayProfile, q: int) -> float:
    return profile.beta(q)


def beta_direct(profile: DecayProfile, q: int, rel_tol: float = 1e-10,
                max_terms: int = 50_000_000) -> float:
    """Reference implementation by partial summation with an integral-bracketed tail."""
    if profile.is_trivial:
        return 0.0
    if profile.kind == "geometric":
        total, j, term = 0.0, q, profile.c * profile.rho ** q
        while term > rel_tol * max(total, 1e-300):
            total += term
            term *= profile.rho
            j += 1
        return total + term / (1.0 - profile.rho)
    a, c = profile.alpha, profile.c
    total, n_end = 0.0, q
    while True:
        block = np.arange(n_end, n_end + 4096, dtype=float)
        total += float(np.sum(block ** -a))
        n_end += 4096
        lo = n_end ** (1.0 - a) / (a - 1.0)
        hi = (n_end - 1.0) ** (1.0 - a) / (a - 1.0)
        if hi - lo < rel_tol * (total + lo) or n_end - q > max_terms:
            return c * (total + 0.5 * (lo + hi))


def q_star(profile: DecayProfile, x: float) -> int:
    """min{q in N : beta(q) <= q x} by doubling plus integer bisection."""
    if x <= 0.0:
        raise ValueError("x must be positive")
    if profile.beta(1) <= x:
        return 1
    hi = 2
    while profile.beta(hi) > hi * x:
        hi *= 2
        if hi > 2 ** 62:
            raise RuntimeError("q_star search overflow")
    lo = hi // 2 + 1
    while lo < hi:
        mid = (lo + hi) // 2
        if profile.beta(mid) <= mid * x:
            hi = mid
        else:
            lo = mid + 1
    return lo


def r_of_delta(profile: DecayProfile, delta: float) -> float:
    """max{r > 0 : q_star(r) r <= delta}.

    On the bucket {r : q_star(r) = q} the map r -> q_star(r) r equals q r, so
    the feasible maximum is delta / q_dag with q_dag = min{q : beta(q) <= delta};
    everything above it is infeasible.  This evaluates the maximum exactly
    instead of bisecting a map that is only piecewise monotone.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    if profile.beta(1) <= delta:
        return delta
    hi = 2
    while profile.beta(hi) > delta:
        hi *= 2
        if hi > 2 ** 62:
            raise RuntimeError("r search overflow")
    lo = hi // 2 + 1
    while lo < hi:
        mid = (lo + hi) // 2
        if profile.beta(mid) <= delta:
            hi = mid
        else:
            lo = mid + 1
    return delta / lo


# ---------------------------------------------------------------------------
# Bernstein weight functionals


@dataclass(frozen=True)
class BernsteinWeights:
    """omega, L (loglog) and Phi weights for a given moment order nu >= 2."""

    nu: float

    def __post_init__(self):
        if self.nu < 2.0:
            raise ValueError("nu must be >= 2")

    def omega(self, q):
        q = np.asarray(q, dtype=float)
        return q ** (1.0 / self.nu) * np.log(math.e * q) ** 1.5

    def loglog(self, q):
        q = np.asarray(q, dtype=float)
        return np.log(np.log(math.exp(math.e) * q))

    def phi(self, q):
        return np.asarray(q, dtype=float) * self.loglog(q)


@dataclass
class BernsteinFunctionals:
    """beta_tilde / q_tilde_star built on a decay profile and weights."""

    profile: DecayProfile
    weights: BernsteinWeights
    _cache: Dict[int, float] = field(default_factory=dict, repr=False)

    @property
    def nu(self) -> float:
        return self.weights.nu

    def weighted_term(self, j):
        return self.profile.delta(j) * self.weights.omega(j) * self.weights.loglog(j)

    def beta_tilde(self, q: int, rel_tol: float = 1e-8) -> float:
        """sum_{j >= q} Delta(j) omega(j) L(j) with guaranteed relative error."""
        if q < 1:
            raise ValueError("q must be >= 1")
        if self.profile.is_trivial:
            return 0.0
        if q in self._cache:
            return self._cache[q]
        if self.profile.kind == "geometric":
            val = self._beta_tilde_geometric(q, rel_tol)
        else:
            val = self._beta_tilde_polynomial(q)
        self._cache[q] = val
        return val

    def _ratio_bound(self, j: int) -> float:
        """Upper bound for all term ratios a_{m+1}/a_m with m >= j (each factor decreasing)."""
        w = self.weights
        rho = self.profile.rho
        return (rho * ((j + 1.0) / j) ** (1.0 / w.nu)
                * (math.log(math.e * (j + 1.0)) / math.log(math.e * j)) ** 1.5
                * (float(w.loglog(j + 1)) / float(w.loglog(j))))

    def _beta_tilde_geometric(self, q: int, rel_tol: float) -> float:
        total, j = 0.0, q
        while True:
            term = float(self.weighted_term(j))
            total += term
            r = self._ratio_bound(j)
            if r < 1.0:
                bound = term * r / (1.0 - r)
                if bound < 2.0 * rel_tol * total:
                    return total + 0.5 * bound
            j += 1
            if j - q > 10_000_000:
                raise RuntimeError("geometric beta_tilde did not converge")

    def _beta_tilde_polynomial(self, q: int, lead_terms: int = 20_000) -> float:
        """Partial sum plus an Euler-Maclaurin tail (integral + f/2 - f'/12)."""
        a, c, w = self.profile.alpha, self.profile.c, self.weights
        if a - 1.0 / w.nu <= 1.0:
            raise ValueError(
                f"weighted series not summable: alpha - 1/nu = {a - 1.0 / w.nu:.4g} <= 1"
            )
        n0 = q + lead_terms
        j = np.arange(q, n0, dtype=float)
        partial = float(np.sum(self.weighted_term(j)))

        def f(x):
            return (c * x ** (1.0 / w.nu - a) * np.log(math.e * x) ** 1.5
                    * np.log(np.log(math.exp(math.e) * x)))

        def f_logderiv(x):
            ll = math.log(math.exp(math.e) * x)
            return ((1.0 / w.nu - a) / x + 1.5 / (x * math.log(math.e * x))
                    + 1.0 / (x * ll * math.log(ll)))

        tail_int, int_err = integrate.quad(f, n0, np.inf, epsabs=1e-14, epsrel=1e-11, limit=400)
        fp = f(float(n0)) * f_logderiv(float(n0))
        # |remainder| <= |f'(n0)| / 6 for eventually monotone f'
        return partial + tail_int + 0.5 * float(f(float(n0))) + fp / 12.0


    def q_tilde_star(self, z: float) -> int:
        """min{q : beta_tilde(q) <= Phi(q) z}."""
        if z <= 0.0:
            raise ValueError("z must be positive")
        if self.profile.is_trivial:
            return 1
        if self.beta_tilde(1) <= float(self.weights.phi(1)) * z:
            return 1
        hi = 2
        while self.beta_tilde(hi) > float(self.weights.phi(hi)) * z:
            hi *= 2
            if hi > 2 ** 40:
                raise RuntimeError("q_tilde_star search overflow")
        lo = hi // 2 + 1
        while lo < hi:
            mid = (lo + hi) // 2
            if self.beta_tilde(mid) <= float(self.weights.phi(mid)) * z:
                hi = mid
            else:
                lo = mid + 1
        return lo


def bernstein_functionals(profile: DecayProfile, nu: float,
                          alpha_margin: float = 0.05) -> BernsteinFunctionals:
    """Weights plus beta_tilde / q_tilde_star; rejects non-summable profiles."""
    weights = BernsteinWeights(nu)
    if profile.kind == "polynomial" and not profile.is_trivial:
        if profile.alpha <= 1.0 + 1.0 / nu + alpha_margin:
            raise ValueError(
                f"alpha = {profile.alpha:.4g} too close to 1 + 1/nu = {1 + 1 / nu:.4g}; "
                "weighted series rejected"
            )
    return BernsteinFunctionals(profile, weights)


# ---------------------------------------------------------------------------
# submultiplicativity


@dataclass(frozen=True)
class SubmultReport:
    kind: str
    q_max: int
    constant: float
    argmax: Tuple[int, int]


def check_submultiplicativity(profile: DecayProfile, kind: str = "beta",
                              q_max: int = 32, nu: float = 2.0) -> SubmultReport:
    """Smallest C with f(q1 q2) <= C f(q1) f(q2) on the grid, f = beta or beta_tilde/Phi."""
    if q_max < 4:
        raise ValueError("q_max must be >= 4")
    if profile.is_trivial:
        raise ValueError("submultiplicativity is vacuous for an independent profile")
    if kind == "beta":
        fn = profile.beta
    elif kind == "beta_tilde_norm":
        bf = bernstein_functionals(profile, nu)
        fn = lambda q: bf.beta_tilde(q) / float(bf.weights.phi(q))
    else:
        raise ValueError(f"unknown kind {kind!r}")
    vals = {q: fn(q) for q in range(1, q_max + 1)}
    prods = {}
    best, arg = 0.0, (1, 1)
    for q1 in range(1, q_max + 1):
        for q2 in range(q1, q_max + 1):
            qq = q1 * q2
            if qq not in prods:
                prods[qq] = fn(qq)
            ratio = prods[qq] / (vals[q1] * vals[q2])
            if ratio > best:
                best, arg = ratio, (q1, q2)
    return SubmultReport(kind=kind, q_max=q_max, constant=best, argmax=arg)


# ---------------------------------------------------------------------------
# Monte Carlo dependence measure


@dataclass(frozen=True)
class DeltaEstimate:
    k: int
    nu: float
    value: float
    se: float
    per_index: Dict[int, Tuple[float, float]]

    def dominated_by(self, bound: float, n_se: float = 4.0) -> bool:
        return self.value <= bound * (1.0 + n_se * self.se / max(self.value, 1e-300))


def _coupled_abs_diffs(model, n, pairs, reps, seed):
    """{(k, i): |X_i - X_i^{*(i-k)}| samples}; innovations shared across pairs.

    Replication r consumes substream(seed, r) for the base innovations and
    substream(seed, r, 1) for the replacement draw, matching simulate_coupled.
    """
    if isinstance(model, pm.LinearModel):
        b = model.truncation_order()
    else:
        b = model.default_burn_in()
    for k, i in pairs:
        if (i - k) - 1 + b < 0:
            raise ValueError(
                f"lag {k} at index {i} exceeds the stored history "
                f"(starts at {1 - b})"
            )
    width = b + n
    u = pm._u_schedule(n, b)
    out = {pair: np.empty(reps) for pair in pairs}
    done = 0
    block = max(1, min(reps, 5_000_000 // width))
    while done < reps:
        m = min(block, reps - done)
        eps = np.empty((m, width))
        star = np.empty(m)
        for r in range(m):
            eps[r] = model.innovation.sample(substream(seed, done + r), width)
            star[r] = model.innovation.sample(substream(seed, done + r, 1), 1)[0]
        if isinstance(model, pm.LinearModel):
            for k, i in pairs:
                col = (i - k) - 1 + b
                a_k = float(model.coefficient(k, i / n)) if k <= b else 0.0
                out[(k, i)][done : done + m] = np.abs(a_k * (eps[:, col] - star))
        else:
            full = pm._iterate_recursive(model, eps, u)
            for k, i in pairs:
                j = (i - k) - 1 + b
                x = full[:, j - 1] if j >= 1 else np.zeros(m)
                for t in range(j, b + i):
                    e = star if t == j else eps[:, t]
                    x = model.mean(x, u[t]) + model.scale(x, u[t]) * e
                out[(k, i)][done : done + m] = np.abs(full[:, b + i - 1] - x)
        done += m
    return out


def _delta_from_samples(diffs: np.ndarray, nu: float, reps: int) -> Tuple[float, float]:
    m_nu = float(np.mean(diffs ** nu))
    se_m = float(np.std(diffs ** nu, ddof=1)) / math.sqrt(reps)
    est = m_nu ** (1.0 / nu)
    se = se_m / (nu * max(m_nu, 1e-300) ** (1.0 - 1.0 / nu)) if m_nu > 0 else 0.0
    return est, se


def _default_i_set(n: int, k: int):
    return sorted({max(k + 1, n // 4), max(k + 1, n // 2), max(k + 1, 3 * n // 4), n})


def estimate_delta_mc(model, k: int, nu: float, reps: int, i_set=None,
                      seed: int = 0, n: Optional[int] = None) -> DeltaEstimate:
    """MC estimate of delta_nu(k) = max over i_set of ||X_i - X_i^{*(i-k)}||_nu.

    The supremum over all i is approximated by a spread of indices
    (default n/4, n/2, 3n/4, n), so the reported value is a lower bound of
    the exact sup; the analytic profiles are upper bounds, which keeps the
    domination checks one-sided.
    """
    return estimate_delta_profile_mc(model, [k], nu, reps, i_set=i_set,
                                     seed=seed, n=n)[k]


def estimate_delta_profile_mc(model, k_list: Sequence[int], nu: float, reps: int,
                              i_set=None, seed: int = 0,
                              n: Optional[int] = None) -> Dict[int, DeltaEstimate]:
    """Batch version of :func:`estimate_delta_mc` sharing one set of innovations."""
    if reps < 100:
        raise ValueError("reps must be >= 100")
    if nu < 1.0:
        raise ValueError("nu must be >= 1")
    if n is None:
        n = 128 if i_set is None else max(i_set)
    indices = {k: (sorted(i_set) if i_set is not None else _default_i_set(n, k))
               for k in k_list}
    pairs = sorted({(k, i) for k, iis in indices.items() for i in iis})
    samples = _coupled_abs_diffs(model, n, pairs, reps, seed)
    result = {}
    for k in k_list:
        per_index = {i: _delta_from_samples(samples[(k, i)], nu, reps)
                     for i in indices[k]}
        i_best = max(per_index, key=lambda i: per_index[i][0])
        value, se = per_index[i_best]
        result[k] = DeltaEstimate(k=k, nu=nu, value=value, se=se, per_index=per_index)
    return result


# ---------------------------------------------------------------------------
# analytic bounds


def analytic_decay_bound(model, s: Optional[float] = None) -> DecayProfile:
    """Explicit dominating profile for delta_{2s}(k) of the process itself.

    Recursive models: coupling at lag k first produces a difference
    sigma(X_{i-k-1}) (eps - eps*), then contracts by
    rho = chi_m + ||eps||_{2s} chi_sigma per step, giving
    Delta(k) = (sigma(0)_sup + chi_sigma C_X) ||eps - eps*||_{2s} rho^k.
    Linear models: Delta(j) = 2 ||eps||_{2s} A_j with the template envelope.
    """
    s = model.s if s is None else s
    q = 2.0 * s
    if isinstance(model, pm.RecursiveModel):
        rho = model.contraction(s)
        if not rho < 1.0:
            raise pm.ContractionError(f"contraction {rho:.6g} >= 1 at moment order {q}")
        if model.mean.chi == 0.0 and model.scale.chi == 0.0:
            return DecayProfile("geometric", c=0.0, rho=0.0)
        c_x = model.moment_bound(q)
        c0 = (model.scale.sup_at_zero + model.scale.chi * c_x) * model.innovation.diff_moment(q)
        # replacement step contributes sigma(X)(eps - eps*), then k contractions by rho
        return DecayProfile("geometric", c=c0, rho=rho)
    eps_norm = model.innovation.abs_moment(q)
    t = model.template
    scale = 2.0 * eps_norm * model.shape.sup_abs() * t.c
    if t.kind == "geometric":
        return DecayProfile("geometric", c=scale, rho=t.rho)
    # (j+1)^(-alpha) <= j^(-alpha) for j >= 1
    return DecayProfile("polynomial", c=scale, alpha=t.alpha)


def _smoothing_lipschitz(model: pm.RecursiveModel, g_sup, g_prime_sup, g_x_sup) -> float:
    """Lipschitz constant (in the conditioning value) of z -> g((y - m(z))/sigma(z))."""
    lip = g_prime_sup / model.sigma_min * model.mean.chi
    if model.scale.chi > 0.0:
        lip += 2.0 * g_x_sup / model.sigma_min * model.scale.chi
    return lip


def class_decay_profile(model, base) -> DecayProfile:
    """Dominating Delta(k) for a function class built on ``base`` over ``model``.

    Lipschitz bases (identity, absolute deviation) use Delta(k) = 2 delta_2(k).
    Indicator and kernel-density bases go through the conditional-expectation
    route: the one-step smoothing by the innovation density gives a Lipschitz
    conditional mean, and the kappa = 2 branch contributes a square-root
    Hoelder term, so the resulting geometric profile decays like sqrt(rho).
    """
    kind = getattr(base, "kind", None)
    if kind in ("identity", "abs_dev", "constant"):
        proc = analytic_decay_bound(model, s=1.0)
        return DecayProfile(proc.kind, c=2.0 * proc.c, alpha=proc.alpha, rho=proc.rho)
    if not isinstance(model, pm.RecursiveModel):
        raise ValueError("non-smooth class profiles require a recursive model")
    if not model.innovation.smooth_density:
        raise ValueError("indicator/kernel classes need a smooth innovation density")
    proc = analytic_decay_bound(model, s=1.0)
    if proc.is_trivial:
        return proc
    sups = model.innovation.density_sups()
    if kind == "indicator":
        # conditional expectation is G_eps((x - m)/sigma)
        lip1 = _smoothing_lipschitz(model, 1.0, sups["g"], sups["g_x"])
        lip2 = lip1  # |sqrt(G) - sqrt(G')| <= sqrt(|G - G'|)
    elif kind == "kernel_density":
        lip_density = _smoothing_lipschitz(model, sups["g"], sups["g_prime"], sups["g_prime_x"])
        k_l2 = float(getattr(base.kernel, "l2", 1.0))
        lip1 = math.sqrt(base.bandwidth) * lip_density
        lip2 = k_l2 * lip_density  # Lipschitz constant of the squared kappa=2 mean
    else:
        raise ValueError(f"no decay profile rule for base kind {kind!r}")
    # kappa=1 branch: lip1 * delta_2(k-1) = (lip1 c/rho) rho^k
    # kappa=2 branch: sqrt(lip2 * delta_2(k-1)) = sqrt(lip2 c/rho) sqrt(rho)^k
    scaled1 = lip1 * proc.c / proc.rho if proc.rho > 0 else lip1 * proc.c
    scaled2 = lip2 * proc.c / proc.rho if proc.rho > 0 else lip2 * proc.c
    # rho^k <= sqrt(rho)^k, so a single geometric profile dominates both branches
    return DecayProfile("geometric", c=max(scaled1, math.sqrt(scaled2)),
                        rho=math.sqrt(proc.rho))
