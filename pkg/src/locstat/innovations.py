"""Innovation distributions with evaluable density, CDF and absolute moments.

Three centered families are supported: standard normal, Student-t (raw,
not rescaled) and uniform on a symmetric interval (default half width
``sqrt(3)``, i.e. unit variance).  Besides sampling, the models and the
dependence calculus need

* ``abs_moment(q)``  -- the L^q norm  E[|eps|^q]^(1/q),
* ``diff_moment(q)`` -- an upper bound for ||eps - eps*||_q for an
  independent copy eps* (exact for q = 2),
* density/CDF evaluations and a handful of sup-norm constants of the
  density that enter the decay bounds for non-smooth function classes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import stats
from scipy.special import gammaln

__all__ = ["Innovation", "normal", "student_t", "uniform"]

_SQRT_PI = math.sqrt(math.pi)


@dataclass(frozen=True)
class Innovation:
    """A centered innovation law, identified by name and shape parameters."""

    name: str  # "normal" | "student_t" | "uniform"
    df: float = 0.0  # Student-t degrees of freedom
    half_width: float = math.sqrt(3.0)  # uniform support half width

    def __post_init__(self):
        if self.name not in ("normal", "student_t", "uniform"):
            raise ValueError(f"unknown innovation family {self.name!r}")
        if self.name == "student_t" and self.df <= 1.0:
            raise ValueError("student_t requires df > 1 (finite first moment)")
        if self.name == "uniform" and self.half_width <= 0.0:
            raise ValueError("uniform requires positive half width")

    # -- sampling ----------------------------------------------------------

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.name == "normal":
            return rng.standard_normal(size)
        if self.name == "student_t":
            return rng.standard_t(self.df, size)
        return rng.uniform(-self.half_width, self.half_width, size)

    # -- distribution functions --------------------------------------------

    def _frozen(self):
        if self.name == "normal":
            return stats.norm()
        if self.name == "student_t":
            return stats.t(self.df)
        return stats.uniform(loc=-self.half_width, scale=2.0 * self.half_width)

    def pdf(self, x):
        return self._frozen().pdf(x)

    def cdf(self, x):
        return self._frozen().cdf(x)

    @property
    def support(self):
        """(lower, upper) support, possibly infinite."""
        if self.name == "uniform":
            return (-self.half_width, self.half_width)
        return (-math.inf, math.inf)

    @property
    def smooth_density(self) -> bool:
        """Whether the density is bounded and continuously differentiable."""
        return self.name != "uniform"

    # -- moments -----------------------------------------------------------

    def abs_moment(self, q: float) -> float:
        """||eps||_q = E[|eps|^q]^(1/q); raises if the moment does not exist."""
        if q <= 0:
            raise ValueError("moment order must be positive")
        if self.name == "normal":
            # E|Z|^q = 2^(q/2) Gamma((q+1)/2) / sqrt(pi)
            log_m = (q / 2.0) * math.log(2.0) + gammaln((q + 1.0) / 2.0) - math.log(_SQRT_PI)
            return math.exp(log_m / q)
        if self.name == "student_t":
            if q >= self.df:
                raise ValueError(f"E|t_{self.df}|^{q} does not exist (q >= df)")
            log_m = (
                (q / 2.0) * math.log(self.df)
                + gammaln((q + 1.0) / 2.0)
                + gammaln((self.df - q) / 2.0)
                - math.log(_SQRT_PI)
                - gammaln(self.df / 2.0)
            )
            return math.exp(log_m / q)
        # uniform on [-w, w]: E|U|^q = w^q / (q+1)
        return self.half_width * (q + 1.0) ** (-1.0 / q)

    def diff_moment(self, q: float) -> float:
        """Upper bound for ||eps - eps*||_q (independent copy); exact at q = 2."""
        if q == 2.0:
            return math.sqrt(2.0) * self.abs_moment(2.0)
        return 2.0 * self.abs_moment(q)

    @property
    def variance(self) -> float:
        return self.abs_moment(2.0) ** 2

    # -- density shape constants --------------------------------------------
    # Sup norms of g, g', x*g(x), x*g'(x), used in the decay bounds for
    # conditional-expectation classes.  Analytic where available.

    @lru_cache(maxsize=None)
    def density_sups(self):
        if not self.smooth_density:
            raise ValueError(f"{self.name} innovation has no smooth density")
        if self.name == "normal":
            phi = lambda x: math.exp(-x * x / 2.0) / math.sqrt(2.0 * math.pi)
            return {
                "g": phi(0.0),
                "g_prime": phi(1.0),  # |phi'(x)| = |x| phi(x), max at |x| = 1
                "g_x": phi(1.0),
                "g_prime_x": 2.0 * phi(math.sqrt(2.0)),  # x^2 phi(x), max at |x|=sqrt(2)
            }
        # Student-t: g(x) = c (1 + x^2/df)^(-(df+1)/2)
        df = self.df
        g = self._frozen().pdf
        x_gp = math.sqrt(df / (df + 2.0))  # argmax of |g'|
        c_gp = (df + 1.0) * x_gp / df * g(x_gp) / (1.0 + x_gp**2 / df)
        x_gpx = math.sqrt(2.0 * df / (df + 1.0))  # argmax of |x g'(x)|
        c_gpx = (df + 1.0) * x_gpx**2 / df * g(x_gpx) / (1.0 + x_gpx**2 / df)
        return {
            "g": float(g(0.0)),
            "g_prime": float(c_gp),
            "g_x": float(g(1.0)),  # |x g(x)| maximal at |x| = 1 for every df
            "g_prime_x": float(c_gpx),
        }


def normal() -> Innovation:
    return Innovation("normal")


def student_t(df: float) -> Innovation:
    return Innovation("student_t", df=df)


def uniform(half_width: float = math.sqrt(3.0)) -> Innovation:
    return Innovation("uniform", half_width=half_width)
