"""Closed-form bounds and parameter rules for the sub-channelized access scheme.

Probabilities are clipped to [0, 1]; pass ``clip=False`` to get the raw
expression (a raw value above 1 means the bound is vacuous there).
Logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.special import comb
from scipy.stats import binom

__all__ = [
    "overfill_bound",
    "overfill_exact",
    "collision_bound",
    "collision_lower_bound",
    "collision_pair_bound",
    "sparsity_capture_failure",
    "coherence_tail",
    "select_kbar_u",
    "uniqueness_probability",
    "supported_users",
    "baseline_no_subchannel",
    "experiment1_parameters",
    "Recipe",
    "parameter_recipe",
    "main_failure_probability",
    "is_vacuous",
]


def _clip(x: float, clip: bool) -> float:
    return min(1.0, max(0.0, x)) if clip else x


def is_vacuous(raw: float) -> bool:
    return raw >= 1.0


def overfill_bound(m, n, u, lam, clip=True) -> float:
    """P(more than (1+lam)(m/n)u users in a sub-channel) < exp(-3 lam^2 m u / (n (1 + 3 lam)))."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    return _clip(math.exp(-3 * lam**2 * m * u / (n * (1 + 3 * lam))), clip)


def overfill_exact(m, n, u, lam) -> float:
    """Exact binomial probability of more than (1+lam)(m/n)u users in a sub-channel."""
    return float(binom.sf(math.floor((1 + lam) * m * u / n), u, m / n))


def collision_bound(k_u, r, clip=True) -> float:
    """Union bound k_u^2 / (2r) on a pilot collision among k_u users."""
    if r < 1:
        raise ValueError("r must be positive")
    return _clip(k_u**2 / (2 * r), clip)


def collision_lower_bound(k_u, r) -> float:
    return 1.0 - math.exp(-(k_u**2) / (2 * r))


def collision_pair_bound(k_u, r, clip=True) -> float:
    """Exact pair count k_u (k_u - 1) / (2r); a tighter union bound."""
    return _clip(k_u * (k_u - 1) / (2 * r), clip)


def sparsity_capture_failure(m, n, u, r, clip=True) -> float:
    """exp(-3 m u / 4n) + 4 m^2 u^2 / (n^2 r)."""
    return _clip(math.exp(-3 * m * u / (4 * n)) + 4 * m**2 * u**2 / (n**2 * r), clip)


def coherence_tail(m, k_u, k_s, tau, n, clip=True) -> float:
    """2 n^2 exp(-3 m tau^2 / (16 k_u k_s^2))."""
    return _clip(2 * n**2 * math.exp(-3 * m * tau**2 / (16 * k_u * k_s**2)), clip)


def uniqueness_probability(k: int, r: int) -> float:
    """prod_{i=1}^{k} (1 - i/r)."""
    p = 1.0
    for i in range(1, k + 1):
        p *= 1 - i / r
    return p


def select_kbar_u(r: int, p_u: float) -> int:
    """Largest k with prod_{i=1}^{k} (1 - i/r) >= 1 - p_u (0 if k = 1 already fails)."""
    if not 0 < p_u < 1:
        raise ValueError("p_u must lie in (0, 1)")
    if r < 2:
        raise ValueError("r must be >= 2")
    k, prod = 0, 1.0
    while k < r:
        nxt = prod * (1 - (k + 1) / r)
        if nxt < 1 - p_u:
            break
        k, prod = k + 1, nxt
    return k


def supported_users(p_u, kbar_u, c, p_md) -> float:
    """(1 - p_u) * kbar_u * c * (1 - p_md)."""
    return (1 - p_u) * kbar_u * c * (1 - p_md)


def baseline_no_subchannel(n_resources: int, p_u: float) -> int:
    """Users that can pick among all n resources with collision probability <= p_u."""
    return select_kbar_u(n_resources, p_u)


def experiment1_parameters(n: int, s: int, k_s: int, p_u: float) -> dict:
    """Derived sizes r = n/s, kbar_u, m = 2^floor(log2(kbar_u k_s)), c = n/m."""
    if n % s:
        raise ValueError(f"s={s} must divide n={n}")
    r = n // s
    kbar = select_kbar_u(r, p_u)
    if kbar < 1:
        raise ValueError(f"no user fits r={r} at p_u={p_u}")
    m = 2 ** int(math.floor(math.log2(kbar * k_s)))
    if m > n or n % m:
        raise ValueError(f"derived m={m} incompatible with n={n}")
    return {"n": n, "r": r, "s": s, "k_s": k_s, "kbar_u": kbar, "m": m, "c": n // m}


def _check_constants(C_o, kappa, eps=None):
    if kappa <= 2:
        raise ValueError("kappa > 2 required")
    if C_o <= 0:
        raise ValueError("C_o > 0 required")
    if eps is not None and not 0 < eps < 1:
        raise ValueError("0 < eps < 1 required")


def main_failure_probability(eps, n, kappa, C_o, t, r, s, k_s) -> float:
    """eps + n^{-16 kappa / (3 C_o)} + n^{2 - kappa} + (t r binom(s, k_s))^{1 - kappa}, unclipped."""
    _check_constants(C_o, kappa)
    return (eps + n ** (-16 * kappa / (3 * C_o)) + n ** (2 - kappa)
            + (t * r * comb(s, k_s, exact=True)) ** (1 - kappa))


@dataclass(frozen=True)
class Recipe:
    C_o: float
    kappa: float
    eps: float
    s: int
    k_s: int
    plan_mode: str
    beta: float
    pilot_constant: float
    n_min: int
    n_min_pow2: int

    def r_min(self, n: int) -> float:
        """8 (16 kappa / (3 C_o))^2 log(n)^2 / eps."""
        return self.pilot_constant * math.log(n) ** 2

    def u_max(self, n: int) -> float:
        if self.plan_mode == "fixed":
            return n / (self.C_o * self.k_s**2 * math.log(n))
        return n / (self.C_o * self.k_s**2)

    def m_raw(self, n: int, u: float) -> float:
        return self.beta * math.log(n) * n / u

    def m(self, n: int, u: float) -> int:
        """beta log(n) n / u rounded to the nearest power-of-two divisor of n (in log scale)."""
        raw = self.m_raw(n, u)
        top = int(math.log2(n & -n))
        e = min(max(round(math.log2(raw)), 0), top)
        return 2**e

    sigma2_cap: str = "sigma^2 <~ (u / log(n)^2) * ||h||^2"
    failure_expression: str = "eps + n^(-16 kappa/(3 C_o)) + n^(2-kappa) + (t r binom(s,k_s))^(1-kappa)"

    @property
    def t_scaling(self) -> str:
        if self.plan_mode == "fixed":
            return "t / log(t)^2 >~ (log r + k_s log s)^2; constant not available, tune t empirically"
        return "t / log(t n)^4 >~ (log r + k_s log s)^2; constant not available, tune t empirically"


def parameter_recipe(C_o: float, kappa: float, eps: float, s: int, k_s: int,
                     plan_mode: str = "independent") -> Recipe:
    """Parameter rules from the main detection guarantee.

    n_min is the smallest integer n >= 2 with n >= s * r_min(n); n_min_pow2 the
    smallest power of two with the same property.
    """
    _check_constants(C_o, kappa, eps)
    if plan_mode not in ("fixed", "independent"):
        raise ValueError("plan_mode must be 'fixed' or 'independent'")
    const = 8 * (16 * kappa / (3 * C_o)) ** 2 / eps
    ok = lambda n: n >= s * const * math.log(n) ** 2  # noqa: E731
    e = 1
    while not ok(2**e):
        e += 1
    n_pow2 = 2**e
    # n - K log(n)^2 is increasing beyond 2K log n, where the crossing lies
    lo, hi = max(2 ** (e - 1), 2), n_pow2
    while lo < hi:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid + 1
    return Recipe(C_o, kappa, eps, s, k_s, plan_mode, 32 * kappa / (3 * C_o), const, lo, n_pow2)
