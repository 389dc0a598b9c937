"""Users, sub-channel plans, channel impulse responses, data, and effective channels."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .spectral import SubsampledDft

__all__ = [
    "ConfigError",
    "SystemConfig",
    "SubChannelPlan",
    "UserAssignment",
    "CirSet",
    "DataMatrix",
    "StackedChannel",
    "CollisionCensus",
    "draw_subchannel_plan",
    "assign_users",
    "assign_users_homogeneous",
    "draw_cirs",
    "draw_data",
    "effective_channels",
    "collision_census",
    "ALPHABETS",
]

ALPHABETS = {
    "bpsk": np.array([1, -1], dtype=complex),
    "qpsk": np.array([1, 1j, -1, -1j], dtype=complex),
}
PLAN_MODES = ("fixed", "independent")
CIR_POLICIES = ("fine", "norm-only")


class ConfigError(ValueError):
    """An invalid system or experiment configuration."""


@dataclass(frozen=True)
class SystemConfig:
    n: int
    m: int
    r: int
    s: int
    k_s: int
    t: int = 1
    u: int = 0
    sigma2: float = 0.0
    c: int | None = None
    plan_mode: str = "fixed"
    seed: int = 0
    data_alphabet: str = "qpsk"
    cir_policy: str = "fine"

    def __post_init__(self):
        for name in ("n", "m", "r", "s", "k_s", "t"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.c is None:
            if self.n % self.m:
                raise ConfigError(f"m*c = n violated: m={self.m} does not divide n={self.n}")
            object.__setattr__(self, "c", self.n // self.m)
        elif self.m * self.c != self.n:
            raise ConfigError(f"m*c = n violated: {self.m}*{self.c} != {self.n}")
        if self.r * self.s > self.n:
            raise ConfigError(f"r*s <= n violated: {self.r}*{self.s} > {self.n}")
        if not 1 <= self.k_s <= self.s:
            raise ConfigError(f"1 <= k_s <= s violated: k_s={self.k_s}, s={self.s}")
        if self.u < 0:
            raise ConfigError("u must be nonnegative")
        if not self.sigma2 >= 0:
            raise ConfigError("sigma2 must be nonnegative")
        if self.plan_mode not in PLAN_MODES:
            raise ConfigError(f"plan_mode must be one of {PLAN_MODES}")
        if self.data_alphabet not in ALPHABETS:
            raise ConfigError(f"data_alphabet must be one of {tuple(ALPHABETS)}")
        if self.cir_policy not in CIR_POLICIES:
            raise ConfigError(f"cir_policy must be one of {CIR_POLICIES}")

    @property
    def rs(self) -> int:
        return self.r * self.s

    def snapshot(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SubChannelPlan:
    """Partition of the n sub-carriers into c blocks of size m, per time-slot.

    ``rows[i, j]`` is the sorted index set of sub-channel j in slot i.
    """

    n: int
    rows: np.ndarray
    mode: str = "fixed"

    @property
    def t(self) -> int:
        return self.rows.shape[0]

    @property
    def c(self) -> int:
        return self.rows.shape[1]

    @property
    def m(self) -> int:
        return self.rows.shape[2]

    def operator(self, j: int, i: int) -> SubsampledDft:
        return SubsampledDft(self.n, self.rows[i, j])


def draw_subchannel_plan(cfg: SystemConfig, rng) -> SubChannelPlan:
    """Random partition by permuting [n] and cutting into consecutive chunks of m."""
    rng = np.random.default_rng(rng)
    n_plans = 1 if cfg.plan_mode == "fixed" else cfg.t
    plans = np.stack([rng.permutation(cfg.n).reshape(cfg.c, cfg.m) for _ in range(n_plans)])
    plans.sort(axis=-1)
    if cfg.plan_mode == "fixed":
        plans = np.repeat(plans, cfg.t, axis=0)
    plans.setflags(write=False)
    return SubChannelPlan(cfg.n, plans, cfg.plan_mode)


@dataclass(frozen=True, eq=False)
class UserAssignment:
    sub_channel: np.ndarray
    pilot: np.ndarray

    @property
    def u(self) -> int:
        return self.sub_channel.size


def assign_users(cfg: SystemConfig, rng) -> UserAssignment:
    """Each user independently picks a uniform (sub-channel, pilot) pair."""
    rng = np.random.default_rng(rng)
    return UserAssignment(rng.integers(0, cfg.c, cfg.u), rng.integers(0, cfg.r, cfg.u))


def assign_users_homogeneous(cfg: SystemConfig, per_channel: int, rng, distinct: bool = False) -> UserAssignment:
    """Exactly ``per_channel`` users in every sub-channel, pilots uniform.

    With ``distinct`` the pilots within a sub-channel are drawn without
    replacement, so no collisions occur.
    """
    rng = np.random.default_rng(rng)
    if distinct and per_channel > cfg.r:
        raise ConfigError("more collision-free users than pilots in a sub-channel")
    sub = np.repeat(np.arange(cfg.c), per_channel)
    if distinct:
        pil = np.concatenate([rng.choice(cfg.r, per_channel, replace=False) for _ in range(cfg.c)])
    else:
        pil = rng.integers(0, cfg.r, sub.size)
    return UserAssignment(sub, pil.astype(np.int64))


@dataclass(frozen=True, eq=False)
class CirSet:
    """Per-user channel impulse responses, shape (u, s)."""

    taps: np.ndarray
    k_s: int
    policy: str = "fine"

    def support(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.taps[k])


def draw_cirs(cfg: SystemConfig, rng, n_users: int | None = None) -> CirSet:
    """k_s-sparse CIRs with uniformly placed taps and uniform phases.

    ``fine`` gives every tap modulus 1/sqrt(k_s) (unit norm); ``norm-only``
    draws Gaussian taps and rescales the norm^2 uniformly into [3/4, 5/4].
    """
    rng = np.random.default_rng(rng)
    u = cfg.u if n_users is None else n_users
    taps = np.zeros((u, cfg.s), dtype=complex)
    if u == 0:
        return CirSet(taps, cfg.k_s, cfg.cir_policy)
    # uniform k_s-subsets of [s] via argsort of iid keys
    pos = np.argsort(rng.random((u, cfg.s)), axis=1)[:, : cfg.k_s]
    rows = np.arange(u)[:, None]
    if cfg.cir_policy == "fine":
        phase = np.exp(2j * np.pi * rng.random((u, cfg.k_s)))
        taps[rows, pos] = phase / np.sqrt(cfg.k_s)
    else:
        g = rng.standard_normal((u, cfg.k_s)) + 1j * rng.standard_normal((u, cfg.k_s))
        target = rng.uniform(0.75, 1.25, u)
        g *= np.sqrt(target / np.sum(np.abs(g) ** 2, axis=1))[:, None]
        taps[rows, pos] = g
    return CirSet(taps, cfg.k_s, cfg.cir_policy)


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """Unit-modulus symbols d[k, i]; slot 0 carries the reference d = 1."""

    symbols: np.ndarray
    alphabet: str = "qpsk"


def draw_data(cfg: SystemConfig, rng, n_users: int | None = None) -> DataMatrix:
    rng = np.random.default_rng(rng)
    u = cfg.u if n_users is None else n_users
    points = ALPHABETS[cfg.data_alphabet]
    d = points[rng.integers(0, points.size, (u, cfg.t))]
    d[:, 0] = 1.0
    return DataMatrix(d, cfg.data_alphabet)


@dataclass(frozen=True, eq=False)
class StackedChannel:
    """Effective channels h_j^i, shape (t, c, r, s)."""

    values: np.ndarray

    @property
    def pure(self) -> np.ndarray:
        """Slot-0 (data-free) channels, shape (c, r, s)."""
        return self.values[0]

    def padded(self, n: int) -> np.ndarray:
        """Zero-padded to length n: shape (t, c, n)."""
        t, c, r, s = self.values.shape
        out = np.zeros((t, c, n), dtype=complex)
        out[..., : r * s] = self.values.reshape(t, c, r * s)
        return out


def effective_channels(assignment: UserAssignment, cirs: CirSet, data: DataMatrix, cfg: SystemConfig) -> StackedChannel:
    """Block l of h_j^i is the data-weighted sum of the CIRs of users mapped to (j, l)."""
    h = np.zeros((cfg.t, cfg.c, cfg.r, cfg.s), dtype=complex)
    if assignment.u:
        # (t, u, s) contributions accumulated into their (j, l) blocks
        contrib = data.symbols.T[:, :, None] * cirs.taps[None, :, :]
        for i in range(cfg.t):
            np.add.at(h[i], (assignment.sub_channel, assignment.pilot), contrib[i])
    return StackedChannel(h)


@dataclass(frozen=True, eq=False)
class CollisionCensus:
    """Per sub-channel: users, pilots shared by >= 2 users, and users alone on their pilot."""

    users: np.ndarray
    collisions: np.ndarray
    collision_free: np.ndarray
    unique_user: np.ndarray

    @property
    def total_collision_free(self) -> int:
        return int(self.collision_free.sum())


def collision_census(assignment: UserAssignment, cfg: SystemConfig) -> CollisionCensus:
    counts = np.zeros((cfg.c, cfg.r), dtype=np.int64)
    np.add.at(counts, (assignment.sub_channel, assignment.pilot), 1)
    unique_user = counts[assignment.sub_channel, assignment.pilot] == 1
    return CollisionCensus(
        users=counts.sum(axis=1),
        collisions=(counts >= 2).sum(axis=1),
        collision_free=(counts == 1).sum(axis=1),
        unique_user=unique_user,
    )
