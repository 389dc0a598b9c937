"""Pilot sequences with flat DFT magnitude on one sub-channel, and their cyclic shifts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["PilotFamily", "make_pilot_family", "pilot", "circulant_action", "PilotBank", "make_pilot_bank"]

PHASE_POLICIES = ("unit", "random")


def _policy(name: str) -> str:
    name = "random" if name == "seeded-random" else name
    if name not in PHASE_POLICIES:
        raise ValueError(f"unknown phase policy {name!r}")
    return name


@dataclass(frozen=True, eq=False)
class PilotFamily:
    n: int
    m: int
    s: int
    r: int
    support: np.ndarray
    phases: np.ndarray
    base_pilot: np.ndarray
    policy: str = "unit"

    @property
    def spectrum(self) -> np.ndarray:
        """Unitary DFT of the base pilot: sqrt(n/m) * phases on the support, 0 elsewhere."""
        out = np.zeros(self.n, dtype=complex)
        out[self.support] = np.sqrt(self.n / self.m) * self.phases
        return out


def make_pilot_family(n, m, s, r, support, phase_policy="unit", seed=None) -> PilotFamily:
    """Build the base pilot of a sub-channel by inverse DFT of its masked flat spectrum.

    ``phase_policy`` is ``"unit"`` (all phases 1) or ``"random"`` (uniform phases
    drawn from ``seed``, which may be an int or a numpy Generator).
    """
    support = np.array(support, dtype=np.int64).reshape(-1)
    if support.size != m:
        raise ValueError(f"support size {support.size} does not match m={m}")
    if np.unique(support).size != m or support.min() < 0 or support.max() >= n:
        raise ValueError("support must be m distinct indices in [0, n)")
    if r * s > n:
        raise ValueError(f"pilot overrun: r*s = {r * s} exceeds n = {n}")
    phase_policy = _policy(phase_policy)
    if phase_policy == "unit":
        phases = np.ones(m, dtype=complex)
    else:
        rng = np.random.default_rng(seed)
        phases = np.exp(2j * np.pi * rng.random(m))
    spectrum = np.zeros(n, dtype=complex)
    spectrum[support] = np.sqrt(n / m) * phases
    base = np.fft.ifft(spectrum, norm="ortho")
    for arr in (support, phases, base):
        arr.setflags(write=False)
    return PilotFamily(n, m, s, r, support, phases, base, phase_policy)


def pilot(family: PilotFamily, ell: int) -> np.ndarray:
    """Pilot ``ell``: the base pilot cyclically delayed by ell*s samples."""
    if not 0 <= ell < family.r:
        raise IndexError(f"pilot index {ell} outside [0, {family.r})")
    return np.roll(family.base_pilot, ell * family.s)


def circulant_action(family: PilotFamily, h) -> np.ndarray:
    """circ(p_0) h, i.e. the circular convolution p_0 * h, evaluated spectrally."""
    h = np.asarray(h, dtype=complex)
    if h.shape[-1] != family.n:
        raise ValueError(f"dimension mismatch: expected length {family.n}, got {h.shape[-1]}")
    gain = np.sqrt(family.n) * family.spectrum
    return np.fft.ifft(gain * np.fft.fft(h, norm="ortho"), norm="ortho")


@dataclass(frozen=True, eq=False)
class PilotBank:
    """Base-pilot phases for every (time-slot, sub-channel); shape (t, c, m).

    Phases are stored aligned with the plan's row order so that
    ``phases[i, j, q]`` belongs to sub-carrier ``plan.rows[i, j, q]``.
    """

    n: int
    s: int
    r: int
    rows: np.ndarray
    phases: np.ndarray
    policy: str = "unit"

    def family(self, i: int, j: int) -> PilotFamily:
        support = self.rows[i, j]
        m = support.size
        spectrum = np.zeros(self.n, dtype=complex)
        spectrum[support] = np.sqrt(self.n / m) * self.phases[i, j]
        base = np.fft.ifft(spectrum, norm="ortho")
        return PilotFamily(self.n, m, self.s, self.r, support, self.phases[i, j], base, self.policy)

    def full_phase(self, i: int) -> np.ndarray:
        """Length-n vector holding every sub-carrier's pilot phase in slot i."""
        out = np.ones(self.n, dtype=complex)
        out[self.rows[i].reshape(-1)] = self.phases[i].reshape(-1)
        return out


def make_pilot_bank(rows: np.ndarray, n: int, s: int, r: int, policy: str = "unit", rng=None) -> PilotBank:
    """Pilot phases for a whole plan. Random phases are drawn independently per (slot, sub-channel)."""
    rows = np.asarray(rows)
    if r * s > n:
        raise ValueError(f"pilot overrun: r*s = {r * s} exceeds n = {n}")
    policy = _policy(policy)
    if policy == "unit":
        phases = np.ones(rows.shape, dtype=complex)
    else:
        rng = np.random.default_rng(rng)
        phases = np.exp(2j * np.pi * rng.random(rows.shape))
    return PilotBank(n, s, r, rows, phases, policy)
