"""Receive chains: the time-domain OFDM-like chain and the equivalent proxy model
b = A (h + z), plus SNR bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pilots import PilotBank, circulant_action
from .spectral import SubsampledDft
from .traffic import StackedChannel, SubChannelPlan, SystemConfig

__all__ = [
    "MeasurementSet",
    "complex_normal",
    "transmit_receive_endtoend",
    "transmit_receive_proxy",
    "chain_equivalence_check",
    "snr_conversions",
    "sigma2_from_snr",
]


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Observations b_j^i in proxy convention, shape (t, c, m).

    ``noise`` holds the realized noise (time-domain e for the end-to-end chain,
    z for the proxy chain) so a run can be reproduced or audited.
    """

    b: np.ndarray
    plan: SubChannelPlan
    chain: str
    sigma2: float
    noise: np.ndarray | None = None

    def operator(self, j: int, i: int) -> SubsampledDft:
        return self.plan.operator(j, i)


def complex_normal(rng, shape, var: float = 1.0) -> np.ndarray:
    """Circularly symmetric CN(0, var) samples."""
    g = rng.standard_normal(shape + (2,) if isinstance(shape, tuple) else (shape, 2))
    return np.sqrt(var / 2) * (g[..., 0] + 1j * g[..., 1])


def _sample_rows(spectra: np.ndarray, rows: np.ndarray) -> np.ndarray:
    # spectra (t, c, n) or (t, n) broadcast against rows (t, c, m)
    if spectra.ndim == 2:
        spectra = np.broadcast_to(spectra[:, None, :], rows.shape[:2] + spectra.shape[-1:])
    return np.take_along_axis(spectra, rows, axis=-1)


def transmit_receive_endtoend(channels: StackedChannel, plan: SubChannelPlan, bank: PilotBank,
                              cfg: SystemConfig, rng=None, noise: np.ndarray | None = None) -> MeasurementSet:
    """Full chain: pilot convolutions, white noise e ~ CN(0, sigma2 I_n), DFT sampling.

    Raw samples are renormalized by 1/sqrt(n) with the base-pilot phases
    removed, which puts them in the proxy convention b = A h + noise.
    """
    if not np.array_equal(bank.rows, plan.rows):
        raise ValueError("pilot supports do not match the sub-channel plan")
    n, t, c = cfg.n, cfg.t, cfg.c
    h = channels.padded(n)
    if noise is None:
        noise = complex_normal(np.random.default_rng(rng), (t, n), cfg.sigma2)
    b = np.empty(plan.rows.shape, dtype=complex)
    for i in range(t):
        y = noise[i].astype(complex)
        for j in range(c):
            y = y + circulant_action(bank.family(i, j), h[i, j])
        raw = np.fft.fft(y, norm="ortho")[plan.rows[i]]
        b[i] = raw * bank.phases[i].conj() / np.sqrt(n)
    return MeasurementSet(b, plan, "endtoend", cfg.sigma2, noise)


def transmit_receive_proxy(channels: StackedChannel, plan: SubChannelPlan, cfg: SystemConfig,
                           rng=None, noise: np.ndarray | None = None) -> MeasurementSet:
    """b_j^i = A_j^i (h_j^i + z_j^i) with z_j^i ~ CN(0, sigma2 m / n^2 I_n) independent.

    ``noise`` may supply z with shape (t, c, n) or a per-slot z with shape (t, n)
    shared by all sub-channels.
    """
    n, m = cfg.n, cfg.m
    h = channels.padded(n)
    if noise is None:
        noise = complex_normal(np.random.default_rng(rng), h.shape, cfg.sigma2 * m / n**2)
    x = h + (noise[:, None, :] if noise.ndim == 2 else noise)
    b = np.sqrt(n / m) * _sample_rows(np.fft.fft(x, norm="ortho"), plan.rows)
    return MeasurementSet(b, plan, "proxy", cfg.sigma2, noise)


def chain_equivalence_check(channels: StackedChannel, plan: SubChannelPlan, bank: PilotBank,
                            cfg: SystemConfig, shared_noise: np.ndarray) -> float:
    """Max over (j, i) of ||b_endtoend - b_proxy|| / ||b_proxy|| under coupled noise.

    The proxy receives z = (sqrt(m)/n) Phi^* diag(conj(phase)) Phi e, which is
    z = (sqrt(m)/n) e for unit pilot phases; for random phases the rotation is
    unitary, so z keeps the proxy covariance.
    """
    n, m = cfg.n, cfg.m
    end = transmit_receive_endtoend(channels, plan, bank, cfg, noise=shared_noise)
    rot = np.stack([bank.full_phase(i).conj() for i in range(cfg.t)])
    z = np.sqrt(m) / n * np.fft.ifft(rot * np.fft.fft(shared_noise, norm="ortho"), norm="ortho")
    prox = transmit_receive_proxy(channels, plan, cfg, noise=z)
    diff = np.linalg.norm(end.b - prox.b, axis=-1)
    ref = np.linalg.norm(prox.b, axis=-1)
    scale = max(float(ref.max()), 1e-300)
    # channels with no energy are compared against the largest one
    rel = np.where(ref > 1e-12 * scale, diff / np.maximum(ref, 1e-300), diff / scale)
    return float(rel.max())


def snr_conversions(sigma2: float, n: int, m: int) -> tuple[float, float]:
    """System SNR 10 log10(1/sigma2) and true SNR (system minus 10 log10(n/m)), in dB."""
    if sigma2 == 0:
        return math.inf, math.inf
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    snr = -10 * math.log10(sigma2)
    return snr, snr - 10 * math.log10(n / m)


def sigma2_from_snr(snr_db: float) -> float:
    return 0.0 if math.isinf(snr_db) and snr_db > 0 else 10 ** (-snr_db / 10)
