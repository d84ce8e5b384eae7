"""Multicell zero-forcing beamforming, SINR, and per-realization rates.

The precoder is the pseudo-inverse of the stacked (reconstructed) channel
matrix with each column renormalized to unit norm (per-user power
constraint). SINR is always evaluated against the true channels:
SINR_k = P |g_k v_k|^2 / (sigma^2 + P sum_{j != k} |g_k v_j|^2).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PrecodingError

DEFAULT_COND_CAP = 1e8


def channel_hash(matrix: np.ndarray) -> str:
    """Short identifier binding a precoder to the channel matrix it came from."""
    m = np.ascontiguousarray(matrix)
    digest = hashlib.sha256(m.tobytes() + repr(m.shape).encode())
    return digest.hexdigest()[:16]


@dataclass
class Precoder:
    """Unit-norm beamforming columns, one per user."""

    columns: np.ndarray  # (n_bs * n_tx, n_users) complex
    source_channel_hash: str

    @property
    def n_users(self) -> int:
        return self.columns.shape[1]


def zf_precoder(reconstructed: np.ndarray, cond_cap: float = DEFAULT_COND_CAP) -> Precoder:
    """Zero-forcing precoder from the stacked reconstructed channels.

    Computed through the SVD pseudo-inverse rather than an explicit Gram
    inversion; rank-deficient or ill-conditioned inputs (condition number
    above ``cond_cap``) raise PrecodingError so the caller can reject the
    pairing instead of silently regularizing.
    """
    H = np.asarray(reconstructed, dtype=complex)
    if H.ndim != 2:
        raise DomainError("reconstructed channels must be a 2-D matrix (users x dims)")
    n_users, dim = H.shape
    if n_users > dim:
        raise PrecodingError(f"{n_users} users cannot be zero-forced in {dim} dimensions")
    u, s, vh = np.linalg.svd(H, full_matrices=False)
    if s[-1] <= 0.0 or not np.isfinite(s[0] / s[-1]) or s[0] / s[-1] > cond_cap:
        raise PrecodingError(
            f"channel matrix is rank-deficient or ill-conditioned "
            f"(condition number {s[0] / max(s[-1], np.finfo(float).tiny):.3e})"
        )
    pinv = vh.conj().T @ (u.conj().T / s[:, None])  # (dim, n_users)
    cols = pinv / np.linalg.norm(pinv, axis=0, keepdims=True)
    return Precoder(columns=cols, source_channel_hash=channel_hash(H))


def cross_gains(true_channels: np.ndarray, precoder: Precoder) -> np.ndarray:
    """Matrix of complex gains g_k v_j; entry (k, j)."""
    g = np.asarray(true_channels, dtype=complex)
    if g.ndim != 2 or g.shape[1] != precoder.columns.shape[0]:
        raise DomainError("true channel dimensions inconsistent with precoder")
    return g @ precoder.columns


def sinr(
    true_channels: np.ndarray,
    precoder: Precoder,
    tx_power: float = 1.0,
    noise_power: float = 1.0,
) -> np.ndarray:
    """Per-user SINR of the precoded transmission over the true channels."""
    power = tx_power * np.abs(cross_gains(true_channels, precoder)) ** 2
    signal = np.diagonal(power).copy()
    interference = power.sum(axis=1) - signal
    return signal / (noise_power + interference)


def interference_power(
    true_channels: np.ndarray, precoder: Precoder, tx_power: float = 1.0
) -> np.ndarray:
    """Residual inter-user interference P * sum_{j != k} |g_k v_j|^2 per user."""
    power = tx_power * np.abs(cross_gains(true_channels, precoder)) ** 2
    return power.sum(axis=1) - np.diagonal(power)


def instantaneous_rate(sinr_values) -> np.ndarray:
    """Per-realization spectral efficiency log2(1 + SINR) in bits/s/Hz."""
    s = np.asarray(sinr_values, dtype=float)
    if np.any(s < 0):
        raise DomainError("SINR must be nonnegative")
    return np.log2(1.0 + s)
