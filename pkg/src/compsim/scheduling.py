"""User pairing over quantized composite channels.

The correlation statistic between two reconstructed channels is
|g_hat_k g_hat_j^H| / (||g_hat_k|| ||g_hat_j||). The semi-orthogonal mode
greedily admits, cell by cell, the highest-norm candidate whose correlation
with everyone already selected stays below the threshold; the fixed and
always-pair modes serve the designated users unconditionally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError

PAIRING_MODES = ("fixed", "sus_threshold", "always_pair")


@dataclass
class PairingPolicy:
    mode: str = "always_pair"
    threshold: float = 1.0  # used by sus_threshold only
    candidate_pool_size: int = 1

    def __post_init__(self):
        if self.mode not in PAIRING_MODES:
            raise ConfigurationError(f"unknown pairing mode {self.mode!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigurationError("pairing threshold must lie in [0, 1]")
        if self.candidate_pool_size < 1:
            raise ConfigurationError("candidate_pool_size must be >= 1")


def quantized_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Normalized absolute inner product of two reconstructed channels."""
    a = np.asarray(a, dtype=complex).reshape(-1)
    b = np.asarray(b, dtype=complex).reshape(-1)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DomainError("correlation is undefined for a zero vector")
    return float(np.abs(np.vdot(b, a)) / (na * nb))


def select_pairing(candidates, policy: PairingPolicy, rng=None):
    """Pick one user per cell, or None if the semi-orthogonal constraint rejects.

    ``candidates`` is a per-cell list of reconstructed channel vectors.
    fixed/always_pair return the first (designated) candidate of every cell.
    sus_threshold scans each cell's pool in descending reconstructed-norm
    order (ties to the lower index) and admits the first candidate whose
    correlation with all previously selected users is below the threshold.
    """
    if not candidates or any(len(pool) == 0 for pool in candidates):
        raise ConfigurationError("every cell needs at least one candidate")
    if policy.mode in ("fixed", "always_pair"):
        return tuple(0 for _ in candidates)

    selected: list[int] = []
    chosen_vectors: list[np.ndarray] = []
    for pool in candidates:
        norms = [np.linalg.norm(np.asarray(v)) for v in pool]
        order = sorted(range(len(pool)), key=lambda i: (-norms[i], i))
        pick = None
        for i in order:
            if all(
                quantized_correlation(pool[i], prev) < policy.threshold
                for prev in chosen_vectors
            ):
                pick = i
                break
        if pick is None:
            return None
        selected.append(pick)
        chosen_vectors.append(np.asarray(pool[pick], dtype=complex))

    # Hard guarantee on anything returned in sus mode.
    for i in range(len(chosen_vectors)):
        for j in range(i + 1, len(chosen_vectors)):
            corr = quantized_correlation(chosen_vectors[i], chosen_vectors[j])
            if corr >= policy.threshold:
                raise AssertionError(
                    f"selected pair violates the correlation constraint ({corr:.6f})"
                )
    return tuple(selected)
