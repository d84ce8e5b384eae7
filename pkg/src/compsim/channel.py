"""Cell geometry, large-scale fading, and Rayleigh small-scale channel sampling.

The composite channel from all cooperating base stations to mobile station k
is the row vector ``g_k = [alpha_{k,1} h_{k,1}, ..., alpha_{k,B} h_{k,B}]``
where ``alpha_{k,b}`` is the large-scale amplitude of link (k, b) and
``h_{k,b}`` is a 1 x n_tx vector of i.i.d. unit-variance circularly-symmetric
complex Gaussians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError

DEFAULT_CELL_RADIUS_M = 250.0
DEFAULT_PATHLOSS_EXPONENT = 3.76
DEFAULT_EDGE_SNR_DB = 10.0
DEFAULT_MIN_DISTANCE_M = 1.0


@dataclass
class Geometry:
    """Static cell layout plus the distance -> receive-SNR model.

    ``pathloss_sign`` scales the ``10 * eps * log10(d / r)`` term: -1 (the
    default) attenuates with distance; +1 is kept only so the opposite
    convention can be audited, it is not physically meaningful.
    """

    n_cells: int
    bs_positions: np.ndarray  # (n_cells, 2) meters
    cell_radius_m: float = DEFAULT_CELL_RADIUS_M
    pathloss_exponent: float = DEFAULT_PATHLOSS_EXPONENT
    edge_snr_db: float = DEFAULT_EDGE_SNR_DB
    d_min_m: float = DEFAULT_MIN_DISTANCE_M
    pathloss_sign: int = -1

    def __post_init__(self):
        self.bs_positions = np.asarray(self.bs_positions, dtype=float)
        problems = []
        if self.n_cells < 1:
            problems.append("n_cells must be >= 1")
        if self.cell_radius_m <= 0:
            problems.append("cell_radius_m must be positive")
        if self.pathloss_exponent < 0:
            problems.append("pathloss_exponent must be nonnegative")
        if self.d_min_m <= 0:
            problems.append("d_min_m must be positive")
        if self.pathloss_sign not in (-1, 1):
            problems.append("pathloss_sign must be -1 or +1")
        if self.bs_positions.shape != (self.n_cells, 2):
            problems.append(
                f"bs_positions must have shape ({self.n_cells}, 2), "
                f"got {self.bs_positions.shape}"
            )
        if problems:
            raise ConfigurationError("; ".join(problems))


def two_cell_line(cell_radius_m: float = DEFAULT_CELL_RADIUS_M, **kwargs) -> Geometry:
    """Two BSs on a line, spacing 2r; MSs are placed on the connecting segment."""
    r = float(cell_radius_m)
    return Geometry(
        n_cells=2,
        bs_positions=np.array([[0.0, 0.0], [2.0 * r, 0.0]]),
        cell_radius_m=r,
        **kwargs,
    )


def single_cell(cell_radius_m: float = DEFAULT_CELL_RADIUS_M, **kwargs) -> Geometry:
    """One BS at the origin (used by the single-cell MU-MIMO baseline)."""
    return Geometry(
        n_cells=1,
        bs_positions=np.array([[0.0, 0.0]]),
        cell_radius_m=float(cell_radius_m),
        **kwargs,
    )


def receive_snr_db(distance_m, geom: Geometry):
    """Receive SNR in dB at the given BS-MS distance.

    gamma(d) = edge_snr_db - 10 * eps * log10(d / r): equals ``edge_snr_db``
    at d = r and is strictly decreasing in d for eps > 0. Distances below
    ``geom.d_min_m`` are clamped to avoid unbounded SNR.
    """
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0.0):
        raise DomainError("distance must be positive")
    d = np.maximum(d, geom.d_min_m)
    out = geom.edge_snr_db + geom.pathloss_sign * 10.0 * geom.pathloss_exponent * np.log10(
        d / geom.cell_radius_m
    )
    if np.isscalar(distance_m) or np.ndim(distance_m) == 0:
        return float(out)
    return out


@dataclass
class LargeScaleMap:
    """Per-link channel energies and linear receive SNRs.

    ``alpha_sq[k, b]`` is the average energy of composite link (MS k, BS b);
    ``snr_gamma_sq[k, b] = tx_power * alpha_sq[k, b] / noise_power``. With the
    default normalization tx_power = noise_power = 1 the two matrices are
    numerically equal.
    """

    alpha_sq: np.ndarray  # (n_users, n_bs)
    snr_gamma_sq: np.ndarray  # (n_users, n_bs)
    tx_power: float = 1.0
    noise_power: float = 1.0

    def __post_init__(self):
        self.alpha_sq = np.asarray(self.alpha_sq, dtype=float)
        self.snr_gamma_sq = np.asarray(self.snr_gamma_sq, dtype=float)
        if self.alpha_sq.ndim != 2 or self.alpha_sq.shape != self.snr_gamma_sq.shape:
            raise ConfigurationError("alpha_sq and snr_gamma_sq must share a 2-D shape")
        if np.any(self.alpha_sq < 0) or np.any(self.snr_gamma_sq < 0):
            raise ConfigurationError("large-scale energies must be nonnegative")
        if self.tx_power <= 0 or self.noise_power <= 0:
            raise ConfigurationError("tx_power and noise_power must be positive")
        expected = self.alpha_sq * (self.tx_power / self.noise_power)
        if not np.allclose(self.snr_gamma_sq, expected, rtol=1e-10, atol=0.0):
            raise ConfigurationError("snr_gamma_sq inconsistent with alpha_sq and (P, sigma^2)")

    @property
    def n_users(self) -> int:
        return self.alpha_sq.shape[0]

    @property
    def n_bs(self) -> int:
        return self.alpha_sq.shape[1]

    @property
    def alpha(self) -> np.ndarray:
        return np.sqrt(self.alpha_sq)


def build_large_scale(
    ms_positions,
    geom: Geometry,
    tx_power: float = 1.0,
    noise_power: float = 1.0,
    require_one_per_cell: bool = True,
) -> LargeScaleMap:
    """Assemble the large-scale map from pairwise MS-BS distances.

    ``require_one_per_cell`` enforces the cooperative-transmission contract of
    exactly one MS per cell; the single-cell multi-user baseline relaxes it.
    """
    pos = np.asarray(ms_positions, dtype=float)
    if pos.ndim != 2 or pos.shape[1] != 2:
        raise ConfigurationError("ms_positions must be an (n_users, 2) array of coordinates")
    if require_one_per_cell and pos.shape[0] != geom.n_cells:
        raise ConfigurationError(
            f"expected {geom.n_cells} MS positions (one per cell), got {pos.shape[0]}"
        )
    # (n_users, n_bs) distance matrix
    dist = np.linalg.norm(pos[:, None, :] - geom.bs_positions[None, :, :], axis=2)
    if np.any(dist <= 0.0):
        raise ConfigurationError("MS positions must not coincide with a BS position")
    snr_db = receive_snr_db(dist, geom)
    snr_gamma_sq = 10.0 ** (snr_db / 10.0)
    alpha_sq = snr_gamma_sq * noise_power / tx_power
    return LargeScaleMap(
        alpha_sq=alpha_sq,
        snr_gamma_sq=snr_gamma_sq,
        tx_power=tx_power,
        noise_power=noise_power,
    )


@dataclass
class ChannelRealization:
    """One draw of the small-scale channels and the derived composite vectors."""

    small_scale: np.ndarray  # (n_users, n_bs, n_tx) complex
    global_channels: np.ndarray  # (n_users, n_bs * n_tx) complex

    @property
    def n_users(self) -> int:
        return self.small_scale.shape[0]

    @property
    def n_bs(self) -> int:
        return self.small_scale.shape[1]

    @property
    def n_tx(self) -> int:
        return self.small_scale.shape[2]


def sample_small_scale(
    n_users: int, n_bs: int, n_tx: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw i.i.d. Rayleigh channels h ~ CN(0, I_{n_tx}) for every (MS, BS) link.

    Entries have unit variance, so E{||h||^2} = n_tx.
    """
    if n_tx < 2:
        raise ConfigurationError("n_tx must be >= 2 (single-antenna BSs are unsupported)")
    if n_users < 1 or n_bs < 1:
        raise ConfigurationError("n_users and n_bs must be >= 1")
    z = rng.standard_normal((n_users, n_bs, n_tx, 2))
    return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)


def assemble_global(small_scale: np.ndarray, large_scale: LargeScaleMap) -> np.ndarray:
    """Concatenate the per-BS blocks: g_k = [alpha_{k,1} h_{k,1}, ..., alpha_{k,B} h_{k,B}]."""
    h = np.asarray(small_scale)
    if h.ndim != 3 or h.shape[:2] != large_scale.alpha_sq.shape:
        raise ConfigurationError(
            f"small_scale shape {h.shape} inconsistent with large-scale map "
            f"{large_scale.alpha_sq.shape}"
        )
    scaled = large_scale.alpha[..., None] * h
    return scaled.reshape(h.shape[0], h.shape[1] * h.shape[2])


def realize_channels(
    large_scale: LargeScaleMap, n_tx: int, rng: np.random.Generator
) -> ChannelRealization:
    """Draw one full channel realization for the given large-scale map."""
    h = sample_small_scale(large_scale.n_users, large_scale.n_bs, n_tx, rng)
    return ChannelRealization(small_scale=h, global_channels=assemble_global(h, large_scale))
