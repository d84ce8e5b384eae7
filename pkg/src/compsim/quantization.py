"""Channel-direction quantization: codebooks, Lloyd training, feedback reports.

A codebook is a set of 2^B unit-norm complex row vectors. Quantization picks
the codeword maximizing |v_bar c^H|^2 where v_bar = v / ||v||; the error is
the squared chordal distance sin^2(theta) = 1 - |v_bar c^H|^2, invariant to
phase rotations of v.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import channel, rng as rngmod
from .errors import ConfigurationError, DomainError

DEFAULT_LLOYD_OVERSAMPLING = 200  # training samples per codeword
MIN_LLOYD_OVERSAMPLING = 100
DEFAULT_LLOYD_MAX_ITERS = 100
DEFAULT_LLOYD_TOL = 1e-6  # relative mean-distortion improvement
DEFAULT_ERROR_ESTIMATE_DRAWS = 100_000

_UNIT_NORM_TOL = 1e-12


@dataclass
class Codebook:
    """2^bits unit-norm complex row vectors of a fixed dimension."""

    codewords: np.ndarray  # (2**bits, dimension)
    bits: int
    kind: str  # "random" | "lloyd"
    training_meta: dict | None = None

    def __post_init__(self):
        self.codewords = np.asarray(self.codewords, dtype=complex)
        if self.bits < 0:
            raise ConfigurationError("bits must be nonnegative")
        if self.kind not in ("random", "lloyd"):
            raise ConfigurationError(f"unknown codebook kind {self.kind!r}")
        if self.codewords.ndim != 2 or self.codewords.shape[0] != 2**self.bits:
            raise ConfigurationError(
                f"codebook must hold exactly 2^{self.bits} rows, got shape "
                f"{self.codewords.shape}"
            )
        norms = np.linalg.norm(self.codewords, axis=1)
        if np.any(np.abs(norms - 1.0) > _UNIT_NORM_TOL):
            raise ConfigurationError("codewords must be unit norm (within 1e-12)")
        n = self.codewords.shape[0]
        if n > 1:
            gram = np.abs(self.codewords @ self.codewords.conj().T)
            np.fill_diagonal(gram, 0.0)
            if np.any(
                np.all(self.codewords[:, None, :] == self.codewords[None, :, :], axis=2)
                & ~np.eye(n, dtype=bool)
            ):
                raise ConfigurationError("codebook contains two identical codewords")
            collinear = int(np.count_nonzero(np.triu(gram, 1) > 1.0 - 1e-12))
            if collinear:
                # Permitted for random codebooks, but callers should know.
                meta = dict(self.training_meta or {})
                meta["collinear_pairs"] = collinear
                self.training_meta = meta

    @property
    def dimension(self) -> int:
        return self.codewords.shape[1]

    @property
    def size(self) -> int:
        return self.codewords.shape[0]


def isotropic_directions(count: int, dimension: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` isotropic unit-norm complex row vectors."""
    z = rng.standard_normal((count, dimension, 2))
    v = z[..., 0] + 1j * z[..., 1]
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def random_codebook(dimension: int, bits: int, rng: np.random.Generator) -> Codebook:
    """Random vector quantization codebook: independent isotropic unit rows."""
    if dimension < 1:
        raise ConfigurationError("dimension must be >= 1")
    return Codebook(
        codewords=isotropic_directions(2**bits, dimension, rng),
        bits=bits,
        kind="random",
    )


def quantize_direction(v: np.ndarray, cb: Codebook) -> tuple[int, float]:
    """Quantize the direction of ``v``; returns (codeword index, sin^2 error).

    The index maximizes |v_bar c_j^H|^2; ties break to the lowest index.
    """
    v = np.asarray(v, dtype=complex).reshape(-1)
    if v.shape[0] != cb.dimension:
        raise DomainError(f"vector length {v.shape[0]} != codebook dimension {cb.dimension}")
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise DomainError("cannot quantize a zero vector")
    sims = np.abs(cb.codewords @ v.conj())**2 / (norm * norm)
    index = int(np.argmax(sims))  # argmax takes the first maximum: lowest index
    error = float(min(1.0, max(0.0, 1.0 - sims[index])))
    return index, error


def quantize_many(vectors: np.ndarray, cb: Codebook) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized quantize_direction over the rows of ``vectors``."""
    x = np.asarray(vectors, dtype=complex)
    if x.ndim != 2 or x.shape[1] != cb.dimension:
        raise DomainError("vectors must be (count, dimension)")
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise DomainError("cannot quantize a zero vector")
    sims = np.abs((x / norms) @ cb.codewords.conj().T) ** 2
    idx = sims.argmax(axis=1)
    err = 1.0 - np.take_along_axis(sims, idx[:, None], axis=1)[:, 0]
    return idx.astype(int), np.clip(err, 0.0, 1.0)


def _dominant_direction(samples: np.ndarray) -> np.ndarray:
    """Unit row vector maximizing sum |x c^H|^2 over the sample rows."""
    corr = samples.conj().T @ samples
    _, vecs = np.linalg.eigh(corr)
    c = vecs[:, -1].conj()  # row-vector convention
    return c / np.linalg.norm(c)


def train_lloyd(
    dimension: int,
    bits: int,
    training_samples: np.ndarray,
    max_iters: int = DEFAULT_LLOYD_MAX_ITERS,
    tol: float = DEFAULT_LLOYD_TOL,
    rng: np.random.Generator | None = None,
) -> Codebook:
    """Generalized Lloyd training under the chordal distance 1 - |x c^H|^2.

    Alternates nearest-codeword partition with centroid updates (dominant
    eigenvector of each cluster's sample correlation). Initialized from a
    random codebook; mean distortion is non-increasing across iterations, so
    the result is never worse than that initialization on the training set.
    Empty clusters are re-seeded with the worst-quantized sample.
    """
    x = np.asarray(training_samples, dtype=complex)
    size = 2**bits
    if x.ndim != 2 or x.shape[1] != dimension:
        raise ConfigurationError("training_samples must be (count, dimension)")
    if x.shape[0] < MIN_LLOYD_OVERSAMPLING * size:
        raise ConfigurationError(
            f"need at least {MIN_LLOYD_OVERSAMPLING * size} training samples for "
            f"{size} codewords, got {x.shape[0]}"
        )
    if np.any(np.abs(np.linalg.norm(x, axis=1) - 1.0) > 1e-9):
        raise ConfigurationError("training samples must be unit norm")
    if rng is None:
        rng = np.random.default_rng()

    codewords = isotropic_directions(size, dimension, rng)
    history: list[float] = []
    reseeded = 0
    converged = False
    for _ in range(max_iters):
        sims = np.abs(x @ codewords.conj().T) ** 2
        assign = sims.argmax(axis=1)
        best = np.take_along_axis(sims, assign[:, None], axis=1)[:, 0]
        distortion = float(1.0 - best.mean())
        if history and distortion > history[-1] + 1e-12:
            raise RuntimeError("Lloyd distortion increased between iterations")
        if history and history[-1] - distortion < tol * max(history[-1], np.finfo(float).tiny):
            history.append(distortion)
            converged = True
            break
        history.append(distortion)

        new_codewords = codewords.copy()
        empty = []
        for i in range(size):
            members = x[assign == i]
            if members.shape[0] == 0:
                empty.append(i)
            else:
                new_codewords[i] = _dominant_direction(members)
        if empty:
            # Re-seed with the worst-quantized samples, skipping exact
            # duplicates of rows already present (repeated training samples
            # would otherwise collide with their own centroid).
            worst_order = np.argsort(best)
            cursor = 0
            for i in empty:
                placed = None
                while cursor < x.shape[0]:
                    candidate = x[worst_order[cursor]]
                    cursor += 1
                    if not np.any(np.all(new_codewords == candidate, axis=1)):
                        placed = candidate
                        break
                if placed is None:
                    placed = isotropic_directions(1, dimension, rng)[0]
                new_codewords[i] = placed
                reseeded += 1
        codewords = new_codewords

    meta = {
        "training_size": int(x.shape[0]),
        "iterations": len(history) - 1,
        "converged": converged,
        "tol": tol,
        "initial_distortion": history[0],
        "final_distortion": history[-1],
        "distortion_history": [float(d) for d in history],
        "reseeded_clusters": reseeded,
    }
    return Codebook(codewords=codewords, bits=bits, kind="lloyd", training_meta=meta)


def expected_error(
    cb: Codebook,
    draws: int = DEFAULT_ERROR_ESTIMATE_DRAWS,
    rng: np.random.Generator | None = None,
    directions: np.ndarray | None = None,
) -> tuple[float, float]:
    """Monte Carlo estimate (mean, standard error) of E{sin^2 theta}.

    Directions default to isotropic draws; pass ``directions`` to estimate
    under a non-isotropic input distribution (e.g. composite-channel CDI).
    """
    if directions is None:
        if rng is None:
            raise DomainError("either rng or directions must be provided")
        directions = isotropic_directions(draws, cb.dimension, rng)
    _, err = quantize_many(directions, cb)
    n = err.shape[0]
    return float(err.mean()), float(err.std(ddof=1) / np.sqrt(n))


# ---------------------------------------------------------------------------
# Feedback reports
# ---------------------------------------------------------------------------

@dataclass
class FeedbackReport:
    """Quantized CSI for every user: indices, errors, norms, reconstruction.

    Per-cell mode fills every (k, b) entry; global mode stores its single
    index/error/norm at (k, k) and marks the rest not-applicable (-1 / NaN).
    """

    indices: np.ndarray  # (n_users, n_bs) int, -1 = not applicable
    error_sq: np.ndarray  # (n_users, n_bs) float in [0, 1], NaN = n/a
    norms: np.ndarray  # (n_users, n_bs) float, NaN = n/a
    reconstructed: np.ndarray  # (n_users, n_bs * n_tx) complex
    total_bits_per_user: np.ndarray  # (n_users,) int
    mode: str  # "per_cell" | "global"


def _codebook_grid(codebooks, n_users: int, n_bs: int) -> list[list[Codebook]]:
    if isinstance(codebooks, Codebook):
        return [[codebooks] * n_bs for _ in range(n_users)]
    grid = [list(row) for row in codebooks]
    if len(grid) != n_users or any(len(row) != n_bs for row in grid):
        raise ConfigurationError(
            f"codebook assignment must be {n_users} x {n_bs}, "
            f"got {len(grid)} rows"
        )
    return grid


def _aligned_codeword(block: np.ndarray, codeword: np.ndarray) -> np.ndarray:
    """Representative of the quantized direction phased against the true block.

    Codeword phase is arbitrary under the chordal metric, but coherent joint
    transmission needs the per-BS blocks of a reconstruction phased
    consistently: the fed-back amplitude is treated as the complex scalar
    rho e^{j phi} with phi the phase of <block, codeword>, which makes the
    projection coefficient real and nonnegative (the cos(theta) of the error
    decomposition). With a raw-phase convention the reconstructed composite
    vector loses inter-BS coherence and the transmission incurs a signal loss
    the rate-loss analysis does not model.
    """
    c = np.vdot(codeword, block)  # <block, codeword> = block codeword^H
    if c == 0.0:
        return codeword
    return (c / abs(c)) * codeword


def per_cell_feedback(
    realization: channel.ChannelRealization,
    large_scale: channel.LargeScaleMap,
    codebooks,
) -> FeedbackReport:
    """Quantize each per-BS block independently; norms pass through unquantized.

    Reconstruction per user k: g_hat_k = [rho_{k,1} h_hat_{k,1}, ...,
    rho_{k,B} h_hat_{k,B}] with rho_{k,b} = alpha_{k,b} ||h_{k,b}|| and
    h_hat_{k,b} the phase-aligned representative of the selected codeword.
    """
    h = realization.small_scale
    n_users, n_bs, n_tx = h.shape
    grid = _codebook_grid(codebooks, n_users, n_bs)
    alpha = large_scale.alpha

    indices = np.zeros((n_users, n_bs), dtype=int)
    error_sq = np.zeros((n_users, n_bs))
    norms = np.zeros((n_users, n_bs))
    recon = np.zeros((n_users, n_bs * n_tx), dtype=complex)
    total_bits = np.zeros(n_users, dtype=int)
    for k in range(n_users):
        for b in range(n_bs):
            cb = grid[k][b]
            if cb.dimension != n_tx:
                raise ConfigurationError(
                    f"per-cell codebook for link ({k}, {b}) has dimension "
                    f"{cb.dimension}, expected {n_tx}"
                )
            idx, err = quantize_direction(h[k, b], cb)
            rho = alpha[k, b] * np.linalg.norm(h[k, b])
            indices[k, b] = idx
            error_sq[k, b] = err
            norms[k, b] = rho
            recon[k, b * n_tx : (b + 1) * n_tx] = rho * _aligned_codeword(
                h[k, b], cb.codewords[idx]
            )
            total_bits[k] += cb.bits
    return FeedbackReport(
        indices=indices,
        error_sq=error_sq,
        norms=norms,
        reconstructed=recon,
        total_bits_per_user=total_bits,
        mode="per_cell",
    )


def global_feedback(
    realization: channel.ChannelRealization,
    large_scale: channel.LargeScaleMap,
    codebooks,
) -> FeedbackReport:
    """Quantize each user's whole composite vector with one codebook.

    ``codebooks`` is a single Codebook of dimension n_bs * n_tx shared by all
    users, or a per-user sequence. Reconstruction: g_hat_k = ||g_k|| c_i.
    """
    g = realization.global_channels
    n_users = g.shape[0]
    n_bs = realization.n_bs
    if isinstance(codebooks, Codebook):
        per_user = [codebooks] * n_users
    else:
        per_user = list(codebooks)
        if len(per_user) != n_users:
            raise ConfigurationError(
                f"need one global codebook per user ({n_users}), got {len(per_user)}"
            )

    indices = np.full((n_users, n_bs), -1, dtype=int)
    error_sq = np.full((n_users, n_bs), np.nan)
    norms = np.full((n_users, n_bs), np.nan)
    recon = np.zeros_like(g)
    total_bits = np.zeros(n_users, dtype=int)
    for k in range(n_users):
        cb = per_user[k]
        if cb.dimension != g.shape[1]:
            raise ConfigurationError(
                f"global codebook dimension {cb.dimension} != composite length {g.shape[1]}"
            )
        idx, err = quantize_direction(g[k], cb)
        gnorm = np.linalg.norm(g[k])
        slot = min(k, n_bs - 1)
        indices[k, slot] = idx
        error_sq[k, slot] = err
        norms[k, slot] = gnorm
        # A single block: alignment is cosmetic (a global phase), kept for
        # consistency with the per-cell convention.
        recon[k] = gnorm * _aligned_codeword(g[k], cb.codewords[idx])
        total_bits[k] = cb.bits
    return FeedbackReport(
        indices=indices,
        error_sq=error_sq,
        norms=norms,
        reconstructed=recon,
        total_bits_per_user=total_bits,
        mode="global",
    )


# ---------------------------------------------------------------------------
# Codebook files: a canonical, diffable text container
# ---------------------------------------------------------------------------

_FILE_MAGIC = "compsim-codebook v1"


def codebook_text(cb: Codebook) -> str:
    """Canonical text form: header lines, then one codeword per line as
    re/im pairs printed with shortest round-trip precision."""
    lines = [
        _FILE_MAGIC,
        f"dimension {cb.dimension}",
        f"bits {cb.bits}",
        f"kind {cb.kind}",
        "meta " + json.dumps(cb.training_meta or {}, sort_keys=True, separators=(",", ":")),
        f"codewords {cb.size}",
    ]
    for row in cb.codewords:
        parts = []
        for z in row:
            parts.append(repr(float(z.real)))
            parts.append(repr(float(z.imag)))
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def save_codebook(cb: Codebook, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(codebook_text(cb))


def load_codebook(path) -> Codebook:
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _FILE_MAGIC:
        raise ConfigurationError(f"{path}: not a compsim codebook file")
    header = {}
    cursor = 1
    for key in ("dimension", "bits", "kind", "meta", "codewords"):
        if cursor >= len(lines):
            raise ConfigurationError(f"{path}: truncated header")
        name, _, value = lines[cursor].partition(" ")
        if name != key:
            raise ConfigurationError(f"{path}: expected header line {key!r}, got {name!r}")
        header[key] = value
        cursor += 1
    dimension = int(header["dimension"])
    bits = int(header["bits"])
    count = int(header["codewords"])
    meta = json.loads(header["meta"]) or None
    if count != 2**bits:
        raise ConfigurationError(f"{path}: codeword count {count} != 2^{bits}")
    rows = np.zeros((count, dimension), dtype=complex)
    for i in range(count):
        fields = lines[cursor + i].split()
        if len(fields) != 2 * dimension:
            raise ConfigurationError(f"{path}: codeword {i} has wrong field count")
        vals = np.array([float(f) for f in fields])
        # assign parts directly: complex arithmetic would lose signed zeros
        rows[i].real = vals[0::2]
        rows[i].imag = vals[1::2]
    return Codebook(codewords=rows, bits=bits, kind=header["kind"], training_meta=meta)


# ---------------------------------------------------------------------------
# Scenario-level feedback configuration and codebook resolution
# ---------------------------------------------------------------------------

@dataclass
class FeedbackConfig:
    """Which CSI the transmitter gets and how its codebooks are built.

    modes: "perfect" (true channels), "per_cell" (one codebook per link,
    ``bits`` is the n_users x n_bs allocation), "global" (one codebook per
    user over the concatenated vector, ``global_bits`` wide).
    ``codebook_files`` optionally maps slots to pre-trained files: per-cell
    slots are the bit counts as strings ("3"), global slots "user0", ....
    """

    mode: str = "perfect"
    bits: list | None = None
    global_bits: int | None = None
    codebook_kind: str = "lloyd"
    training_seed: int = 7001
    codebook_files: dict | None = None


@dataclass
class ResolvedFeedback:
    """Feedback config with concrete codebooks attached."""

    mode: str
    per_link: list | None = None  # n_users x n_bs grid of Codebook
    per_user_global: list | None = None  # n_users Codebooks

    def apply(
        self,
        realization: channel.ChannelRealization,
        large_scale: channel.LargeScaleMap,
    ) -> FeedbackReport | None:
        """Produce the feedback report; None means perfect CSI."""
        if self.mode == "perfect":
            return None
        if self.mode == "per_cell":
            return per_cell_feedback(realization, large_scale, self.per_link)
        return global_feedback(realization, large_scale, self.per_user_global)


_codebook_cache: dict = {}


def clear_codebook_cache() -> None:
    _codebook_cache.clear()


def _train_or_draw(dimension, bits, kind, seed, sampler=None, sampler_key=()):
    key = ("global" if sampler is not None else "percell", dimension, bits, kind, seed, sampler_key)
    hit = _codebook_cache.get(key)
    if hit is not None:
        return hit
    train_rng = rngmod.substream(seed, rngmod.TRAINING, dimension, bits, *_key_ints(sampler_key))
    if kind == "random":
        cb = random_codebook(dimension, bits, train_rng)
    else:
        count = DEFAULT_LLOYD_OVERSAMPLING * 2**bits
        samples = sampler(count, train_rng) if sampler is not None else isotropic_directions(
            count, dimension, train_rng
        )
        cb = train_lloyd(dimension, bits, samples, rng=train_rng)
    err_rng = rngmod.substream(seed, rngmod.ERROR_ESTIMATE, dimension, bits, *_key_ints(sampler_key))
    if sampler is not None:
        mean, se = expected_error(cb, directions=sampler(DEFAULT_ERROR_ESTIMATE_DRAWS, err_rng))
    else:
        mean, se = expected_error(cb, DEFAULT_ERROR_ESTIMATE_DRAWS, err_rng)
    meta = dict(cb.training_meta or {})
    meta["expected_error"] = {"mean": mean, "se": se, "draws": DEFAULT_ERROR_ESTIMATE_DRAWS}
    meta["seed"] = seed
    cb.training_meta = meta
    _codebook_cache[key] = cb
    return cb


def _key_ints(sampler_key) -> tuple:
    # Fold an arbitrary hashable key into substream label integers.
    if not sampler_key:
        return ()
    digest = hashlib.sha256(repr(sampler_key).encode()).digest()
    return (int.from_bytes(digest[:4], "big"),)


def _composite_direction_sampler(energy_profile: np.ndarray, n_tx: int):
    """Sampler of normalized composite vectors g/||g|| for one user.

    The direction distribution is invariant to a common scaling of the link
    energies, so the sampler takes the normalized profile; equal profiles
    produce bit-identical samples regardless of absolute energies.
    """
    alpha = np.sqrt(np.asarray(energy_profile, dtype=float))

    def draw(count: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((count, alpha.shape[0], n_tx, 2))
        h = (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)
        g = (alpha[None, :, None] * h).reshape(count, -1)
        return g / np.linalg.norm(g, axis=1, keepdims=True)

    return draw


def resolve_codebooks(
    config: FeedbackConfig,
    n_tx: int,
    large_scale: channel.LargeScaleMap,
) -> ResolvedFeedback:
    """Load or train every codebook the feedback config needs.

    Per-cell codebooks are trained on isotropic unit vectors (small-scale CDI
    is isotropic) and shared across links with equal bit counts. Global
    codebooks are trained per user on that user's composite-direction
    distribution, which is set by the relative link energies; the cache key
    uses the normalized energy profile so equal shapes share one training.
    """
    n_users, n_bs = large_scale.alpha_sq.shape
    files = config.codebook_files or {}
    if config.mode == "perfect":
        return ResolvedFeedback(mode="perfect")
    if config.mode == "per_cell":
        bits = np.asarray(config.bits, dtype=int)
        if bits.shape != (n_users, n_bs):
            raise ConfigurationError(
                f"per-cell bit matrix must be {n_users} x {n_bs}, got {bits.shape}"
            )
        by_bits: dict[int, Codebook] = {}
        for b in sorted(set(bits.flatten().tolist())):
            slot = str(b)
            if slot in files:
                cb = load_codebook(files[slot])
                if cb.dimension != n_tx or cb.bits != b:
                    raise ConfigurationError(
                        f"codebook file {files[slot]} does not match slot {slot} "
                        f"(dimension {n_tx})"
                    )
                by_bits[b] = cb
            else:
                by_bits[b] = _train_or_draw(n_tx, b, config.codebook_kind, config.training_seed)
        grid = [[by_bits[int(bits[k, b])] for b in range(n_bs)] for k in range(n_users)]
        return ResolvedFeedback(mode="per_cell", per_link=grid)
    if config.mode == "global":
        if config.global_bits is None:
            raise ConfigurationError("global feedback requires global_bits")
        dim = n_bs * n_tx
        per_user = []
        for k in range(n_users):
            slot = f"user{k}"
            if slot in files:
                cb = load_codebook(files[slot])
                if cb.dimension != dim or cb.bits != config.global_bits:
                    raise ConfigurationError(f"codebook file {files[slot]} does not match {slot}")
                per_user.append(cb)
                continue
            row = large_scale.alpha_sq[k]
            total = row.sum()
            if total <= 0:
                raise ConfigurationError(f"user {k} has no link energy; cannot train codebook")
            profile = row / total
            profile_key = tuple(profile.tolist())
            per_user.append(
                _train_or_draw(
                    dim,
                    config.global_bits,
                    config.codebook_kind,
                    config.training_seed,
                    sampler=_composite_direction_sampler(profile, n_tx),
                    sampler_key=profile_key,
                )
            )
        return ResolvedFeedback(mode="global", per_user_global=per_user)
    raise ConfigurationError(f"unknown feedback mode {config.mode!r}")
