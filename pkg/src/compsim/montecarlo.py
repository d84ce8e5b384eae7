"""Trial orchestration: reproducible Monte Carlo runs and random-drop CDFs.

Every trial owns an RNG substream keyed by its index, draws one channel
realization, and evaluates the configured feedback arm and the perfect-CSI
arm on that same draw (common random numbers). Aggregation is a fold in
trial order over retained per-trial values, so results are bit-identical for
any worker count.
"""

from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass

import numpy as np

from . import channel, precoding, quantization, scheduling
from . import rng as rngmod
from . import scenario as scenariomod
from .errors import ConfigurationError, EstimationError, PrecodingError

DEFAULT_COND_CAP = precoding.DEFAULT_COND_CAP


@dataclass
class TrialContext:
    """Everything a worker needs to evaluate trials; must stay picklable."""

    large_scale: channel.LargeScaleMap
    n_tx: int
    feedback: quantization.ResolvedFeedback
    pairing: scheduling.PairingPolicy
    tx_power: float
    noise_power: float
    master_seed: int
    recon_transform: object = None  # callable(report, n_tx, rng) -> reconstruction
    cond_cap: float = DEFAULT_COND_CAP


@dataclass
class TrialLog:
    """Per-trial outcomes in trial order."""

    ideal: np.ndarray  # (trials, n_users) log2(1 + SINR), NaN where failed
    quantized: np.ndarray  # (trials, n_users)
    interference: np.ndarray  # (trials, n_users) residual interference power
    ok: np.ndarray  # (trials,) bool


@dataclass
class RunResult:
    """Aggregated throughput and rate-loss statistics for one configuration."""

    throughput_mean: np.ndarray  # (n_users,)
    throughput_se: np.ndarray
    ideal_throughput_mean: np.ndarray
    ideal_throughput_se: np.ndarray
    rate_loss: np.ndarray  # per-user mean of (ideal - quantized), paired
    rate_loss_se: np.ndarray
    failures: int
    trials: int
    config_fingerprint: str
    seed: int
    throughput_samples: np.ndarray | None = None  # (successes, n_users)
    ideal_throughput_samples: np.ndarray | None = None

    @property
    def successes(self) -> int:
        return self.trials - self.failures


@dataclass
class CdfResult:
    """Per-drop average throughput for the quantized and ideal arms."""

    quantized: np.ndarray  # (drops, n_users), NaN where the whole drop failed
    ideal: np.ndarray
    failed_draws: int
    dead_drops: int
    drops: int
    config_fingerprint: str
    seed: int


def _evaluate_realization(ctx: TrialContext, realization, rng) -> tuple:
    """Evaluate both arms on one channel draw.

    Returns (ideal_rates, quantized_rates, interference) or None when the
    trial must be rejected (pairing rejection or precoding failure).
    """
    g = realization.global_channels
    report = ctx.feedback.apply(realization, ctx.large_scale)
    recon = g if report is None else report.reconstructed
    if ctx.recon_transform is not None and report is not None:
        recon = ctx.recon_transform(report, ctx.n_tx, rng)

    if ctx.pairing.mode == "sus_threshold":
        pick = scheduling.select_pairing([[recon[k]] for k in range(g.shape[0])], ctx.pairing)
        if pick is None:
            return None

    try:
        ideal_pre = precoding.zf_precoder(g, ctx.cond_cap)
        quant_pre = precoding.zf_precoder(recon, ctx.cond_cap)
    except PrecodingError:
        return None

    ideal_rates = precoding.instantaneous_rate(
        precoding.sinr(g, ideal_pre, ctx.tx_power, ctx.noise_power)
    )
    quant_rates = precoding.instantaneous_rate(
        precoding.sinr(g, quant_pre, ctx.tx_power, ctx.noise_power)
    )
    interference = precoding.interference_power(g, quant_pre, ctx.tx_power)
    return ideal_rates, quant_rates, interference


def _run_trial_range(args) -> tuple:
    ctx, start, stop = args
    n_users = ctx.large_scale.n_users
    count = stop - start
    ideal = np.full((count, n_users), np.nan)
    quant = np.full((count, n_users), np.nan)
    interf = np.full((count, n_users), np.nan)
    ok = np.zeros(count, dtype=bool)
    for offset in range(count):
        t = start + offset
        rng = rngmod.substream(ctx.master_seed, rngmod.TRIAL, t)
        realization = channel.realize_channels(ctx.large_scale, ctx.n_tx, rng)
        outcome = _evaluate_realization(ctx, realization, rng)
        if outcome is None:
            continue
        ideal[offset], quant[offset], interf[offset] = outcome
        ok[offset] = True
    return ideal, quant, interf, ok


def _parallel_ranges(total: int, workers: int) -> list:
    chunks = max(1, min(total, workers * 4))
    size = math.ceil(total / chunks)
    return [(a, min(a + size, total)) for a in range(0, total, size)]


def run_trials(ctx: TrialContext, trials: int, workers: int = 1) -> TrialLog:
    """Evaluate ``trials`` independent trials; fold results in trial order."""
    if trials < 1:
        raise ConfigurationError("trials must be >= 1")
    ranges = _parallel_ranges(trials, workers)
    tasks = [(ctx, a, b) for a, b in ranges]
    if workers <= 1 or len(ranges) == 1:
        parts = [_run_trial_range(task) for task in tasks]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_trial_range, tasks))
    ideal = np.concatenate([p[0] for p in parts], axis=0)
    quant = np.concatenate([p[1] for p in parts], axis=0)
    interf = np.concatenate([p[2] for p in parts], axis=0)
    ok = np.concatenate([p[3] for p in parts], axis=0)
    return TrialLog(ideal=ideal, quantized=quant, interference=interf, ok=ok)


def _mean_se(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    if n > 1:
        se = samples.std(axis=0, ddof=1) / np.sqrt(n)
    else:
        se = np.full(samples.shape[1], np.nan)
    return mean, se


def build_context(scn: scenariomod.Scenario, recon_transform=None) -> TrialContext:
    """Resolve a fixed-placement scenario into a trial context."""
    if scn.placement.mode != "fixed":
        raise ConfigurationError(
            "build_context requires fixed placement; resolve sweeps with "
            "scenario.resolved_points or use run_cdf for random placement"
        )
    large_scale = channel.build_large_scale(
        scn.placement.positions,
        scn.geometry,
        tx_power=scn.tx_power,
        noise_power=scn.noise_power,
        require_one_per_cell=(scn.n_users == scn.geometry.n_cells),
    )
    resolved = quantization.resolve_codebooks(scn.feedback, scn.n_tx, large_scale)
    return TrialContext(
        large_scale=large_scale,
        n_tx=scn.n_tx,
        feedback=resolved,
        pairing=scn.pairing,
        tx_power=scn.tx_power,
        noise_power=scn.noise_power,
        master_seed=scn.master_seed,
        recon_transform=recon_transform,
    )


def run(scn: scenariomod.Scenario, workers: int = 1, recon_transform=None) -> RunResult:
    """Run a fixed-placement scenario and aggregate its statistics."""
    ctx = build_context(scn, recon_transform=recon_transform)
    log = run_trials(ctx, scn.trials, workers=workers)
    ok = log.ok
    failures = int(scn.trials - ok.sum())
    if not ok.any():
        raise EstimationError("all trials failed (precoding rejected every pairing)")
    quant_ok = log.quantized[ok]
    ideal_ok = log.ideal[ok]
    t_mean, t_se = _mean_se(quant_ok)
    i_mean, i_se = _mean_se(ideal_ok)
    loss_mean, loss_se = _mean_se(ideal_ok - quant_ok)
    return RunResult(
        throughput_mean=t_mean,
        throughput_se=t_se,
        ideal_throughput_mean=i_mean,
        ideal_throughput_se=i_se,
        rate_loss=loss_mean,
        rate_loss_se=loss_se,
        failures=failures,
        trials=scn.trials,
        config_fingerprint=scenariomod.fingerprint(scn),
        seed=scn.master_seed,
        throughput_samples=quant_ok if scn.retain_samples else None,
        ideal_throughput_samples=ideal_ok if scn.retain_samples else None,
    )


# ---------------------------------------------------------------------------
# Random drops
# ---------------------------------------------------------------------------

def empirical_cdf(values) -> tuple[np.ndarray, np.ndarray]:
    """Sorted sample values and their cumulative fractions (NaNs dropped)."""
    v = np.asarray(values, dtype=float).reshape(-1)
    v = np.sort(v[np.isfinite(v)])
    if v.size == 0:
        raise EstimationError("no finite samples to build a CDF from")
    return v, np.arange(1, v.size + 1) / v.size


def _draw_positions(scn: scenariomod.Scenario, rng) -> np.ndarray:
    """Uniform drop over each user's cell disc, excluding the d_min core.

    User k belongs to cell k mod n_cells, so the single-cell multi-user
    baseline drops every user in the one cell.
    """
    geom = scn.geometry
    out = np.zeros((scn.n_users, 2))
    for k in range(scn.n_users):
        center = geom.bs_positions[k % geom.n_cells]
        u = rng.uniform()
        radius = np.sqrt(geom.d_min_m**2 + (geom.cell_radius_m**2 - geom.d_min_m**2) * u)
        angle = rng.uniform(0.0, 2.0 * np.pi)
        out[k] = center + radius * np.array([np.cos(angle), np.sin(angle)])
    return out


def _run_drop_range(args) -> tuple:
    scn, start, stop = args
    n_users = scn.n_users
    count = stop - start
    quant = np.full((count, n_users), np.nan)
    ideal = np.full((count, n_users), np.nan)
    failed_draws = 0
    for offset in range(count):
        d = start + offset
        rng = rngmod.substream(scn.master_seed, rngmod.DROP, d)
        positions = _draw_positions(scn, rng)
        large_scale = channel.build_large_scale(
            positions,
            scn.geometry,
            tx_power=scn.tx_power,
            noise_power=scn.noise_power,
            require_one_per_cell=False,
        )
        resolved = quantization.resolve_codebooks(scn.feedback, scn.n_tx, large_scale)
        ctx = TrialContext(
            large_scale=large_scale,
            n_tx=scn.n_tx,
            feedback=resolved,
            pairing=scn.pairing,
            tx_power=scn.tx_power,
            noise_power=scn.noise_power,
            master_seed=scn.master_seed,
        )
        q_acc = np.zeros(n_users)
        i_acc = np.zeros(n_users)
        good = 0
        for _ in range(scn.trials_per_drop):
            realization = channel.realize_channels(large_scale, scn.n_tx, rng)
            outcome = _evaluate_realization(ctx, realization, rng)
            if outcome is None:
                failed_draws += 1
                continue
            i_acc += outcome[0]
            q_acc += outcome[1]
            good += 1
        if good:
            quant[offset] = q_acc / good
            ideal[offset] = i_acc / good
    return quant, ideal, failed_draws


def run_cdf(scn: scenariomod.Scenario, workers: int = 1) -> CdfResult:
    """Random-drop run: per-drop throughput averaged over small-scale fading."""
    if scn.placement.mode != "random_uniform":
        raise ConfigurationError("run_cdf requires random_uniform placement")
    if scn.drops < 1:
        raise ConfigurationError("drops must be >= 1")
    if scn.feedback.mode == "global" and scn.feedback.codebook_kind == "lloyd":
        # Trained per energy profile: only viable when the profile is
        # drop-independent (single-cell baseline). Cooperative random drops
        # must use per-cell or random-codebook feedback.
        if scn.geometry.n_cells > 1:
            raise ConfigurationError(
                "global lloyd feedback with random drops would retrain per drop; "
                "use per_cell feedback or a random codebook"
            )
    ranges = _parallel_ranges(scn.drops, workers)
    tasks = [(scn, a, b) for a, b in ranges]
    if workers <= 1 or len(ranges) == 1:
        parts = [_run_drop_range(task) for task in tasks]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_drop_range, tasks))
    quant = np.concatenate([p[0] for p in parts], axis=0)
    ideal = np.concatenate([p[1] for p in parts], axis=0)
    failed = int(sum(p[2] for p in parts))
    dead = int(np.isnan(quant[:, 0]).sum())
    if dead == scn.drops:
        raise EstimationError("every drop failed")
    return CdfResult(
        quantized=quant,
        ideal=ideal,
        failed_draws=failed,
        dead_drops=dead,
        drops=scn.drops,
        config_fingerprint=scenariomod.fingerprint(scn),
        seed=scn.master_seed,
    )
