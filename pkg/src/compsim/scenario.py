"""Declarative experiment configuration, JSON (de)serialization, presets.

A Scenario pins everything a run needs: geometry, antennas, MS placement,
feedback mode and codebooks, pairing policy, trial counts, and the master
seed. Serialization is canonical JSON (sorted keys, fixed indentation) so
configs diff cleanly and golden outputs stay stable. Validation is total:
``parse`` reports every problem it finds, not just the first.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import Geometry, single_cell, two_cell_line
from .errors import ConfigurationError, ScenarioError
from .quantization import FeedbackConfig
from .scheduling import PairingPolicy

PLACEMENT_MODES = ("fixed", "line_sweep", "random_uniform")
FEEDBACK_MODES = ("perfect", "per_cell", "global")

ENV_SEED = "COMPSIM_SEED"
ENV_TRIALS = "COMPSIM_TRIALS"


@dataclass
class Placement:
    """Where the mobile stations are.

    fixed: ``positions`` lists one (x, y) per user.
    line_sweep: ``sweep_user`` moves along the BS axis from ``start_m`` to
    ``stop_m`` (distances from its serving BS) in ``steps`` points while the
    other users sit at their ``positions`` entries (the swept entry is null).
    random_uniform: every user is dropped uniformly over its cell's disc.
    """

    mode: str = "fixed"
    positions: list | None = None
    sweep_user: int | None = None
    start_m: float | None = None
    stop_m: float | None = None
    steps: int | None = None


@dataclass
class Scenario:
    geometry: Geometry
    n_tx: int
    n_users: int
    placement: Placement
    feedback: FeedbackConfig
    pairing: PairingPolicy
    trials: int = 1000
    drops: int = 0
    trials_per_drop: int = 1
    master_seed: int = 1
    retain_samples: bool = False
    tx_power: float = 1.0
    noise_power: float = 1.0
    output_csv: str | None = None  # default CSV destination, CLI --out wins


@dataclass
class Arm:
    label: str
    scenario: Scenario


@dataclass
class Experiment:
    name: str
    arms: list


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def scenario_to_dict(s: Scenario) -> dict:
    return {
        "geometry": {
            "n_cells": s.geometry.n_cells,
            "bs_positions": [list(map(float, p)) for p in s.geometry.bs_positions],
            "cell_radius_m": s.geometry.cell_radius_m,
            "pathloss_exponent": s.geometry.pathloss_exponent,
            "edge_snr_db": s.geometry.edge_snr_db,
            "d_min_m": s.geometry.d_min_m,
            "pathloss_sign": s.geometry.pathloss_sign,
        },
        "n_tx": s.n_tx,
        "n_users": s.n_users,
        "placement": {
            "mode": s.placement.mode,
            "positions": s.placement.positions,
            "sweep_user": s.placement.sweep_user,
            "start_m": s.placement.start_m,
            "stop_m": s.placement.stop_m,
            "steps": s.placement.steps,
        },
        "feedback": {
            "mode": s.feedback.mode,
            "bits": s.feedback.bits,
            "global_bits": s.feedback.global_bits,
            "codebook_kind": s.feedback.codebook_kind,
            "training_seed": s.feedback.training_seed,
            "codebook_files": s.feedback.codebook_files,
        },
        "pairing": {
            "mode": s.pairing.mode,
            "threshold": s.pairing.threshold,
            "candidate_pool_size": s.pairing.candidate_pool_size,
        },
        "trials": s.trials,
        "drops": s.drops,
        "trials_per_drop": s.trials_per_drop,
        "master_seed": s.master_seed,
        "retain_samples": s.retain_samples,
        "tx_power": s.tx_power,
        "noise_power": s.noise_power,
        "output_csv": s.output_csv,
    }


def serialize(s: Scenario) -> str:
    """Canonical JSON form of a scenario."""
    return json.dumps(scenario_to_dict(s), indent=2, sort_keys=True) + "\n"


def fingerprint(s: Scenario) -> str:
    return hashlib.sha256(serialize(s).encode()).hexdigest()[:16]


def experiment_to_json(e: Experiment) -> str:
    doc = {"name": e.name, "arms": [
        {"label": a.label, "scenario": scenario_to_dict(a.scenario)} for a in e.arms
    ]}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# Parsing with total validation
# ---------------------------------------------------------------------------

class _Checker:
    """Accumulates located diagnostics while pulling typed fields from dicts."""

    def __init__(self):
        self.errors: list[str] = []

    def fail(self, path: str, message: str):
        self.errors.append(f"{path}: {message}")

    def expect_keys(self, obj: dict, path: str, known: set):
        for key in obj:
            if key not in known:
                self.fail(f"{path}.{key}" if path else key, "unknown key")

    def get(self, obj: dict, path: str, key: str, kind, required=True, default=None):
        if key not in obj or obj[key] is None:
            if required:
                self.fail(f"{path}.{key}" if path else key, "missing")
            return default
        value = obj[key]
        if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if kind is int and isinstance(value, int) and not isinstance(value, bool):
            return value
        if kind is bool and isinstance(value, bool):
            return value
        if kind is str and isinstance(value, str):
            return value
        if kind is list and isinstance(value, list):
            return value
        if kind is dict and isinstance(value, dict):
            return value
        self.fail(f"{path}.{key}" if path else key, f"expected {kind.__name__}")
        return default


def parse(text: str) -> Scenario:
    """Parse and validate a scenario document; raises ScenarioError listing
    every diagnostic on failure."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"document: invalid JSON ({exc})"]) from exc
    if not isinstance(doc, dict):
        raise ScenarioError(["document: top level must be an object"])
    return scenario_from_dict(doc)


def scenario_from_dict(doc: dict) -> Scenario:
    ck = _Checker()
    known = {
        "geometry", "n_tx", "n_users", "placement", "feedback", "pairing",
        "trials", "drops", "trials_per_drop", "master_seed", "retain_samples",
        "tx_power", "noise_power", "output_csv",
    }
    ck.expect_keys(doc, "", known)

    geo = ck.get(doc, "", "geometry", dict, default={}) or {}
    ck.expect_keys(geo, "geometry", {
        "n_cells", "bs_positions", "cell_radius_m", "pathloss_exponent",
        "edge_snr_db", "d_min_m", "pathloss_sign",
    })
    n_cells = ck.get(geo, "geometry", "n_cells", int, default=0)
    bs_positions = ck.get(geo, "geometry", "bs_positions", list, default=[])
    cell_radius = ck.get(geo, "geometry", "cell_radius_m", float, default=250.0)
    pathloss_exp = ck.get(geo, "geometry", "pathloss_exponent", float, required=False, default=3.76)
    edge_snr = ck.get(geo, "geometry", "edge_snr_db", float, required=False, default=10.0)
    d_min = ck.get(geo, "geometry", "d_min_m", float, required=False, default=1.0)
    pl_sign = ck.get(geo, "geometry", "pathloss_sign", int, required=False, default=-1)
    if n_cells is not None and n_cells < 1:
        ck.fail("geometry.n_cells", "must be >= 1")
    if cell_radius is not None and cell_radius <= 0:
        ck.fail("geometry.cell_radius_m", "must be positive")
    if pathloss_exp is not None and pathloss_exp < 0:
        ck.fail("geometry.pathloss_exponent", "must be nonnegative")
    if d_min is not None and d_min <= 0:
        ck.fail("geometry.d_min_m", "must be positive")
    if pl_sign not in (-1, 1):
        ck.fail("geometry.pathloss_sign", "must be -1 or +1")
    positions_ok = isinstance(bs_positions, list) and all(
        isinstance(p, list) and len(p) == 2 and all(isinstance(c, (int, float)) for c in p)
        for p in bs_positions
    )
    if not positions_ok:
        ck.fail("geometry.bs_positions", "must be a list of [x, y] pairs")
    elif n_cells and len(bs_positions) != n_cells:
        ck.fail("geometry.bs_positions", f"must have exactly {n_cells} entries")

    n_tx = ck.get(doc, "", "n_tx", int, default=0)
    n_users = ck.get(doc, "", "n_users", int, default=0)
    if n_tx is not None and n_tx < 2:
        ck.fail("n_tx", "must be >= 2")
    if n_users is not None and n_users < 1:
        ck.fail("n_users", "must be >= 1")

    pl = ck.get(doc, "", "placement", dict, default={}) or {}
    ck.expect_keys(pl, "placement", {
        "mode", "positions", "sweep_user", "start_m", "stop_m", "steps",
    })
    pl_mode = ck.get(pl, "placement", "mode", str, default="fixed")
    if pl_mode not in PLACEMENT_MODES:
        ck.fail("placement.mode", f"must be one of {PLACEMENT_MODES}")
    positions = pl.get("positions")
    sweep_user = ck.get(pl, "placement", "sweep_user", int, required=False)
    start_m = ck.get(pl, "placement", "start_m", float, required=False)
    stop_m = ck.get(pl, "placement", "stop_m", float, required=False)
    steps = ck.get(pl, "placement", "steps", int, required=False)

    def _check_position(entry, path, allow_null):
        if entry is None:
            if not allow_null:
                ck.fail(path, "must be an [x, y] pair")
            return
        if not (isinstance(entry, list) and len(entry) == 2
                and all(isinstance(c, (int, float)) for c in entry)):
            ck.fail(path, "must be an [x, y] pair")

    if pl_mode == "fixed":
        if not isinstance(positions, list) or (n_users and len(positions) != n_users):
            ck.fail("placement.positions", f"must list exactly {n_users} [x, y] pairs")
        else:
            for i, entry in enumerate(positions):
                _check_position(entry, f"placement.positions[{i}]", allow_null=False)
    elif pl_mode == "line_sweep":
        if sweep_user is None or (n_users and not 0 <= sweep_user < n_users):
            ck.fail("placement.sweep_user", f"must be a user index in [0, {n_users})")
        for name, value in (("start_m", start_m), ("stop_m", stop_m)):
            if value is None or value <= 0:
                ck.fail(f"placement.{name}", "must be a positive distance")
        if steps is None or steps < 1:
            ck.fail("placement.steps", "must be >= 1")
        if not isinstance(positions, list) or (n_users and len(positions) != n_users):
            ck.fail("placement.positions", f"must list exactly {n_users} entries")
        else:
            for i, entry in enumerate(positions):
                _check_position(entry, f"placement.positions[{i}]",
                                allow_null=(i == sweep_user))
        if isinstance(cell_radius, float) and d_min:
            for name, value in (("start_m", start_m), ("stop_m", stop_m)):
                if value is not None and not d_min <= value <= cell_radius:
                    ck.fail(f"placement.{name}",
                            f"must lie within [{d_min}, {cell_radius}] m")

    fb = ck.get(doc, "", "feedback", dict, default={}) or {}
    ck.expect_keys(fb, "feedback", {
        "mode", "bits", "global_bits", "codebook_kind", "training_seed",
        "codebook_files",
    })
    fb_mode = ck.get(fb, "feedback", "mode", str, default="perfect")
    if fb_mode not in FEEDBACK_MODES:
        ck.fail("feedback.mode", f"must be one of {FEEDBACK_MODES}")
    fb_bits = fb.get("bits")
    fb_global_bits = ck.get(fb, "feedback", "global_bits", int, required=False)
    fb_kind = ck.get(fb, "feedback", "codebook_kind", str, required=False, default="lloyd")
    if fb_kind not in ("lloyd", "random"):
        ck.fail("feedback.codebook_kind", "must be 'lloyd' or 'random'")
    fb_seed = ck.get(fb, "feedback", "training_seed", int, required=False, default=7001)
    if fb_seed is not None and fb_seed < 0:
        ck.fail("feedback.training_seed", "must be nonnegative")
    fb_files = ck.get(fb, "feedback", "codebook_files", dict, required=False)
    if fb_mode == "per_cell":
        n_bs = n_cells or 0
        if not isinstance(fb_bits, list) or (n_users and len(fb_bits) != n_users):
            ck.fail("feedback.bits", f"must be an {n_users} x {n_bs} integer matrix")
        else:
            for k, row in enumerate(fb_bits):
                if not isinstance(row, list) or (n_bs and len(row) != n_bs):
                    ck.fail(f"feedback.bits[{k}]", f"must list {n_bs} entries")
                    continue
                for b, entry in enumerate(row):
                    if not isinstance(entry, int) or isinstance(entry, bool) or entry < 0:
                        ck.fail(f"feedback.bits[{k}][{b}]", "must be a nonnegative integer")
    elif fb_mode == "global":
        if fb_global_bits is None or fb_global_bits < 0:
            ck.fail("feedback.global_bits", "must be a nonnegative integer")

    pr = ck.get(doc, "", "pairing", dict, default={}) or {}
    ck.expect_keys(pr, "pairing", {"mode", "threshold", "candidate_pool_size"})
    pr_mode = ck.get(pr, "pairing", "mode", str, required=False, default="always_pair")
    pr_threshold = ck.get(pr, "pairing", "threshold", float, required=False, default=1.0)
    pr_pool = ck.get(pr, "pairing", "candidate_pool_size", int, required=False, default=1)
    if pr_mode not in ("fixed", "sus_threshold", "always_pair"):
        ck.fail("pairing.mode", "must be fixed, sus_threshold, or always_pair")
    if pr_threshold is not None and not 0.0 <= pr_threshold <= 1.0:
        ck.fail("pairing.threshold", "must lie in [0, 1]")
    if pr_pool is not None and pr_pool < 1:
        ck.fail("pairing.candidate_pool_size", "must be >= 1")

    trials = ck.get(doc, "", "trials", int, required=False, default=1000)
    drops = ck.get(doc, "", "drops", int, required=False, default=0)
    trials_per_drop = ck.get(doc, "", "trials_per_drop", int, required=False, default=1)
    master_seed = ck.get(doc, "", "master_seed", int, required=False, default=1)
    retain = ck.get(doc, "", "retain_samples", bool, required=False, default=False)
    tx_power = ck.get(doc, "", "tx_power", float, required=False, default=1.0)
    noise_power = ck.get(doc, "", "noise_power", float, required=False, default=1.0)
    output_csv = ck.get(doc, "", "output_csv", str, required=False)
    if trials is not None and trials < 1:
        ck.fail("trials", "must be >= 1")
    if drops is not None and drops < 0:
        ck.fail("drops", "must be >= 0")
    if pl_mode == "random_uniform" and (drops is None or drops < 1):
        ck.fail("drops", "random placement requires drops >= 1")
    if trials_per_drop is not None and trials_per_drop < 1:
        ck.fail("trials_per_drop", "must be >= 1")
    if master_seed is not None and master_seed < 0:
        ck.fail("master_seed", "must be nonnegative")
    if tx_power is not None and tx_power <= 0:
        ck.fail("tx_power", "must be positive")
    if noise_power is not None and noise_power <= 0:
        ck.fail("noise_power", "must be positive")
    if n_users and n_cells and pl_mode != "random_uniform" and n_users != n_cells:
        if n_cells != 1:
            ck.fail("n_users", "must equal geometry.n_cells for cooperative scenarios")
    if n_users and n_tx and n_cells and n_users > n_cells * n_tx:
        ck.fail("n_users", "cannot exceed total transmit antennas")

    if ck.errors:
        raise ScenarioError(ck.errors)

    geometry = Geometry(
        n_cells=n_cells,
        bs_positions=np.asarray(bs_positions, dtype=float),
        cell_radius_m=cell_radius,
        pathloss_exponent=pathloss_exp,
        edge_snr_db=edge_snr,
        d_min_m=d_min,
        pathloss_sign=pl_sign,
    )
    placement = Placement(
        mode=pl_mode,
        positions=copy.deepcopy(positions),
        sweep_user=sweep_user,
        start_m=start_m,
        stop_m=stop_m,
        steps=steps,
    )
    feedback = FeedbackConfig(
        mode=fb_mode,
        bits=copy.deepcopy(fb_bits),
        global_bits=fb_global_bits,
        codebook_kind=fb_kind,
        training_seed=fb_seed,
        codebook_files=copy.deepcopy(fb_files),
    )
    pairing = PairingPolicy(
        mode=pr_mode, threshold=pr_threshold, candidate_pool_size=pr_pool
    )
    return Scenario(
        geometry=geometry,
        n_tx=n_tx,
        n_users=n_users,
        placement=placement,
        feedback=feedback,
        pairing=pairing,
        trials=trials,
        drops=drops,
        trials_per_drop=trials_per_drop,
        master_seed=master_seed,
        retain_samples=retain,
        tx_power=tx_power,
        noise_power=noise_power,
        output_csv=output_csv,
    )


def apply_env_overrides(s: Scenario, env=None) -> Scenario:
    """Apply the seed / trial-count environment overrides (only those two)."""
    env = os.environ if env is None else env
    out = s
    if ENV_SEED in env:
        out = replace(out, master_seed=int(env[ENV_SEED]))
    if ENV_TRIALS in env:
        out = replace(out, trials=int(env[ENV_TRIALS]))
    return out


# ---------------------------------------------------------------------------
# Sweep resolution
# ---------------------------------------------------------------------------

def _line_position(geom: Geometry, user: int, distance_m: float) -> list:
    """Position of ``user`` on the inter-BS axis at ``distance_m`` from its BS."""
    if geom.n_cells != 2:
        raise ConfigurationError("line placement requires the two-cell geometry")
    serving = geom.bs_positions[user]
    other = geom.bs_positions[1 - user]
    direction = (other - serving) / np.linalg.norm(other - serving)
    return list(serving + distance_m * direction)


def sweep_values(s: Scenario) -> list:
    if s.placement.mode != "line_sweep":
        return [None]
    return list(np.linspace(s.placement.start_m, s.placement.stop_m, s.placement.steps))


def at_sweep_point(s: Scenario, distance_m: float) -> Scenario:
    """Resolve a line-sweep scenario to fixed positions at one sweep distance."""
    if s.placement.mode != "line_sweep":
        raise ConfigurationError("scenario has no sweep to resolve")
    positions = copy.deepcopy(s.placement.positions)
    positions[s.placement.sweep_user] = _line_position(
        s.geometry, s.placement.sweep_user, distance_m
    )
    return replace(s, placement=Placement(mode="fixed", positions=positions))


def resolved_points(s: Scenario) -> list:
    """(sweep_value, fixed scenario) pairs covering the whole placement."""
    if s.placement.mode == "line_sweep":
        return [(d, at_sweep_point(s, d)) for d in sweep_values(s)]
    return [(None, s)]


# ---------------------------------------------------------------------------
# Presets reproducing the published experiments
# ---------------------------------------------------------------------------

PRESET_NAMES = ("fig3", "fig4", "fig5")

# Default fixed distances (m) of the non-swept user for the position study.
DEFAULT_COMPANION_DISTANCES = (250.0, 150.0, 50.0)
SWEEP_STEPS = 5


def _two_cell_scenario(
    feedback: FeedbackConfig,
    ms2_distance_m: float,
    master_seed: int,
    trials: int = 1000,
) -> Scenario:
    geom = two_cell_line()
    ms2 = _line_position(geom, 1, ms2_distance_m)
    return Scenario(
        geometry=geom,
        n_tx=4,
        n_users=2,
        placement=Placement(
            mode="line_sweep",
            positions=[None, ms2],
            sweep_user=0,
            start_m=250.0,
            stop_m=50.0,
            steps=SWEEP_STEPS,
        ),
        feedback=feedback,
        pairing=PairingPolicy(mode="always_pair"),
        trials=trials,
        master_seed=master_seed,
    )


def preset(name: str) -> Experiment:
    """Canned experiment descriptions for the published figures."""
    if name == "fig3":
        # Throughput of MS1 vs its BS distance, per-cell 3+3 bits, for several
        # fixed positions of the paired user.
        arms = [
            Arm(
                label=f"ms2_{d2:g}m",
                scenario=_two_cell_scenario(
                    FeedbackConfig(mode="per_cell", bits=[[3, 3], [3, 3]],
                                   codebook_kind="lloyd", training_seed=7103),
                    ms2_distance_m=d2,
                    master_seed=9301,
                ),
            )
            for d2 in DEFAULT_COMPANION_DISTANCES
        ]
        return Experiment(name="fig3", arms=arms)
    if name == "fig4":
        # Quantizer comparison at a matched 6-bit budget; paired user fixed at
        # the cell edge, identical geometry and seed across arms.
        ms2 = 250.0
        seed = 9401
        arms = [
            Arm(
                label="global_6bit",
                scenario=_two_cell_scenario(
                    FeedbackConfig(mode="global", global_bits=6,
                                   codebook_kind="lloyd", training_seed=7104),
                    ms2_distance_m=ms2,
                    master_seed=seed,
                ),
            ),
            Arm(
                label="per_cell_4_2",
                scenario=_two_cell_scenario(
                    FeedbackConfig(mode="per_cell", bits=[[4, 2], [2, 4]],
                                   codebook_kind="lloyd", training_seed=7104),
                    ms2_distance_m=ms2,
                    master_seed=seed,
                ),
            ),
            Arm(
                label="per_cell_3_3",
                scenario=_two_cell_scenario(
                    FeedbackConfig(mode="per_cell", bits=[[3, 3], [3, 3]],
                                   codebook_kind="lloyd", training_seed=7104),
                    ms2_distance_m=ms2,
                    master_seed=seed,
                ),
            ),
        ]
        return Experiment(name="fig4", arms=arms)
    if name == "fig5":
        # Random drops: two-cell cooperative transmission (per-cell 3+3)
        # against single-cell MU-MIMO with 8 antennas and one 6-bit codebook.
        # Per-user transmit power is identical in both scenarios, so the
        # single BS radiates twice the per-BS power of the cooperative pair.
        comp = Scenario(
            geometry=two_cell_line(),
            n_tx=4,
            n_users=2,
            placement=Placement(mode="random_uniform"),
            feedback=FeedbackConfig(mode="per_cell", bits=[[3, 3], [3, 3]],
                                    codebook_kind="lloyd", training_seed=7105),
            pairing=PairingPolicy(mode="always_pair"),
            trials=1000,
            drops=1000,
            trials_per_drop=20,
            master_seed=9501,
            retain_samples=True,
        )
        single = Scenario(
            geometry=single_cell(),
            n_tx=8,
            n_users=2,
            placement=Placement(mode="random_uniform"),
            feedback=FeedbackConfig(mode="global", global_bits=6,
                                    codebook_kind="lloyd", training_seed=7105),
            pairing=PairingPolicy(mode="always_pair"),
            trials=1000,
            drops=1000,
            trials_per_drop=20,
            master_seed=9501,
            retain_samples=True,
        )
        return Experiment(
            name="fig5",
            arms=[
                Arm(label="comp_per_cell_3_3", scenario=comp),
                Arm(label="single_cell_global_6bit", scenario=single),
            ],
        )
    raise ConfigurationError(f"unknown preset {name!r} (known: {', '.join(PRESET_NAMES)})")
