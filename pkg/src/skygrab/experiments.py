"""Monte Carlo estimation of capture success rates, parameter sweeps and the
named scenario library.

Seeding: every trial's randomness derives from SHA-256 of
``(master_seed, trial_index)``, split into independent per-subsystem streams
(initial sway, chaser start offset, gust, camera noise).  Trials are pure
functions of (config, trial seed): the same batch always reproduces bit for
bit, and trial outcomes do not depend on execution order.
"""

from __future__ import annotations

import copy
import hashlib
import itertools
import math
import random
from dataclasses import dataclass, field

from .config import RunConfig, build_run_config, merge_documents, set_by_path
from .dynamics import EngagementGeometry, Simulation, SimulationDiverged
from .mission import (
    ABORT,
    CAUSE_DIVERGED,
    DONE,
    MissionState,
    mission_step,
    resolve_failure_cause,
)
from .trace import TraceWriter

Z_95 = 1.959963984540054  # two-sided 95% normal quantile


def wilson_interval(successes: int, trials: int,
                    z: float = Z_95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion.

    Behaves sensibly at small n and near 0/1, unlike the normal
    approximation; always stays inside [0, 1] and contains the point
    estimate.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2.0 * trials)) / denom
    margin = (z / denom) * math.sqrt(p * (1.0 - p) / trials
                                     + z2 / (4.0 * trials * trials))
    # the bounds are exact at the boundaries; keep them there despite rounding
    lo = 0.0 if successes == 0 else max(0.0, min(center - margin, p))
    hi = 1.0 if successes == trials else min(1.0, max(center + margin, p))
    return (lo, hi)


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary labels."""
    text = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def trial_streams(master_seed: int, index: int) -> dict:
    base = derive_seed(master_seed, index)
    return {
        "draws": random.Random(derive_seed(base, "draws")),
        "gust": random.Random(derive_seed(base, "gust")),
        "camera": random.Random(derive_seed(base, "camera")),
    }


@dataclass(frozen=True)
class TrialOutcome:
    """Result record of one simulated capture attempt."""

    index: int
    success: bool
    terminal_phase: str
    failure_cause: str | None
    detach_time: float | None
    capture_time: float | None
    trace_ref: str | None = None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "success": self.success,
            "terminal_phase": self.terminal_phase,
            "failure_cause": self.failure_cause,
            "detach_time": self.detach_time,
            "capture_time": self.capture_time,
            "trace_ref": self.trace_ref,
        }


@dataclass(frozen=True)
class BatchResult:
    """Aggregate of a Monte Carlo batch."""

    trials: int
    successes: int
    estimate: float
    ci95: tuple[float, float]
    failure_histogram: dict
    config_hash: str
    master_seed: int
    outcomes: tuple = field(default_factory=tuple, repr=False)

    def to_dict(self, include_outcomes: bool = False) -> dict:
        out = {
            "trials": self.trials,
            "successes": self.successes,
            "estimate": self.estimate,
            "ci95": list(self.ci95),
            "failure_histogram": dict(sorted(self.failure_histogram.items())),
            "config_hash": self.config_hash,
            "master_seed": self.master_seed,
        }
        if include_outcomes:
            out["outcomes"] = [o.to_dict() for o in self.outcomes]
        return out


def run_trial(run: RunConfig, master_seed: int, index: int,
              trace_fh=None, trace_ref: str | None = None) -> TrialOutcome:
    """Simulate one capture attempt end to end.

    Per-trial uncertainty: initial sway angle (uniform up to the configured
    maximum, uniform azimuth), chaser start offset (normal per horizontal
    axis), the gust realization and the camera noise.  A diverged integration
    is recorded as a failed trial, never raised.
    """
    if run.encounter is None or run.mission is None:
        raise ValueError("run configuration lacks encounter/mission sections")
    streams = trial_streams(master_seed, index)
    draws = streams["draws"]
    enc = run.encounter
    sway = draws.uniform(0.0, math.radians(enc.initial_sway_max_deg))
    azimuth = draws.uniform(0.0, 2.0 * math.pi)
    std = enc.chaser.start_offset_std
    offset = (draws.gauss(0.0, std), draws.gauss(0.0, std), 0.0)

    geom = EngagementGeometry.from_design(run.design, run.target,
                                          enc.engagement)
    sim = Simulation(enc, geom, run.target, streams, sway_angle=sway,
                     sway_azimuth=azimuth, chaser_offset=offset)
    mission = MissionState()
    writer = TraceWriter(trace_fh) if trace_fh is not None else None
    events_written = 0
    max_steps = int(enc.duration / enc.timestep) + 2

    try:
        for _ in range(max_steps):
            sim.step_world()
            mission_step(mission, sim.world, sim, run.mission, enc.duration)
            if writer is not None:
                writer.write_step(sim.world, mission.phase)
                for ev in mission.events[events_written:]:
                    writer.write_event(ev)
                events_written = len(mission.events)
            if mission.terminal:
                break
        else:
            mission.abort_cause = resolve_failure_cause(mission, sim.world)
            mission.phase = ABORT
    except SimulationDiverged:
        mission.abort_cause = CAUSE_DIVERGED
        mission.phase = ABORT

    success = mission.phase == DONE
    return TrialOutcome(
        index=index,
        success=success,
        terminal_phase=mission.phase,
        failure_cause=None if success else mission.abort_cause,
        detach_time=sim.world.detach_time,
        capture_time=sim.world.capture_time,
        trace_ref=trace_ref,
    )


def run_batch(run: RunConfig, n_trials: int, master_seed: int,
              trace_dir=None) -> BatchResult:
    """Run ``n_trials`` independent trials and aggregate them.

    Trial i is fully determined by (config, master_seed, i); the aggregate is
    a pure reduction over the outcome list, so it is order-independent.
    With ``trace_dir`` set, each trial's trace lands under it keyed by the
    config hash.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    if run.encounter is None:
        raise ValueError("run configuration lacks an encounter section")
    cfg_hash = run.hash
    outcomes = []
    for i in range(n_trials):
        if trace_dir is not None:
            import os
            sub = os.path.join(trace_dir, cfg_hash[:16])
            os.makedirs(sub, exist_ok=True)
            name = f"trial_{i:05d}.csv"
            # record refs relative to the results directory: byte-identical
            # across reruns into different roots
            with open(os.path.join(sub, name), "w", encoding="utf-8",
                      newline="\n") as fh:
                outcomes.append(run_trial(
                    run, master_seed, i, trace_fh=fh,
                    trace_ref=f"{cfg_hash[:16]}/{name}"))
        else:
            outcomes.append(run_trial(run, master_seed, i))
    return summarize(outcomes, cfg_hash, master_seed)


def summarize(outcomes, config_hash: str, master_seed: int) -> BatchResult:
    n = len(outcomes)
    successes = sum(1 for o in outcomes if o.success)
    histogram: dict = {}
    for o in outcomes:
        if not o.success:
            histogram[o.failure_cause] = histogram.get(o.failure_cause, 0) + 1
    return BatchResult(
        trials=n, successes=successes, estimate=successes / n,
        ci95=wilson_interval(successes, n),
        failure_histogram=histogram, config_hash=config_hash,
        master_seed=master_seed, outcomes=tuple(outcomes))


# ---------------------------------------------------------------------------
# parameter sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepCell:
    index: int
    parameters: dict
    result: BatchResult

    def to_dict(self) -> dict:
        return {"index": self.index, "parameters": dict(self.parameters),
                "result": self.result.to_dict()}


@dataclass(frozen=True)
class SweepResult:
    parameter_paths: tuple
    cells: tuple

    def to_dict(self) -> dict:
        return {"parameter_paths": list(self.parameter_paths),
                "cells": [c.to_dict() for c in self.cells]}

    def render_table(self) -> str:
        headers = [p.split(".")[-1] for p in self.parameter_paths] + \
            ["trials", "successes", "estimate", "ci95_low", "ci95_high"]
        rows = []
        for cell in self.cells:
            r = cell.result
            rows.append([format(cell.parameters[p], "g")
                         for p in self.parameter_paths]
                        + [str(r.trials), str(r.successes),
                           f"{r.estimate:.3f}",
                           f"{r.ci95[0]:.3f}", f"{r.ci95[1]:.3f}"])
        widths = [max(len(h), *(len(row[i]) for row in rows))
                  for i, h in enumerate(headers)]
        lines = ["  ".join(h.rjust(w) for h, w in zip(headers, widths))]
        lines.append("  ".join("-" * w for w in widths))
        for row in rows:
            lines.append("  ".join(c.rjust(w) for c, w in zip(row, widths)))
        return "\n".join(lines)


def sweep(base_doc: dict, parameter_paths, value_grids, n_trials: int,
          seed: int, matched_seeds: bool = True) -> SweepResult:
    """Cartesian-product sweep over numeric config fields.

    Every (path, grid) pair is validated against the schema before any
    simulation starts.  With ``matched_seeds`` (the default) every cell uses
    the same per-trial seeds, which pins common random numbers across cells;
    otherwise cell i runs with ``seed + i``.  Either way, each cell is
    reproducible from (seed, cell index) alone.
    """
    paths = list(parameter_paths)
    grids = [list(g) for g in value_grids]
    if not paths or len(paths) != len(grids) or any(not g for g in grids):
        raise ValueError("sweep needs parameter paths with non-empty grids")
    # fail-closed validation of every path/value before running anything
    for path, grid in zip(paths, grids):
        for value in grid:
            probe = copy.deepcopy(base_doc)
            set_by_path(probe, path, value)
            build_run_config(probe)

    cells = []
    for idx, combo in enumerate(itertools.product(*grids)):
        doc = copy.deepcopy(base_doc)
        for path, value in zip(paths, combo):
            set_by_path(doc, path, value)
        run = build_run_config(doc)
        cell_seed = seed if matched_seeds else seed + idx
        result = run_batch(run, n_trials, cell_seed)
        cells.append(SweepCell(index=idx,
                               parameters=dict(zip(paths, combo)),
                               result=result))
    return SweepResult(parameter_paths=tuple(paths), cells=tuple(cells))


# ---------------------------------------------------------------------------
# scenario library
# ---------------------------------------------------------------------------

# The basket/arm/camera numbers of the built prototype, used by every bundled
# scenario and by the design examples.
PROTOTYPE_DESIGN = {
    "basket_top_diameter": 0.51,
    "basket_ring_diameter": 0.175,
    "frustum_height": 0.35,
    "truncated_height": 0.1828,
    "capture_width": 0.51,
    "capture_height": 0.175,
    "camera_drop": 0.15,
    "camera_fov_half_angle": 0.7853981633974483,
    "camera_planar_depth": 0.25,
    "arm_extension": 1.1,
    "elastic_modulus": 90e9,
    "area_moment": 2744e-12,
    "end_mass": 1.4,
    "hull_cross_section_area": 48e-6,
    "material_impact_strength": 92.9e3,
    "stowed_envelope": [1.15, 1.15, 0.5],
}

PROTOTYPE_TARGET = {
    "ball_mass": 0.06,
    "ball_diameter": 0.15,
    "detachment_force": 4.0,
    "detachment_distance": 0.015,
    "max_carrier_speed": 6.0,
}

_CALIBRATION_NOTE = (
    "disturbance and uncertainty magnitudes calibrated against the field "
    "campaign aggregate rates (8/10 static, 7/10 moving), then frozen; "
    "they are not measured inputs")


def _base_scenario() -> dict:
    return {
        "design": copy.deepcopy(PROTOTYPE_DESIGN),
        "target": copy.deepcopy(PROTOTYPE_TARGET),
        "requirements": {},
        "encounter": {
            "carrier": {
                "start": [0.0, 0.0, 3.0],
                "heading": 0.0,
                "segments": [{"type": "straight", "heading": 0.0,
                              "speed": 0.0, "duration": 60.0}],
            },
            "chaser": {
                "start": [-6.0, -1.1, 2.1875],
                "yaw": 0.0,
                "max_speed": 10.0,
                "max_accel": 6.0,
                "start_offset_std": 0.3,
            },
            "rod_length": 1.0,
            "initial_sway_max_deg": 10.0,
            "rod_damping": 0.03,
            "camera_noise_std": 0.01,
            "timestep": 0.002,
            "duration": 18.0,
            "disturbances": {
                "gust_sigma": 0.5,
                "gust_tau": 2.0,
                "downwash_peak": 12.0,
                "downwash_radius": 0.35,
                "downwash_decay_depth": 2.0,
                "ball_drag_coeff": 7.2667e-3,
            },
            "guidance": {},
            "engagement": {},
        },
        "mission": {
            "drop_box": {"center": [-4.0, -2.0, 0.4], "opening": [0.4, 0.4]},
        },
        "experiments": {
            "trials": 1000,
            "master_seed": 0,
            "provenance": _CALIBRATION_NOTE,
        },
    }


def scenario_library() -> dict:
    """Named, fully-specified scenario documents.

    * ``static_ball``: hovering carrier, the baseline field test.
    * ``straight_6ms``: carrier flying a straight line at the 6 m/s
      maximum target speed, chaser overtakes from behind.
    * ``curved_arc``: carrier on a constant-speed circular arc.
    * ``windy``: the static scenario under heavy gusts (3-sigma excursions
      reach the 12 m/s disturbance level where vibrations set in).
    """
    static = _base_scenario()

    straight = _base_scenario()
    straight["encounter"]["carrier"] = {
        "start": [-15.0, 0.0, 3.0],
        "heading": 0.0,
        "segments": [{"type": "straight", "heading": 0.0, "speed": 6.0,
                      "duration": 40.0}],
    }
    straight["encounter"]["chaser"]["start"] = [-19.0, -1.1, 2.1875]
    straight["encounter"]["guidance"]["engage_speed"] = 1.5
    straight["encounter"]["duration"] = 28.0
    straight["mission"]["drop_box"] = {"center": [40.0, -6.0, 0.4],
                                       "opening": [0.4, 0.4]}

    curved = _base_scenario()
    curved["encounter"]["carrier"] = {
        "start": [-10.0, 0.0, 3.0],
        "heading": 0.0,
        "segments": [{"type": "arc", "radius": 15.0, "angular_rate": 0.2,
                      "duration": 60.0}],
    }
    curved["encounter"]["chaser"]["start"] = [-14.0, -1.1, 2.1875]
    curved["encounter"]["guidance"]["engage_speed"] = 1.5
    curved["encounter"]["duration"] = 28.0
    curved["mission"]["drop_box"] = {"center": [10.0, 14.0, 0.4],
                                     "opening": [0.4, 0.4]}

    windy = _base_scenario()
    windy["encounter"]["disturbances"]["gust_sigma"] = 4.0
    windy["encounter"]["duration"] = 22.0

    return {
        "static_ball": static,
        "straight_6ms": straight,
        "curved_arc": curved,
        "windy": windy,
    }


def load_scenario(name: str) -> dict:
    lib = scenario_library()
    if name not in lib:
        raise KeyError(f"unknown scenario {name!r}; "
                       f"available: {', '.join(sorted(lib))}")
    return lib[name]
