"""Closed-form design calculations for the passive capture basket.

Everything here is a pure function of the geometry/material numbers: frustum
grab volume, frontal capture area, camera placement, impact/detachment work,
required impact strength, cantilever sag and root moment.  ``evaluate_design``
bundles the individual results into a machine-readable report with one
pass/fail verdict per requirement.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

GRAVITY = 9.81  # m/s^2

# Impact strength of birch plywood, the hull material of the built prototype.
BIRCH_IMPACT_STRENGTH = 92.9e3  # J/m^2

# Grab volume measured from the CAD model of the as-built basket (the mesh is
# let out below the frustum during manufacturing).  Carried as documentation;
# all computed volumes here use the frustum approximation.
CAD_GRAB_VOLUME = 52.08e-3  # m^3

# Magnet separation travel used when a target does not specify one.
DEFAULT_DETACH_DISTANCE = 0.015  # m

# Shortest admissible arm: keeps the basket clear of the propeller disc.
MIN_ARM_EXTENSION = 0.3  # m

VERDICT_PASS = "pass"
VERDICT_FAIL = "fail"
VERDICT_NA = "not-applicable"


class DesignError(ValueError):
    """Invalid design/target/requirement input, with the offending field."""

    def __init__(self, fld: str, message: str):
        super().__init__(f"{fld}: {message}")
        self.field = fld


def _require_positive(name: str, value: float) -> None:
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise DesignError(name, f"must be a positive finite number, got {value!r}")


@dataclass(frozen=True)
class ManipulatorDesign:
    """Geometry, materials and masses of the basket + arm + camera assembly.

    Lengths in m, areas in m^2, E in Pa, I in m^4, masses in kg, impact
    strength in J/m^2, angles in rad.
    """

    basket_top_diameter: float     # wide opening of the frustum
    basket_ring_diameter: float    # detector ring at the frustum bottom
    frustum_height: float          # full frustum depth, top plane to ring
    truncated_height: float        # removed apex height (documentation only)
    capture_width: float           # frontal engagement rectangle
    capture_height: float
    camera_drop: float             # camera below the basket top plane
    camera_fov_half_angle: float   # rad
    camera_planar_depth: float     # camera-to-opening planar depth
    arm_extension: float           # sideways arm length
    elastic_modulus: float         # arm material E, Pa
    area_moment: float             # arm cross-section I, m^4
    end_mass: float                # basket + accessories, end-loaded
    hull_cross_section_area: float  # detaching hull section opposing impact
    material_impact_strength: float  # J/m^2
    stowed_envelope: tuple[float, float, float]  # (length, width, height), arm retracted

    def __post_init__(self):
        for name in (
            "basket_top_diameter", "basket_ring_diameter", "frustum_height",
            "truncated_height", "capture_width", "capture_height",
            "camera_drop", "camera_planar_depth", "arm_extension",
            "elastic_modulus", "area_moment", "end_mass",
            "hull_cross_section_area", "material_impact_strength",
        ):
            _require_positive(name, getattr(self, name))
        if len(self.stowed_envelope) != 3:
            raise DesignError("stowed_envelope", "must have 3 entries")
        for i, v in enumerate(self.stowed_envelope):
            _require_positive(f"stowed_envelope[{i}]", v)
        if not self.basket_ring_diameter < self.basket_top_diameter:
            raise DesignError("basket_ring_diameter",
                              "must be smaller than basket_top_diameter")
        if not self.truncated_height < self.frustum_height:
            raise DesignError("truncated_height",
                              "must be smaller than frustum_height")
        if not 0.0 < self.camera_fov_half_angle < math.pi / 2:
            raise DesignError("camera_fov_half_angle",
                              "must lie in (0, pi/2)")
        if self.arm_extension < MIN_ARM_EXTENSION:
            raise DesignError(
                "arm_extension",
                f"must be at least {MIN_ARM_EXTENSION} m to clear the "
                f"propeller disc")


@dataclass(frozen=True)
class TargetSpec:
    """The suspended ball and its magnetic mount."""

    ball_mass: float           # kg
    ball_diameter: float       # m
    detachment_force: float    # N, magnet holding threshold
    detachment_distance: float = DEFAULT_DETACH_DISTANCE  # m, separation travel
    max_carrier_speed: float = 6.0  # m/s

    def __post_init__(self):
        for name in ("ball_mass", "ball_diameter", "detachment_force",
                     "detachment_distance", "max_carrier_speed"):
            _require_positive(name, getattr(self, name))

    @property
    def ball_radius(self) -> float:
        return self.ball_diameter / 2.0


@dataclass(frozen=True)
class RequirementSet:
    """Numeric limits a design must satisfy."""

    max_envelope: tuple[float, float, float] = (1.2, 1.2, 0.5)  # m, stowed
    required_detach_force: float = 4.0   # N the mechanism must exert
    max_root_moment: float = 25.0        # N*m, platform limit (configurable)
    max_deflection: float = 0.03         # m, arm-tip sag tolerance
    payload_mass_limit: float = 0.15     # kg
    payload_diameter_limit: float = 0.2  # m

    def __post_init__(self):
        if len(self.max_envelope) != 3:
            raise DesignError("max_envelope", "must have 3 entries")
        for i, v in enumerate(self.max_envelope):
            _require_positive(f"max_envelope[{i}]", v)
        for name in ("required_detach_force", "max_root_moment",
                     "max_deflection", "payload_mass_limit",
                     "payload_diameter_limit"):
            _require_positive(name, getattr(self, name))


def grab_volume_approx(d1: float, d2: float, h: float) -> float:
    """Frustum approximation of the basket interior volume, m^3.

    ``d1``/``d2`` are the top/bottom diameters, ``h`` the full frustum height.
    """
    if not d1 >= d2 > 0:
        raise ValueError(f"diameters must satisfy d1 >= d2 > 0, got {d1}, {d2}")
    if not h > 0:
        raise ValueError(f"height must be positive, got {h}")
    return (math.pi * h / 12.0) * (d1 * d1 + d1 * d2 + d2 * d2)


def capture_area(width: float, height: float) -> float:
    """Frontal engagement rectangle area, m^2."""
    if not (width > 0 and height > 0):
        raise ValueError(f"width and height must be positive, got {width}, {height}")
    return width * height


def min_basket_opening(h: float, theta: float) -> float:
    """Smallest opening that keeps the camera view clear, m.

    ``h`` is the planar depth from the camera to the opening plane and
    ``theta`` the half field-of-view angle.
    """
    if not h > 0:
        raise ValueError(f"planar depth must be positive, got {h}")
    if not 0.0 < theta < math.pi / 2:
        raise ValueError(f"half FoV angle must lie in (0, pi/2), got {theta}")
    return 2.0 * h * math.tan(theta)


def camera_placement_ok(h_c: float, r: float) -> bool:
    """True when the camera sits at least one ball radius below the top plane."""
    if not (h_c > 0 and r > 0):
        raise ValueError(f"camera drop and ball radius must be positive, got {h_c}, {r}")
    return h_c >= r


def impact_work(m: float, v: float) -> float:
    """Kinetic energy delivered by a ball of mass ``m`` at speed ``v``, J."""
    if not m > 0:
        raise ValueError(f"mass must be positive, got {m}")
    if v < 0:
        raise ValueError(f"speed must be non-negative, got {v}")
    return 0.5 * m * v * v


def detachment_work(f_d: float, distance: float) -> float:
    """Work to separate the magnet joint: force times separation travel, J."""
    if not (f_d > 0 and distance > 0):
        raise ValueError(f"force and distance must be positive, got {f_d}, {distance}")
    return f_d * distance


def required_impact_strength(w_total: float, area: float) -> float:
    """Impact strength the hull section must provide, J/m^2."""
    if w_total < 0:
        raise ValueError(f"total work must be non-negative, got {w_total}")
    if not area > 0:
        raise ValueError(f"area must be positive, got {area}")
    return w_total / area


def cantilever_deflection(force: float, d: float, e: float, i: float) -> float:
    """Tip sag of an end-loaded cantilever arm, m."""
    if force < 0:
        raise ValueError(f"tip load must be non-negative, got {force}")
    if not (d > 0 and e > 0 and i > 0):
        raise ValueError(f"d, E, I must all be positive, got {d}, {e}, {i}")
    return force * d ** 3 / (3.0 * e * i)


def root_moment(end_mass: float, arm: float, g: float = GRAVITY) -> float:
    """Static moment of the end-loaded arm about its mount, N*m."""
    if not (end_mass > 0 and arm > 0):
        raise ValueError(f"end mass and arm must be positive, got {end_mass}, {arm}")
    return end_mass * g * arm


@dataclass(frozen=True)
class CheckResult:
    """One named scalar with its requirement verdict."""

    value: float | bool | None
    unit: str
    verdict: str           # pass | fail | not-applicable
    inputs: dict = field(default_factory=dict)
    limit: float | None = None


@dataclass(frozen=True)
class DesignReport:
    """All design scalars plus verdicts; ``overall_pass`` is their conjunction."""

    results: dict[str, CheckResult]

    @property
    def overall_pass(self) -> bool:
        return all(r.verdict != VERDICT_FAIL for r in self.results.values())

    def value(self, name: str) -> float | bool | None:
        return self.results[name].value

    def to_dict(self) -> dict:
        out: dict = {"overall_pass": self.overall_pass, "results": {}}
        for name, r in self.results.items():
            entry: dict = {"value": r.value, "unit": r.unit, "verdict": r.verdict,
                           "inputs": dict(r.inputs)}
            if r.limit is not None:
                entry["limit"] = r.limit
            out["results"][name] = entry
        return out

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    def render_table(self) -> str:
        rows = []
        for name, r in self.results.items():
            if isinstance(r.value, bool):
                val = "yes" if r.value else "no"
            elif r.value is None:
                val = "-"
            else:
                val = f"{r.value:.6g}"
            limit = "" if r.limit is None else f"{r.limit:.6g}"
            rows.append((name, val, r.unit, limit, r.verdict))
        widths = [max(len(row[i]) for row in rows + [("result", "value", "unit", "limit", "verdict")])
                  for i in range(5)]
        header = ("result", "value", "unit", "limit", "verdict")
        lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
        lines.append("  ".join("-" * w for w in widths))
        for row in rows:
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
        lines.append("")
        lines.append(f"overall: {'PASS' if self.overall_pass else 'FAIL'}")
        return "\n".join(lines)


def _verdict(ok: bool) -> str:
    return VERDICT_PASS if ok else VERDICT_FAIL


def evaluate_design(design: ManipulatorDesign, target: TargetSpec,
                    req: RequirementSet) -> DesignReport:
    """Compute every design scalar and check it against the requirements.

    The report is a pure function of its inputs: identical arguments produce
    an identical report.
    """
    d = design
    t = target

    volume = grab_volume_approx(d.basket_top_diameter, d.basket_ring_diameter,
                                d.frustum_height)
    area = capture_area(d.capture_width, d.capture_height)
    opening = min_basket_opening(d.camera_planar_depth, d.camera_fov_half_angle)
    cam_ok = camera_placement_ok(d.camera_drop, t.ball_radius)
    w_imp = impact_work(t.ball_mass, t.max_carrier_speed)
    w_det = detachment_work(t.detachment_force, t.detachment_distance)
    w_tot = w_imp + w_det
    is_req = required_impact_strength(w_tot, d.hull_cross_section_area)
    safety = d.material_impact_strength / is_req
    tip_load = d.end_mass * GRAVITY
    sag = cantilever_deflection(tip_load, d.arm_extension, d.elastic_modulus,
                                d.area_moment)
    moment = root_moment(d.end_mass, d.arm_extension)

    envelope_ok = all(s <= m for s, m in zip(d.stowed_envelope, req.max_envelope))
    payload_ok = (t.ball_mass <= req.payload_mass_limit
                  and t.ball_diameter <= req.payload_diameter_limit)

    results = {
        "grab_volume_m3": CheckResult(
            volume, "m^3", VERDICT_NA,
            inputs={"d1": d.basket_top_diameter, "d2": d.basket_ring_diameter,
                    "h": d.frustum_height}),
        "cad_grab_volume_m3": CheckResult(
            CAD_GRAB_VOLUME, "m^3", VERDICT_NA,
            inputs={"source": "as-built CAD measurement"}),
        "capture_area_m2": CheckResult(
            area, "m^2", VERDICT_NA,
            inputs={"width": d.capture_width, "height": d.capture_height}),
        "min_basket_opening_m": CheckResult(
            opening, "m", _verdict(opening <= d.basket_top_diameter),
            inputs={"planar_depth": d.camera_planar_depth,
                    "half_angle": d.camera_fov_half_angle},
            limit=d.basket_top_diameter),
        "camera_placement": CheckResult(
            cam_ok, "", _verdict(cam_ok),
            inputs={"camera_drop": d.camera_drop, "ball_radius": t.ball_radius}),
        "impact_work_J": CheckResult(
            w_imp, "J", VERDICT_NA,
            inputs={"ball_mass": t.ball_mass, "speed": t.max_carrier_speed}),
        "detachment_work_J": CheckResult(
            w_det, "J", VERDICT_NA,
            inputs={"force": t.detachment_force,
                    "distance": t.detachment_distance}),
        "total_work_J": CheckResult(w_tot, "J", VERDICT_NA),
        "required_impact_strength_J_m2": CheckResult(
            is_req, "J/m^2",
            _verdict(d.material_impact_strength >= is_req),
            inputs={"total_work": w_tot, "area": d.hull_cross_section_area},
            limit=d.material_impact_strength),
        "impact_safety_factor": CheckResult(
            safety, "", VERDICT_NA,
            inputs={"material": d.material_impact_strength, "required": is_req}),
        "cantilever_deflection_m": CheckResult(
            sag, "m", _verdict(sag <= req.max_deflection),
            inputs={"tip_load": tip_load, "arm": d.arm_extension,
                    "E": d.elastic_modulus, "I": d.area_moment},
            limit=req.max_deflection),
        "root_moment_Nm": CheckResult(
            moment, "N*m", _verdict(moment <= req.max_root_moment),
            inputs={"end_mass": d.end_mass, "arm": d.arm_extension,
                    "g": GRAVITY},
            limit=req.max_root_moment),
        "envelope_fit": CheckResult(
            envelope_ok, "", _verdict(envelope_ok),
            inputs={"stowed": list(d.stowed_envelope),
                    "limit": list(req.max_envelope)}),
        "payload_capacity": CheckResult(
            payload_ok, "", _verdict(payload_ok),
            inputs={"ball_mass": t.ball_mass, "ball_diameter": t.ball_diameter,
                    "mass_limit": req.payload_mass_limit,
                    "diameter_limit": req.payload_diameter_limit}),
        "detach_force_rating": CheckResult(
            req.required_detach_force, "N",
            _verdict(req.required_detach_force >= t.detachment_force),
            inputs={"target_force": t.detachment_force}),
    }
    return DesignReport(results=results)
