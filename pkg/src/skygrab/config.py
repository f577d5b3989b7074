"""Configuration documents.

One JSON document describes a whole run, split into sections ``design``,
``target``, ``requirements``, ``encounter``, ``mission`` and ``experiments``
(all units SI, angles in rad unless a key says ``_deg``).  Validation is
fail-closed: unknown keys anywhere are rejected, so a typo in a sweep path
cannot silently do nothing.  Errors carry the JSON path of the offending
field.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass

from . import design as design_mod
from .design import DesignError, ManipulatorDesign, RequirementSet, TargetSpec
from .dynamics import (
    ArcSegment,
    ChaserSpec,
    DisturbanceSpec,
    DownwashParams,
    EncounterConfig,
    EngagementSpec,
    GuidanceSpec,
    GustParams,
    StraightSegment,
)
from .mission import SWITCH_POLICIES, DropBox, MissionConfig


class ConfigError(ValueError):
    """Invalid configuration document; ``path`` points at the bad field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


_REQUIRED = object()

# (kind, default); kind in {number, int, bool, string, vec3, vec2}
_SCHEMA = {
    "design": {
        "basket_top_diameter": ("number", _REQUIRED),
        "basket_ring_diameter": ("number", _REQUIRED),
        "frustum_height": ("number", _REQUIRED),
        "truncated_height": ("number", _REQUIRED),
        "capture_width": ("number", _REQUIRED),
        "capture_height": ("number", _REQUIRED),
        "camera_drop": ("number", _REQUIRED),
        "camera_fov_half_angle": ("number", _REQUIRED),
        "camera_planar_depth": ("number", _REQUIRED),
        "arm_extension": ("number", _REQUIRED),
        "elastic_modulus": ("number", _REQUIRED),
        "area_moment": ("number", _REQUIRED),
        "end_mass": ("number", _REQUIRED),
        "hull_cross_section_area": ("number", _REQUIRED),
        "material_impact_strength": ("number", _REQUIRED),
        "stowed_envelope": ("vec3", _REQUIRED),
    },
    "target": {
        "ball_mass": ("number", _REQUIRED),
        "ball_diameter": ("number", _REQUIRED),
        "detachment_force": ("number", _REQUIRED),
        "detachment_distance": ("number", design_mod.DEFAULT_DETACH_DISTANCE),
        "max_carrier_speed": ("number", 6.0),
    },
    "requirements": {
        "max_envelope": ("vec3", [1.2, 1.2, 0.5]),
        "required_detach_force": ("number", 4.0),
        "max_root_moment": ("number", 25.0),
        "max_deflection": ("number", 0.03),
        "payload_mass_limit": ("number", 0.15),
        "payload_diameter_limit": ("number", 0.2),
    },
    "encounter": {
        "carrier": {
            "start": ("vec3", _REQUIRED),
            "heading": ("number", 0.0),
            "segments": ("segments", _REQUIRED),
        },
        "chaser": {
            "start": ("vec3", _REQUIRED),
            "yaw": ("number", 0.0),
            "max_speed": ("number", 10.0),
            "max_accel": ("number", 6.0),
            "start_offset_std": ("number", 0.3),
        },
        "rod_length": ("number", 1.0),
        "initial_sway_max_deg": ("number", 10.0),
        "rod_damping": ("number", 0.02),
        "camera_noise_std": ("number", 0.01),
        "timestep": ("number", 0.002),
        "duration": ("number", 18.0),
        "disturbances": {
            "gust_sigma": ("number", 0.0),
            "gust_tau": ("number", 2.0),
            "downwash_peak": ("number", 12.0),
            "downwash_radius": ("number", 0.35),
            "downwash_decay_depth": ("number", 2.0),
            "ball_drag_coeff": ("number", 7.2667e-3),
        },
        "guidance": {
            "kp": ("number", 2.0),
            "kd": ("number", 2.8),
            "engage_speed": ("number", 1.7),
            "standoff": ("number", 1.5),
            "through_distance": ("number", 1.2),
            "lead_time": ("number", 0.25),
            "lookback": ("number", 0.25),
            "engage_range": ("number", 1.8),
        },
        "engagement": {
            "mount_height": ("number", -0.10),
            "sag_compensated": ("bool", True),
            "slab_half_thickness": ("number", 0.05),
            "contact_coupling": ("number", 3.0),
            "contact_force_cap": ("number", 25.0),
            "peel_factor": ("number", 0.5),
            "capture_speed_max": ("number", 2.5),
        },
    },
    "mission": {
        "debounce": ("number", 0.1),
        "switch_policy": ("string", "any"),
        "retry_max": ("int", 3),
        "confirm_timeout": ("number", 1.5),
        "hover_tolerance": ("number", 0.1),
        "hover_speed_max": ("number", 0.25),
        "drop_height": ("number", 0.5),
        "switch_contact_radius": ("number", 0.03),
        "drop_box": {
            "center": ("vec3", [-4.0, -2.0, 0.4]),
            "opening": ("vec2", [0.4, 0.4]),
        },
    },
    "experiments": {
        "trials": ("int", 100),
        "master_seed": ("int", 0),
        "keep_traces": ("bool", False),
        "provenance": ("string", ""),
    },
}

_SEGMENT_FIELDS = {
    "straight": {"type", "heading", "speed", "duration"},
    "arc": {"type", "radius", "angular_rate", "duration"},
}


def _check_scalar(kind: str, value, path: str):
    if kind == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(path, "must be finite")
        return float(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if kind == "string":
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if kind in ("vec3", "vec2"):
        n = 3 if kind == "vec3" else 2
        if (not isinstance(value, (list, tuple)) or len(value) != n
                or any(isinstance(v, bool) or not isinstance(v, (int, float))
                       for v in value)):
            raise ConfigError(path, f"expected an array of {n} numbers")
        return [float(v) for v in value]
    if kind == "segments":
        return _check_segments(value, path)
    raise AssertionError(f"unknown schema kind {kind}")


def _check_segments(value, path: str):
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected a non-empty array of path segments")
    out = []
    for i, seg in enumerate(value):
        p = f"{path}/{i}"
        if not isinstance(seg, dict):
            raise ConfigError(p, "expected a segment object")
        kind = seg.get("type")
        if kind not in _SEGMENT_FIELDS:
            raise ConfigError(f"{p}/type", "expected 'straight' or 'arc'")
        extra = set(seg) - _SEGMENT_FIELDS[kind]
        if extra:
            raise ConfigError(f"{p}/{sorted(extra)[0]}", "unknown key")
        missing = _SEGMENT_FIELDS[kind] - set(seg)
        if missing:
            raise ConfigError(f"{p}/{sorted(missing)[0]}", "missing required key")
        clean = {"type": kind}
        for key in sorted(_SEGMENT_FIELDS[kind] - {"type"}):
            clean[key] = _check_scalar("number", seg[key], f"{p}/{key}")
        out.append(clean)
    return out


def _normalize_level(schema: dict, doc: dict, path: str) -> dict:
    if not isinstance(doc, dict):
        raise ConfigError(path or "/", "expected an object")
    unknown = set(doc) - set(schema)
    if unknown:
        raise ConfigError(f"{path}/{sorted(unknown)[0]}", "unknown key")
    out = {}
    for key, spec in schema.items():
        sub_path = f"{path}/{key}"
        if isinstance(spec, dict):
            out[key] = _normalize_level(spec, doc.get(key, {}), sub_path)
        else:
            kind, default = spec
            if key in doc:
                out[key] = _check_scalar(kind, doc[key], sub_path)
            elif default is _REQUIRED:
                raise ConfigError(sub_path, "missing required key")
            else:
                out[key] = copy.deepcopy(default)
    return out


def normalize_document(doc: dict, sections=("design", "target", "requirements",
                                            "encounter", "mission",
                                            "experiments")) -> dict:
    """Validate ``doc`` against the schema and fill every default in.

    Only ``sections`` are required to be constructible; the rest are included
    when present.  Unknown sections or keys fail closed.
    """
    if not isinstance(doc, dict):
        raise ConfigError("/", "expected a JSON object at the top level")
    unknown = set(doc) - set(_SCHEMA)
    if unknown:
        raise ConfigError(f"/{sorted(unknown)[0]}", "unknown section")
    out = {}
    for section, schema in _SCHEMA.items():
        if section not in doc and section not in sections:
            continue
        out[section] = _normalize_level(schema, doc.get(section, {}),
                                        f"/{section}")
    return out


def merge_documents(base: dict, override: dict) -> dict:
    """Deep merge: override wins, nested dicts merge key-wise."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge_documents(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def config_hash(doc: dict) -> str:
    """Stable hash of a normalized document."""
    payload = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def set_by_path(doc: dict, dotted: str, value) -> None:
    """Assign a numeric field addressed as e.g. ``encounter.timestep`` or
    ``/encounter/timestep``.  Rejects unknown paths and non-numeric targets."""
    parts = [p for p in dotted.replace("/", ".").split(".") if p]
    if not parts:
        raise ConfigError("/", "empty parameter path")
    node = doc
    schema = _SCHEMA
    for i, part in enumerate(parts[:-1]):
        if not isinstance(schema, dict) or part not in schema:
            raise ConfigError("/" + "/".join(parts[:i + 1]), "unknown parameter path")
        schema = schema[part]
        node = node.setdefault(part, {})
    leaf = parts[-1]
    path = "/" + "/".join(parts)
    if not isinstance(schema, dict) or leaf not in schema:
        raise ConfigError(path, "unknown parameter path")
    spec = schema[leaf]
    if isinstance(spec, dict) or spec[0] not in ("number", "int"):
        raise ConfigError(path, "parameter path must address a numeric field")
    if spec[0] == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        node[leaf] = value
    else:
        node[leaf] = _check_scalar("number", value, path)


# ---------------------------------------------------------------------------
# document -> runtime objects
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentDefaults:
    trials: int
    master_seed: int
    keep_traces: bool
    provenance: str


@dataclass(frozen=True)
class RunConfig:
    """Validated runtime bundle built from one normalized document."""

    doc: dict
    design: ManipulatorDesign
    target: TargetSpec
    requirements: RequirementSet
    encounter: EncounterConfig | None
    mission: MissionConfig | None
    experiments: ExperimentDefaults | None

    @property
    def hash(self) -> str:
        return config_hash(self.doc)


def _build_segments(raw):
    segs = []
    for seg in raw:
        if seg["type"] == "straight":
            segs.append(StraightSegment(heading=seg["heading"],
                                        speed=seg["speed"],
                                        duration=seg["duration"]))
        else:
            segs.append(ArcSegment(radius=seg["radius"],
                                   angular_rate=seg["angular_rate"],
                                   duration=seg["duration"]))
    return tuple(segs)


def build_run_config(doc: dict, need_encounter: bool = True) -> RunConfig:
    """Normalize ``doc`` and construct the runtime objects.

    Field-level errors from the domain types are re-raised as
    :class:`ConfigError` with their JSON path.
    """
    sections = ("design", "target", "requirements")
    if need_encounter:
        sections = sections + ("encounter", "mission", "experiments")
    norm = normalize_document(doc, sections=sections)

    def build(section, ctor, **kwargs):
        try:
            return ctor(**kwargs)
        except DesignError as exc:
            raise ConfigError(f"/{section}/{exc.field}", str(exc)) from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"/{section}", str(exc)) from exc

    d = norm["design"]
    design = build("design", ManipulatorDesign,
                   basket_top_diameter=d["basket_top_diameter"],
                   basket_ring_diameter=d["basket_ring_diameter"],
                   frustum_height=d["frustum_height"],
                   truncated_height=d["truncated_height"],
                   capture_width=d["capture_width"],
                   capture_height=d["capture_height"],
                   camera_drop=d["camera_drop"],
                   camera_fov_half_angle=d["camera_fov_half_angle"],
                   camera_planar_depth=d["camera_planar_depth"],
                   arm_extension=d["arm_extension"],
                   elastic_modulus=d["elastic_modulus"],
                   area_moment=d["area_moment"],
                   end_mass=d["end_mass"],
                   hull_cross_section_area=d["hull_cross_section_area"],
                   material_impact_strength=d["material_impact_strength"],
                   stowed_envelope=tuple(d["stowed_envelope"]))
    t = norm["target"]
    target = build("target", TargetSpec,
                   ball_mass=t["ball_mass"], ball_diameter=t["ball_diameter"],
                   detachment_force=t["detachment_force"],
                   detachment_distance=t["detachment_distance"],
                   max_carrier_speed=t["max_carrier_speed"])
    r = norm["requirements"]
    requirements = build("requirements", RequirementSet,
                         max_envelope=tuple(r["max_envelope"]),
                         required_detach_force=r["required_detach_force"],
                         max_root_moment=r["max_root_moment"],
                         max_deflection=r["max_deflection"],
                         payload_mass_limit=r["payload_mass_limit"],
                         payload_diameter_limit=r["payload_diameter_limit"])

    encounter = mission = experiments = None
    if "encounter" in norm:
        e = norm["encounter"]
        dist = e["disturbances"]
        gd = e["guidance"]
        en = e["engagement"]
        segments = _build_segments(e["carrier"]["segments"])
        for i, seg in enumerate(segments):
            speed = seg.speed if isinstance(seg, StraightSegment) else seg.speed
            if speed > target.max_carrier_speed + 1e-9:
                raise ConfigError(
                    f"/encounter/carrier/segments/{i}/speed",
                    f"segment speed {speed:.3g} exceeds the target's maximum "
                    f"carrier speed {target.max_carrier_speed:.3g}")
        try:
            encounter = EncounterConfig(
                carrier_start=tuple(e["carrier"]["start"]),
                carrier_heading=e["carrier"]["heading"],
                carrier_segments=segments,
                rod_length=e["rod_length"],
                chaser=ChaserSpec(start=tuple(e["chaser"]["start"]),
                                  yaw=e["chaser"]["yaw"],
                                  max_speed=e["chaser"]["max_speed"],
                                  max_accel=e["chaser"]["max_accel"],
                                  start_offset_std=e["chaser"]["start_offset_std"]),
                guidance=GuidanceSpec(**gd),
                engagement=EngagementSpec(**en),
                disturbances=DisturbanceSpec(
                    gust=GustParams(sigma=dist["gust_sigma"],
                                    tau=dist["gust_tau"]),
                    downwash=DownwashParams(
                        peak=dist["downwash_peak"],
                        radius=dist["downwash_radius"],
                        decay_depth=dist["downwash_decay_depth"]),
                    ball_drag_coeff=dist["ball_drag_coeff"]),
                camera_noise_std=e["camera_noise_std"],
                initial_sway_max_deg=e["initial_sway_max_deg"],
                rod_damping=e["rod_damping"],
                timestep=e["timestep"],
                duration=e["duration"])
        except ValueError as exc:
            key = "timestep" if "timestep" in str(exc) else "rod_length"
            raise ConfigError(f"/encounter/{key}", str(exc)) from exc
        if encounter.build_path().duration + 1e-9 < encounter.duration:
            raise ConfigError("/encounter/duration",
                              "carrier path is shorter than the duration")

        m = norm["mission"]
        box = m["drop_box"]
        mission = build("mission", MissionConfig,
                        drop_box=DropBox(center=tuple(box["center"]),
                                         opening=tuple(box["opening"])),
                        debounce=m["debounce"],
                        switch_policy=m["switch_policy"],
                        retry_max=m["retry_max"],
                        confirm_timeout=m["confirm_timeout"],
                        hover_tolerance=m["hover_tolerance"],
                        hover_speed_max=m["hover_speed_max"],
                        drop_height=m["drop_height"],
                        switch_contact_radius=m["switch_contact_radius"])
        if mission.switch_policy not in SWITCH_POLICIES:
            raise ConfigError("/mission/switch_policy", "unknown switch policy")

        x = norm["experiments"]
        if x["trials"] < 1:
            raise ConfigError("/experiments/trials", "must be at least 1")
        experiments = ExperimentDefaults(
            trials=x["trials"], master_seed=x["master_seed"],
            keep_traces=x["keep_traces"], provenance=x["provenance"])

    return RunConfig(doc=norm, design=design, target=target,
                     requirements=requirements, encounter=encounter,
                     mission=mission, experiments=experiments)


def bundled_config_path(name: str) -> str:
    """Filesystem path of a bundled example config.

    ``name`` is e.g. ``paper_design.json`` or ``scenarios/static_ball.json``.
    """
    from importlib import resources
    root = resources.files("skygrab") / "data"
    path = root.joinpath(name)
    if not path.is_file():
        raise ConfigError("/", f"no bundled config named {name!r}")
    return str(path)


def load_document(path: str) -> dict:
    """Read a JSON config document (or a run manifest; its resolved config is
    then used, which makes any run reproducible from its manifest alone)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError("/", f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("/", f"invalid JSON in {path}: {exc}") from exc
    if isinstance(doc, dict) and "resolved_config" in doc:
        doc = doc["resolved_config"]
    if not isinstance(doc, dict):
        raise ConfigError("/", "expected a JSON object at the top level")
    return doc
