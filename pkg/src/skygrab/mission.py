"""Event-driven mission executive for the capture-and-deposit flow.

Phases: SEARCH -> APPROACH -> ENGAGE -> CONFIRM -> TRANSPORT -> DROP -> DONE,
with ABORT reachable from anywhere.  The transition relation is deliberately
small:

* SEARCH -> APPROACH       on the first valid camera measurement
* APPROACH -> ENGAGE       once the capture window is inside engagement range
* ENGAGE -> CONFIRM        on magnet detachment
* CONFIRM -> TRANSPORT     on a debounced grab from the detector switches
* CONFIRM -> SEARCH        retry on timeout with the ball lost
* TRANSPORT -> DROP        hovering within tolerance over the drop box
* DROP -> DONE             captured ball crosses the box opening
* any -> ABORT             retries exhausted or mission duration exceeded

The servo is open only while the mission is in DROP.  A grab can only ever be
reported for a ball resting on the detector plate, never for an attached one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .dynamics import (
    ATTACHED,
    CAPTURED,
    DETACHED,
    DROPPED,
    LOST,
    GuidanceDirective,
    Simulation,
    WorldState,
)

SEARCH = "SEARCH"
APPROACH = "APPROACH"
ENGAGE = "ENGAGE"
CONFIRM = "CONFIRM"
TRANSPORT = "TRANSPORT"
DROP = "DROP"
DONE = "DONE"
ABORT = "ABORT"

TERMINAL_PHASES = (DONE, ABORT)

SERVO_CLOSED = "closed"
SERVO_OPEN = "open"

# failure causes (exactly one is assigned to an unsuccessful trial)
CAUSE_NEVER_DETECTED = "never-detected"
CAUSE_ENGAGE_TIMEOUT = "engage-timeout"
CAUSE_DETACH_FAILED = "detach-failed"
CAUSE_BALL_LOST = "ball-lost"
CAUSE_DROP_MISSED = "drop-missed"
CAUSE_DIVERGED = "diverged"

SWITCH_POLICIES = ("any", "majority", "all")


@dataclass(frozen=True)
class DropBox:
    """Deposit box, described by the center of its opening rectangle."""

    center: tuple[float, float, float]  # world, top-opening center
    opening: tuple[float, float]        # (x extent, y extent), m

    def __post_init__(self):
        if not (self.opening[0] > 0 and self.opening[1] > 0):
            raise ValueError("box opening dimensions must be positive")

    def contains(self, x: float, y: float) -> bool:
        return (abs(x - self.center[0]) <= self.opening[0] / 2.0
                and abs(y - self.center[1]) <= self.opening[1] / 2.0)


@dataclass(frozen=True)
class MissionConfig:
    drop_box: DropBox
    debounce: float = 0.1           # s a switch pattern must persist
    switch_policy: str = "any"      # any | majority | all
    retry_max: int = 3
    confirm_timeout: float = 1.5    # s to wait for the grab signal
    hover_tolerance: float = 0.1    # m horizontal, ring center over the box
    hover_speed_max: float = 0.25   # m/s, settle gate for the drop
    drop_height: float = 0.5        # m above the box opening
    switch_contact_radius: float = 0.03  # m, footprint of the resting ball

    def __post_init__(self):
        if self.switch_policy not in SWITCH_POLICIES:
            raise ValueError(f"unknown switch policy {self.switch_policy!r}")


@dataclass
class MissionEvent:
    t: float
    kind: str    # phase | switch | servo
    detail: str


@dataclass
class MissionState:
    phase: str = SEARCH
    phase_entry_t: float = 0.0
    retries: int = 0
    switches: tuple[bool, bool, bool] = (False, False, False)
    servo: str = SERVO_CLOSED
    abort_cause: str | None = None
    grab_since: float | None = None
    grab_time: float | None = None
    hold_velocity: tuple | None = None
    drop_crossed: bool = False
    drop_missed: bool = False
    prev_ball_pos: tuple | None = None
    events: list[MissionEvent] = field(default_factory=list)

    @property
    def terminal(self) -> bool:
        return self.phase in TERMINAL_PHASES

    def _enter(self, phase: str, t: float):
        self.events.append(MissionEvent(t, "phase", f"{self.phase}->{phase}"))
        self.phase = phase
        self.phase_entry_t = t

    def _set_servo(self, state: str, t: float):
        if state != self.servo:
            self.events.append(MissionEvent(t, "servo", state))
            self.servo = state

    def _set_switches(self, states: tuple[bool, bool, bool], t: float):
        if states != self.switches:
            for i, (old, new) in enumerate(zip(self.switches, states)):
                if old != new:
                    self.events.append(MissionEvent(
                        t, "switch", f"s{i}={'closed' if new else 'open'}"))
            self.switches = states


def detector_update(rest_offset, ring_radius: float,
                    contact_radius: float) -> tuple[bool, bool, bool]:
    """Switch closures for a ball resting on the detector plate.

    The plate is split into three 120-degree sectors, one limit switch each.
    A switch closes when the resting ball's contact disc overlaps its sector.
    ``rest_offset`` is the (x, y) of the ball center relative to the ring
    center, or None when nothing rests on the plate.
    """
    if rest_offset is None:
        return (False, False, False)
    x, y = rest_offset
    d = math.hypot(x, y)
    if d > ring_radius + contact_radius:
        return (False, False, False)
    if d <= contact_radius:
        return (True, True, True)  # disc covers the plate center: every sector
    phi = math.atan2(y, x)
    half = math.asin(min(1.0, contact_radius / d))
    out = []
    for i in range(3):
        lo = -math.pi / 3.0 + i * (2.0 * math.pi / 3.0)
        hi = lo + 2.0 * math.pi / 3.0
        # angular distance from the disc center to the sector interval
        mid = (lo + hi) / 2.0
        delta = abs((phi - mid + math.pi) % (2.0 * math.pi) - math.pi)
        out.append(delta <= (hi - lo) / 2.0 + half)
    return tuple(out)


def _grab_ok(switches, policy: str) -> bool:
    n = sum(switches)
    if policy == "any":
        return n >= 1
    if policy == "majority":
        return n >= 2
    return n == 3


def release_check(trajectory, box: DropBox) -> bool:
    """True when the falling ball's center crosses the box opening plane
    inside the opening rectangle.  ``trajectory`` is a sequence of (x, y, z)
    samples after servo open, ordered in time."""
    z_plane = box.center[2]
    prev = None
    for x, y, z in trajectory:
        if prev is not None and prev[2] >= z_plane > z:
            frac = (prev[2] - z_plane) / (prev[2] - z)
            cx = prev[0] + (x - prev[0]) * frac
            cy = prev[1] + (y - prev[1]) * frac
            return box.contains(cx, cy)
        prev = (x, y, z)
    return False


def resolve_failure_cause(mission: MissionState, world: WorldState) -> str:
    """Single failure cause for an unsuccessful trial."""
    if mission.drop_missed or world.status == DROPPED:
        return CAUSE_DROP_MISSED
    if world.status == CAPTURED:
        return CAUSE_DROP_MISSED  # had the ball, never delivered it
    if world.status in (LOST, DETACHED):
        return CAUSE_BALL_LOST
    if world.detach_work > 0.0:
        return CAUSE_DETACH_FAILED
    if world.meas_count > 0:
        return CAUSE_ENGAGE_TIMEOUT
    return CAUSE_NEVER_DETECTED


def mission_step(mission: MissionState, world: WorldState, sim: Simulation,
                 cfg: MissionConfig, duration: float) -> MissionState:
    """Advance the mission executive one tick against the stepped world.

    Mutates ``mission`` (and the simulation's guidance directive; opening the
    servo releases the ball in the world).  Deterministic: the successor is a
    pure function of (mission, world, dt).
    """
    if mission.terminal:
        return mission
    t = world.t

    # detector switches: only a free ball resting on the plate can close them
    if world.status == CAPTURED:
        states = detector_update(world.rest_offset, sim.geom.ring_radius,
                                 cfg.switch_contact_radius)
    else:
        states = (False, False, False)
    mission._set_switches(states, t)
    if _grab_ok(states, cfg.switch_policy):
        if mission.grab_since is None:
            mission.grab_since = t
    else:
        mission.grab_since = None
    grab = (mission.grab_since is not None
            and t - mission.grab_since >= cfg.debounce - 1e-12)
    if grab and mission.grab_time is None:
        mission.grab_time = t

    # duration guard: any phase can abort
    if t >= duration:
        mission.abort_cause = resolve_failure_cause(mission, world)
        mission._set_servo(SERVO_CLOSED, t)
        mission._enter(ABORT, t)
        sim.directive = GuidanceDirective(mode="hold_velocity",
                                          velocity=(0.0, 0.0, 0.0))
        return mission

    phase = mission.phase
    if phase == SEARCH:
        sim.directive = GuidanceDirective(mode="loiter",
                                          point=sim.window_center_world())
        if world.last_meas is not None and world.last_meas[0] >= t - sim.dt / 2:
            mission._enter(APPROACH, t)
            sim.directive = GuidanceDirective(mode="pursue")

    elif phase == APPROACH:
        sim.directive = GuidanceDirective(mode="pursue")
        track = _fresh_track(sim, t)
        if track is not None:
            wx, wy, wz = sim.window_center_world()
            if math.dist(track, (wx, wy, wz)) <= sim.cfg.guidance.engage_range:
                mission._enter(ENGAGE, t)
                sim.directive = GuidanceDirective(mode="engage")

    elif phase == ENGAGE:
        sim.directive = GuidanceDirective(mode="engage")
        if world.status != ATTACHED:
            mission.hold_velocity = world.chaser_vel
            mission._enter(CONFIRM, t)
            sim.directive = GuidanceDirective(
                mode="hold_velocity",
                velocity=_coast_velocity(mission, sim, 0.0))

    elif phase == CONFIRM:
        sim.directive = GuidanceDirective(
            mode="hold_velocity",
            velocity=_coast_velocity(mission, sim, t - mission.phase_entry_t))
        if grab:
            mission._enter(TRANSPORT, t)
        elif t - mission.phase_entry_t > cfg.confirm_timeout and \
                world.status == LOST:
            if mission.retries < cfg.retry_max:
                mission.retries += 1
                mission._enter(SEARCH, t)
                sim.directive = GuidanceDirective(
                    mode="loiter", point=sim.window_center_world())
            else:
                mission.abort_cause = resolve_failure_cause(mission, world)
                mission._set_servo(SERVO_CLOSED, t)
                mission._enter(ABORT, t)

    elif phase == TRANSPORT:
        target = _hover_point(sim, cfg)
        sim.directive = GuidanceDirective(mode="goto", point=target)
        rx, ry, _ = sim.ring_center_world()
        speed = math.sqrt(sum(v * v for v in world.chaser_vel))
        if (math.hypot(rx - cfg.drop_box.center[0],
                       ry - cfg.drop_box.center[1]) <= cfg.hover_tolerance
                and speed <= cfg.hover_speed_max):
            mission._enter(DROP, t)
            mission._set_servo(SERVO_OPEN, t)
            sim.release_ball()
            mission.prev_ball_pos = world.ball_pos

    elif phase == DROP:
        sim.directive = GuidanceDirective(mode="goto",
                                          point=_hover_point(sim, cfg))
        z_plane = cfg.drop_box.center[2]
        bx, by, bz = world.ball_pos
        prev = mission.prev_ball_pos
        if prev is not None and not mission.drop_crossed and \
                prev[2] >= z_plane > bz:
            mission.drop_crossed = True
            frac = (prev[2] - z_plane) / (prev[2] - bz)
            cx = prev[0] + (bx - prev[0]) * frac
            cy = prev[1] + (by - prev[1]) * frac
            if cfg.drop_box.contains(cx, cy):
                mission._set_servo(SERVO_CLOSED, t)
                mission._enter(DONE, t)
                sim.directive = GuidanceDirective(mode="hold_velocity",
                                                  velocity=(0.0, 0.0, 0.0))
            else:
                mission.drop_missed = True
        mission.prev_ball_pos = world.ball_pos

    return mission


def _coast_velocity(mission: MissionState, sim: Simulation, elapsed: float):
    """Velocity target while the ball falls into the basket.

    The freed ball coasts against quadratic drag; the chaser mimics that
    decay (v(t) = v0 / (1 + (k/m) v0 t) horizontally, altitude held) so the
    basket advances over the falling ball at the designed relative speed
    instead of running away from it.
    """
    v0 = mission.hold_velocity or (0.0, 0.0, 0.0)
    speed = math.hypot(v0[0], v0[1])
    if speed < 1e-9:
        return (0.0, 0.0, 0.0)
    c = sim.cfg.disturbances.ball_drag_coeff / sim.target.ball_mass
    scale = 1.0 / (1.0 + c * speed * elapsed)
    return (v0[0] * scale, v0[1] * scale, 0.0)


def _fresh_track(sim: Simulation, t: float):
    hist = sim.meas_history
    if not hist:
        return None
    t_last, p_last = hist[-1]
    if t - t_last > sim.cfg.guidance.lookback:
        return None
    return p_last


def _hover_point(sim: Simulation, cfg: MissionConfig):
    """Window-center target that puts the ring center over the box."""
    bx, by, bz = cfg.drop_box.center
    # goto targets are expressed for the window center; shift so that the
    # ring center (where the ball sits) ends up over the box
    wx, wy, wz = sim.window_offset
    rx, ry, rz = sim.ring_offset
    return (bx + (wx - rx), by + (wy - ry),
            bz + cfg.drop_height + (wz - rz))
