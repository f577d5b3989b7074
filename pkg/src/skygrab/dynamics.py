"""Fixed-timestep simulation of the capture encounter.

World frame is ENU (z up).  The carrier drone follows a piecewise path with a
ball suspended from it on a rigid massless rod (spherical pendulum, two
angular degrees of freedom).  The chaser is a kinematic point with a yaw-fixed
body frame carrying the basket at the end of a sideways arm; it is driven by
acceleration commands from the guidance law and limited in speed and
acceleration.  Disturbances are a first-order Gauss-Markov gust per axis and
an axisymmetric downward rotor-jet under the chaser.

Step order inside :meth:`Simulation.step_world` is fixed:
disturbances -> dynamics -> detachment -> capture -> guidance.
The guidance command computed at step k is applied to the chaser during step
k+1, as is the engagement contact force.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

from .design import GRAVITY, ManipulatorDesign, TargetSpec

# Attachment status values; transitions are monotone along
# attached -> detached -> captured -> dropped, with lost terminal from detached.
ATTACHED = "attached"
DETACHED = "detached"
CAPTURED = "captured"
DROPPED = "dropped"
LOST = "lost"

_STATUS_ORDER = {ATTACHED: 0, DETACHED: 1, CAPTURED: 2, DROPPED: 3, LOST: 4}
_ALLOWED_TRANSITIONS = {
    (ATTACHED, DETACHED),
    (DETACHED, CAPTURED),
    (DETACHED, LOST),
    (CAPTURED, DROPPED),
}

# Integrator guard: angular rates beyond this are treated as a blown-up run.
MAX_PENDULUM_RATE = 1e3  # rad/s


class SimulationDiverged(RuntimeError):
    """Numerical blow-up of the pendulum integration."""


class PathRangeError(ValueError):
    """Time outside the configured carrier path."""


# ---------------------------------------------------------------------------
# carrier path
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StraightSegment:
    heading: float   # rad, world yaw of travel
    speed: float     # m/s, >= 0 (0 = hover)
    duration: float  # s


@dataclass(frozen=True)
class ArcSegment:
    radius: float        # m > 0
    angular_rate: float  # rad/s, sign sets turn direction
    duration: float      # s

    @property
    def speed(self) -> float:
        return abs(self.angular_rate) * self.radius


class CarrierPath:
    """Piecewise-smooth carrier trajectory at constant altitude.

    Heading is continuous across segments; each arc begins tangent to the
    previous direction of travel.
    """

    def __init__(self, start: tuple[float, float, float], heading: float,
                 segments: list[StraightSegment | ArcSegment]):
        if not segments:
            raise ValueError("carrier path needs at least one segment")
        self.start = tuple(float(v) for v in start)
        self.segments = list(segments)
        # Precompute entry (time, position, heading) per segment.
        self._entries = []
        t, pos, psi = 0.0, self.start, float(heading)
        for seg in self.segments:
            self._entries.append((t, pos, psi))
            if isinstance(seg, StraightSegment):
                psi_end = seg.heading
                pos = (pos[0] + seg.speed * seg.duration * math.cos(seg.heading),
                       pos[1] + seg.speed * seg.duration * math.sin(seg.heading),
                       pos[2])
                psi = psi_end
            else:
                omega = seg.angular_rate
                # center sits 90 deg to the left for omega>0, right for omega<0
                side = 1.0 if omega >= 0 else -1.0
                cx = pos[0] - side * seg.radius * math.sin(psi)
                cy = pos[1] + side * seg.radius * math.cos(psi)
                dpsi = omega * seg.duration
                psi_new = psi + dpsi
                pos = (cx + side * seg.radius * math.sin(psi_new),
                       cy - side * seg.radius * math.cos(psi_new),
                       pos[2])
                psi = psi_new
            t += seg.duration
        self.duration = t
        # fast path for the common single-straight-segment case
        seg0 = self.segments[0]
        if len(self.segments) == 1 and isinstance(seg0, StraightSegment):
            self._line = (self.start, seg0.speed * math.cos(seg0.heading),
                          seg0.speed * math.sin(seg0.heading))
        else:
            self._line = None

    def _locate(self, t: float):
        if t < -1e-12 or t > self.duration + 1e-9:
            raise PathRangeError(
                f"t={t} outside carrier path [0, {self.duration}]")
        t = min(max(t, 0.0), self.duration)
        for (t0, pos, psi), seg in zip(reversed(self._entries),
                                       reversed(self.segments)):
            if t >= t0 - 1e-12:
                return t - t0, pos, psi, seg
        return 0.0, self._entries[0][1], self._entries[0][2], self.segments[0]

    def state(self, t: float):
        """Position and velocity at time ``t``."""
        line = self._line
        if line is not None and 0.0 <= t <= self.duration:
            (x0, y0, z0), vx, vy = line
            return ((x0 + vx * t, y0 + vy * t, z0), (vx, vy, 0.0))
        tau, pos, psi, seg = self._locate(t)
        if isinstance(seg, StraightSegment):
            c, s = math.cos(seg.heading), math.sin(seg.heading)
            return ((pos[0] + seg.speed * tau * c,
                     pos[1] + seg.speed * tau * s, pos[2]),
                    (seg.speed * c, seg.speed * s, 0.0))
        side = 1.0 if seg.angular_rate >= 0 else -1.0
        cx = pos[0] - side * seg.radius * math.sin(psi)
        cy = pos[1] + side * seg.radius * math.cos(psi)
        ang = psi + seg.angular_rate * tau
        v = seg.speed
        return ((cx + side * seg.radius * math.sin(ang),
                 cy - side * seg.radius * math.cos(ang), pos[2]),
                (v * math.cos(ang), v * math.sin(ang), 0.0))

    def accel(self, t: float):
        """Acceleration at time ``t`` (centripetal on arcs, zero on straights)."""
        if self._line is not None and 0.0 <= t <= self.duration:
            return (0.0, 0.0, 0.0)
        tau, pos, psi, seg = self._locate(t)
        if isinstance(seg, StraightSegment):
            return (0.0, 0.0, 0.0)
        ang = psi + seg.angular_rate * tau
        a = seg.speed * abs(seg.angular_rate)
        side = 1.0 if seg.angular_rate >= 0 else -1.0
        # centripetal acceleration points from the carrier toward the center
        return (-side * a * math.sin(ang), side * a * math.cos(ang), 0.0)


def carrier_state(path: CarrierPath, t: float):
    """Carrier position and velocity along ``path`` at time ``t``."""
    return path.state(t)


# ---------------------------------------------------------------------------
# spherical pendulum
# ---------------------------------------------------------------------------

@dataclass
class PendulumState:
    """Rod direction (unit vector, pivot to ball) and its rate.

    The two sway angles exposed by :meth:`angles` are the x/y gimbal tilts of
    the rod away from straight down; they are views of the internal unit
    vector and stay well defined for sway below 90 degrees.
    """

    q: tuple[float, float, float] = (0.0, 0.0, -1.0)
    w: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @staticmethod
    def from_sway(angle: float, azimuth: float) -> "PendulumState":
        """Rod tilted ``angle`` rad from vertical toward ``azimuth``, at rest."""
        s, c = math.sin(angle), math.cos(angle)
        return PendulumState(q=(s * math.cos(azimuth), s * math.sin(azimuth), -c))

    def angles(self) -> tuple[float, float]:
        qx, qy, qz = self.q
        phi = math.asin(max(-1.0, min(1.0, qy)))
        theta = math.atan2(-qx, -qz)
        return phi, theta

    def rates(self) -> tuple[float, float]:
        qx, qy, qz = self.q
        wx, wy, wz = self.w
        cphi = math.sqrt(max(1e-12, 1.0 - qy * qy))
        phi_dot = wy / cphi
        denom = max(1e-12, qx * qx + qz * qz)
        theta_dot = (qx * wz - qz * wx) / denom
        return phi_dot, theta_dot


@dataclass(frozen=True)
class PendulumParams:
    rod_length: float          # m
    ball_mass: float           # kg
    damping: float = 0.0       # N*s/m, viscous force opposing rod-relative motion
    gravity: float = GRAVITY


def pendulum_step(state: PendulumState, pivot_accel, disturbance_force,
                  dt: float, params: PendulumParams) -> PendulumState:
    """Advance the pendulum one step with classical 4th-order integration.

    ``pivot_accel`` and ``disturbance_force`` are held constant across the
    step (zero-order hold); the viscous damping force is evaluated on the
    intermediate states.  Raises :class:`SimulationDiverged` on blow-up.
    """
    L = params.rod_length
    m = params.ball_mass
    c = params.damping
    qx, qy, qz = state.q
    wx, wy, wz = state.w
    apx, apy, apz = pivot_accel
    fx, fy, fz = disturbance_force
    # constant part of the effective acceleration
    ux0 = fx / m - apx
    uy0 = fy / m - apy
    uz0 = fz / m - apz - params.gravity
    cLm = c * L / m

    def deriv(qx, qy, qz, wx, wy, wz):
        ux = ux0 - cLm * wx
        uy = uy0 - cLm * wy
        uz = uz0 - cLm * wz
        udq = ux * qx + uy * qy + uz * qz
        w2 = wx * wx + wy * wy + wz * wz
        ax = (ux - udq * qx) / L - w2 * qx
        ay = (uy - udq * qy) / L - w2 * qy
        az = (uz - udq * qz) / L - w2 * qz
        return ax, ay, az

    # RK4 stages
    a1 = deriv(qx, qy, qz, wx, wy, wz)
    h = dt / 2.0
    q2 = (qx + h * wx, qy + h * wy, qz + h * wz)
    w2_ = (wx + h * a1[0], wy + h * a1[1], wz + h * a1[2])
    a2 = deriv(*q2, *w2_)
    q3 = (qx + h * w2_[0], qy + h * w2_[1], qz + h * w2_[2])
    w3 = (wx + h * a2[0], wy + h * a2[1], wz + h * a2[2])
    a3 = deriv(*q3, *w3)
    q4 = (qx + dt * w3[0], qy + dt * w3[1], qz + dt * w3[2])
    w4 = (wx + dt * a3[0], wy + dt * a3[1], wz + dt * a3[2])
    a4 = deriv(*q4, *w4)

    six = dt / 6.0
    nqx = qx + six * (wx + 2.0 * (w2_[0] + w3[0]) + w4[0])
    nqy = qy + six * (wy + 2.0 * (w2_[1] + w3[1]) + w4[1])
    nqz = qz + six * (wz + 2.0 * (w2_[2] + w3[2]) + w4[2])
    nwx = wx + six * (a1[0] + 2.0 * (a2[0] + a3[0]) + a4[0])
    nwy = wy + six * (a1[1] + 2.0 * (a2[1] + a3[1]) + a4[1])
    nwz = wz + six * (a1[2] + 2.0 * (a2[2] + a3[2]) + a4[2])

    # project back onto the unit sphere (kills O(dt^5) constraint drift)
    norm = math.sqrt(nqx * nqx + nqy * nqy + nqz * nqz)
    nqx, nqy, nqz = nqx / norm, nqy / norm, nqz / norm
    rad = nwx * nqx + nwy * nqy + nwz * nqz
    nwx -= rad * nqx
    nwy -= rad * nqy
    nwz -= rad * nqz

    if nwx * nwx + nwy * nwy + nwz * nwz > MAX_PENDULUM_RATE ** 2:
        raise SimulationDiverged("pendulum rate exceeded limit")
    return PendulumState(q=(nqx, nqy, nqz), w=(nwx, nwy, nwz))


# ---------------------------------------------------------------------------
# disturbances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GustParams:
    sigma: float = 0.0  # m/s, stationary std per axis
    tau: float = 1.0    # s, correlation time


class GustProcess:
    """First-order Gauss-Markov wind velocity, one process per axis.

    Exact discretization: w' = w*exp(-dt/tau) + eta with eta sized so the
    stationary standard deviation is sigma.  A given rng stream yields an
    identical sequence on every run.
    """

    def __init__(self, params: GustParams, rng):
        self.params = params
        self.rng = rng
        self._dt = None
        self._a = 1.0
        self._s = 0.0
        if params.sigma > 0.0:
            self.state = (rng.gauss(0.0, params.sigma),
                          rng.gauss(0.0, params.sigma),
                          rng.gauss(0.0, params.sigma))
        else:
            self.state = (0.0, 0.0, 0.0)

    def step(self, dt: float) -> tuple[float, float, float]:
        p = self.params
        if p.sigma <= 0.0:
            return self.state
        if dt != self._dt:
            self._dt = dt
            self._a = math.exp(-dt / p.tau)
            self._s = p.sigma * math.sqrt(max(0.0, 1.0 - self._a * self._a))
        a, s = self._a, self._s
        g = self.rng.gauss
        wx, wy, wz = self.state
        self.state = (a * wx + g(0.0, s), a * wy + g(0.0, s), a * wz + g(0.0, s))
        return self.state


def gust_velocity(process: GustProcess, dt: float) -> tuple[float, float, float]:
    """Advance the gust process one step and return the wind velocity."""
    return process.step(dt)


@dataclass(frozen=True)
class DownwashParams:
    peak: float = 12.0        # m/s, jet speed on axis at the rotor plane
    radius: float = 0.35      # m, Gaussian radial scale
    decay_depth: float = 2.0  # m, e-folding depth below the rotor plane


def downwash_velocity(point, chaser_pos, params: DownwashParams):
    """Air velocity of the rotor jet at ``point`` (zero above the rotor plane).

    Downward axisymmetric jet centered on the chaser: Gaussian in radius,
    exponentially decaying with depth, full strength at the rotor plane.
    """
    depth = chaser_pos[2] - point[2]
    if depth <= 0.0 or params.peak <= 0.0:
        return (0.0, 0.0, 0.0)
    dx = point[0] - chaser_pos[0]
    dy = point[1] - chaser_pos[1]
    r2 = dx * dx + dy * dy
    w = params.peak * math.exp(-r2 / (2.0 * params.radius * params.radius)
                               - depth / params.decay_depth)
    return (0.0, 0.0, -w)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChaserSpec:
    start: tuple[float, float, float]
    yaw: float = 0.0
    max_speed: float = 10.0
    max_accel: float = 6.0
    start_offset_std: float = 0.3  # m, per horizontal axis, drawn per trial


@dataclass(frozen=True)
class GuidanceSpec:
    kp: float = 2.0
    kd: float = 2.8
    engage_speed: float = 1.7      # m/s sweep speed through the target
    standoff: float = 1.5          # m behind the ball during approach
    through_distance: float = 1.2  # m past the ball during the sweep
    lead_time: float = 0.25        # s of target-motion prediction
    lookback: float = 0.25         # s of measurement history for velocity fits
    engage_range: float = 1.8      # m, approach-to-engage handover distance


@dataclass(frozen=True)
class EngagementSpec:
    """Basket mounting and contact/retention model parameters."""

    mount_height: float = -0.10       # basket top plane relative to chaser CG, m
    sag_compensated: bool = True      # camera tilt trimmed for arm sag
    slab_half_thickness: float = 0.05  # contact slab half depth along body x, m
    contact_coupling: float = 3.0     # N per m/s of relative speed
    contact_force_cap: float = 25.0   # N
    peel_factor: float = 0.5          # direction dependence of the magnet threshold
    capture_speed_max: float = 2.5    # m/s, retention limit at the detector plate


@dataclass(frozen=True)
class DisturbanceSpec:
    gust: GustParams = field(default_factory=GustParams)
    downwash: DownwashParams = field(default_factory=DownwashParams)
    # Quadratic drag constant k in F = -k |v| v.  The default gives a
    # 0.15 m / 0.06 kg ball a terminal speed of ~9 m/s; set 0 to disable.
    ball_drag_coeff: float = 7.2667e-3  # N s^2/m^2


@dataclass(frozen=True)
class EncounterConfig:
    """Complete description of one encounter scenario."""

    carrier_start: tuple[float, float, float]
    carrier_heading: float
    carrier_segments: tuple
    rod_length: float
    chaser: ChaserSpec
    guidance: GuidanceSpec = field(default_factory=GuidanceSpec)
    engagement: EngagementSpec = field(default_factory=EngagementSpec)
    disturbances: DisturbanceSpec = field(default_factory=DisturbanceSpec)
    camera_noise_std: float = 0.01   # m, per body axis
    initial_sway_max_deg: float = 10.0
    rod_damping: float = 0.02        # N*s/m viscous rod-joint damping
    timestep: float = 0.002          # s, must lie in (0, 0.02]
    duration: float = 18.0           # s

    def __post_init__(self):
        if not 0.0 < self.timestep <= 0.02:
            raise ValueError(f"timestep must lie in (0, 0.02], got {self.timestep}")
        if self.rod_length <= 0.0:
            raise ValueError("rod_length must be positive")

    def build_path(self) -> CarrierPath:
        return CarrierPath(self.carrier_start, self.carrier_heading,
                           list(self.carrier_segments))


# ---------------------------------------------------------------------------
# engagement geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EngagementGeometry:
    """Basket/camera geometry in the chaser body frame (x forward, z up)."""

    basket_axis_body: tuple[float, float, float]  # top-plane center
    window_x: float          # contact plane ahead of the basket axis
    window_width: float
    window_height: float
    slab_half_thickness: float
    frustum_top_radius: float
    ring_radius: float
    frustum_depth: float
    ball_radius: float
    camera_body: tuple[float, float, float]
    camera_half_angle: float
    capture_speed_max: float

    @cached_property
    def tan_half_angle(self) -> float:
        return math.tan(self.camera_half_angle)

    @staticmethod
    def from_design(design: ManipulatorDesign, target: TargetSpec,
                    spec: EngagementSpec) -> "EngagementGeometry":
        sag = 0.0
        if not spec.sag_compensated:
            # uncompensated arm sag lowers the whole basket assembly
            from .design import cantilever_deflection
            sag = cantilever_deflection(design.end_mass * GRAVITY,
                                        design.arm_extension,
                                        design.elastic_modulus,
                                        design.area_moment)
        top_z = spec.mount_height - sag
        axis = (0.0, design.arm_extension, top_z)
        geom = EngagementGeometry(
            basket_axis_body=axis,
            window_x=design.basket_top_diameter / 2.0,
            window_width=design.capture_width,
            window_height=design.capture_height,
            slab_half_thickness=spec.slab_half_thickness,
            frustum_top_radius=design.basket_top_diameter / 2.0,
            ring_radius=design.basket_ring_diameter / 2.0,
            frustum_depth=design.frustum_height,
            ball_radius=target.ball_radius,
            camera_body=(0.0, design.arm_extension, top_z - design.camera_drop),
            camera_half_angle=design.camera_fov_half_angle,
            capture_speed_max=spec.capture_speed_max,
        )
        # the camera cone must contain the engagement window center
        wx = geom.window_x
        wz = (top_z - design.capture_height / 2.0) - geom.camera_body[2]
        if math.atan2(abs(wz), wx) > design.camera_fov_half_angle:
            raise ValueError("camera cone does not contain the capture window center")
        return geom

    @property
    def window_center_body(self) -> tuple[float, float, float]:
        ax, ay, az = self.basket_axis_body
        return (ax + self.window_x, ay, az - self.window_height / 2.0)

    @property
    def aim_body(self) -> tuple[float, float, float]:
        """Engagement reference the guidance steers at: the front rim, one
        ball radius (plus rim clearance) below the top plane.  Deliberately
        independent of the engagement rectangle size, so widening the
        rectangle does not move the flight path."""
        ax, ay, az = self.basket_axis_body
        return (ax + self.window_x, ay, az - self.ball_radius - 0.0125)

    @property
    def ring_center_body(self) -> tuple[float, float, float]:
        ax, ay, az = self.basket_axis_body
        return (ax, ay, az - self.frustum_depth)

    def frustum_radius_at(self, depth: float) -> float:
        f = min(max(depth / self.frustum_depth, 0.0), 1.0)
        return self.frustum_top_radius + (self.ring_radius - self.frustum_top_radius) * f


# ---------------------------------------------------------------------------
# world state
# ---------------------------------------------------------------------------

class WorldState:
    """Mutable state advanced by :meth:`Simulation.step_world`.

    Carries the spec'd kinematic state (chaser, carrier, pendulum, ball,
    attachment status, accumulated detachment work) plus the bookkeeping the
    stepper needs (pending contact force, frustum entry flag, last
    measurement, pending guidance command).
    """

    __slots__ = (
        "t", "n", "chaser_pos", "chaser_vel", "chaser_yaw",
        "carrier_pos", "carrier_vel", "pendulum", "rod_length",
        "ball_pos", "ball_vel", "status", "detach_work",
        "detach_time", "capture_time", "rest_offset",
        "contact_force", "contact_active", "entered_frustum",
        "prev_rel", "gust", "last_meas", "meas_count", "command",
        "grounded",
    )

    def __init__(self, chaser_pos, chaser_yaw, carrier_pos, carrier_vel,
                 pendulum: PendulumState, rod_length: float):
        self.t = 0.0
        self.n = 0
        self.chaser_pos = tuple(chaser_pos)
        self.chaser_vel = (0.0, 0.0, 0.0)
        self.chaser_yaw = float(chaser_yaw)
        self.carrier_pos = tuple(carrier_pos)
        self.carrier_vel = tuple(carrier_vel)
        self.pendulum = pendulum
        self.rod_length = float(rod_length)
        self.status = ATTACHED
        self.detach_work = 0.0
        self.detach_time = None
        self.capture_time = None
        self.rest_offset = None
        self.contact_force = (0.0, 0.0, 0.0)
        self.contact_active = False
        self.entered_frustum = False
        self.prev_rel = None
        self.gust = (0.0, 0.0, 0.0)
        self.last_meas = None   # (t, (mx, my, mz)) in body axes, camera origin
        self.meas_count = 0
        self.command = (0.0, 0.0, 0.0)
        self.grounded = False
        self._sync_attached_ball()

    def _sync_attached_ball(self):
        qx, qy, qz = self.pendulum.q
        wx, wy, wz = self.pendulum.w
        L = self.rod_length
        px, py, pz = self.carrier_pos
        vx, vy, vz = self.carrier_vel
        self.ball_pos = (px + L * qx, py + L * qy, pz + L * qz)
        self.ball_vel = (vx + L * wx, vy + L * wy, vz + L * wz)

    def set_status(self, new: str):
        if (self.status, new) not in _ALLOWED_TRANSITIONS:
            raise ValueError(f"illegal status transition {self.status} -> {new}")
        self.status = new

    def pendulum_angles(self) -> tuple[float, float]:
        return self.pendulum.angles()


# ---------------------------------------------------------------------------
# spec'd operations used by the stepper
# ---------------------------------------------------------------------------

def detachment_update(world: WorldState, contact_force, dt: float,
                      target: TargetSpec, peel_factor: float) -> None:
    """Progress magnet separation while the contact force beats the threshold.

    The pull-direction-dependent threshold is F_d*(beta + (1-beta)*|cos a|)
    with ``a`` the angle between the pull direction and the rod (magnet) axis;
    separation work accumulates as force times relative travel, and the joint
    lets go once the accumulated work reaches the detachment work budget.
    """
    if world.status != ATTACHED:
        return
    fx, fy, fz = contact_force
    fmag = math.sqrt(fx * fx + fy * fy + fz * fz)
    if fmag <= 0.0:
        return
    qx, qy, qz = world.pendulum.q
    cos_a = abs((fx * qx + fy * qy + fz * qz) / fmag)
    threshold = target.detachment_force * (
        peel_factor + (1.0 - peel_factor) * cos_a)
    if fmag < threshold:
        return
    bvx, bvy, bvz = world.ball_vel
    cvx, cvy, cvz = world.chaser_vel
    rvx, rvy, rvz = cvx - bvx, cvy - bvy, cvz - bvz
    rel = (rvx * fx + rvy * fy + rvz * fz) / fmag
    if rel <= 0.0:
        return
    world.detach_work += fmag * rel * dt
    if world.detach_work >= target.detachment_force * target.detachment_distance:
        world.set_status(DETACHED)
        world.detach_time = world.t


def capture_check(world: WorldState, geom: EngagementGeometry,
                  cos_yaw: float, sin_yaw: float) -> str | None:
    """Classify a detached ball against the basket frustum.

    Returns ``"captured"`` when the ball center crosses the detector ring
    plane inside the ring radius slowly enough to be retained, ``"lost"`` when
    it exits the frustum sides after entering or falls past the ring plane by
    more than one ball radius, else ``None``.
    """
    if world.status != DETACHED:
        return None
    bx, by, bz = world.ball_pos
    cx, cy, cz = world.chaser_pos
    dx, dy, dz = bx - cx, by - cy, bz - cz
    rx = cos_yaw * dx + sin_yaw * dy
    ry = -sin_yaw * dx + cos_yaw * dy
    ax, ay, az = geom.basket_axis_body
    ox = rx - ax
    oy = ry - ay
    depth = az - dz  # below the basket top plane
    prev = world.prev_rel
    world.prev_rel = (ox, oy, depth)

    horiz = math.hypot(ox, oy)
    inside_cone = 0.0 <= depth <= geom.frustum_depth and \
        horiz <= geom.frustum_radius_at(depth)
    if inside_cone:
        world.entered_frustum = True

    # ring-plane crossing from above
    if prev is not None and prev[2] <= geom.frustum_depth < depth:
        frac = (geom.frustum_depth - prev[2]) / (depth - prev[2])
        cross_x = prev[0] + (ox - prev[0]) * frac
        cross_y = prev[1] + (oy - prev[1]) * frac
        if math.hypot(cross_x, cross_y) <= geom.ring_radius:
            bvx, bvy, bvz = world.ball_vel
            cvx, cvy, cvz = world.chaser_vel
            v_impact = (cvz - bvz)  # descent rate relative to the basket
            if v_impact <= geom.capture_speed_max:
                world.set_status(CAPTURED)
                world.capture_time = world.t
                world.rest_offset = (cross_x, cross_y)
                return CAPTURED
    if world.entered_frustum and 0.0 <= depth < geom.frustum_depth \
            and horiz > geom.frustum_radius_at(depth):
        world.set_status(LOST)
        return LOST
    if depth > geom.frustum_depth + geom.ball_radius:
        world.set_status(LOST)
        return LOST
    if world.grounded:
        world.set_status(LOST)
        return LOST
    return None


def camera_measurement(world: WorldState, geom: EngagementGeometry,
                       noise_std: float, rng, cos_yaw: float,
                       sin_yaw: float):
    """Ball position in camera/body axes with additive noise, or None.

    The ball is visible while its center lies inside the forward camera cone.
    """
    bx, by, bz = world.ball_pos
    cx, cy, cz = world.chaser_pos
    kx, ky, kz = geom.camera_body
    camx = cx + cos_yaw * kx - sin_yaw * ky
    camy = cy + sin_yaw * kx + cos_yaw * ky
    camz = cz + kz
    dx, dy, dz = bx - camx, by - camy, bz - camz
    rx = cos_yaw * dx + sin_yaw * dy
    ry = -sin_yaw * dx + cos_yaw * dy
    rz = dz
    if rx <= 0.0:
        return None
    lateral2 = ry * ry + rz * rz
    if lateral2 > (rx * geom.tan_half_angle) ** 2:
        return None
    if noise_std > 0.0:
        g = rng.gauss
        return (rx + g(0.0, noise_std), ry + g(0.0, noise_std),
                rz + g(0.0, noise_std))
    return (rx, ry, rz)


@dataclass
class GuidanceDirective:
    """What the mission executive asks of the guidance law this step."""

    mode: str = "pursue"               # pursue | engage | loiter | hold_velocity | goto
    point: tuple | None = None         # loiter/goto target for the window center
    velocity: tuple | None = None      # hold_velocity target


def _track_estimate(history, t_now: float, lookback: float):
    """Position/velocity of the ball from the measurement history, or None."""
    if not history:
        return None
    t_last, p_last = history[-1]
    if t_now - t_last > lookback:
        return None
    t_first, p_first = history[0]
    span = t_last - t_first
    if span >= 0.4 * lookback:
        v = ((p_last[0] - p_first[0]) / span,
             (p_last[1] - p_first[1]) / span,
             (p_last[2] - p_first[2]) / span)
    else:
        v = (0.0, 0.0, 0.0)
    return t_last, p_last, v


def guidance_command(history, chaser_pos, chaser_vel, cfg: GuidanceSpec,
                     max_accel: float, directive: GuidanceDirective,
                     window_world_offset, engage_dir, t_now: float):
    """Acceleration command for the chaser, saturated at ``max_accel``.

    Pursuit modes steer the capture-window center toward the predicted ball
    position (offset behind it during approach, through it during the
    engagement sweep); without a usable track the command degrades to a
    loiter (kill velocity).
    """
    wx = chaser_pos[0] + window_world_offset[0]
    wy = chaser_pos[1] + window_world_offset[1]
    wz = chaser_pos[2] + window_world_offset[2]
    vx, vy, vz = chaser_vel
    mode = directive.mode

    if mode in ("pursue", "engage"):
        track = _track_estimate(history, t_now, cfg.lookback)
        if track is None:
            tx, ty, tz = wx, wy, wz
            tvx = tvy = tvz = 0.0
        else:
            t_last, p, v = track
            lead = cfg.lead_time + (t_now - t_last)
            px = p[0] + v[0] * lead
            py = p[1] + v[1] * lead
            pz = p[2] + v[2] * lead
            if mode == "engage":
                # sweep axis: pure velocity control at the configured closing
                # speed; cross axes: track the predicted ball position
                ex, ey, ez = engage_dir
                v_along = vx * ex + vy * ey + vz * ez
                v_des = (v[0] * ex + v[1] * ey + v[2] * ez) + cfg.engage_speed
                a_along = cfg.kd * (v_des - v_along)
                cx_ = px - wx
                cy_ = py - wy
                cz_ = pz - wz
                c_along = cx_ * ex + cy_ * ey
                cx_ -= c_along * ex
                cy_ -= c_along * ey
                vcx = v[0] - vx - (v[0] - vx) * ex * ex - (v[1] - vy) * ex * ey
                vcy = v[1] - vy - (v[0] - vx) * ey * ex - (v[1] - vy) * ey * ey
                ax = a_along * ex + cfg.kp * cx_ + cfg.kd * vcx
                ay = a_along * ey + cfg.kp * cy_ + cfg.kd * vcy
                az = cfg.kp * cz_ + cfg.kd * (v[2] - vz)
                return _saturate(ax, ay, az, max_accel)
            off = -cfg.standoff
            tvx, tvy, tvz = v
            tx = px + off * engage_dir[0]
            ty = py + off * engage_dir[1]
            tz = pz
    elif mode == "hold_velocity":
        hv = directive.velocity or (0.0, 0.0, 0.0)
        ax = cfg.kd * (hv[0] - vx)
        ay = cfg.kd * (hv[1] - vy)
        az = cfg.kd * (hv[2] - vz)
        return _saturate(ax, ay, az, max_accel)
    elif mode == "goto" and directive.point is not None:
        tx, ty, tz = directive.point
        tvx = tvy = tvz = 0.0
    else:  # loiter
        pt = directive.point or (wx, wy, wz)
        tx, ty, tz = pt
        tvx = tvy = tvz = 0.0

    ax = cfg.kp * (tx - wx) + cfg.kd * (tvx - vx)
    ay = cfg.kp * (ty - wy) + cfg.kd * (tvy - vy)
    az = cfg.kp * (tz - wz) + cfg.kd * (tvz - vz)
    return _saturate(ax, ay, az, max_accel)


def _saturate(ax, ay, az, a_max):
    n = math.sqrt(ax * ax + ay * ay + az * az)
    if n > a_max:
        s = a_max / n
        return (ax * s, ay * s, az * s)
    return (ax, ay, az)


# ---------------------------------------------------------------------------
# the stepper
# ---------------------------------------------------------------------------

class Simulation:
    """Owns one encounter: configuration, RNG streams and the step loop.

    A simulation instance is single-threaded; distinct instances are fully
    independent and may run in parallel.
    """

    def __init__(self, encounter: EncounterConfig, geom: EngagementGeometry,
                 target: TargetSpec, streams: dict, sway_angle: float = 0.0,
                 sway_azimuth: float = 0.0, chaser_offset=(0.0, 0.0, 0.0)):
        self.cfg = encounter
        self.geom = geom
        self.target = target
        self.path = encounter.build_path()
        if self.path.duration + 1e-9 < encounter.duration:
            raise ValueError("carrier path shorter than the encounter duration")
        self.gust = GustProcess(encounter.disturbances.gust, streams["gust"])
        self.cam_rng = streams["camera"]
        self.dt = encounter.timestep
        yaw = encounter.chaser.yaw
        self.cos_yaw = math.cos(yaw)
        self.sin_yaw = math.sin(yaw)
        self.engage_dir = (self.cos_yaw, self.sin_yaw, 0.0)
        wbx, wby, wbz = geom.aim_body
        self.window_offset = (self.cos_yaw * wbx - self.sin_yaw * wby,
                              self.sin_yaw * wbx + self.cos_yaw * wby, wbz)
        rbx, rby, rbz = geom.ring_center_body
        self.ring_offset = (self.cos_yaw * rbx - self.sin_yaw * rby,
                            self.sin_yaw * rbx + self.cos_yaw * rby, rbz)
        self.rest_cos = self.cos_yaw
        self.meas_history: deque = deque()
        self.directive = GuidanceDirective(mode="loiter", point=None)
        self.pend_params = PendulumParams(
            rod_length=encounter.rod_length, ball_mass=target.ball_mass,
            damping=encounter.rod_damping)
        carrier0, carrier_v0 = self.path.state(0.0)
        start = encounter.chaser.start
        self.world = WorldState(
            chaser_pos=(start[0] + chaser_offset[0],
                        start[1] + chaser_offset[1],
                        start[2] + chaser_offset[2]),
            chaser_yaw=yaw,
            carrier_pos=carrier0, carrier_vel=carrier_v0,
            pendulum=PendulumState.from_sway(sway_angle, sway_azimuth),
            rod_length=encounter.rod_length)
        if self.directive.point is None:
            self.directive.point = self.world.chaser_pos

    def set_damping(self, damping: float):
        self.pend_params = PendulumParams(
            rod_length=self.pend_params.rod_length,
            ball_mass=self.pend_params.ball_mass,
            damping=damping)

    # -- helpers ----------------------------------------------------------

    def _air_velocity(self, point):
        gx, gy, gz = self.world.gust
        dwx, dwy, dwz = downwash_velocity(
            point, self.world.chaser_pos, self.cfg.disturbances.downwash)
        return (gx + dwx, gy + dwy, gz + dwz)

    def _drag_force(self, vel, air):
        k = self.cfg.disturbances.ball_drag_coeff
        if k <= 0.0:
            return (0.0, 0.0, 0.0)
        rx = vel[0] - air[0]
        ry = vel[1] - air[1]
        rz = vel[2] - air[2]
        s = math.sqrt(rx * rx + ry * ry + rz * rz)
        return (-k * s * rx, -k * s * ry, -k * s * rz)

    def window_center_world(self):
        cx, cy, cz = self.world.chaser_pos
        ox, oy, oz = self.window_offset
        return (cx + ox, cy + oy, cz + oz)

    def ring_center_world(self):
        cx, cy, cz = self.world.chaser_pos
        ox, oy, oz = self.ring_offset
        return (cx + ox, cy + oy, cz + oz)

    def ball_estimate_world(self, meas):
        """World-frame ball estimate from a body-frame camera measurement."""
        kx, ky, kz = self.geom.camera_body
        mx, my, mz = meas
        bx = kx + mx
        by = ky + my
        cx, cy, cz = self.world.chaser_pos
        return (cx + self.cos_yaw * bx - self.sin_yaw * by,
                cy + self.sin_yaw * bx + self.cos_yaw * by,
                cz + kz + mz)

    # -- the fixed step ----------------------------------------------------

    def step_world(self, world: WorldState | None = None) -> WorldState:
        """Advance one timestep; order: disturbances, dynamics, detachment,
        capture, guidance.  Mutates and returns the world."""
        w = self.world if world is None else world
        dt = self.dt
        t0 = w.t
        t1 = (w.n + 1) * dt

        # disturbances
        w.gust = self.gust.step(dt)

        # dynamics: carrier
        w.carrier_pos, w.carrier_vel = self.path.state(t1)

        # dynamics: chaser under the pending command
        ax, ay, az = w.command
        cvx, cvy, cvz = w.chaser_vel
        nvx, nvy, nvz = cvx + ax * dt, cvy + ay * dt, cvz + az * dt
        vmax = self.cfg.chaser.max_speed
        speed = math.sqrt(nvx * nvx + nvy * nvy + nvz * nvz)
        if speed > vmax:
            s = vmax / speed
            nvx, nvy, nvz = nvx * s, nvy * s, nvz * s
        px, py, pz = w.chaser_pos
        w.chaser_pos = (px + 0.5 * (cvx + nvx) * dt,
                        py + 0.5 * (cvy + nvy) * dt,
                        pz + 0.5 * (cvz + nvz) * dt)
        w.chaser_vel = (nvx, nvy, nvz)

        # dynamics: ball
        if w.status == ATTACHED:
            air = self._air_velocity(w.ball_pos)
            drag = self._drag_force(w.ball_vel, air)
            f = (drag[0] + w.contact_force[0],
                 drag[1] + w.contact_force[1],
                 drag[2] + w.contact_force[2])
            pivot_acc = self.path.accel(t0 + 0.5 * dt)
            w.pendulum = pendulum_step(w.pendulum, pivot_acc, f, dt,
                                       self.pend_params)
            w._sync_attached_ball()
        elif w.status in (DETACHED, DROPPED):
            if not w.grounded:
                self._free_flight(w, dt)
        elif w.status == CAPTURED:
            rx, ry = w.rest_offset
            ox = rx * self.cos_yaw - ry * self.sin_yaw
            oy = rx * self.sin_yaw + ry * self.cos_yaw
            ringx, ringy, ringz = self.ring_center_world()
            w.ball_pos = (ringx + ox, ringy + oy, ringz + self.geom.ball_radius)
            w.ball_vel = w.chaser_vel

        # detachment
        w.contact_force = (0.0, 0.0, 0.0)
        w.contact_active = False
        if w.status == ATTACHED:
            self._engagement(w, dt)

        # capture
        if w.status == DETACHED:
            capture_check(w, self.geom, self.cos_yaw, self.sin_yaw)

        # guidance: measure, track, command for the next step
        meas = camera_measurement(w, self.geom, self.cfg.camera_noise_std,
                                  self.cam_rng, self.cos_yaw, self.sin_yaw)
        if meas is not None:
            w.last_meas = (t1, meas)
            w.meas_count += 1
            est = self.ball_estimate_world(meas)
            self.meas_history.append((t1, est))
        cutoff = t1 - self.cfg.guidance.lookback - 1e-9
        hist = self.meas_history
        while hist and hist[0][0] < cutoff:
            hist.popleft()
        w.command = guidance_command(
            hist, w.chaser_pos, w.chaser_vel, self.cfg.guidance,
            self.cfg.chaser.max_accel, self.directive, self.window_offset,
            self.engage_dir, t1)

        w.n += 1
        w.t = w.n * dt
        return w

    def _free_flight(self, w: WorldState, dt: float):
        air = self._air_velocity(w.ball_pos)
        k = self.cfg.disturbances.ball_drag_coeff
        m = self.target.ball_mass
        g = GRAVITY
        px, py, pz = w.ball_pos
        vx, vy, vz = w.ball_vel

        def acc(vx, vy, vz):
            if k <= 0.0:
                return (0.0, 0.0, -g)
            rx, ry, rz = vx - air[0], vy - air[1], vz - air[2]
            s = math.sqrt(rx * rx + ry * ry + rz * rz)
            c = k * s / m
            return (-c * rx, -c * ry, -g - c * rz)

        h = dt / 2.0
        a1 = acc(vx, vy, vz)
        v2 = (vx + h * a1[0], vy + h * a1[1], vz + h * a1[2])
        a2 = acc(*v2)
        v3 = (vx + h * a2[0], vy + h * a2[1], vz + h * a2[2])
        a3 = acc(*v3)
        v4 = (vx + dt * a3[0], vy + dt * a3[1], vz + dt * a3[2])
        a4 = acc(*v4)
        six = dt / 6.0
        npx = px + six * (vx + 2.0 * (v2[0] + v3[0]) + v4[0])
        npy = py + six * (vy + 2.0 * (v2[1] + v3[1]) + v4[1])
        npz = pz + six * (vz + 2.0 * (v2[2] + v3[2]) + v4[2])
        nvx = vx + six * (a1[0] + 2.0 * (a2[0] + a3[0]) + a4[0])
        nvy = vy + six * (a1[1] + 2.0 * (a2[1] + a3[1]) + a4[1])
        nvz = vz + six * (a1[2] + 2.0 * (a2[2] + a3[2]) + a4[2])
        if npz <= self.geom.ball_radius:
            npz = self.geom.ball_radius
            nvx = nvy = nvz = 0.0
            w.grounded = True
        w.ball_pos = (npx, npy, npz)
        w.ball_vel = (nvx, nvy, nvz)

    def _engagement(self, w: WorldState, dt: float):
        """Contact between the sweeping window and the attached ball."""
        geom = self.geom
        spec = self.cfg.engagement
        bx, by, bz = w.ball_pos
        cx, cy, cz = w.chaser_pos
        dx, dy, dz = bx - cx, by - cy, bz - cz
        rx = self.cos_yaw * dx + self.sin_yaw * dy
        ry = -self.sin_yaw * dx + self.cos_yaw * dy
        ax, ay, az = geom.basket_axis_body
        in_slab = (abs(rx - (ax + geom.window_x)) <= spec.slab_half_thickness
                   and abs(ry - ay) <= geom.window_width / 2.0
                   and az - geom.window_height <= dz <= az)
        if not in_slab:
            return
        w.contact_active = True
        bvx, bvy, bvz = w.ball_vel
        cvx, cvy, cvz = w.chaser_vel
        rvx, rvy, rvz = cvx - bvx, cvy - bvy, cvz - bvz
        speed = math.sqrt(rvx * rvx + rvy * rvy + rvz * rvz)
        if speed < 1e-9:
            return
        fmag = min(spec.contact_coupling * speed, spec.contact_force_cap)
        qx, qy, qz = w.pendulum.q
        cos_a = abs((rvx * qx + rvy * qy + rvz * qz) / speed)
        threshold = self.target.detachment_force * (
            spec.peel_factor + (1.0 - spec.peel_factor) * cos_a)
        if fmag < threshold:
            # below the peel threshold the strips flex without loading the joint
            return
        force = (fmag * rvx / speed, fmag * rvy / speed, fmag * rvz / speed)
        detachment_update(w, force, dt, self.target, spec.peel_factor)
        if w.status == ATTACHED:
            # joint still holding: the basket keeps dragging the ball
            w.contact_force = force

    def release_ball(self):
        """Open the retention flap: the captured ball becomes a free body."""
        w = self.world
        w.set_status(DROPPED)
        w.ball_vel = w.chaser_vel
        w.prev_rel = None
