"""CSV trace emission.

One row per simulation step plus typed mission-event rows (phase transitions,
switch edges, servo commands) interleaved at their timestamps.  The first
line is a ``#schema=v1`` comment, then the header row.  Formatting is a pure
function of the values, so identical runs produce byte-identical files.
"""

from __future__ import annotations

SCHEMA = "v1"

COLUMNS = (
    "row", "time",
    "chaser_x", "chaser_y", "chaser_z",
    "chaser_vx", "chaser_vy", "chaser_vz", "chaser_yaw",
    "carrier_x", "carrier_y", "carrier_z",
    "ball_x", "ball_y", "ball_z",
    "ball_vx", "ball_vy", "ball_vz",
    "pend_tilt_x", "pend_tilt_y",
    "status",
    "meas_x", "meas_y", "meas_z",
    "cmd_ax", "cmd_ay", "cmd_az",
    "phase", "event", "detail",
)


def _num(x: float) -> str:
    return format(x, ".10g")


class TraceWriter:
    """Streams step and event rows to an open text file."""

    def __init__(self, fh):
        self.fh = fh
        fh.write(f"#schema={SCHEMA}\n")
        fh.write(",".join(COLUMNS) + "\n")

    def write_step(self, world, phase: str):
        w = world
        phi, theta = w.pendulum_angles()
        meas = ("", "", "")
        if w.last_meas is not None and w.last_meas[0] == w.t:
            m = w.last_meas[1]
            meas = (_num(m[0]), _num(m[1]), _num(m[2]))
        row = (
            "step", _num(w.t),
            _num(w.chaser_pos[0]), _num(w.chaser_pos[1]), _num(w.chaser_pos[2]),
            _num(w.chaser_vel[0]), _num(w.chaser_vel[1]), _num(w.chaser_vel[2]),
            _num(w.chaser_yaw),
            _num(w.carrier_pos[0]), _num(w.carrier_pos[1]), _num(w.carrier_pos[2]),
            _num(w.ball_pos[0]), _num(w.ball_pos[1]), _num(w.ball_pos[2]),
            _num(w.ball_vel[0]), _num(w.ball_vel[1]), _num(w.ball_vel[2]),
            _num(phi), _num(theta),
            w.status,
            *meas,
            _num(w.command[0]), _num(w.command[1]), _num(w.command[2]),
            phase, "", "",
        )
        self.fh.write(",".join(row) + "\n")

    def write_event(self, event):
        row = ["event", _num(event.t)] + [""] * (len(COLUMNS) - 4) \
            + [event.kind, event.detail]
        self.fh.write(",".join(row) + "\n")
