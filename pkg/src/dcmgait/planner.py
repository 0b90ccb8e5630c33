"""DCM/LIPM walking pattern generation.

Footsteps -> backward DCM recursion -> closed-form single-support DCM with
cubic double-support blends -> exponential CoM integration -> quintic
ankle swings, all sampled on a uniform time grid.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

GRAVITY = 9.81  # m/s^2

PARAM_NAMES = ("alpha", "r_ds", "t_step", "z0", "h_ankle")

LEFT, RIGHT, BOTH = "left", "right", "both"
SINGLE_SUPPORT, DOUBLE_SUPPORT = "single_support", "double_support"


@dataclass(frozen=True)
class GaitParams:
    """Five walking-pattern parameters plus the (fixed) walking speed in m/s."""

    alpha: float
    r_ds: float
    t_step: float
    z0: float
    h_ankle: float
    speed: float = 0.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        checks = {
            "alpha": 0.0 < self.alpha < 1.0,
            "r_ds": 0.0 < self.r_ds < 1.0,
            "t_step": self.t_step > 0.0,
            "z0": self.z0 > 0.0,
            "h_ankle": self.h_ankle > 0.0,
            "speed": self.speed >= 0.0,
        }
        for name, ok in checks.items():
            value = getattr(self, name)
            if not ok or not math.isfinite(value):
                raise ValueError(f"invalid gait parameter {name}={value!r}")

    @classmethod
    def from_vector(cls, vector: Sequence[float], speed: float = 0.0) -> "GaitParams":
        if len(vector) != len(PARAM_NAMES):
            raise ValueError(f"expected {len(PARAM_NAMES)} parameters, got {len(vector)}")
        return cls(*(float(v) for v in vector), speed=float(speed))

    def as_vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=float)

    @property
    def omega(self) -> float:
        return math.sqrt(GRAVITY / self.z0)

    @property
    def t_ds(self) -> float:
        return self.r_ds * self.t_step

    @property
    def t_ss(self) -> float:
        return self.t_step - self.t_ds

    @property
    def dt_init_ds(self) -> float:
        return self.alpha * self.t_ds

    @property
    def dt_end_ds(self) -> float:
        return (1.0 - self.alpha) * self.t_ds


@dataclass(frozen=True)
class Footstep:
    position: np.ndarray  # (x, y) footprint center
    side: str
    zmp_ref: np.ndarray


@dataclass
class FootstepPlan:
    steps: list[Footstep]
    step_width: float
    step_length: float

    @property
    def zmp_refs(self) -> np.ndarray:
        return np.array([s.zmp_ref for s in self.steps], dtype=float)

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.position for s in self.steps], dtype=float)

    def __len__(self) -> int:
        return len(self.steps)


def plan_footsteps(speed: float, t_step: float, step_width: float = 0.2,
                   duration: float = 5.0) -> FootstepPlan:
    """Straight-line footprints for walking at constant ``speed``.

    The plan holds ``ceil(duration / t_step) + 2`` footprints. The first two
    and the last two share the same x coordinate (standing double stance);
    the ones in between advance by ``speed * t_step``. The first footprint is
    the right foot and sides alternate from there.
    """
    if not t_step > 0.0:
        raise ValueError(f"t_step must be positive, got {t_step}")
    if not duration > 0.0:
        raise ValueError(f"duration must be positive, got {duration}")
    if speed < 0.0:
        raise ValueError(f"speed must be non-negative, got {speed}")

    # rounding guards against 5.0 / 1.0 -> 5.000000000000001
    n_walk = math.ceil(round(duration / t_step, 9))
    count = n_walk + 2
    step_length = speed * t_step
    steps = []
    for i in range(count):
        k = min(max(i - 1, 0), count - 3)
        side = RIGHT if i % 2 == 0 else LEFT
        y = -0.5 * step_width if side == RIGHT else 0.5 * step_width
        pos = np.array([k * step_length, y])
        steps.append(Footstep(position=pos, side=side, zmp_ref=pos.copy()))
    return FootstepPlan(steps=steps, step_width=step_width, step_length=step_length)


@dataclass
class DcmStepPlan:
    """Per-step DCM boundary values; the ``*_ds`` arrays are filled by ``plan_dcm``."""

    xi_init: np.ndarray  # (N, 2)
    xi_end: np.ndarray  # (N, 2)
    xi_init_ds: np.ndarray | None = None  # row i: start of the DS blend into step i
    xi_end_ds: np.ndarray | None = None
    ds_segments: list["PolySegment"] = field(default_factory=list)


def dcm_endpoints(plan: FootstepPlan, omega: float, t_step: float) -> DcmStepPlan:
    """Backward recursion of step-wise initial/final DCM from the last footprint."""
    if len(plan) == 0:
        raise ValueError("footstep plan is empty")
    zmp = plan.zmp_refs
    n = len(zmp)
    decay = math.exp(-omega * t_step)
    xi_init = np.empty((n, 2))
    xi_end = np.empty((n, 2))
    xi_end[-1] = zmp[-1]
    for i in range(n - 1, -1, -1):
        xi_init[i] = zmp[i] + decay * (xi_end[i] - zmp[i])
        if i > 0:
            xi_end[i - 1] = xi_init[i]
    return DcmStepPlan(xi_init=xi_init, xi_end=xi_end)


def dcm_at(t, zmp, xi_init, omega: float) -> np.ndarray:
    """Closed-form DCM ``zmp + exp(omega t) (xi_init - zmp)``."""
    t = np.asarray(t, dtype=float)
    zmp = np.asarray(zmp, dtype=float)
    xi_init = np.asarray(xi_init, dtype=float)
    growth = np.exp(omega * t)[..., None] if t.ndim else math.exp(omega * float(t))
    # keep t = 0 bit-exact; zmp + (xi - zmp) can round
    return np.where(growth == 1.0, xi_init, zmp + growth * (xi_init - zmp))


class PolySegment:
    """Vector-valued polynomial in local time, coefficients in ascending powers."""

    def __init__(self, coeffs: np.ndarray, duration: float):
        self.coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
        self.duration = float(duration)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    def __call__(self, tau, order: int = 0) -> np.ndarray:
        c = self.coeffs
        for _ in range(order):
            c = c[1:] * np.arange(1, c.shape[0])[:, None]
        tau = np.asarray(tau, dtype=float)
        out = np.zeros(tau.shape + (c.shape[1],))
        for row in c[::-1]:
            out = out * tau[..., None] + row
        return out


def _hermite_cubic(p0, v0, p1, v1, duration: float) -> PolySegment:
    p0, v0, p1, v1 = (np.asarray(a, dtype=float) for a in (p0, v0, p1, v1))
    T = duration
    c2 = (3.0 * (p1 - p0) - (2.0 * v0 + v1) * T) / T**2
    c3 = (2.0 * (p0 - p1) + (v0 + v1) * T) / T**3
    return PolySegment(np.stack([p0, v0, c2, c3]), T)


def double_support_segment(prev_zmp, cur_zmp, xi_init_step, omega: float,
                           dt_init: float, dt_end: float) -> PolySegment:
    """Cubic DCM blend across a support transition.

    Starts at the DCM ``dt_init`` before the transition under ``prev_zmp`` and
    ends ``dt_end`` after it under ``cur_zmp``; boundary velocities follow
    ``omega * (xi - zmp)`` of the adjoining single-support segments.
    """
    if dt_init < 0 or dt_end < 0 or not dt_init + dt_end > 0:
        raise ValueError("double support needs dt_init, dt_end >= 0 and positive total")
    prev_zmp = np.asarray(prev_zmp, dtype=float)
    cur_zmp = np.asarray(cur_zmp, dtype=float)
    start = dcm_at(-dt_init, prev_zmp, xi_init_step, omega)
    end = dcm_at(dt_end, cur_zmp, xi_init_step, omega)
    return _hermite_cubic(start, omega * (start - prev_zmp),
                          end, omega * (end - cur_zmp), dt_init + dt_end)


def plan_dcm(plan: FootstepPlan, params: GaitParams) -> DcmStepPlan:
    dcm = dcm_endpoints(plan, params.omega, params.t_step)
    zmp = plan.zmp_refs
    n = len(zmp)
    dcm.xi_init_ds = np.full((n, 2), np.nan)
    dcm.xi_end_ds = np.full((n, 2), np.nan)
    for i in range(1, n):
        seg = double_support_segment(zmp[i - 1], zmp[i], dcm.xi_init[i], params.omega,
                                     params.dt_init_ds, params.dt_end_ds)
        dcm.ds_segments.append(seg)
        dcm.xi_init_ds[i] = seg(0.0)
        dcm.xi_end_ds[i] = seg(seg.duration)
    return dcm


@dataclass
class _Segment:
    t_start: float
    t_end: float
    poly: PolySegment | None = None
    zmp: np.ndarray | None = None
    t_ref: float = 0.0
    xi_ref: np.ndarray | None = None


class DcmTrajectory:
    """Piecewise DCM: exponential single-support pieces joined by cubic blends."""

    def __init__(self, plan: FootstepPlan, params: GaitParams):
        self.plan = plan
        self.params = params
        self.steps = plan_dcm(plan, params)
        self.omega = params.omega
        zmp = plan.zmp_refs
        n = len(zmp)
        T, a, b = params.t_step, params.dt_init_ds, params.dt_end_ds
        segs = []
        for i in range(n):
            t_i = i * T
            start = 0.0 if i == 0 else t_i + b
            if i > 0:
                segs.append(_Segment(t_i - a, t_i + b, poly=self.steps.ds_segments[i - 1]))
            end = (t_i + T - a) if i < n - 1 else math.inf
            segs.append(_Segment(start, end, zmp=zmp[i], t_ref=t_i, xi_ref=self.steps.xi_init[i]))
        self.segments = segs
        self._starts = np.array([s.t_start for s in segs])

    @property
    def junctions(self) -> np.ndarray:
        return self._starts[1:].copy()

    def segment_index(self, t) -> np.ndarray:
        idx = np.searchsorted(self._starts, np.asarray(t, dtype=float), side="right") - 1
        return np.clip(idx, 0, len(self.segments) - 1)

    def evaluate_segment(self, k: int, t) -> tuple[np.ndarray, np.ndarray]:
        seg = self.segments[k]
        t = np.asarray(t, dtype=float)
        if seg.poly is not None:
            tau = t - seg.t_start
            return seg.poly(tau), seg.poly(tau, order=1)
        pos = dcm_at(t - seg.t_ref, seg.zmp, seg.xi_ref, self.omega)
        return pos, self.omega * (pos - seg.zmp)

    def __call__(self, t) -> tuple[np.ndarray, np.ndarray]:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = self.segment_index(t)
        pos = np.empty(t.shape + (2,))
        vel = np.empty(t.shape + (2,))
        for k in np.unique(idx):
            mask = idx == k
            pos[mask], vel[mask] = self.evaluate_segment(int(k), t[mask])
        return pos, vel


def com_trajectory(t, xi, x0, omega: float) -> tuple[np.ndarray, np.ndarray]:
    """Integrate ``xdot = -omega (x - xi)`` exactly for piecewise-linear ``xi``.

    ``t`` must be uniformly spaced. Returns CoM positions and velocities with
    the velocity taken from the same first-order relation.
    """
    t = np.asarray(t, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if t.size == 0:
        raise ValueError("no DCM samples")
    if xi.ndim == 1:
        xi = xi[:, None]
    x = np.empty_like(xi)
    x[0] = x0
    if t.size > 1:
        h = t[1] - t[0]
        decay = math.exp(-omega * h)
        slope = np.diff(xi, axis=0) / h
        for k in range(t.size - 1):
            lag = slope[k] / omega
            x[k + 1] = xi[k + 1] - lag + decay * (x[k] - xi[k] + lag)
    return x, -omega * (x - xi)


def ankle_swing(p_start, p_end, h_ankle: float, t_ss: float) -> PolySegment:
    """Quintic swing: rest-to-rest horizontally, apex ``h_ankle`` at mid-swing."""
    if not t_ss > 0.0:
        raise ValueError(f"swing duration must be positive, got {t_ss}")
    if not h_ankle > 0.0:
        raise ValueError(f"h_ankle must be positive, got {h_ankle}")
    p_start = np.asarray(p_start, dtype=float)
    p_end = np.asarray(p_end, dtype=float)
    T = t_ss
    rows = []
    for tau, order in ((0, 0), (0, 1), (0, 2), (T, 0), (T, 1), (T, 2)):
        rows.append(_monomial_row(tau, order))
    A = np.array(rows)
    rhs = np.zeros((6, 3))
    rhs[0, :2] = p_start[:2]
    rhs[3, :2] = p_end[:2]
    coeffs = np.linalg.solve(A, rhs)
    zrows = [_monomial_row(tau, order) for tau, order in
             ((0, 0), (0, 1), (T / 2, 0), (T / 2, 1), (T, 0), (T, 1))]
    zrhs = np.array([p_start[2], 0.0, p_start[2] + h_ankle, 0.0, p_end[2], 0.0])
    coeffs[:, 2] = np.linalg.solve(np.array(zrows), zrhs)
    return PolySegment(coeffs, T)


def _monomial_row(tau: float, order: int) -> list[float]:
    row = []
    for p in range(6):
        if p < order:
            row.append(0.0)
        else:
            row.append(math.perm(p, order) * tau ** (p - order))
    return row


@dataclass
class GaitTrajectory:
    sample_rate: float
    z0: float
    t: np.ndarray
    dcm: np.ndarray  # (T, 2)
    com: np.ndarray  # (T, 3)
    com_vel: np.ndarray  # (T, 3)
    left_ankle: np.ndarray  # (T, 3) foot frame origin, z above ground
    right_ankle: np.ndarray
    phase: np.ndarray  # str
    stance: np.ndarray  # str
    grf_left: np.ndarray  # share of ground reaction carried by the left foot
    plan: FootstepPlan | None = None

    def __len__(self) -> int:
        return self.t.size

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    def reversed(self) -> "GaitTrajectory":
        """Same path walked backwards in time (velocities negated)."""
        flip = slice(None, None, -1)
        return GaitTrajectory(
            sample_rate=self.sample_rate, z0=self.z0, t=self.t.copy(),
            dcm=self.dcm[flip].copy(), com=self.com[flip].copy(),
            com_vel=-self.com_vel[flip], left_ankle=self.left_ankle[flip].copy(),
            right_ankle=self.right_ankle[flip].copy(), phase=self.phase[flip].copy(),
            stance=self.stance[flip].copy(), grf_left=self.grf_left[flip].copy())

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRAJECTORY_COLUMNS)
            for k in range(len(self)):
                nums = [self.t[k], *self.dcm[k], *self.com[k], *self.com_vel[k, :2],
                        *self.left_ankle[k], *self.right_ankle[k]]
                w.writerow([repr(float(v)) for v in nums]
                           + [self.phase[k], self.stance[k], repr(float(self.grf_left[k]))])

    @classmethod
    def read_csv(cls, path, sample_rate: float | None = None,
                 z0: float | None = None) -> "GaitTrajectory":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        col = lambda *names: np.array([[float(r[n]) for n in names] for r in rows])
        t = col("t")[:, 0]
        com = col("com_x", "com_y", "com_z")
        vel = col("com_vx", "com_vy")
        if sample_rate is None:
            sample_rate = 1.0 / (t[1] - t[0]) if t.size > 1 else 1.0
        return cls(
            sample_rate=sample_rate, z0=float(com[0, 2]) if z0 is None else z0, t=t,
            dcm=col("dcm_x", "dcm_y"), com=com,
            com_vel=np.column_stack([vel, np.zeros(len(rows))]),
            left_ankle=col("lankle_x", "lankle_y", "lankle_z"),
            right_ankle=col("rankle_x", "rankle_y", "rankle_z"),
            phase=np.array([r["phase"] for r in rows]),
            stance=np.array([r["stance"] for r in rows]),
            grf_left=col("grf_left")[:, 0])


TRAJECTORY_COLUMNS = ("t", "dcm_x", "dcm_y", "com_x", "com_y", "com_z", "com_vx", "com_vy",
                      "lankle_x", "lankle_y", "lankle_z", "rankle_x", "rankle_y", "rankle_z",
                      "phase", "stance", "grf_left")


def generate_gait(params: GaitParams, duration: float = 5.0, step_width: float = 0.2,
                  sample_rate: float = 240.0) -> GaitTrajectory:
    if not duration > 0.0:
        raise ValueError(f"duration must be positive, got {duration}")
    if not sample_rate > 0.0:
        raise ValueError(f"sample_rate must be positive, got {sample_rate}")
    plan = plan_footsteps(params.speed, params.t_step, step_width, duration)
    dcm_traj = DcmTrajectory(plan, params)
    n_samples = int(round(duration * sample_rate))
    t = np.arange(n_samples) / sample_rate

    xi, _ = dcm_traj(t)
    com_xy, vel_xy = com_trajectory(t, xi, xi[0], params.omega)
    zeros = np.zeros((n_samples, 1))
    com = np.hstack([com_xy, np.full((n_samples, 1), params.z0)])
    com_vel = np.hstack([vel_xy, zeros])

    T, a, b = params.t_step, params.dt_init_ds, params.dt_end_ds
    n = len(plan)
    steps = plan.steps
    feet = {RIGHT: np.tile(np.append(steps[0].position, 0.0), (n_samples, 1)),
            LEFT: np.tile(np.append(steps[1].position, 0.0), (n_samples, 1))}
    phase = np.full(n_samples, DOUBLE_SUPPORT, dtype=object)
    stance = np.full(n_samples, BOTH, dtype=object)
    grf_left = np.zeros(n_samples)
    loaded = np.full(n_samples, steps[0].side, dtype=object)
    in_any_ds = np.zeros(n_samples, dtype=bool)

    for i in range(1, n):
        t_i = i * T
        ds_start, ds_end = t_i - a, t_i + b
        in_ds = (t >= ds_start) & (t < ds_end)
        in_any_ds |= in_ds
        loaded[t >= ds_end] = steps[i].side
        ramp = (t[in_ds] - ds_start) / params.t_ds
        grf_left[in_ds] = ramp if steps[i].side == LEFT else 1.0 - ramp

        if i < n - 1:
            swing_side = steps[i + 1].side
            p0 = np.append(steps[i - 1].position, 0.0)
            p1 = np.append(steps[i + 1].position, 0.0)
            ss_end = t_i + T - a
            in_ss = (t >= ds_end) & (t < ss_end)
            poly = ankle_swing(p0, p1, params.h_ankle, params.t_ss)
            foot = feet[swing_side]
            foot[in_ss] = poly(t[in_ss] - ds_end)
            foot[t >= ss_end] = p1
            phase[in_ss] = SINGLE_SUPPORT
            stance[in_ss] = steps[i].side

    grf_left[~in_any_ds] = (loaded[~in_any_ds] == LEFT).astype(float)

    return GaitTrajectory(
        sample_rate=float(sample_rate), z0=params.z0, t=t, dcm=xi, com=com, com_vel=com_vel,
        left_ankle=feet[LEFT], right_ankle=feet[RIGHT], phase=phase.astype(str),
        stance=stance.astype(str), grf_left=grf_left, plan=plan)


def standing_gait(z0: float, duration: float = 5.0, step_width: float = 0.2,
                  sample_rate: float = 240.0) -> GaitTrajectory:
    """Both feet planted side by side, CoM held above their midpoint."""
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    left = np.tile([0.0, 0.5 * step_width, 0.0], (n, 1))
    right = np.tile([0.0, -0.5 * step_width, 0.0], (n, 1))
    return GaitTrajectory(
        sample_rate=float(sample_rate), z0=z0, t=t, dcm=np.zeros((n, 2)),
        com=np.tile([0.0, 0.0, z0], (n, 1)), com_vel=np.zeros((n, 3)),
        left_ankle=left, right_ankle=right,
        phase=np.full(n, DOUBLE_SUPPORT), stance=np.full(n, BOTH),
        grf_left=np.full(n, 0.5))


def summarize(gait: GaitTrajectory) -> dict:
    plan = gait.plan
    out = {"samples": len(gait), "sample_rate": gait.sample_rate,
           "duration": len(gait) / gait.sample_rate, "z0": gait.z0,
           "com_distance": float(gait.com[-1, 0] - gait.com[0, 0])}
    if plan is not None:
        pos = plan.positions
        out.update(step_count=len(plan), step_length=plan.step_length,
                   step_width=plan.step_width,
                   total_distance=float(pos[:, 0].max() - pos[:, 0].min()))
    return out


def write_summary(gait: GaitTrajectory, path: Path) -> None:
    Path(path).write_text(json.dumps(summarize(gait), indent=2) + "\n")
