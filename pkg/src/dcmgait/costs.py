"""Energy, torque, velocity and ZMP costs of a gait on the full model."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import DegenerateDynamicsError, GaitDynamics, gait_dynamics
from .kinematics import JointState, OutOfReachError, RobotModel, joint_trajectory
from .planner import GaitParams, GaitTrajectory, generate_gait

OBJECTIVES = ("energy", "torque", "vel", "zmp")
FALL_RATIO = 0.8  # CoM below this fraction of z0 counts as a fall


@dataclass
class Violation:
    constraint: str  # joint_range | torque_limit | com_height | kinematic_reach
    worst: float
    index: int  # first offending sample
    joint: str | None = None


@dataclass
class CostVector:
    j_energy: float
    j_torque: float
    j_vel: float
    j_zmp: float
    feasible: bool = True
    violations: list[Violation] = field(default_factory=list)

    def objective(self, name: str) -> float:
        if name not in OBJECTIVES:
            raise ValueError(f"unknown objective {name!r}; choose from {OBJECTIVES}")
        return getattr(self, f"j_{name}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CostVector":
        d = dict(d)
        d["violations"] = [Violation(**v) for v in d.get("violations", [])]
        return cls(**d)

    @classmethod
    def infeasible(cls, violations: list[Violation]) -> "CostVector":
        inf = math.inf
        return cls(inf, inf, inf, inf, feasible=False, violations=violations)


def _first_violation(kind: str, mask: np.ndarray, values: np.ndarray,
                     names: list[str]) -> list[Violation]:
    out = []
    for j in np.flatnonzero(mask.any(axis=0)):
        rows = np.flatnonzero(mask[:, j])
        worst = rows[np.argmax(np.abs(values[rows, j]))]
        out.append(Violation(kind, float(values[worst, j]), int(rows[0]), names[j]))
    return out


def check_constraints(model: RobotModel, joints: JointState, taus, com_z, z0: float,
                      fall_ratio: float = FALL_RATIO) -> list[Violation]:
    """Joint-range, torque-limit and CoM-height checks over aligned samples."""
    q = np.atleast_2d(joints.q)
    taus = np.atleast_2d(taus)
    com_z = np.atleast_1d(np.asarray(com_z, dtype=float))
    names = [j.name for j in model.joints]
    limits = model.angle_limits
    out = _first_violation("joint_range", (q < limits[:, 0]) | (q > limits[:, 1]), q, names)
    out += _first_violation("torque_limit", np.abs(taus) > model.torque_limits, taus, names)
    low = com_z < fall_ratio * z0
    if low.any():
        out.append(Violation("com_height", float(com_z.min()), int(np.flatnonzero(low)[0])))
    return out


@dataclass
class Evaluation:
    costs: CostVector
    gait: GaitTrajectory
    joints: JointState | None = None
    dynamics: GaitDynamics | None = None

    def write_dynamics_csv(self, path) -> None:
        if self.dynamics is None:
            raise ValueError("no dynamics to dump (kinematically infeasible gait)")
        d = self.dynamics
        n_tau = d.tau.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", *(f"tau_{i + 1}" for i in range(n_tau)), "zmp_x", "zmp_y",
                        "inside_flag", "signed_distance"])
            for k in range(len(self.gait)):
                w.writerow([repr(float(self.gait.t[k])), *(repr(float(v)) for v in d.tau[k]),
                            repr(float(d.zmp[k, 0])), repr(float(d.zmp[k, 1])),
                            int(d.inside[k]), repr(float(d.signed_distance[k]))])


def accumulate_costs(joints: JointState, dyn: GaitDynamics, dt: float) -> CostVector:
    power = np.abs(dyn.tau * joints.qd)
    return CostVector(
        j_energy=float(power.sum() * dt),
        j_torque=float(np.abs(dyn.tau).sum()),
        j_vel=float(np.abs(joints.qd).sum()),
        j_zmp=float(dyn.signed_distance.sum()),
    )


def evaluate_trajectory(model: RobotModel, gait: GaitTrajectory,
                        fall_ratio: float = FALL_RATIO) -> Evaluation:
    try:
        joints = joint_trajectory(model, gait)
    except OutOfReachError as err:
        excess = (err.distance or math.nan) - model.geometry.reach
        return Evaluation(CostVector.infeasible(
            [Violation("kinematic_reach", excess, int(err.index or 0), err.side)]), gait)
    try:
        dyn = gait_dynamics(model, gait, joints)
    except DegenerateDynamicsError:
        return Evaluation(CostVector.infeasible(
            [Violation("degenerate_dynamics", math.nan, 0)]), gait, joints)
    costs = accumulate_costs(joints, dyn, gait.dt)
    costs.violations = check_constraints(model, joints, dyn.tau, dyn.com[:, 2], gait.z0,
                                         fall_ratio)
    costs.feasible = not costs.violations
    return Evaluation(costs, gait, joints, dyn)


def evaluate_gait_detailed(model: RobotModel, params: GaitParams, duration: float = 5.0,
                           sample_rate: float = 240.0, step_width: float = 0.2) -> Evaluation:
    gait = generate_gait(params, duration, step_width, sample_rate)
    return evaluate_trajectory(model, gait)


def evaluate_gait(model: RobotModel, params: GaitParams, duration: float = 5.0,
                  sample_rate: float = 240.0, step_width: float = 0.2) -> CostVector:
    """Plan, solve IK, run inverse dynamics and accumulate the four costs."""
    return evaluate_gait_detailed(model, params, duration, sample_rate, step_width).costs


class GaitEvaluator:
    """Picklable genome -> CostVector callable for the optimizers."""

    def __init__(self, model: RobotModel, speed: float, duration: float = 5.0,
                 sample_rate: float = 240.0, step_width: float = 0.2):
        self.model = model
        self.speed = speed
        self.duration = duration
        self.sample_rate = sample_rate
        self.step_width = step_width

    def __call__(self, genome) -> CostVector:
        params = GaitParams.from_vector(genome, speed=self.speed)
        return evaluate_gait(self.model, params, self.duration, self.sample_rate,
                             self.step_width)
