"""12-DOF lower-limb robot model, forward kinematics and analytic leg IK."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np
import yaml

from .planner import LEFT, RIGHT, GaitTrajectory

SIDES = (LEFT, RIGHT)
LEG_AXES = ("z", "x", "y", "y", "y", "x")
LEG_JOINT_ROLES = ("hip_yaw", "hip_roll", "hip_pitch", "knee", "ankle_pitch", "ankle_roll")
_UNIT = {"x": np.array([1.0, 0, 0]), "y": np.array([0, 1.0, 0]), "z": np.array([0, 0, 1.0])}
REACH_EPS = 1e-6


class ModelValidationError(ValueError):
    pass


class OutOfReachError(ValueError):
    """Foot target farther from the hip than the extended leg (or too close)."""

    def __init__(self, message: str, index: int | None = None, side: str | None = None,
                 distance: float | None = None):
        super().__init__(message)
        self.index = index
        self.side = side
        self.distance = distance


@dataclass(frozen=True)
class Link:
    name: str
    mass: float
    com_offset: np.ndarray
    inertia: np.ndarray


@dataclass(frozen=True)
class Joint:
    name: str
    parent: str
    child: str
    axis: np.ndarray
    origin: np.ndarray
    angle_limits: tuple[float, float] = (-np.pi, np.pi)
    torque_limit: float = np.inf
    velocity_limit: float = np.inf


@dataclass(frozen=True)
class LegGeometry:
    hip_offset: np.ndarray  # pelvis -> left hip
    thigh_length: float
    shank_length: float
    ankle_height: float

    def hip(self, side: str) -> np.ndarray:
        h = self.hip_offset.copy()
        if side == RIGHT:
            h[1] = -h[1]
        return h

    @property
    def reach(self) -> float:
        return self.thigh_length + self.shank_length


class KinematicTree:
    """Links connected by revolute joints, rooted at a floating or fixed base link."""

    def __init__(self, links: list[Link], joints: list[Joint]):
        self.links = list(links)
        index = {l.name: i for i, l in enumerate(self.links)}
        if len(index) != len(self.links):
            raise ModelValidationError("duplicate link names")
        children = [j.child for j in joints]
        roots = [l.name for l in self.links if l.name not in children]
        if len(roots) != 1:
            raise ModelValidationError(f"expected exactly one base link, found {roots}")
        self.base = index[roots[0]]
        # parents before children, stable w.r.t. the given order
        ordered, placed = [], {roots[0]}
        pending = list(joints)
        while pending:
            j = next((j for j in pending if j.parent in placed), None)
            if j is None:
                raise ModelValidationError(
                    f"joints {[j.name for j in pending]} do not connect to the base")
            ordered.append(j)
            placed.add(j.child)
            pending.remove(j)
        self.joints = ordered
        self.parent_link = np.array([index[j.parent] for j in ordered])
        self.child_link = np.array([index[j.child] for j in ordered])
        self.axes = np.array([j.axis for j in ordered], dtype=float)
        self.origins = np.array([j.origin for j in ordered], dtype=float)
        self.masses = np.array([l.mass for l in self.links], dtype=float)
        self.com_offsets = np.array([l.com_offset for l in self.links], dtype=float)
        self.inertias = np.array([l.inertia for l in self.links], dtype=float)
        # joints whose child subtree contains each link, for inward accumulation
        self.link_joint = {int(c): k for k, c in enumerate(self.child_link)}

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def link_index(self, name: str) -> int:
        for i, l in enumerate(self.links):
            if l.name == name:
                return i
        raise KeyError(name)


@dataclass
class RobotModel:
    name: str
    tree: KinematicTree
    geometry: LegGeometry
    sole_vertices: np.ndarray  # (4, 2) counterclockwise
    foot_links: dict[str, int]

    @property
    def joints(self) -> list[Joint]:
        return self.tree.joints

    @property
    def links(self) -> list[Link]:
        return self.tree.links

    @property
    def total_mass(self) -> float:
        return self.tree.total_mass

    @property
    def angle_limits(self) -> np.ndarray:
        return np.array([j.angle_limits for j in self.joints], dtype=float)

    @property
    def torque_limits(self) -> np.ndarray:
        return np.array([j.torque_limit for j in self.joints], dtype=float)

    @staticmethod
    def leg_slice(side: str) -> slice:
        return slice(0, 6) if side == LEFT else slice(6, 12)


@dataclass
class JointState:
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray

    def __post_init__(self):
        self.q, self.qd, self.qdd = (np.asarray(a, dtype=float) for a in (self.q, self.qd, self.qdd))
        if not (self.q.shape == self.qd.shape == self.qdd.shape):
            raise ValueError("q, qd and qdd must have matching shapes")

    def __len__(self) -> int:
        return self.q.shape[0] if self.q.ndim > 1 else 1


# ---------------------------------------------------------------- loading

def reference_model_path() -> Path:
    return Path(str(resources.files("dcmgait") / "data" / "reference_biped.yaml"))


def reference_model() -> RobotModel:
    return load_model(reference_model_path())


def load_model(document) -> RobotModel:
    """Parse and validate a robot model from a mapping, a YAML string or a file path."""
    if isinstance(document, Mapping):
        data = document
    elif isinstance(document, Path) or (isinstance(document, str) and "\n" not in document
                                        and Path(document).is_file()):
        data = yaml.safe_load(Path(document).read_text())
    else:
        data = yaml.safe_load(document)
    if not isinstance(data, Mapping):
        raise ModelValidationError("model document must be a mapping")
    for key in ("links", "joints", "leg_geometry", "sole_vertices"):
        if key not in data:
            raise ModelValidationError(f"missing field '{key}'")

    links = [_parse_link(d, i) for i, d in enumerate(data["links"])]
    joints = [_parse_joint(d, i) for i, d in enumerate(data["joints"])]
    names = {l.name for l in links}
    for j in joints:
        for end in ("parent", "child"):
            if getattr(j, end) not in names:
                raise ModelValidationError(
                    f"joint '{j.name}': {end} link '{getattr(j, end)}' not defined")
    geometry = _parse_geometry(data["leg_geometry"])
    sole = _parse_sole(data["sole_vertices"])

    tree = KinematicTree(links, joints)
    legs = _leg_chains(tree)
    ordered = legs[LEFT] + legs[RIGHT]
    for side in SIDES:
        _check_leg(side, legs[side], geometry)
    tree = KinematicTree(links, ordered)
    foot_links = {side: tree.link_index(legs[side][-1].child) for side in SIDES}
    return RobotModel(name=str(data.get("name", "robot")), tree=tree, geometry=geometry,
                      sole_vertices=sole, foot_links=foot_links)


def _require(d: Mapping, key: str, where: str):
    if key not in d:
        raise ModelValidationError(f"{where}: missing field '{key}'")
    return d[key]


def _vec(value, n: int, where: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (n,) or not np.all(np.isfinite(arr)):
        raise ModelValidationError(f"{where}: expected {n} finite numbers")
    return arr


def _parse_link(d: Mapping, i: int) -> Link:
    name = str(_require(d, "name", f"links[{i}]"))
    where = f"link '{name}'"
    mass = float(_require(d, "mass", where))
    if not mass > 0.0:
        raise ModelValidationError(f"{where}: mass must be positive, got {mass}")
    com = _vec(_require(d, "com_offset", where), 3, f"{where} com_offset")
    inertia = np.asarray(_require(d, "inertia", where), dtype=float)
    if inertia.shape != (3, 3):
        raise ModelValidationError(f"{where}: inertia must be 3x3")
    if not np.allclose(inertia, inertia.T, atol=1e-12):
        raise ModelValidationError(f"{where}: inertia must be symmetric")
    if np.linalg.eigvalsh(inertia).min() <= 0.0:
        raise ModelValidationError(f"{where}: inertia must be positive definite")
    return Link(name, mass, com, inertia)


def _parse_joint(d: Mapping, i: int) -> Joint:
    name = str(_require(d, "name", f"joints[{i}]"))
    where = f"joint '{name}'"
    axis = _vec(_require(d, "axis", where), 3, f"{where} axis")
    norm = np.linalg.norm(axis)
    if norm < 1e-12:
        raise ModelValidationError(f"{where}: axis must be non-zero")
    lo, hi = (float(v) for v in _require(d, "angle_limits", where))
    if not lo < hi:
        raise ModelValidationError(f"{where}: angle_limits must satisfy min < max")
    torque = float(_require(d, "torque_limit", where))
    if not torque > 0.0:
        raise ModelValidationError(f"{where}: torque_limit must be positive")
    velocity = float(d.get("velocity_limit", np.inf))
    return Joint(name=name, parent=str(_require(d, "parent", where)),
                 child=str(_require(d, "child", where)), axis=axis / norm,
                 origin=_vec(_require(d, "origin", where), 3, f"{where} origin"),
                 angle_limits=(lo, hi), torque_limit=torque, velocity_limit=velocity)


def _parse_geometry(d: Mapping) -> LegGeometry:
    where = "leg_geometry"
    hip = _vec(_require(d, "hip_offset", where), 3, f"{where} hip_offset")
    lengths = {}
    for key in ("thigh_length", "shank_length", "ankle_height"):
        lengths[key] = float(_require(d, key, where))
        if not lengths[key] > 0.0:
            raise ModelValidationError(f"{where}: {key} must be positive")
    if hip[1] <= 0.0:
        raise ModelValidationError(f"{where}: hip_offset y must be positive (left hip)")
    return LegGeometry(hip_offset=hip, **lengths)


def _parse_sole(value) -> np.ndarray:
    pts = np.asarray(value, dtype=float)
    if pts.shape != (4, 2):
        raise ModelValidationError("sole_vertices: expected 4 (x, y) points")
    edges = np.roll(pts, -1, axis=0) - pts
    nxt = np.roll(edges, -1, axis=0)
    turns = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
    if not (np.all(turns > 0) or np.all(turns < 0)):
        raise ModelValidationError("sole_vertices: quadrilateral is not convex")
    area = 0.5 * np.sum(pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1])
    if area < 0:
        pts = pts[::-1].copy()
    return pts


def _leg_chains(tree: KinematicTree) -> dict[str, list[Joint]]:
    base = tree.links[tree.base].name
    roots = [j for j in tree.joints if j.parent == base]
    if len(roots) != 2:
        raise ModelValidationError(f"base link must carry exactly 2 legs, found {len(roots)}")
    chains = {}
    for root in roots:
        chain = [root]
        while True:
            nxt = [j for j in tree.joints if j.parent == chain[-1].child]
            if not nxt:
                break
            if len(nxt) > 1:
                raise ModelValidationError(f"link '{chain[-1].child}' branches; legs must be chains")
            chain.append(nxt[0])
        side = LEFT if root.origin[1] > 0 else RIGHT
        if side in chains:
            raise ModelValidationError("both legs attach on the same side of the pelvis")
        chains[side] = chain
    for side, chain in chains.items():
        if len(chain) != 6:
            raise ModelValidationError(
                f"{side} leg has {len(chain)} joints, expected 6 "
                f"({', '.join(LEG_JOINT_ROLES)})")
    return chains


def _check_leg(side: str, chain: list[Joint], geom: LegGeometry) -> None:
    expected_origins = [geom.hip(side), np.zeros(3), np.zeros(3),
                        np.array([0, 0, -geom.thigh_length]),
                        np.array([0, 0, -geom.shank_length]), np.zeros(3)]
    for joint, axis, role, origin in zip(chain, LEG_AXES, LEG_JOINT_ROLES, expected_origins):
        if not np.allclose(joint.axis, _UNIT[axis], atol=1e-9):
            raise ModelValidationError(
                f"joint '{joint.name}' ({side} {role}): axis must be {axis}")
        if not np.allclose(joint.origin, origin, atol=1e-9):
            raise ModelValidationError(
                f"joint '{joint.name}' ({side} {role}): origin {joint.origin.tolist()} "
                f"inconsistent with leg_geometry {origin.tolist()}")


# ---------------------------------------------------------------- rotations

def axis_rotation(axis: np.ndarray, angle) -> np.ndarray:
    """Rodrigues rotation about a unit axis; ``angle`` may be batched."""
    angle = np.asarray(angle, dtype=float)
    x, y, z = axis
    K = np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]], dtype=float)
    s = np.sin(angle)[..., None, None]
    c = np.cos(angle)[..., None, None]
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def rot_x(a):
    return axis_rotation(_UNIT["x"], a)


def rot_y(a):
    return axis_rotation(_UNIT["y"], a)


def rot_z(a):
    return axis_rotation(_UNIT["z"], a)


# ---------------------------------------------------------------- forward kinematics

@dataclass
class Kinematics:
    """World-frame link frames of a (batched) configuration."""

    link_pos: np.ndarray  # (..., n_links, 3)
    link_rot: np.ndarray  # (..., n_links, 3, 3)
    link_com: np.ndarray  # (..., n_links, 3)
    joint_pos: np.ndarray  # (..., n_joints, 3)
    joint_axis: np.ndarray  # (..., n_joints, 3)
    com: np.ndarray  # (..., 3)
    sole_pos: dict[str, np.ndarray] | None = None
    sole_rot: dict[str, np.ndarray] | None = None


def _as_tree(model) -> KinematicTree:
    return model.tree if isinstance(model, RobotModel) else model


def forward_kinematics(model, base_pos, q, base_rot=None) -> Kinematics:
    """Link poses, link CoMs and whole-body CoM for joint angles ``q``.

    Inputs may carry a leading batch dimension; outputs follow it.
    """
    tree = _as_tree(model)
    q = np.asarray(q, dtype=float)
    batched = q.ndim == 2
    qb = np.atleast_2d(q)
    B = qb.shape[0]
    pos0 = np.broadcast_to(np.asarray(base_pos, dtype=float), (B, 3))
    rot0 = np.eye(3) if base_rot is None else np.asarray(base_rot, dtype=float)
    rot0 = np.broadcast_to(rot0, (B, 3, 3))

    nl = tree.n_links
    link_pos = np.empty((B, nl, 3))
    link_rot = np.empty((B, nl, 3, 3))
    link_pos[:, tree.base] = pos0
    link_rot[:, tree.base] = rot0
    joint_pos = np.empty((B, tree.n_joints, 3))
    joint_axis = np.empty((B, tree.n_joints, 3))
    for k in range(tree.n_joints):
        p, c = tree.parent_link[k], tree.child_link[k]
        Rp = link_rot[:, p]
        joint_pos[:, k] = link_pos[:, p] + Rp @ tree.origins[k]
        joint_axis[:, k] = Rp @ tree.axes[k]
        link_rot[:, c] = Rp @ axis_rotation(tree.axes[k], qb[:, k])
        link_pos[:, c] = joint_pos[:, k]
    link_com = link_pos + np.einsum("blij,lj->bli", link_rot, tree.com_offsets)
    com = np.einsum("l,bli->bi", tree.masses, link_com) / tree.total_mass

    kin = Kinematics(link_pos, link_rot, link_com, joint_pos, joint_axis, com)
    if isinstance(model, RobotModel):
        down = np.array([0.0, 0.0, -model.geometry.ankle_height])
        kin.sole_pos, kin.sole_rot = {}, {}
        for side, li in model.foot_links.items():
            kin.sole_rot[side] = link_rot[:, li]
            kin.sole_pos[side] = link_pos[:, li] + link_rot[:, li] @ down
    if not batched:
        kin = _unbatch(kin)
    return kin


def _unbatch(kin: Kinematics) -> Kinematics:
    out = Kinematics(*(getattr(kin, f)[0] for f in
                       ("link_pos", "link_rot", "link_com", "joint_pos", "joint_axis", "com")))
    if kin.sole_pos is not None:
        out.sole_pos = {s: v[0] for s, v in kin.sole_pos.items()}
        out.sole_rot = {s: v[0] for s, v in kin.sole_rot.items()}
    return out


# ---------------------------------------------------------------- inverse kinematics

def leg_ik_batch(model: RobotModel, side: str, pelvis_pos, sole_pos, pelvis_rot=None,
                 sole_rot=None) -> tuple[np.ndarray, np.ndarray]:
    """Analytic 6-DOF leg IK (hip yaw-roll-pitch, knee, ankle pitch-roll).

    Returns ``(q, reachable)`` with ``q`` of shape (B, 6); rows where the
    target is out of reach are NaN and flagged False.
    """
    geom = model.geometry
    pelvis_pos = np.atleast_2d(np.asarray(pelvis_pos, dtype=float))
    sole_pos = np.atleast_2d(np.asarray(sole_pos, dtype=float))
    B = max(pelvis_pos.shape[0], sole_pos.shape[0])
    R1 = np.broadcast_to(np.eye(3) if pelvis_rot is None else pelvis_rot, (B, 3, 3))
    R7 = np.broadcast_to(np.eye(3) if sole_rot is None else sole_rot, (B, 3, 3))
    A, Bl = geom.thigh_length, geom.shank_length

    ankle = sole_pos + R7 @ np.array([0.0, 0.0, geom.ankle_height])
    hip = pelvis_pos + R1 @ geom.hip(side)
    r = np.einsum("bji,bj->bi", R7, hip - ankle)  # hip seen from the ankle frame
    C = np.linalg.norm(r, axis=1)
    reachable = (C <= A + Bl + REACH_EPS) & (C >= abs(A - Bl) + REACH_EPS)

    with np.errstate(invalid="ignore", divide="ignore"):
        c5 = np.clip((C**2 - A**2 - Bl**2) / (2.0 * A * Bl), -1.0, 1.0)
        q5 = np.arccos(c5)
        q6a = np.arcsin(np.clip(A * np.sin(np.pi - q5) / C, -1.0, 1.0))
        q7 = np.arctan2(r[:, 1], r[:, 2])
        q7 = np.where(q7 > np.pi / 2, q7 - np.pi, np.where(q7 < -np.pi / 2, q7 + np.pi, q7))
        q6 = -np.arctan2(r[:, 0], np.sign(r[:, 2]) * np.hypot(r[:, 1], r[:, 2])) - q6a

        R = np.swapaxes(R1, 1, 2) @ R7 @ rot_x(-q7) @ rot_y(-(q5 + q6))
        q2 = np.arctan2(-R[:, 0, 1], R[:, 1, 1])
        cz, sz = np.cos(q2), np.sin(q2)
        q3 = np.arctan2(R[:, 2, 1], -R[:, 0, 1] * sz + R[:, 1, 1] * cz)
        q4 = np.arctan2(-R[:, 2, 0], R[:, 2, 2])
    q = np.column_stack([q2, q3, q4, q5, q6, q7])
    q[~reachable] = np.nan
    return q, reachable


def leg_ik(model: RobotModel, side: str, pelvis_pos, sole_pos, pelvis_rot=None,
           sole_rot=None) -> np.ndarray:
    """Six joint angles of one leg placing its sole frame at ``sole_pos``."""
    q, ok = leg_ik_batch(model, side, pelvis_pos, sole_pos,
                         None if pelvis_rot is None else np.asarray(pelvis_rot)[None],
                         None if sole_rot is None else np.asarray(sole_rot)[None])
    if not ok[0]:
        raise OutOfReachError(f"{side} foot target out of reach", side=side)
    return q[0]


def whole_body_ik(model: RobotModel, pelvis_pos, left_sole, right_sole, pelvis_rot=None,
                  left_rot=None, right_rot=None) -> np.ndarray:
    """Batched IK for both legs; raises at the first unreachable sample."""
    out = []
    for side, sole, rot in ((LEFT, left_sole, left_rot), (RIGHT, right_sole, right_rot)):
        q, ok = leg_ik_batch(model, side, pelvis_pos, sole, pelvis_rot, rot)
        if not ok.all():
            k = int(np.flatnonzero(~ok)[0])
            dist = _hip_ankle_distance(model, side, np.atleast_2d(pelvis_pos)[k],
                                       np.atleast_2d(sole)[k])
            raise OutOfReachError(f"{side} foot target out of reach at sample {k} "
                                  f"(hip-ankle {dist:.4f} m, leg {model.geometry.reach:.4f} m)",
                                  index=k, side=side, distance=dist)
        out.append(q)
    return np.hstack(out)


def _hip_ankle_distance(model: RobotModel, side: str, pelvis_pos, sole_pos) -> float:
    # level pelvis and flat foot, as planned
    ankle = np.asarray(sole_pos, dtype=float) + [0.0, 0.0, model.geometry.ankle_height]
    hip = np.asarray(pelvis_pos, dtype=float) + model.geometry.hip(side)
    return float(np.linalg.norm(hip - ankle))


def finite_difference(q: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Central first and second differences along axis 0, one-sided at the ends."""
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    if n < 3:
        raise ValueError("need at least 3 samples to differentiate")
    qd = np.empty_like(q)
    qdd = np.empty_like(q)
    qd[1:-1] = (q[2:] - q[:-2]) / (2.0 * dt)
    qd[0] = (q[1] - q[0]) / dt
    qd[-1] = (q[-1] - q[-2]) / dt
    qdd[1:-1] = (q[2:] - 2.0 * q[1:-1] + q[:-2]) / dt**2
    qdd[0] = (q[2] - 2.0 * q[1] + q[0]) / dt**2
    qdd[-1] = (q[-1] - 2.0 * q[-2] + q[-3]) / dt**2
    return qd, qdd


def pelvis_positions(gait: GaitTrajectory) -> np.ndarray:
    return np.column_stack([gait.com[:, 0], gait.com[:, 1], np.full(len(gait), gait.z0)])


def joint_trajectory(model: RobotModel, gait: GaitTrajectory) -> JointState:
    """Joint angles along a gait (pelvis at the planned CoM point, held level)."""
    q = whole_body_ik(model, pelvis_positions(gait), gait.left_ankle, gait.right_ankle)
    qd, qdd = finite_difference(q, gait.dt)
    return JointState(q, qd, qdd)
