"""Recursive Newton-Euler inverse dynamics and multi-body ZMP.

Everything is batched over a leading sample axis so a whole gait is pushed
through one outward and one inward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import SupportPolygon, points_in_polygon, signed_distances, support_polygon
from .kinematics import (JointState, RobotModel, finite_difference, forward_kinematics,
                         pelvis_positions)
from .planner import GRAVITY, GaitTrajectory

Z = np.array([0.0, 0.0, 1.0])


class DegenerateDynamicsError(ValueError):
    """Vertical ground reaction vanishes (free fall); the ZMP is undefined."""


@dataclass
class BaseState:
    """Prescribed base motion; orientation fixed (no angular velocity)."""

    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    rotation: np.ndarray | None = None

    @classmethod
    def fixed(cls, position=(0.0, 0.0, 0.0), rotation=None) -> "BaseState":
        zero = np.zeros(3)
        return cls(np.asarray(position, dtype=float), zero, zero, rotation)


@dataclass
class RneaResult:
    tau: np.ndarray  # (B, n_joints)
    link_com: np.ndarray  # (B, n_links, 3)
    link_acc: np.ndarray  # (B, n_links, 3) CoM acceleration, gravity excluded
    link_omega: np.ndarray  # (B, n_links, 3)
    link_ang_mom_rate: np.ndarray  # (B, n_links, 3) about each link CoM
    force: np.ndarray  # (B, 3) net wrench the environment must supply
    moment: np.ndarray  # (B, 3) about the world origin
    kinematics: object


def _cross(a, b):
    return np.cross(a, b)


def rnea(tree, base: BaseState, joints: JointState, gravity: float = GRAVITY,
         shares: dict[int, np.ndarray] | None = None) -> RneaResult:
    """Batched recursive Newton-Euler pass.

    ``shares`` maps link index -> per-sample fraction of the net external
    wrench that acts on that link (ground contact). Without shares the base
    absorbs the wrench, i.e. a fixed-base chain.
    """
    tree = tree.tree if isinstance(tree, RobotModel) else tree
    q = np.atleast_2d(joints.q)
    qd = np.atleast_2d(joints.qd)
    qdd = np.atleast_2d(joints.qdd)
    B = q.shape[0]
    kin = forward_kinematics(tree, np.broadcast_to(base.position, (B, 3)), q, base.rotation)

    nl = tree.n_links
    omega = np.zeros((B, nl, 3))
    alpha = np.zeros((B, nl, 3))
    acc = np.zeros((B, nl, 3))  # frame-origin acceleration incl. the gravity offset
    acc[:, tree.base] = np.broadcast_to(base.acceleration, (B, 3)) + gravity * Z
    for k in range(tree.n_joints):
        p, c = tree.parent_link[k], tree.child_link[k]
        z = kin.joint_axis[:, k]
        wz = z * qd[:, k:k + 1]
        omega[:, c] = omega[:, p] + wz
        alpha[:, c] = alpha[:, p] + z * qdd[:, k:k + 1] + _cross(omega[:, p], wz)
        d = kin.link_pos[:, c] - kin.link_pos[:, p]
        acc[:, c] = (acc[:, p] + _cross(alpha[:, p], d)
                     + _cross(omega[:, p], _cross(omega[:, p], d)))

    r = kin.link_com - kin.link_pos
    acc_com = acc + _cross(alpha, r) + _cross(omega, _cross(omega, r))
    force = tree.masses[None, :, None] * acc_com
    inertia_w = np.einsum("blij,ljk,blmk->blim", kin.link_rot, tree.inertias, kin.link_rot)
    ang_rate = (np.einsum("blij,blj->bli", inertia_w, alpha)
                + _cross(omega, np.einsum("blij,blj->bli", inertia_w, omega)))
    moment = _cross(kin.link_com, force) + ang_rate

    total_f = force.sum(axis=1)
    total_m = moment.sum(axis=1)

    sub_f = force.copy()
    sub_m = moment.copy()
    for li, share in (shares or {}).items():
        s = np.broadcast_to(np.asarray(share, dtype=float), (B,))[:, None]
        sub_f[:, li] -= s * total_f
        sub_m[:, li] -= s * total_m
    for k in range(tree.n_joints - 1, -1, -1):
        p, c = tree.parent_link[k], tree.child_link[k]
        sub_f[:, p] += sub_f[:, c]
        sub_m[:, p] += sub_m[:, c]
    c_idx = tree.child_link
    about_joint = sub_m[:, c_idx] - _cross(kin.joint_pos, sub_f[:, c_idx])
    tau = (about_joint * kin.joint_axis).sum(-1)

    return RneaResult(tau=tau, link_com=kin.link_com, link_acc=acc_com - gravity * Z,
                      link_omega=omega, link_ang_mom_rate=ang_rate, force=total_f,
                      moment=total_m, kinematics=kin)


def inverse_dynamics(model: RobotModel, base: BaseState, joints: JointState, grf_left,
                     gravity: float = GRAVITY) -> np.ndarray:
    """Joint torques with the ground reaction split ``grf_left : 1 - grf_left``.

    Single support is ``grf_left`` equal to 1 (left stance) or 0 (right stance).
    """
    grf_left = np.asarray(grf_left, dtype=float)
    shares = {model.foot_links["left"]: grf_left, model.foot_links["right"]: 1.0 - grf_left}
    res = rnea(model, base, joints, gravity, shares)
    return res.tau if np.ndim(joints.q) > 1 else res.tau[0]


def zmp_full_model(masses, com, com_acc, ang_mom_rate=None,
                   gravity: float = GRAVITY) -> np.ndarray:
    """Multi-body ZMP on the ground plane z = 0.

    ``com``/``com_acc`` are per-link CoM positions and accelerations (gravity
    excluded) with shape (..., n_links, 3); ``ang_mom_rate`` is the rate of
    change of each link's angular momentum about its CoM.
    """
    m = np.asarray(masses, dtype=float)
    c = np.asarray(com, dtype=float)
    a = np.asarray(com_acc, dtype=float)
    dl = np.zeros_like(c) if ang_mom_rate is None else np.asarray(ang_mom_rate, dtype=float)
    fz = m * (a[..., 2] + gravity)
    den = fz.sum(-1)
    if np.any(np.abs(den) < 1e-9 * m.sum() * gravity):
        raise DegenerateDynamicsError("vertical ground reaction vanishes; ZMP undefined")
    x = ((fz * c[..., 0]).sum(-1) - (m * a[..., 0] * c[..., 2]).sum(-1) - dl[..., 1].sum(-1)) / den
    y = ((fz * c[..., 1]).sum(-1) - (m * a[..., 1] * c[..., 2]).sum(-1) + dl[..., 0].sum(-1)) / den
    return np.stack([x, y], axis=-1)


@dataclass
class GaitDynamics:
    tau: np.ndarray  # (T, 12)
    zmp: np.ndarray  # (T, 2)
    com: np.ndarray  # (T, 3) whole-body model CoM
    inside: np.ndarray  # (T,) bool
    signed_distance: np.ndarray  # (T,)
    polygons: list[SupportPolygon]


def gait_base_state(gait: GaitTrajectory) -> BaseState:
    """Pelvis follows the planned CoM point at constant height.

    Acceleration is differenced from positions exactly like the joint angles,
    so base and joint motion stay mutually consistent.
    """
    pos = pelvis_positions(gait)
    vel, acc = finite_difference(pos, gait.dt)
    return BaseState(pos, vel, acc)


def gait_dynamics(model: RobotModel, gait: GaitTrajectory, joints: JointState,
                  base: BaseState | None = None) -> GaitDynamics:
    base = base or gait_base_state(gait)
    res = rnea(model, base, joints, GRAVITY,
               {model.foot_links["left"]: gait.grf_left,
                model.foot_links["right"]: 1.0 - gait.grf_left})
    zmp = zmp_full_model(model.tree.masses, res.link_com, res.link_acc, res.link_ang_mom_rate)
    com = np.einsum("l,bli->bi", model.tree.masses, res.link_com) / model.total_mass

    n = len(gait)
    inside = np.zeros(n, dtype=bool)
    dist = np.zeros(n)
    polygons: list[SupportPolygon] = [None] * n  # type: ignore[list-item]
    cache: dict[tuple, SupportPolygon] = {}
    groups: dict[tuple, list[int]] = {}
    for k in range(n):
        stance = gait.stance[k]
        key = (stance,
               tuple(gait.left_ankle[k, :2]) if stance != "right" else None,
               tuple(gait.right_ankle[k, :2]) if stance != "left" else None)
        if key not in cache:
            cache[key] = support_polygon(gait.stance[k], gait.left_ankle[k],
                                         gait.right_ankle[k], model.sole_vertices)
        groups.setdefault(key, []).append(k)
        polygons[k] = cache[key]
    for key, idx in groups.items():
        poly = cache[key]
        idx = np.asarray(idx)
        inside[idx] = points_in_polygon(zmp[idx], poly)
        dist[idx] = signed_distances(zmp[idx], poly)
    return GaitDynamics(tau=res.tau, zmp=zmp, com=com, inside=inside,
                        signed_distance=dist, polygons=polygons)
