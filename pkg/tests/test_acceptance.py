"""Acceptance suite: one test (or group) per criterion, each at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary ends with
one PASS/FAIL line per criterion.
"""

import time

import numpy as np
import pytest
from scipy.integrate import simpson

from conftest import KMH, random_params
from dcmgait.costs import GaitEvaluator
from dcmgait.dynamics import BaseState, inverse_dynamics, rnea, zmp_full_model
from dcmgait.geometry import distances_to_polygon, points_in_polygon
from dcmgait.kinematics import JointState, OutOfReachError, forward_kinematics, leg_ik, leg_ik_batch
from dcmgait.optimizer import (GAConfig, NSGA2Config, SearchSpace, dominates,
                               fast_nondominated_sort, run_ga, run_nsga2)
from dcmgait.planner import (GRAVITY, LEFT, RIGHT, DcmTrajectory, Footstep, FootstepPlan,
                             ankle_swing, dcm_at, dcm_endpoints, generate_gait, plan_footsteps)
from test_dynamics import mechanical_energy, motion, static_pose, two_link
from test_geometry import random_convex, ray_cast
from test_optimizer import brute_fronts, sphere, zdt1

ZERO = np.zeros(12)
# "near a bound": within this fraction of the parameter range
NEAR_FRACTION = 0.2
SEED = 2024
GA_BUDGET = GAConfig(population=30, generations=20)
NSGA_BUDGET = NSGA2Config(population=40, generations=20)


def note(record, text):
    record("detail", text)


# 1 -------------------------------------------------------------------------

@pytest.mark.criterion("1")
def test_c01_dcm_closed_form_vs_rk4(knee_params, record_property):
    start = time.perf_counter()
    p = knee_params
    plan = plan_footsteps(p.speed, p.t_step, duration=4 * p.t_step)
    assert len(plan) == 6
    dcm = dcm_endpoints(plan, p.omega, p.t_step)
    zmp = plan.zmp_refs
    a, b, T, w = p.dt_init_ds, p.dt_end_ds, p.t_step, p.omega
    n = 4000
    # all six steps integrated side by side with classic RK4 from each xi_init
    h = (T - a) / n
    y = dcm.xi_init.copy()
    worst = 0.0
    f = lambda y: w * (y - zmp)
    for k in range(1, n + 1):
        k1 = f(y)
        k2 = f(y + h / 2 * k1)
        k3 = f(y + h / 2 * k2)
        k4 = f(y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        tl = k * h
        if tl >= b and k % 20 == 0:  # single-support part of every step
            exact = dcm_at(tl, zmp, dcm.xi_init, w)
            worst = max(worst, float(np.max(np.abs(exact - y))))
    elapsed = time.perf_counter() - start
    note(record_property, f"max err {worst:.2e} m, {elapsed:.2f} s")
    assert worst < 1e-9
    assert elapsed < 1.0


# 2 -------------------------------------------------------------------------

@pytest.mark.criterion("2")
def test_c02_recursion_terminal_condition(rng, record_property):
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 15))
        zmps = rng.uniform(-2, 2, (n, 2))
        steps = [Footstep(z, RIGHT if i % 2 == 0 else LEFT, z) for i, z in enumerate(zmps)]
        dcm = dcm_endpoints(FootstepPlan(steps, 0.2, 0.0), rng.uniform(3.0, 4.5),
                            rng.uniform(0.5, 1.3))
        worst = max(worst, float(np.max(np.abs(dcm.xi_end[-1] - zmps[-1]))))
    note(record_property, f"max |xi_end - zmp_last| {worst:.1e} m over 100 plans")
    assert worst < 1e-12


# 3 -------------------------------------------------------------------------

@pytest.mark.criterion("3")
def test_c03_c1_splice(rng, record_property):
    pos_jump = vel_jump = 0.0
    for _ in range(100):
        p = random_params(rng)
        traj = DcmTrajectory(plan_footsteps(p.speed, p.t_step), p)
        for k, tj in enumerate(traj.junctions):
            pa, va = traj.evaluate_segment(k, tj)
            pb, vb = traj.evaluate_segment(k + 1, tj)
            pos_jump = max(pos_jump, float(np.max(np.abs(pa - pb))))
            vel_jump = max(vel_jump, float(np.max(np.abs(va - vb))))
    note(record_property, f"pos jump {pos_jump:.1e} m, vel jump {vel_jump:.1e} m/s")
    assert pos_jump < 1e-9 and vel_jump < 1e-6


# 4 -------------------------------------------------------------------------

@pytest.mark.criterion("4")
def test_c04_com_residual(knee_params, record_property):
    g = generate_gait(knee_params, sample_rate=240.0)
    fd = np.gradient(g.com[:, :2], g.dt, axis=0)[1:-1]
    rel = -knee_params.omega * (g.com[:, :2] - g.dcm)[1:-1]
    res = float(np.max(np.abs(fd - rel)))
    note(record_property, f"max residual {res:.2e} m/s")
    assert res < 1e-3


# 5 -------------------------------------------------------------------------

@pytest.mark.criterion("5")
def test_c05_ankle_swing(rng, record_property):
    bnd = apex = 0.0
    for _ in range(100):
        p = random_params(rng)
        a = np.append(rng.uniform(-1, 1, 2), 0.0)
        b = np.append(rng.uniform(-1, 1, 2), 0.0)
        seg = ankle_swing(a, b, p.h_ankle, p.t_ss)
        T = p.t_ss
        bnd = max(bnd, float(np.max(np.abs(seg(0.0) - a))), float(np.max(np.abs(seg(T) - b))),
                  float(np.max(np.abs(seg(0.0, 1)))), float(np.max(np.abs(seg(T, 1)))))
        apex = max(apex, abs(float(seg(T / 2)[2]) - p.h_ankle))
    note(record_property, f"boundary err {bnd:.1e}, apex err {apex:.1e} m")
    assert bnd < 1e-9 and apex < 1e-9


# 6 -------------------------------------------------------------------------

@pytest.mark.criterion("6")
def test_c06_fk_ik_round_trip(model, rng, record_property):
    worst = 0.0
    for side in (LEFT, RIGHT):
        lim = model.angle_limits[model.leg_slice(side)].copy()
        lim[3, 0] = 0.05
        ql = rng.uniform(lim[:, 0], lim[:, 1], (500, 6))
        q = np.zeros((500, 12))
        q[:, model.leg_slice(side)] = ql
        base = rng.uniform(-0.2, 0.2, (500, 3))
        kin = forward_kinematics(model, base, q)
        back, ok = leg_ik_batch(model, side, base, kin.sole_pos[side], None, kin.sole_rot[side])
        assert ok.all() and np.all(np.isfinite(back))
        worst = max(worst, float(np.max(np.abs(back - ql))))
    raised = 0
    g = model.geometry
    for _ in range(200):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        ankle = g.hip(LEFT) + d * g.reach * rng.uniform(1.001, 2.0)
        try:
            q = leg_ik(model, LEFT, [0, 0, 0], ankle - [0, 0, g.ankle_height])
        except OutOfReachError:
            raised += 1
        else:
            assert np.all(np.isfinite(q)), "unreachable target returned NaN"
    note(record_property, f"max round-trip err {worst:.1e} rad; {raised}/200 unreachable raised")
    assert worst < 1e-9 and raised == 200


# 7 -------------------------------------------------------------------------

@pytest.mark.criterion("7")
def test_c07_inverse_dynamics(model, rng, record_property):
    worst = 0.0
    for _ in range(20):
        pelvis = np.array([rng.uniform(-0.05, 0.05), 0.0, rng.uniform(0.6, 0.7)])
        q = static_pose(model, pelvis, LEFT)
        tau = inverse_dynamics(model, BaseState.fixed(pelvis), JointState(q, ZERO, ZERO), 1.0)
        kin = forward_kinematics(model, pelvis, q)
        expected = model.total_mass * GRAVITY * (kin.com[0] - kin.joint_pos[4, 0])
        worst = max(worst, abs(tau[4] - expected))
    tree = two_link()
    t = np.linspace(0.0, 1.0, 4001)
    q, qd, qdd = motion(t)
    tau = rnea(tree, BaseState.fixed(), JointState(q, qd, qdd)).tau
    work = simpson((tau * qd).sum(axis=1), x=t)
    e = mechanical_energy(tree, np.array([0.0, 1.0]))
    rel = abs(work - (e[1] - e[0])) / abs(e[1] - e[0])
    note(record_property, f"static balance err {worst:.1e} N·m, work-energy rel {rel:.1e}")
    assert worst < 1e-9 and rel < 1e-3


# 8 -------------------------------------------------------------------------

@pytest.mark.criterion("8")
def test_c08_zmp_consistency(model, rng, knee_params, record_property):
    # closed-form CoM under each planned step: x = r + c1 e^{wt} + c2 e^{-wt},
    # differentiated by hand, then pushed through the multi-body formula as a point mass
    p = knee_params
    w = p.omega
    plan = plan_footsteps(p.speed, p.t_step)
    dcm = dcm_endpoints(plan, w, p.t_step)
    t = np.linspace(0.0, p.t_step, 200)[:, None]
    lipm = 0.0
    for r, xi0 in zip(plan.zmp_refs, dcm.xi_init):
        x0 = rng.uniform(-0.3, 0.3, 2)
        c1 = (xi0 - r) / 2
        c2 = x0 - r - c1
        x = r + c1 * np.exp(w * t) + c2 * np.exp(-w * t)
        acc = w**2 * c1 * np.exp(w * t) + w**2 * c2 * np.exp(-w * t)
        com = np.column_stack([x, np.full(len(t), p.z0)])[:, None, :]
        a = np.column_stack([acc, np.zeros(len(t))])[:, None, :]
        zmp = zmp_full_model([model.total_mass], com, a)
        lipm = max(lipm, float(np.max(np.abs(zmp - r))))
    worst = 0.0
    for _ in range(20):
        pelvis = np.array([*rng.uniform(-0.05, 0.05, 2), 0.66])
        q = static_pose(model, pelvis)
        res = rnea(model, BaseState.fixed(pelvis), JointState(q, ZERO, ZERO))
        zmp = zmp_full_model(model.tree.masses, res.link_com, res.link_acc,
                             res.link_ang_mom_rate)
        worst = max(worst, float(np.max(np.abs(zmp[0] - res.kinematics.com[0, :2]))))
    note(record_property, f"LIPM zmp err {lipm:.1e} m, static err {worst:.1e} m")
    assert lipm < 1e-6 and worst < 1e-9


# 9 -------------------------------------------------------------------------

@pytest.mark.criterion("9")
def test_c09_polygon_geometry(rng, record_property):
    checked = mismatches = 0
    while checked < 10_000:
        poly = random_convex(rng)
        if poly is None:
            continue
        pts = rng.uniform(-2, 2, (50, 2))
        near = distances_to_polygon(pts, poly) < 1e-9
        got = points_in_polygon(pts, poly)
        for pt, gv, skip in zip(pts, got, near):
            if not skip:
                mismatches += gv != ray_cast(pt, poly.vertices)
                checked += 1
    worst = 0.0
    for _ in range(30):
        poly = random_convex(rng)
        if poly is None:
            continue
        v = poly.vertices
        w = np.roll(v, -1, axis=0)
        per = np.linalg.norm(w - v, axis=1)
        counts = np.maximum(2, np.round(1e4 * per / per.sum()).astype(int))
        boundary = np.vstack([a + np.linspace(0, 1, n)[:, None] * (b - a)
                              for a, b, n in zip(v, w, counts)])
        pts = rng.uniform(-2, 2, (40, 2))
        dense = np.min(np.linalg.norm(pts[:, None] - boundary[None], axis=2), axis=1)
        worst = max(worst, float(np.max(np.abs(dense - distances_to_polygon(pts, poly)))))
    note(record_property, f"{mismatches} containment mismatches / {checked}; "
         f"distance err {worst:.1e} m")
    assert mismatches == 0 and worst < 1e-4


# 10 ------------------------------------------------------------------------

@pytest.mark.criterion("10")
def test_c10_nsga2_correctness(rng, record_property):
    F = rng.random((500, 2))
    same = [sorted(f) for f in fast_nondominated_sort(F)] == brute_fronts(F)
    start = time.perf_counter()
    res = run_nsga2(SearchSpace.box(5), zdt1, NSGA2Config(population=150, generations=100),
                    seed=SEED, objectives=None)
    elapsed = time.perf_counter() - start
    Fr = res.front.objectives
    dist = float(np.mean(np.abs(Fr[:, 1] - (1 - np.sqrt(Fr[:, 0])))))
    note(record_property, f"sort matches oracle: {same}; ZDT1 mean dist {dist:.1e} "
         f"in {elapsed:.1f} s")
    assert same and dist < 0.05 and elapsed < 300


# 11 ------------------------------------------------------------------------

@pytest.mark.criterion("11")
def test_c11_ga_contract(record_property):
    sp = SearchSpace.box(5)
    runs = [run_ga(sp, None, sphere, GAConfig(population=100, generations=10, workers=w),
                   seed=SEED) for w in (1, 2, 3)]
    h = runs[0].history
    elites = {r["n_elite"] for r in h}
    best = [r["best_so_far"] for r in h]
    monotone = all(b <= a for a, b in zip(best, best[1:]))
    identical = all(r.history == h for r in runs[1:])
    # elites of the second-to-last generation are in the final population
    prev = run_ga(sp, None, sphere, GAConfig(population=100, generations=9), seed=SEED)
    final = {tuple(p.genome) for p in runs[0].population}
    kept = all(tuple(p.genome) in final for p in prev.population[:3])
    note(record_property, f"elites {sorted(elites)}, kept {kept}, monotone {monotone}, "
         f"identical across 1/2/3 workers {identical}")
    assert elites == {3} and kept and monotone and identical


# 12 ------------------------------------------------------------------------

def _near(value, bound, lo, hi):
    return abs(value - bound) <= NEAR_FRACTION * (hi - lo)


@pytest.fixture(scope="module")
def ga_runs(model):
    ev = GaitEvaluator(model, 0.5 * KMH)
    sp = SearchSpace.default()
    return {obj: run_ga(sp, obj, ev, GA_BUDGET, seed=SEED) for obj in ("zmp", "energy")}


@pytest.fixture(scope="module")
def nsga_runs(model):
    sp = SearchSpace.default()
    return {s: run_nsga2(sp, GaitEvaluator(model, s * KMH), NSGA_BUDGET, seed=SEED)
            for s in (0.4, 0.5, 0.6, 0.8)}


@pytest.mark.criterion("12a")
def test_c12a_zmp_prefers_shorter_steps(ga_runs, record_property):
    tz = ga_runs["zmp"].best.genome[2]
    te = ga_runs["energy"].best.genome[2]
    note(record_property, f"t_step zmp {tz:.3f} < energy {te:.3f}")
    assert tz < te


@pytest.mark.criterion("12b")
def test_c12b_energy_prefers_high_com_low_ankle(ga_runs, record_property):
    sp = SearchSpace.default()
    g = ga_runs["energy"].best.genome
    z_ok = _near(g[3], sp.upper[3], sp.lower[3], sp.upper[3])
    h_ok = _near(g[4], sp.lower[4], sp.lower[4], sp.upper[4])
    note(record_property, f"z0 {g[3]:.4f} (max {sp.upper[3]}), "
         f"h_ankle {g[4]:.4f} (min {sp.lower[4]})")
    assert z_ok and h_ok


@pytest.mark.criterion("12c")
def test_c12c_tradeoff_front(nsga_runs, record_property):
    front = nsga_runs[0.5].front
    F = front.objectives
    mutual = all(not dominates(a, b) for a in F for b in F)
    note(record_property, f"{len(F)} mutually non-dominated points")
    assert len(F) >= 5 and mutual


@pytest.mark.criterion("12d")
def test_c12d_knee_energy_grows_with_speed(nsga_runs, record_property):
    e = [nsga_runs[s].front.knee_member.result.j_energy for s in (0.4, 0.6, 0.8)]
    note(record_property, "knee j_energy " + " -> ".join(f"{v:.1f}" for v in e))
    assert e[0] <= e[1] <= e[2]


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
