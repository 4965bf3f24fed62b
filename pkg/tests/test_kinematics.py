"""Chain building, forward kinematics, Jacobian, and torque tests.

The planar two-joint arm with unit links along z is the analytic reference:
closed-form positions, the classic two-branch inverse solution, and simple
gravity levers are all checked against the generic chain machinery.
"""

import math

import numpy as np
import pytest

from modsynth.catalog import Catalog, ModuleSequence, ModuleSpec, default_catalog
from modsynth.geometry import Pose, ToleranceSpec, rot_y
from modsynth.kinematics import (
    GRAVITY,
    BasePose,
    DimensionMismatch,
    InvalidAssembly,
    build_chain,
    forward_kinematics,
    jacobian,
    link_frames,
    potential_energy,
    static_torques,
    wrap_angle,
)
from modsynth.optimizer import random_genome
from modsynth.planning import solve_ik
from modsynth.world import Goal


def _m(mid, kind, offset, mass=0.0, com=(0, 0, 0), **kw):
    return ModuleSpec(
        id=mid, kind=kind, proximal_to_distal=Pose.from_translation(*offset),
        mass=mass, com=com, **kw,
    )


def planar_2r_catalog(l1=1.0, l2=1.0, mass=0.0):
    """Zero-size base and tool around two y-axis pivots with z-links."""
    joint_kw = dict(joint_axis=(0, 1, 0), joint_limits=(-math.pi, math.pi),
                    torque_limit=1e9)
    mods = [
        _m("mount0", "base", (0, 0, 0)),
        _m("pivot1", "elbow_joint", (0, 0, l1), mass=mass, com=(0, 0, l1), **joint_kw),
        _m("pivot2", "elbow_joint", (0, 0, l2), mass=mass, com=(0, 0, l2), **joint_kw),
        _m("tool0", "end_effector", (0, 0, 0)),
    ]
    return Catalog({m.id: m for m in mods}, {m.id: 1 for m in mods})


def planar_2r_chain(**kw):
    cat = planar_2r_catalog(**kw)
    seq = ModuleSequence(("mount0", "pivot1", "pivot2", "tool0"))
    return build_chain(seq, cat, mount_lift=0.0)


def analytic_2r_fk(q1, q2, l1=1.0, l2=1.0):
    """Closed-form TCP position in the x-z plane, angles about +y from +z."""
    x = l1 * math.sin(q1) + l2 * math.sin(q1 + q2)
    z = l1 * math.cos(q1) + l2 * math.cos(q1 + q2)
    return np.array([x, 0.0, z])


def analytic_2r_ik(x, z, l1=1.0, l2=1.0):
    """Both elbow branches reaching (x, 0, z); raises for unreachable points."""
    r2 = x * x + z * z
    c2 = (r2 - l1 * l1 - l2 * l2) / (2 * l1 * l2)
    if not -1.0 <= c2 <= 1.0:
        raise ValueError("point not on the reachable annulus")
    sols = []
    for q2 in (math.acos(c2), -math.acos(c2)):
        beta = math.atan2(x, z)
        psi = math.atan2(l2 * math.sin(q2), l1 + l2 * math.cos(q2))
        sols.append((beta - psi, q2))
    return sols


ORIGIN = BasePose()


class TestBuildChain:
    def setup_method(self):
        self.cat = default_catalog()

    def test_single_joint_chain(self):
        seq = ModuleSequence(("base", "straight", "drill"))
        chain = build_chain(seq, self.cat, mount_lift=0.0)
        assert chain.dof == 1
        tcp = forward_kinematics(chain, ORIGIN, [0.0])
        total = seq.total_size(self.cat)
        assert tcp.translation[2] == pytest.approx(total)

    def test_zero_dof_chain(self):
        chain = build_chain(ModuleSequence(("base", "drill")), self.cat)
        assert chain.dof == 0
        forward_kinematics(chain, ORIGIN, [])

    def test_six_dof_chain(self):
        seq = ModuleSequence(
            ("base", "straight", "elbow", "link_100", "straight", "elbow",
             "straight", "elbow", "drill")
        )
        assert build_chain(seq, self.cat).dof == 6

    def test_invalid_assembly_rejected(self):
        with pytest.raises(InvalidAssembly):
            build_chain(ModuleSequence(("straight", "drill")), self.cat)

    def test_availability_not_rechecked(self):
        # four straights exceed stock but the model itself is well-defined
        seq = ModuleSequence(
            ("base", "straight", "straight", "straight", "straight", "drill")
        )
        assert build_chain(seq, self.cat).dof == 4

    def test_rebuild_identical(self):
        seq = ModuleSequence(("base", "straight", "elbow", "drill"))
        a = build_chain(seq, self.cat)
        b = build_chain(ModuleSequence(tuple(seq.ids)), self.cat)
        q = [0.3, -0.7]
        ta = forward_kinematics(a, ORIGIN, q)
        tb = forward_kinematics(b, ORIGIN, q)
        assert np.array_equal(ta.translation, tb.translation)
        assert np.array_equal(ta.rotation, tb.rotation)


class TestForwardKinematics:
    def test_straight_configuration(self):
        chain = planar_2r_chain()
        tcp = forward_kinematics(chain, ORIGIN, (0.0, 0.0))
        assert np.allclose(tcp.translation, (0, 0, 2), atol=1e-12)

    def test_quarter_turn(self):
        chain = planar_2r_chain()
        tcp = forward_kinematics(chain, ORIGIN, (math.pi / 2, 0.0))
        assert np.allclose(tcp.translation, (2, 0, 0), atol=1e-12)
        assert np.allclose(tcp.rotation, rot_y(math.pi / 2), atol=1e-12)

    def test_matches_analytic_grid(self):
        chain = planar_2r_chain()
        for q1 in np.linspace(-3, 3, 7):
            for q2 in np.linspace(-3, 3, 7):
                tcp = forward_kinematics(chain, ORIGIN, (q1, q2))
                assert np.allclose(
                    tcp.translation, analytic_2r_fk(q1, q2), atol=1e-10
                )

    def test_base_offset_shifts_tcp(self):
        chain = planar_2r_chain()
        q = (0.4, -0.9)
        t0 = forward_kinematics(chain, ORIGIN, q).translation
        t1 = forward_kinematics(chain, BasePose(1.0, 0.0, 0.0), q).translation
        assert np.allclose(t1 - t0, (1, 0, 0), atol=1e-12)

    def test_base_composition_property(self):
        cat = default_catalog()
        rng = np.random.default_rng(11)
        for _ in range(20):
            chain = build_chain(random_genome(cat, rng), cat)
            q = rng.uniform(*chain.joint_limits()) if chain.dof else np.zeros(0)
            b = BasePose(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-3, 3))
            direct = forward_kinematics(chain, b, q)
            composed = Pose.from_matrix(
                b.matrix() @ forward_kinematics(chain, ORIGIN, q).matrix()
            )
            assert direct.isclose(composed, tol=1e-9)

    def test_dimension_mismatch(self):
        chain = planar_2r_chain()
        with pytest.raises(DimensionMismatch):
            forward_kinematics(chain, ORIGIN, (0.0,))


class TestLinkFrames:
    def test_frame_per_module(self):
        chain = planar_2r_chain()
        frames = link_frames(chain, ORIGIN, (0.1, 0.2))
        assert len(frames) == chain.n_modules

    def test_zero_dof_frames_are_fixed_transforms(self):
        cat = default_catalog()
        chain = build_chain(ModuleSequence(("base", "drill")), cat, mount_lift=0.0)
        frames = link_frames(chain, ORIGIN, [])
        assert np.allclose(frames[0].matrix(), np.eye(4))
        assert np.allclose(frames[1].matrix(), chain.module_transforms[0])


class TestJacobian:
    def test_single_joint_lever(self):
        cat = planar_2r_catalog(l1=0.8, l2=0.0)
        chain = build_chain(
            ModuleSequence(("mount0", "pivot1", "pivot2", "tool0")), cat,
            mount_lift=0.0,
        )
        # TCP at radius 0.8 from the second pivot's parent; arm horizontal
        jac = jacobian(chain, ORIGIN, (math.pi / 2, 0.0))
        assert np.linalg.norm(jac[:3, 0]) == pytest.approx(0.8, abs=1e-12)

    def test_finite_difference_on_random_chains(self):
        # central differences vs the analytic Jacobian on 100 random chains
        cat = default_catalog()
        rng = np.random.default_rng(12)
        h = 1e-6
        checked = 0
        while checked < 100:
            chain = build_chain(random_genome(cat, rng), cat)
            if chain.dof == 0:
                continue
            lo, hi = chain.joint_limits()
            q = rng.uniform(lo + h, hi - h)
            b = BasePose(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-3, 3))
            jac = jacobian(chain, b, q)
            for i in range(chain.dof):
                dq = np.zeros(chain.dof)
                dq[i] = h
                p_plus = forward_kinematics(chain, b, q + dq)
                p_minus = forward_kinematics(chain, b, q - dq)
                lin = (p_plus.translation - p_minus.translation) / (2 * h)
                drot = p_plus.rotation @ p_minus.rotation.T
                ang = (
                    np.array(
                        [drot[2, 1] - drot[1, 2], drot[0, 2] - drot[2, 0],
                         drot[1, 0] - drot[0, 1]]
                    )
                    / 2.0
                ) / (2 * h)
                col = np.concatenate([lin, ang])
                scale = max(1.0, float(np.linalg.norm(jac[:, i])))
                assert np.allclose(jac[:, i], col, atol=1e-5 * scale), (
                    f"joint {i} of {chain.source_ids}"
                )
            checked += 1

    def test_columns_zero_for_tail_aligned_joint(self):
        # spinning the last module about its own z moves nothing when the
        # tail offset is along that z
        cat = default_catalog()
        chain = build_chain(ModuleSequence(("base", "straight", "drill")), cat)
        jac = jacobian(chain, ORIGIN, [0.7])
        assert np.allclose(jac[:3, 0], 0.0, atol=1e-12)


class TestStaticTorques:
    def test_gravity_lever(self):
        m, l = 2.5, 0.8
        cat = planar_2r_catalog(l1=l, l2=0.0, mass=0.0)
        mods = dict(cat.modules)
        mods["pivot1"] = _m(
            "pivot1", "elbow_joint", (0, 0, l), mass=m, com=(0, 0, l),
            joint_axis=(0, 1, 0), joint_limits=(-math.pi, math.pi),
            torque_limit=1e9,
        )
        cat = Catalog(mods, {k: 1 for k in mods})
        chain = build_chain(
            ModuleSequence(("mount0", "pivot1", "pivot2", "tool0")), cat,
            mount_lift=0.0,
        )
        tau = static_torques(chain, ORIGIN, (math.pi / 2, 0.0))
        assert abs(tau[0]) == pytest.approx(m * GRAVITY * l, abs=1e-9)
        tau_up = static_torques(chain, ORIGIN, (0.0, 0.0))
        assert tau_up[0] == pytest.approx(0.0, abs=1e-9)

    def test_wrench_matches_cross_product(self):
        chain = planar_2r_chain()
        q = (0.3, -0.8)
        f = np.array([5.0, -2.0, 1.0])
        tau = static_torques(chain, ORIGIN, q, np.concatenate([f, np.zeros(3)]),
                             gravity=False)
        frames = link_frames(chain, ORIGIN, q)
        tcp = forward_kinematics(chain, ORIGIN, q)
        for k, joint in enumerate(chain.joints):
            fr = frames[joint.module_index]
            axis_w = fr.rotation @ joint.axis
            r = tcp.translation - fr.translation
            assert tau[k] == pytest.approx(float(np.cross(axis_w, r) @ f), abs=1e-9)

    def test_gravity_matches_potential_gradient(self):
        cat = default_catalog()
        rng = np.random.default_rng(13)
        h = 1e-6
        checked = 0
        while checked < 30:
            chain = build_chain(random_genome(cat, rng), cat)
            if chain.dof == 0:
                continue
            lo, hi = chain.joint_limits()
            q = rng.uniform(lo + h, hi - h)
            tau = static_torques(chain, ORIGIN, q)
            for i in range(chain.dof):
                dq = np.zeros(chain.dof)
                dq[i] = h
                du = (
                    potential_energy(chain, ORIGIN, q + dq)
                    - potential_energy(chain, ORIGIN, q - dq)
                ) / (2 * h)
                assert tau[i] == pytest.approx(du, abs=1e-5 * max(1.0, abs(du)))
            checked += 1

    def test_linear_in_wrench(self):
        chain = planar_2r_chain()
        q = (0.5, 0.4)
        rng = np.random.default_rng(14)
        w1 = rng.normal(size=6)
        w2 = rng.normal(size=6)
        t1 = static_torques(chain, ORIGIN, q, w1, gravity=False)
        t2 = static_torques(chain, ORIGIN, q, w2, gravity=False)
        t12 = static_torques(chain, ORIGIN, q, w1 + w2, gravity=False)
        assert np.allclose(t12, t1 + t2, atol=1e-12)

    def test_gravity_plus_wrench_additive(self):
        chain = planar_2r_chain(mass=1.5)
        q = (1.0, -0.4)
        w = np.array([3.0, 1.0, -2.0, 0.1, 0.0, 0.2])
        combined = static_torques(chain, ORIGIN, q, w)
        parts = static_torques(chain, ORIGIN, q) + static_torques(
            chain, ORIGIN, q, w, gravity=False
        )
        assert np.allclose(combined, parts, atol=1e-12)


class TestPlanar2RInverse:
    def test_analytic_branches_close(self):
        # validate the oracle itself before using it
        chain = planar_2r_chain()
        for x, z in ((1.2, 1.1), (0.3, 1.8), (-1.0, 1.0), (1.9, 0.1)):
            for q1, q2 in analytic_2r_ik(x, z):
                tcp = forward_kinematics(chain, ORIGIN, (q1, q2))
                assert np.allclose(tcp.translation, (x, 0, z), atol=1e-12)

    def test_solver_reaches_circle_points(self):
        chain = planar_2r_chain()
        tol = ToleranceSpec(
            box_bounds=(1e-7, 1e-7, 1e-7), axis=(0, 0, 1), max_angle=math.pi,
        )
        rng = np.random.default_rng(15)
        for k in range(12):
            x, z = 0.0, 0.0
            while math.hypot(x, z) < 0.2 or math.hypot(x, z) > 1.95:
                x, z = rng.uniform(-2, 2, size=2)
            branches = analytic_2r_ik(x, z)
            rot = rot_y(sum(branches[0]))
            goal = Goal(id=f"g{k}", pose=Pose(np.array([x, 0, z]), rot), tolerance=tol)
            res = solve_ik(chain, ORIGIN, goal, restarts=24,
                           rng=np.random.default_rng(k))
            tcp = forward_kinematics(chain, ORIGIN, res.q)
            assert np.linalg.norm(tcp.translation - (x, 0, z)) < 1e-6
            # the solution agrees with one analytic branch
            best = min(
                np.linalg.norm(
                    tcp.translation - analytic_2r_fk(q1, q2)
                )
                for q1, q2 in branches
            )
            assert best < 1e-6

    def test_goal_at_current_pose_returns_seed(self):
        chain = planar_2r_chain()
        q0 = np.array([0.6, -0.3])
        tcp = forward_kinematics(chain, ORIGIN, q0)
        tol = ToleranceSpec((1e-6, 1e-6, 1e-6), (0, 0, 1), max_angle=math.pi)
        goal = Goal(id="here", pose=tcp, tolerance=tol)
        res = solve_ik(chain, ORIGIN, goal, seed=q0)
        assert np.allclose(res.q, q0, atol=1e-9)
        assert res.tolerance_met

    def test_unreachable_goal_error_bounded_below(self):
        chain = planar_2r_chain()
        tol = ToleranceSpec((1e-6, 1e-6, 1e-6), (0, 0, 1), max_angle=math.pi)
        goal = Goal(id="far", pose=Pose.from_translation(5.0, 0, 0), tolerance=tol)
        res = solve_ik(chain, ORIGIN, goal)
        assert not res.tolerance_met
        assert np.linalg.norm(res.error.translation_error) >= 3.0 - 1e-6


class TestBasePose:
    def test_theta_wrapped(self):
        assert BasePose(0, 0, 3 * math.pi).theta == pytest.approx(math.pi)
        assert BasePose(0, 0, -3 * math.pi).theta == pytest.approx(math.pi)
        assert wrap_angle(math.pi) == math.pi

    def test_shift_composes(self):
        b = BasePose(1.0, 2.0, 0.5).shifted(0.1, -0.2, 0.25)
        assert (b.x, b.y) == (1.1, 1.8)
        assert b.theta == pytest.approx(0.75)
