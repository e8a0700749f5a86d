import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rydberg_lyapunov import dynamics
from rydberg_lyapunov.dynamics import (
    CSV_COLUMNS,
    ControlSchedule,
    FeedbackRule,
    IntegratorConfig,
    InvariantViolation,
    Trajectory,
    feedback_controls,
    fidelity,
    integrate,
    lindblad_rhs,
    noise_superoperator,
    purity,
    read_trajectory_csv,
    speed,
    time_to_threshold,
)
from rydberg_lyapunov.models import (
    EFF,
    EFFECTIVE_SPACE,
    InitialStateSpec,
    ModelParams,
    OpenSystem,
    StirapParams,
    build_acc_generators,
    build_effective_model,
    build_full_model,
    build_noise_generators,
    build_stirap_model,
    effective_ket,
    initial_state,
)
from rydberg_lyapunov.operators import DensityMatrix, Operator, SpaceDescriptor, projector

P0 = ModelParams()
QUBIT = SpaceDescriptor.of(("q", 2))


def eff_rho(name):
    return DensityMatrix.from_ket(EFFECTIVE_SPACE, effective_ket(name))


def eff_controlled(mus=(0.3, 0, 0, 0), p=P0):
    return build_effective_model(p).with_controls(build_acc_generators(p, mus))


def random_rho(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def decay_system(gamma):
    lop = Operator(QUBIT, [[0, math.sqrt(gamma)], [0, 0]])  # sqrt(gamma) |g><e|
    return OpenSystem("full", QUBIT, Operator(QUBIT, np.zeros((2, 2))), (lop,),
                      np.array([1.0, 0.0]))


class TestLindbladRhs:
    def test_singlet_is_stationary(self):
        out = lindblad_rhs(build_effective_model(P0), eff_rho("S"))
        assert np.max(np.abs(out.entries)) <= 1e-14

    def test_amplitude_damping_generator(self):
        gamma = 0.7
        excited = DensityMatrix(Operator(QUBIT, np.diag([0.0, 1.0])))
        out = lindblad_rhs(decay_system(gamma), excited).entries
        assert out[1, 1].real == pytest.approx(-gamma)
        assert out[0, 0].real == pytest.approx(gamma)

    def test_phi0_branching(self):
        sys = build_effective_model(P0)
        silent = OpenSystem("effective", sys.space, Operator(sys.space, np.zeros((6, 6))),
                            sys.collapse_ops, sys.target, params=P0)
        out = lindblad_rhs(silent, eff_rho("phi0")).entries
        g = P0.gamma
        assert out[EFF["S"], EFF["S"]].real == pytest.approx(g / 4)
        assert out[EFF["T"], EFF["T"]].real == pytest.approx(g / 4)
        assert out[EFF["gg"], EFF["gg"]].real == pytest.approx(g / 2)
        assert out[EFF["phi0"], EFF["phi0"]].real == pytest.approx(-g)

    def test_control_count_checked(self):
        with pytest.raises(ValueError, match="control values"):
            lindblad_rhs(eff_controlled(), eff_rho("S"), controls=())

    def test_space_checked(self):
        with pytest.raises(ValueError):
            lindblad_rhs(build_full_model(P0), eff_rho("S"))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_traceless_and_hermitian(self, seed):
        rng = np.random.default_rng(seed)
        sys = eff_controlled((0.3, 0.1, 0.2, 0.05)).with_noise(
            build_noise_generators(P0, (0.05, 0.1, 0.02), "effective"))
        rho = Operator(EFFECTIVE_SPACE, random_rho(rng, 6))
        out = lindblad_rhs(sys, rho, controls=rng.normal(size=4)).entries
        assert abs(np.trace(out)) <= 1e-12 * np.linalg.norm(rho.entries) * 1e3
        np.testing.assert_allclose(out, out.conj().T, atol=1e-12 * 1e3)


class TestCompiledRoute:
    """The superoperator route must agree with the direct matrix evaluation."""

    @pytest.mark.parametrize("case", ["effective", "full", "stirap", "noisy"])
    def test_matches_reference(self, case):
        rng = np.random.default_rng(7)
        if case == "effective":
            sys = eff_controlled((0.3, 0.2, 0.1, 0.4))
        elif case == "full":
            p = P0.replace(kappa=0.1)
            sys = build_full_model(p).with_controls(
                build_acc_generators(p, (0.3, 0, 0.2, 0), "full"))
        elif case == "stirap":
            sys = build_stirap_model(StirapParams(), 0.3, 0.4)
        else:
            sys = eff_controlled().with_noise(
                build_noise_generators(P0, (0.1, 0.05, 0.01), "effective"))
        d = sys.space.total_dim
        rho = random_rho(rng, d)
        comp = dynamics._Compiled(sys, FeedbackRule())
        t = 93.0
        y, f, _ = comp.evaluate(t, rho.ravel())
        f_ref = feedback_controls(sys, Operator(sys.space, rho))
        np.testing.assert_allclose(f, f_ref, atol=1e-13)
        ref = lindblad_rhs(sys, Operator(sys.space, rho), t, f_ref).entries
        np.testing.assert_allclose(y.reshape(d, d), ref, atol=1e-12)


class TestFeedback:
    def test_zero_at_target(self):
        sys = eff_controlled((0.3, 0.2, 0.1, 0.4))
        assert feedback_controls(sys, eff_rho("S")) == [0.0] * 4

    def test_eg_start_with_h1(self):
        rho = initial_state(InitialStateSpec(1.0))
        (f1,) = feedback_controls(eff_controlled(), rho)
        assert f1 == 0.0

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_sqrt_form_equals_projector_form(self, seed):
        rng = np.random.default_rng(seed)
        sys = eff_controlled((0.3, 0.2, 0.1, 0.4))
        rho = DensityMatrix(Operator(EFFECTIVE_SPACE, random_rho(rng, 6)))
        a = feedback_controls(sys, rho, FeedbackRule("projector"))
        b = feedback_controls(sys, rho, FeedbackRule("sqrt"))
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_unknown_formula(self):
        with pytest.raises(ValueError):
            FeedbackRule("uhlmann")


class TestObservables:
    def test_fidelity_examples(self):
        s = effective_ket("S")
        assert fidelity(eff_rho("S"), s) == pytest.approx(1)
        assert fidelity(eff_rho("gg"), s) == 0
        assert fidelity(initial_state(InitialStateSpec(1.0)), s) == pytest.approx(0.5)

    def test_purity_examples(self):
        assert purity(eff_rho("T")) == pytest.approx(1)
        assert purity(DensityMatrix.maximally_mixed(EFFECTIVE_SPACE)) == pytest.approx(1 / 6)
        rho = 0.98 * projector(EFFECTIVE_SPACE, effective_ket("gg"))
        eg = (effective_ket("T") + effective_ket("S")) / math.sqrt(2)
        rho = rho + 0.02 * projector(EFFECTIVE_SPACE, eg)
        assert purity(rho) == pytest.approx(0.9608)

    def test_speed_at_phi0(self):
        assert speed(build_effective_model(P0), eff_rho("phi0")) == pytest.approx(P0.gamma / 4)

    def test_speed_rejected_on_full_model(self):
        sys = build_full_model(P0)
        with pytest.raises(ValueError, match="effective"):
            speed(sys, initial_state(InitialStateSpec(1.0, "full")))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_control_gain_is_sum_of_squares(self, seed):
        rng = np.random.default_rng(seed)
        sys = eff_controlled((0.3, 0.2, 0.1, 0.4))
        rho = Operator(EFFECTIVE_SPACE, random_rho(rng, 6))
        f = feedback_controls(sys, rho)
        gain = speed(sys, rho, f) - speed(sys, rho, [0.0] * 4)
        assert gain == pytest.approx(sum(x * x for x in f), abs=1e-15)
        assert gain >= 0

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_speed_is_exact_derivative(self, seed):
        rng = np.random.default_rng(seed)
        sys = eff_controlled((0.3, 0, 0.2, 0))
        rho = Operator(EFFECTIVE_SPACE, random_rho(rng, 6))
        f = feedback_controls(sys, rho)
        drho = lindblad_rhs(sys, rho, 0.0, f)
        s = sys.target
        assert speed(sys, rho, f) == pytest.approx((s.conj() @ drho.entries @ s).real,
                                                   abs=1e-14)


class TestNoiseSuperoperator:
    def test_zero_intensity(self):
        h = Operator(QUBIT, [[1, 0], [0, -1]])
        rho = Operator(QUBIT, [[0.5, 0.5], [0.5, 0.5]])
        assert noise_superoperator([(h, 0.0)], rho).norm() == 0

    def test_sigma_z_dephasing(self):
        h = Operator(QUBIT, [[1, 0], [0, -1]])
        rho = Operator(QUBIT, [[0.5, 0.5], [0.5, 0.5]])
        out = noise_superoperator([(h, 1.0)], rho).entries
        np.testing.assert_allclose(out, [[0, -1], [-1, 0]])

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_traceless(self, seed):
        rng = np.random.default_rng(seed)
        chans = build_noise_generators(P0, rng.normal(size=3) * 0.1, "effective")
        out = noise_superoperator(chans, Operator(EFFECTIVE_SPACE, random_rho(rng, 6)))
        assert abs(out.trace()) <= 1e-10

    def test_non_hermitian_rejected(self):
        with pytest.raises(ValueError):
            noise_superoperator([(Operator(QUBIT, [[0, 1], [0, 0]]), 1.0)],
                                Operator(QUBIT, np.eye(2) / 2))


class TestIntegrate:
    def test_pure_decay(self):
        gamma = 0.5
        cfg = IntegratorConfig(dt=0.01 / gamma, t_f=10.0, record_stride=1, keep_states=True)
        rho0 = DensityMatrix(Operator(QUBIT, np.diag([0.0, 1.0])))
        traj = integrate(decay_system(gamma), rho0, cfg)
        pops = np.array([s.entries[1, 1].real for s in traj.states])
        np.testing.assert_allclose(pops, np.exp(-gamma * traj.times), atol=1e-8)

    def test_steady_state_fixation(self):
        cfg = IntegratorConfig(dt=0.01, t_f=100.0, record_stride=100, verify_state=True)
        traj = integrate(eff_controlled((0.3, 0.1, 0.2, 0.1)), eff_rho("S"), cfg)
        np.testing.assert_allclose(traj.fidelity, 1.0, atol=1e-9)
        assert np.max(np.abs(traj.controls)) == 0

    def test_records_and_final_state(self):
        cfg = IntegratorConfig(dt=0.01, t_f=1.0, record_stride=30)
        traj = integrate(eff_controlled(), initial_state(InitialStateSpec()), cfg)
        np.testing.assert_allclose(traj.times, [0, 0.3, 0.6, 0.9, 1.0])
        assert traj.controls.shape == (5, 1)
        assert isinstance(traj.final_state, DensityMatrix)
        assert traj.final_state.entries[EFF["S"], EFF["S"]].real == pytest.approx(
            traj.fidelity[-1])

    def test_invariants_over_long_run(self):
        cfg = IntegratorConfig(dt=0.01, t_f=1000.0, record_stride=100, verify_state=True)
        traj = integrate(eff_controlled(), initial_state(InitialStateSpec()), cfg)
        assert np.all(np.diff(traj.fidelity[200:]) >= -1e-12)

    def test_invariant_violation_reports_partial(self):
        # a non-Hermitian "Hamiltonian" drives rho off the Hermitian matrices
        leaky = OpenSystem("full", QUBIT, Operator(QUBIT, [[0, 1], [0, 0]]), (),
                           np.array([1.0, 0.0]))
        rho0 = DensityMatrix(Operator(QUBIT, np.diag([1.0, 0.0])))
        cfg = IntegratorConfig(dt=0.01, t_f=5.0, record_stride=10)
        with pytest.raises(InvariantViolation, match="hermiticity") as info:
            integrate(leaky, rho0, cfg)
        assert info.value.time == pytest.approx(0.1)
        assert len(info.value.partial) == 2

    def test_space_mismatch(self):
        with pytest.raises(ValueError):
            integrate(build_full_model(P0), eff_rho("S"), IntegratorConfig(t_f=1.0))

    def test_replay_reproduces_feedback(self):
        sys = eff_controlled()
        rho0 = initial_state(InitialStateSpec())
        live = integrate(sys, rho0, IntegratorConfig(dt=0.01, t_f=50.0, record_stride=1))
        rule = FeedbackRule(replay=live.schedule())
        replayed = integrate(sys, rho0, IntegratorConfig(dt=0.01, t_f=50.0, record_stride=1),
                             rule)
        np.testing.assert_allclose(replayed.controls, live.controls, atol=1e-15)
        np.testing.assert_allclose(replayed.fidelity, live.fidelity, atol=1e-6)

    def test_replay_labels_checked(self):
        sched = ControlSchedule([0.0, 1.0], [[0.0], [0.0]], (3,))
        with pytest.raises(ValueError, match="labels"):
            integrate(eff_controlled(), eff_rho("S"), IntegratorConfig(t_f=1.0),
                      FeedbackRule(replay=sched))


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            IntegratorConfig(dt=0.0)
        with pytest.raises(ValueError):
            IntegratorConfig(dt=0.01, t_f=0.001)
        with pytest.raises(ValueError):
            IntegratorConfig(record_stride=0)
        with pytest.raises(ValueError, match="multiple"):
            IntegratorConfig(dt=0.03, t_f=1.0)
        assert IntegratorConfig(dt=0.002, t_f=700.0).n_steps == 350000


class TestTrajectoryIO:
    def make(self):
        return Trajectory(np.array([0.0, 0.5, 1.0]), np.array([0.5, 0.6, 0.7]),
                          np.array([1.0, 0.9, 0.8]), np.array([0.0, 0.1, 0.2]),
                          np.array([[0.0], [1 / 3], [0.25]]), (3,))

    def test_csv_format(self, tmp_path):
        text = self.make().to_csv(tmp_path / "t.csv")
        lines = text.splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert lines[2] == "0.5,0.6,0.9,0.1,0,0,0.333333333333,0"
        assert (tmp_path / "t.csv").read_text() == text

    def test_round_trip(self, tmp_path):
        traj = self.make()
        traj.to_csv(tmp_path / "t.csv")
        back = read_trajectory_csv(tmp_path / "t.csv")
        np.testing.assert_allclose(back.control(3), traj.control(3), rtol=1e-11)
        np.testing.assert_allclose(back.fidelity, traj.fidelity)

    def test_length_checked(self):
        with pytest.raises(ValueError):
            Trajectory(np.array([0.0, 1.0]), np.array([0.5]), np.array([1.0, 1.0]),
                       np.array([0.0, 0.0]), np.zeros((2, 0)), ())

    def test_absent_control_is_zero(self):
        np.testing.assert_array_equal(self.make().control(1), np.zeros(3))


class TestTimeToThreshold:
    def traj(self, f):
        n = len(f)
        return Trajectory(np.arange(n, dtype=float), np.array(f), np.ones(n), np.zeros(n),
                          np.zeros((n, 0)), ())

    def test_never_reached(self):
        assert time_to_threshold(self.traj([0.3, 0.3, 0.3]), 0.5) is None

    def test_starts_at_threshold(self):
        assert time_to_threshold(self.traj([0.5, 0.6]), 0.5) == 0.0

    def test_interpolates(self):
        assert time_to_threshold(self.traj([0.2, 0.4, 0.8]), 0.6) == pytest.approx(1.5)

    def test_domain(self):
        with pytest.raises(ValueError):
            time_to_threshold(self.traj([0.2, 0.4]), 1.0)
