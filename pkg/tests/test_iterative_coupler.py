import math

import numpy as np
import pytest
from pydantic import ValidationError

from hybrid_beam.core import InvalidArgumentError, snap_frequency
from hybrid_beam.run_config import build_rig
from hybrid_beam.tools.harmonics import DISPLACEMENT_CHANNELS, FORCE_CHANNELS, HarmonicVector
from hybrid_beam.tools.iterative_coupler import (
    BroydenState,
    CouplerConfig,
    Evaluation,
    HybridLoop,
    NumericalSubstructure,
    broyden_step,
    broyden_update,
    build_numerical,
    calibrate_forcing,
    displacement_residual,
    estimate_damping,
    invert_jacobian,
    probe_jacobian,
    reference_response,
    residual,
    solve_point,
    steady_check,
    sweep,
    sweep_parallel,
    sync_metrics,
)
from hybrid_beam.tools.virtual_rig import VirtualRig

OMEGA = snap_frequency(0.0175, 0.2)
LINEAR = np.array([[2.0, 0.3, 0.0, 0.1], [0.1, 1.5, 0.2, 0.0], [0.0, 0.2, 1.8, 0.3], [0.1, 0.0, 0.1, 1.2]])
TARGET = np.array([1.0, -2.0, 0.5, 3.0])


def linear_residual(x):
    return LINEAR @ x - TARGET


@pytest.fixture
def numerical(part):
    return NumericalSubstructure(part, 0.01)


class TestResidual:
    def test_zero_at_fixed_point(self, numerical):
        """测试界面平衡时位移残差为零"""
        D = numerical.stiffness(OMEGA)
        F_N = numerical.external_force(OMEGA, 1)
        U_P = HarmonicVector(OMEGA, DISPLACEMENT_CHANNELS, [[0.0, 0.8 - 0.1j], [0.0, 0.004j]])
        F_P = F_N.with_harmonic(1, F_N.harmonic(1) - D.D @ U_P.harmonic(1))
        R = residual(U_P, F_P, [D], F_N)
        assert R.norm() < 1e-12

    def test_force_form(self, numerical):
        """测试力残差经D_N^-1映射后等于位移残差"""
        D = numerical.stiffness(OMEGA)
        F_N = numerical.external_force(OMEGA, 1)
        U_P = HarmonicVector(OMEGA, DISPLACEMENT_CHANNELS, [[0.0, 0.5], [0.0, -0.002j]])
        F_P = HarmonicVector(OMEGA, FORCE_CHANNELS, [[0.0, 0.003], [0.0, 0.1 + 0.2j]])
        R_u = residual(U_P, F_P, [D], F_N, "displacement")
        R_f = residual(U_P, F_P, [D], F_N, "force")
        assert R_f.channels == FORCE_CHANNELS
        np.testing.assert_allclose(D.D @ R_u.harmonic(1), R_f.harmonic(1), rtol=1e-10)
        np.testing.assert_allclose(displacement_residual(R_f, [D]).coeffs, R_u.coeffs, rtol=1e-10, atol=1e-15)
        assert displacement_residual(R_u, [D]) is R_u

    def test_harmonic_count_mismatch(self, numerical):
        """测试谐波数不一致时报错"""
        D = numerical.stiffness(OMEGA)
        U_P = HarmonicVector.zeros(OMEGA, DISPLACEMENT_CHANNELS, 2)
        F_P = HarmonicVector.zeros(OMEGA, FORCE_CHANNELS, 2)
        with pytest.raises(InvalidArgumentError):
            residual(U_P, F_P, [D], numerical.external_force(OMEGA, 2))

    def test_steady_check(self):
        """测试相邻两次残差范数变化小于容差视为稳态"""
        assert not steady_check([0.5])
        assert not steady_check([0.5, 0.3], 0.013)
        assert steady_check([0.5, 0.3, 0.295], 0.013)


class TestBroyden:
    def test_linear_convergence(self):
        """测试由单位阵出发的Broyden法在线性问题上收敛"""
        state = BroydenState(np.eye(4))
        x = np.zeros(4)
        r = linear_residual(x)
        for _ in range(20):
            x, state = broyden_step(state, x, r)
            r = linear_residual(x)
            if np.linalg.norm(r) < 1e-10:
                break
        assert np.linalg.norm(r) < 1e-10
        np.testing.assert_allclose(x, np.linalg.solve(LINEAR, TARGET), atol=1e-9)
        assert state.updates > 0

    def test_eight_unknowns(self, rng):
        """测试八个未知量的线性问题由单位阵出发在25步内收敛到1e-10"""
        A = np.eye(8) + 0.3 * rng.standard_normal((8, 8)) / math.sqrt(8)
        target = rng.standard_normal(8)
        state = BroydenState(np.eye(8))
        x = np.zeros(8)
        r = A @ x - target
        steps = 0
        while np.linalg.norm(r) >= 1e-10 and steps < 25:
            x, state = broyden_step(state, x, r)
            r = A @ x - target
            steps += 1
        assert np.linalg.norm(r) < 1e-10
        np.testing.assert_allclose(x, np.linalg.solve(A, target), atol=1e-8)

    def test_probe_jacobian_one_step(self):
        """测试差分雅可比在线性问题上一步求解"""
        x = np.zeros(4)
        r = linear_residual(x)
        J = probe_jacobian(linear_residual, x, r, 1e-3)
        np.testing.assert_allclose(J, LINEAR, atol=1e-9)
        x1, _ = broyden_step(BroydenState(invert_jacobian(J)), x, r)
        assert np.linalg.norm(linear_residual(x1)) < 1e-9

    def test_secant_condition(self):
        """测试更新后的逆雅可比满足割线条件"""
        state = broyden_update(BroydenState(np.eye(4)), np.zeros(4), linear_residual(np.zeros(4)))
        x1 = np.array([0.3, -0.1, 0.2, 0.4])
        state = broyden_update(state, x1, linear_residual(x1))
        dR = linear_residual(x1) - linear_residual(np.zeros(4))
        np.testing.assert_allclose(state.B @ dR, x1, atol=1e-12)

    def test_degenerate_update_skipped(self):
        """测试分母过小时跳过更新并计数"""
        state = broyden_update(BroydenState(np.eye(2)), np.ones(2), np.ones(2))
        state = broyden_update(state, np.ones(2), np.zeros(2))
        assert state.skipped == 1
        assert state.updates == 0
        np.testing.assert_array_equal(state.B, np.eye(2))
        assert state.rebased().V_prev is None

    def test_singular_jacobian(self):
        """测试奇异雅可比退化为伪逆"""
        np.testing.assert_array_equal(invert_jacobian(np.zeros((2, 2))), np.zeros((2, 2)))


class TestSyncMetrics:
    def test_delay_and_amplification(self):
        """测试物理侧滞后0.54 ms、放大1%时的同步指标"""
        omega = 0.0176
        lag = np.exp(-1j * 2.0 * math.pi * omega * 0.54) * 1.01
        U_N = HarmonicVector(omega, DISPLACEMENT_CHANNELS, [[0.0, 1.0], [0.0, 0.01j]])
        F_N = HarmonicVector(omega, FORCE_CHANNELS, [[0.0, 0.02], [0.0, 0.5]])
        U_P = HarmonicVector(omega, DISPLACEMENT_CHANNELS, U_N.coeffs * lag)
        F_P = HarmonicVector(omega, FORCE_CHANNELS, F_N.coeffs * lag)
        metrics = sync_metrics(U_N, F_N, U_P, F_P)
        assert set(metrics) == {"shear", "moment", "u", "phi"}
        for values in metrics.values():
            assert values["delay_ms"] == pytest.approx(0.54, abs=1e-9)
            assert values["amplification_pct"] == pytest.approx(1.0, abs=1e-9)

    def test_perfect_sync(self):
        """测试两侧完全同步时时延和放大均为零"""
        U = HarmonicVector(OMEGA, DISPLACEMENT_CHANNELS, [[0.0, 0.7 - 0.2j], [0.0, 0.003j]])
        F = HarmonicVector(OMEGA, FORCE_CHANNELS, [[0.0, 0.01 + 0.002j], [0.0, -0.4]])
        for values in sync_metrics(U, F, U, F).values():
            assert values["delay_ms"] == pytest.approx(0.0, abs=1e-12)
            assert values["amplification_pct"] == pytest.approx(0.0, abs=1e-10)

    def test_implied_force_uses_physical_motion(self, ideal_rig, numerical):
        """测试数值侧力取F_N - D_N U_P，而F_N - D_N U_N恒等于F_P"""
        cfg = CouplerConfig(n_harmonics=1)
        loop = HybridLoop(ideal_rig, numerical, cfg)
        V = loop.initial_guess(OMEGA)
        U_P = HarmonicVector(OMEGA, DISPLACEMENT_CHANNELS, [[0.0, 0.6 + 0.1j], [0.0, -0.002j]])
        F_P = HarmonicVector(OMEGA, FORCE_CHANNELS, [[0.0, 0.004 - 0.001j], [0.0, 0.2j]])
        ev = Evaluation(V, U_P, F_P, None, 0.0, 0, [], None)
        U_N, F_NS = loop.implied(ev)
        D = numerical.stiffness(OMEGA).D
        F_ext = numerical.external_force(OMEGA, 1).harmonic(1)
        np.testing.assert_allclose(F_NS.harmonic(1), F_ext - D @ U_P.harmonic(1), rtol=1e-10)
        np.testing.assert_allclose(F_ext - D @ U_N.harmonic(1), F_P.harmonic(1), rtol=1e-8, atol=1e-14)
        assert not np.allclose(F_NS.harmonic(1), F_P.harmonic(1))

    def test_zero_amplitude(self):
        """测试数值侧幅值为零的通道无同步指标"""
        zeros_u = HarmonicVector.zeros(0.0176, DISPLACEMENT_CHANNELS, 1)
        zeros_f = HarmonicVector.zeros(0.0176, FORCE_CHANNELS, 1)
        metrics = sync_metrics(zeros_u, zeros_f, zeros_u, zeros_f)
        assert metrics["u"] == {"delay_ms": None, "amplification_pct": None}


class TestCouplerConfig:
    def test_validators(self):
        """测试容差和频率范围校验"""
        with pytest.raises(ValidationError):
            CouplerConfig(convergence_tol=0.01, transient_tol=0.02)
        with pytest.raises(ValidationError):
            CouplerConfig(freq_start_hz=19.0, freq_stop_hz=16.0)
        with pytest.raises(ValidationError):
            CouplerConfig(residual_form="energy")

    def test_sweep_grid(self):
        """测试16-19 Hz扫频网格为31个整数采样周期的频率"""
        grid = CouplerConfig().frequencies(0.2)
        assert len(grid) == 31
        assert all(b > a for a, b in zip(grid, grid[1:]))
        for j, omega in enumerate(grid):
            period = 1.0 / (omega * 0.2)
            assert period == pytest.approx(round(period), abs=1e-9)
            assert abs(omega * 1000.0 - (16.0 + 0.1 * j)) < 0.05


class TestNumericalSubstructure:
    def test_interface_forcing(self, numerical):
        """测试默认在界面施加剪力"""
        F = numerical.external_force(OMEGA, 2)
        np.testing.assert_array_equal(F.harmonic(1), [0.01, 0.0])
        np.testing.assert_array_equal(F.harmonic(2), [0.0, 0.0])
        assert numerical.stiffness(OMEGA) is numerical.stiffness(OMEGA)

    def test_bulk_forcing(self, part):
        """测试数值侧内部加载点经凝聚传到界面"""
        inner = NumericalSubstructure(part, 0.01, forcing_position=100.0)
        assert np.all(np.abs(inner.external_force(OMEGA, 1).harmonic(1)) > 0)

    @pytest.mark.parametrize("position", [0.0, 170.0])
    def test_invalid_forcing_point(self, part, position):
        """测试加载点在固支端或界面上时报错"""
        with pytest.raises(InvalidArgumentError):
            NumericalSubstructure(part, 0.01, forcing_position=position)

    def test_calibrated_peak(self, numerical, part):
        """测试标定后参考响应峰值等于目标幅值"""
        omegas = CouplerConfig().frequencies(0.2)[::5]
        forcing = calibrate_forcing(numerical, part.P_part, omegas, 1.0)
        scaled = numerical.with_forcing(forcing)
        peak = max(reference_response(scaled, part.P_part, w).amplitude("u") for w in omegas)
        assert peak == pytest.approx(1.0)


class TestDampingEstimate:
    def test_half_power(self):
        """测试半功率带宽法识别单自由度曲线的阻尼比"""
        f = np.arange(16.0, 19.0001, 0.01)
        r = f / 17.5
        amp = 1.0 / np.sqrt((1.0 - r**2) ** 2 + (2.0 * 0.01 * r) ** 2)
        est = estimate_damping(f, amp)
        assert est.peak_hz == pytest.approx(17.5, abs=0.01)
        assert est.zeta == pytest.approx(0.01, rel=0.05)

    def test_peak_outside_band(self):
        """测试单调曲线无法给出阻尼比"""
        est = estimate_damping([16.0, 17.0, 18.0, 19.0], [1.0, 2.0, 3.0, 4.0])
        assert est.zeta is None
        assert est.peak_hz == 19.0

    def test_too_few_points(self):
        """测试样本点过少时报错"""
        with pytest.raises(InvalidArgumentError):
            estimate_damping([16.0, 17.0], [1.0, 2.0])


class TestSolvePoint:
    def test_incommensurate_frequency(self, ideal_rig, numerical):
        """测试非整数采样周期的频率被拒绝"""
        with pytest.raises(InvalidArgumentError):
            solve_point(ideal_rig, 0.0165, None, CouplerConfig(), numerical)

    def test_unsorted_sweep(self, ideal_rig, numerical):
        """测试扫频频率必须升序"""
        with pytest.raises(InvalidArgumentError):
            sweep(ideal_rig, [0.018, 0.017], CouplerConfig(), numerical)

    @pytest.mark.slow
    def test_ideal_rig_matches_reference(self, ideal_rig, part):
        """测试理想试验台上收敛解与整体模型参考解一致"""
        cfg = CouplerConfig()
        numerical = build_numerical(part, ideal_rig.ps, cfg, [OMEGA])
        record = solve_point(ideal_rig, OMEGA, None, cfg, numerical)
        assert record.converged
        assert record.probes == 4
        assert record.reference_error((1.0, 30.0)) <= cfg.convergence_tol
        assert record.U_P.amplitude("u") == pytest.approx(1.0, rel=0.05)

    @pytest.mark.slow
    async def test_parallel_sweep_ordered(self, config, part):
        """测试并行扫频结果按频率排序且全部收敛"""
        cfg = CouplerConfig()
        omegas = cfg.frequencies(0.2)[::15]
        numerical = build_numerical(part, part.P_part, cfg, omegas)
        records = await sweep_parallel(lambda: build_rig(config, part, ideal=True), list(reversed(omegas)), cfg, numerical)
        assert [r.omega for r in records] == sorted(omegas)
        assert all(r.converged for r in records)

    @pytest.mark.slow
    def test_unprimed_transient(self, ideal_rig, part):
        """测试默认配置下每次电压更新都经历仿真瞬态并等待稳态"""
        assert not ideal_rig.config.prime_steady_state
        cfg = CouplerConfig()
        numerical = build_numerical(part, ideal_rig.ps, cfg, [OMEGA])
        record = solve_point(ideal_rig, OMEGA, None, cfg, numerical)
        assert record.converged
        evaluations = 1 + record.probes + record.iterations
        assert record.blocks >= 2 * evaluations
        assert record.residual_norm < cfg.convergence_tol
        assert record.reference_error((1.0, 30.0)) <= cfg.convergence_tol
        for name in ("shear", "moment", "u", "phi"):
            assert record.sync[name]["delay_ms"] is not None
        assert abs(record.sync["u"]["delay_ms"]) <= 0.2
        assert abs(record.sync["u"]["amplification_pct"]) <= 1.0

    @pytest.mark.slow
    def test_light_damping_waits_longer(self, config, part):
        """测试阻尼越小，瞬态衰减到稳态所需的测量窗口越多"""
        cfg = CouplerConfig(n_periods=5, transient_tol=1e-4, convergence_tol=1e-4, max_blocks=200)
        numerical = NumericalSubstructure(part, 0.01)
        blocks = {}
        for scale in (1.0, 3.0):
            rig = build_rig(config, part, damping_scale=scale, ideal=True)
            loop = HybridLoop(rig, numerical, cfg)
            ev = loop.evaluate(loop.initial_guess(OMEGA, 1.0))
            assert ev.blocks < cfg.max_blocks
            blocks[scale] = ev.blocks
        assert blocks[1.0] > blocks[3.0]

    @pytest.mark.slow
    def test_force_and_displacement_forms_agree(self, config, part):
        """测试力残差和位移残差两种形式收敛到同一组电压"""
        rig_cfg = config.rig.ideal().model_copy(update={"prime_steady_state": True})
        cfg = CouplerConfig(convergence_tol=1e-6, transient_tol=1e-7)
        numerical = build_numerical(part, part.P_part, cfg, [OMEGA])
        solutions = {}
        for form in ("displacement", "force"):
            form_cfg = cfg.model_copy(update={"residual_form": form})
            record = solve_point(VirtualRig(part.P_part, rig_cfg), OMEGA, None, form_cfg, numerical)
            assert record.converged
            solutions[form] = record.V.harmonic(1)
        scale = np.abs(solutions["displacement"]).max()
        np.testing.assert_allclose(solutions["force"], solutions["displacement"], rtol=1e-4, atol=1e-4 * scale)
