import math

import numpy as np
import pytest
import scipy.integrate
from pydantic import ValidationError

from hybrid_beam.core import InvalidArgumentError, snap_frequency
from hybrid_beam.run_config import build_rig
from hybrid_beam.tools.harmonics import FORCE_CHANNELS, VOLTAGE_CHANNELS, HarmonicVector, extract_harmonics
from hybrid_beam.tools.virtual_rig import (
    ActuatorConfig,
    RigConfig,
    SensorConfig,
    VirtualRig,
    noise_bound,
    noise_bound_limit,
    reconstruct_displacement,
    reconstruct_forces,
)

OMEGA = snap_frequency(0.0175, 0.2)


def drive(amplitude=0.5):
    return HarmonicVector(OMEGA, VOLTAGE_CHANNELS, [[0.0, amplitude], [0.0, 0.4j * amplitude]])


class TestReconstruction:
    def test_lasers(self):
        """测试两束激光重构界面挠度和转角"""
        u, phi = reconstruct_displacement(1.0, 0.7, 30.0)
        assert u == pytest.approx(1.0)
        assert phi == pytest.approx(0.01)
        with pytest.raises(InvalidArgumentError):
            reconstruct_displacement(1.0, 0.7, 0.0)

    def test_static_tip_load(self):
        """测试沿+w的静态端部载荷P下，顶面应变片给出剪力-P（幅值为P）、弯矩P*L_P"""
        EI, h, P, L_P = 46.0, 1.0, 0.01, 360.0
        d1, d2 = 10.0, 30.0
        eps1, eps2 = ((h / 2.0) * P * (L_P - d) / EI for d in (d1, d2))
        T, M = reconstruct_forces(eps1, eps2, d1, d2, 2.0 * EI / h)
        assert T == pytest.approx(-P)
        assert M == pytest.approx(P * L_P)

    def test_clamped_tip_load_through_gauges(self, ideal_rig):
        """测试物理侧梁界面固支、端部沿+w加载P时，应变片重构的剪力为-P、弯矩为P*L_P"""
        ps = ideal_rig.ps
        P = 0.01
        L_P = ps.length
        f = np.zeros(ps.model.ndof)
        f[ps.model.dof_map[-1, 0]] = P
        b = ps.bulk
        q = np.zeros(ps.model.ndof)
        q[b] = np.linalg.solve(ps.K[np.ix_(b, b)], f[b])
        eps1, eps2 = ideal_rig.strains(q)
        sensors = ideal_rig.config.sensors
        T, M = reconstruct_forces(eps1, eps2, sensors.gauge_1, sensors.gauge_2, ideal_rig.c)
        assert T == pytest.approx(-P, rel=1e-6)
        assert M == pytest.approx(P * L_P, rel=1e-6)

    def test_shear_noise_spread(self, rng):
        """测试两片应变片独立白噪声下剪力标准差为c*sigma*sqrt(2)/(d2-d1)"""
        sigma, c, d1, d2 = 2e-6, 92.0, 10.0, 30.0
        eps = sigma * rng.standard_normal((2, 100_000))
        T, _ = reconstruct_forces(eps[0], eps[1], d1, d2, c)
        assert np.std(T) == pytest.approx(c * sigma * math.sqrt(2.0) / (d2 - d1), rel=0.02)

    def test_rigid_motion(self, ideal_rig):
        """测试刚体平移加转动时激光重构出挠度和转角，应变片读数为零"""
        model = ideal_rig.ps.model
        u, phi = 0.4, -0.003
        x = model.node_coords - model.node_coords[0]
        q = np.zeros(model.ndof)
        q[model.dof_map[:, 0]] = u + phi * x
        q[model.dof_map[:, 1]] = phi
        l1, l2 = ideal_rig.lasers(q)
        u_rec, phi_rec = reconstruct_displacement(l1, l2, ideal_rig.config.sensors.laser_separation)
        assert u_rec == pytest.approx(u, rel=1e-12)
        assert phi_rec == pytest.approx(phi, rel=1e-9)
        np.testing.assert_allclose(ideal_rig.strains(q), 0.0, atol=1e-12)

    def test_gauge_order(self):
        """测试应变片位置顺序错误时报错"""
        with pytest.raises(InvalidArgumentError):
            reconstruct_forces(0.0, 0.0, 30.0, 10.0, 1.0)

    def test_vectorised(self):
        """测试数组输入逐点重构"""
        T, M = reconstruct_forces(np.zeros(4), np.ones(4), 10.0, 30.0, 2.0)
        np.testing.assert_allclose(T, 0.1)
        np.testing.assert_allclose(M, -1.0)


class TestNoiseBound:
    @pytest.mark.parametrize("rho,phi,n", [(50.0 / 17.5, 0.4, 3), (0.37, -1.1, 5), (2.5, 2.0, 1)])
    def test_matches_quadrature(self, rho, phi, n):
        """测试闭式误差与数值积分一致"""
        T_N = 1.3
        err_c, err_s = noise_bound(T_N, rho, phi, n)
        end = 2.0 * math.pi * n
        quad_c, _ = scipy.integrate.quad(lambda x: T_N * math.sin(rho * x + phi) * math.cos(x), 0.0, end, limit=400, epsabs=1e-13, epsrel=1e-12)
        quad_s, _ = scipy.integrate.quad(lambda x: T_N * math.sin(rho * x + phi) * math.sin(x), 0.0, end, limit=400, epsabs=1e-13, epsrel=1e-12)
        assert err_c == pytest.approx(quad_c / (n * math.pi), abs=1e-10)
        assert err_s == pytest.approx(quad_s / (n * math.pi), abs=1e-10)

    def test_integer_ratio_vanishes(self):
        """测试整数频率比时误差为零"""
        assert noise_bound(1.0, 3.0, 0.2, 5) == (0.0, 0.0)

    def test_invalid(self):
        """测试频率比为1或周期数非法时报错"""
        with pytest.raises(InvalidArgumentError):
            noise_bound(1.0, 1.0, 0.0, 3)
        with pytest.raises(InvalidArgumentError):
            noise_bound(1.0, 2.5, 0.0, 0)

    def test_limit_bounds_every_phase(self):
        """测试上界对所有相位成立且随周期数减小"""
        limit = noise_bound_limit(1.0, 2.857, 30)
        for phi in np.linspace(-math.pi, math.pi, 37):
            err_c, err_s = noise_bound(1.0, 2.857, phi, 30)
            assert abs(err_c) <= limit and abs(err_s) <= limit
        assert noise_bound_limit(1.0, 2.857, 60) < limit


class TestRigConfig:
    def test_ideal(self, config):
        """测试理想试验台关闭噪声、滤波和滞后"""
        ideal = config.rig.ideal()
        assert not ideal.noise.enabled
        assert not ideal.filter.enabled
        assert ideal.sensors.force_sensing == "reaction"
        assert all(a.lag == 0.0 and a.delay == 0.0 for a in ideal.actuators)
        assert config.rig.noise.enabled

    def test_transient_simulated_by_default(self, config):
        """测试默认不预置稳态，每次电压更新都仿真瞬态"""
        assert not RigConfig().prime_steady_state
        assert not config.rig.prime_steady_state
        assert not config.rig.ideal().prime_steady_state

    def test_validators(self):
        """测试应变片顺序和激振器数量校验"""
        with pytest.raises(ValidationError):
            SensorConfig(gauge_1=30.0, gauge_2=10.0)
        with pytest.raises(ValidationError):
            RigConfig(actuators=[ActuatorConfig()])
        with pytest.raises(ValidationError):
            RigConfig(unknown=1)

    def test_gauge_outside_beam(self, part):
        """测试应变片超出物理侧梁长时报错"""
        cfg = RigConfig(sensors=SensorConfig(gauge_1=10.0, gauge_2=400.0))
        with pytest.raises(InvalidArgumentError):
            VirtualRig(part.P_part, cfg)


class TestVirtualRig:
    def test_input_matrix(self, quiet_rig):
        """测试激振器电压到界面广义力的静态增益"""
        np.testing.assert_allclose(quiet_rig.input_matrix, [[0.1, 0.1], [6.0, -6.0]])

    def test_force_path(self, quiet_rig, ideal_rig):
        """测试只有经滤波的应变片测力才需要相位补偿"""
        assert quiet_rig.filters_forces
        assert not ideal_rig.filters_forces

    def test_filter_lag(self, quiet_rig, ideal_rig):
        """测试工作频段内滤波器相位滞后约0.06 rad"""
        assert quiet_rig.identify_filter_lag(0.0176) == pytest.approx(0.06, abs=0.01)
        assert ideal_rig.filter_response(0.0176) == 1.0

    def test_primed_window_is_steady(self, ideal_rig):
        """测试预置稳态后测量窗口的谐波与稳态解一致"""
        V = drive()
        resp = ideal_rig.steady_response(V)
        ideal_rig.prime(V)
        window = ideal_rig.measure_window(V, OMEGA, 2)
        u, phi = reconstruct_displacement(window.l1, window.l2, ideal_rig.config.sensors.laser_separation)
        measured = extract_harmonics({"u": u, "phi": phi}, OMEGA, 2, 1, ideal_rig.dt)
        expected = resp.interface.harmonic(1)
        np.testing.assert_allclose(measured.harmonic(1), expected, rtol=1e-6, atol=1e-9 * np.abs(expected).max())

        reaction = extract_harmonics(window.reaction.T, OMEGA, 2, 1, ideal_rig.dt, channels=FORCE_CHANNELS)
        expected = resp.reaction.harmonic(1)
        np.testing.assert_allclose(reaction.harmonic(1), expected, rtol=1e-6, atol=1e-9 * np.abs(expected).max())

    @pytest.mark.slow
    def test_transient_settles_on_steady_state(self, config, part):
        """测试从静止起振、不预置稳态时响应衰减到稳态解（误差小于0.5%）"""
        rig = build_rig(config, part, damping_scale=3.0, ideal=True)
        assert not rig.config.prime_steady_state
        V = drive()
        d_l = rig.config.sensors.laser_separation
        previous = None
        for _ in range(40):
            window = rig.measure_window(V, OMEGA, 10)
            u, phi = reconstruct_displacement(window.l1, window.l2, d_l)
            measured = extract_harmonics({"u": u, "phi": phi}, OMEGA, 10, 1, rig.dt).harmonic(1)
            if previous is not None and np.abs(measured - previous).max() < 1e-5 * np.abs(measured).max():
                break
            previous = measured
        else:
            pytest.fail("response did not settle within 40 windows")
        expected = rig.steady_response(V).interface.harmonic(1)
        assert abs(measured[0] - expected[0]) <= 0.005 * abs(expected[0])
        assert abs(measured[1] - expected[1]) <= 0.005 * abs(expected[1])

    def test_time_step_refinement(self, config, part):
        """测试采样周期减半时稳态幅值变化小于0.1%，且误差按二阶收敛"""
        rig_cfg = config.rig.ideal()
        coarse = VirtualRig(part.P_part, rig_cfg)
        fine = VirtualRig(part.P_part, rig_cfg.model_copy(update={"dt": rig_cfg.dt / 2.0}))
        V = drive()
        exact = np.abs(coarse.steady_response(V, discrete=False).interface.harmonic(1))
        a_coarse = np.abs(coarse.steady_response(V).interface.harmonic(1))
        a_fine = np.abs(fine.steady_response(V).interface.harmonic(1))
        np.testing.assert_allclose(a_fine, a_coarse, rtol=1e-3)
        ratio = np.abs(a_coarse - exact) / np.abs(a_fine - exact)
        np.testing.assert_allclose(ratio, 4.0, rtol=0.1)

    def test_linear_in_voltage(self, ideal_rig):
        """测试零电压无响应，电压加倍响应加倍，响应满足叠加"""
        def window(V):
            ideal_rig.reset()
            return ideal_rig.measure_window(V, OMEGA, 1)

        rest = window(HarmonicVector.zeros(OMEGA, VOLTAGE_CHANNELS, 1))
        for name in ("l1", "l2", "eps1", "eps2", "reaction"):
            assert not np.any(getattr(rest, name))

        front = HarmonicVector(OMEGA, VOLTAGE_CHANNELS, [[0.0, 0.5], [0.0, 0.0]])
        back = HarmonicVector(OMEGA, VOLTAGE_CHANNELS, [[0.0, 0.0], [0.0, 0.2j]])
        single, double = window(front), window(front * 2.0)
        both, other = window(front + back), window(back)
        for name in ("l1", "l2", "eps1", "eps2", "reaction"):
            a, b = getattr(single, name), getattr(double, name)
            np.testing.assert_array_equal(b, 2.0 * a)
            total = getattr(single, name) + getattr(other, name)
            np.testing.assert_allclose(getattr(both, name), total, rtol=1e-9, atol=1e-12 * np.abs(total).max())

    def test_window_layout(self, quiet_rig):
        """测试窗口为整数个周期且导出列齐全"""
        V = drive()
        quiet_rig.prime(V)
        window = quiet_rig.measure_window(V, OMEGA, 3)
        assert len(window.t) == 3 * window.period
        assert window.period == round(1.0 / (OMEGA * quiet_rig.dt))
        assert list(window.to_frame().columns) == ["t_ms", "l1_mm", "l2_mm", "eps1", "eps2", "v_front_V", "v_back_V"]
        assert window.averaged["l1"].shape == (window.period,)

    def test_window_arguments(self, quiet_rig):
        """测试频率不一致或周期数非法时报错"""
        V = drive()
        with pytest.raises(InvalidArgumentError):
            quiet_rig.measure_window(V, OMEGA * 2, 1)
        with pytest.raises(InvalidArgumentError):
            quiet_rig.measure_window(V, OMEGA, 0)

    def test_free_decay_energy(self, ideal_rig):
        """测试无激励时能量单调衰减"""
        ideal_rig.prime(drive())
        state, _ = ideal_rig.step(ideal_rig.state, [0.0, 0.0])
        energies = [ideal_rig.energy(state)]
        for _ in range(2000):
            state, _ = ideal_rig.step(state, [0.0, 0.0])
            energies.append(ideal_rig.energy(state))
        diffs = np.diff(energies)
        assert np.all(diffs <= 1e-12 * energies[0])
        assert energies[-1] < 0.9 * energies[0]

    def test_step_frame(self, ideal_rig):
        """测试单步推进返回传感器帧并前进一个采样周期"""
        state = ideal_rig.initial_state()
        new, frame = ideal_rig.step(state, [1.0, 1.0])
        assert new.t == pytest.approx(ideal_rig.dt)
        assert frame.t == pytest.approx(ideal_rig.dt)
        assert frame.l1 > 0


class TestNoise:
    def test_calibration_ratios(self, config, part):
        """测试噪声幅值按应变信号幅值的比例标定"""
        rig = build_rig(config, part)
        amplitude = rig.calibrate_noise(OMEGA, [1.0, 0.0])
        assert amplitude > 0
        assert rig.mains_amplitude == pytest.approx(5.0 * amplitude)
        assert rig.white_sigma == pytest.approx(0.02 * amplitude)

    def test_seeded_noise_repeats(self, config, part):
        """测试相同种子的噪声可复现，reset后重新播种"""
        windows = []
        for _ in range(2):
            rig = build_rig(config, part, seed=7)
            rig.calibrate_noise(OMEGA, [1.0, 0.0])
            rig.prime(drive())
            windows.append(rig.measure_window(drive(), OMEGA, 1).eps1)
        np.testing.assert_array_equal(windows[0], windows[1])

        rig.reset()
        rig.prime(drive())
        np.testing.assert_array_equal(rig.measure_window(drive(), OMEGA, 1).eps1, windows[0])

    def test_different_seeds_differ(self, config, part):
        """测试不同种子给出不同噪声"""
        eps = []
        for seed in (1, 2):
            rig = build_rig(config, part, seed=seed)
            rig.calibrate_noise(OMEGA, [1.0, 0.0])
            rig.prime(drive())
            eps.append(rig.measure_window(drive(), OMEGA, 1).eps1)
        assert not np.allclose(eps[0], eps[1])

    @pytest.mark.slow
    def test_mains_error_through_window(self, config, part):
        """测试经应变片、滤波和加窗后的工频误差符合闭式解，周期数加倍时上界减半"""
        noise = config.rig.noise.model_copy(update={"white_sigma": 0.0, "mains_phase": 0.7})
        noisy = VirtualRig(part.P_part, config.rig.model_copy(update={"noise": noise}))
        clean = VirtualRig(part.P_part, config.rig.model_copy(update={"noise": noise.model_copy(update={"enabled": False})}))
        noisy.calibrate_noise(OMEGA, [1.0, 0.0])
        V = drive()
        windows = {}
        for rig in (noisy, clean):
            rig.prime(V)
            rig.measure_window(V, OMEGA, 30)
            windows[rig] = [rig.measure_window(V, OMEGA, n) for n in (30, 60)]

        limits = [noisy.mains_limit(OMEGA, n) for n in (30, 60)]
        assert limits[1] == pytest.approx(limits[0] / 2.0, rel=1e-12)
        assert clean.mains_limit(OMEGA, 30) == 0.0
        for w_noisy, w_clean, limit in zip(windows[noisy], windows[clean], limits):
            coeffs = [
                extract_harmonics({"eps1": w.eps1, "eps2": w.eps2}, OMEGA, w.n, 1, w.dt).harmonic(1)
                for w in (w_noisy, w_clean)
            ]
            err = coeffs[0] - coeffs[1]
            assert np.all(np.abs(err.real) <= limit)
            assert np.all(np.abs(err.imag) <= limit)
            assert np.abs(err - noisy.mains_error(w_noisy)).max() <= 0.05 * limit
            assert np.abs(err).max() > 0
