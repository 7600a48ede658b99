import numpy as np
import pytest

from hybrid_beam.core import InvalidArgumentError
from hybrid_beam.tools.beam_fe import (
    BoundaryCondition,
    BeamProperties,
    analytic_cantilever_frequencies,
    assemble,
    element_matrices,
    mode_shapes,
    natural_frequencies,
    node_at,
    pencil_eigenvalues,
)


class TestBeamProperties:
    def test_derived_section(self, props):
        """测试截面面积和惯性矩由宽度和厚度推导"""
        assert props.A == pytest.approx(25.4)
        assert props.I == pytest.approx(25.4 / 12.0)
        assert props.EI == pytest.approx(217.0 * 25.4 / 12.0)

    def test_rejects_non_positive(self):
        """测试非正的几何或材料参数被拒绝"""
        with pytest.raises(InvalidArgumentError):
            BeamProperties(E=0.0, rho=8.21e-6, b=25.4, h=1.0, L=530.0)
        with pytest.raises(InvalidArgumentError):
            BeamProperties(E=217.0, rho=8.21e-6, b=25.4, h=1.0, L=530.0, zeta_M=-1.0)


class TestElementMatrices:
    def test_stiffness_structure(self, props):
        """测试单元刚度矩阵的系数和符号"""
        le = 10.0
        _, Ke = element_matrices(props, le)
        k = props.EI / le**3
        assert Ke[0, 0] == pytest.approx(12.0 * k)
        assert Ke[0, 2] == pytest.approx(-12.0 * k)
        np.testing.assert_allclose(Ke, Ke.T)

    def test_rigid_translation(self, props):
        """测试刚体平动位于刚度矩阵零空间且质量守恒"""
        le = 7.5
        Me, Ke = element_matrices(props, le)
        rigid = np.array([1.0, 0.0, 1.0, 0.0])
        np.testing.assert_allclose(Ke @ rigid, 0.0, atol=1e-12)
        assert rigid @ Me @ rigid == pytest.approx(props.rhoA * le)

    def test_invalid_length(self, props):
        """测试非正单元长度抛出参数错误"""
        with pytest.raises(InvalidArgumentError):
            element_matrices(props, 0.0)


class TestAssemble:
    def test_dimensions(self, props):
        """测试各边界条件下的自由度数"""
        assert assemble(props, 12, BoundaryCondition.CLAMPED_FREE).ndof == 24
        assert assemble(props, 12, BoundaryCondition.CLAMPED_CLAMPED).ndof == 22
        assert assemble(props, 12, BoundaryCondition.FREE_FREE).ndof == 26

    def test_rayleigh_damping(self, props):
        """测试阻尼矩阵严格等于瑞利组合"""
        model = assemble(props, 20)
        np.testing.assert_allclose(model.C, props.zeta_M * model.M + props.zeta_K * model.K)

    def test_undamped(self, props):
        """测试零阻尼系数给出零阻尼矩阵"""
        undamped = BeamProperties(props.E, props.rho, props.b, props.h, props.L)
        assert not np.any(assemble(undamped, 8).C)

    def test_matrices_symmetric_definite(self, props):
        """测试质量矩阵对称正定，固支后刚度矩阵正定"""
        model = assemble(props, 15)
        np.testing.assert_array_equal(model.M, model.M.T)
        np.testing.assert_array_equal(model.K, model.K.T)
        assert np.all(np.linalg.eigvalsh(model.M) > 0)
        assert np.all(np.linalg.eigvalsh(model.K) > 0)

    def test_sub_span(self, props):
        """测试子跨段网格的节点坐标"""
        model = assemble(props, 5, BoundaryCondition.CLAMPED_CLAMPED, span=(100.0, 150.0))
        np.testing.assert_allclose(model.node_coords, np.linspace(100.0, 150.0, 6))
        assert model.length == pytest.approx(50.0)

    def test_too_few_elements(self, props):
        """测试单元数少于2时抛出参数错误"""
        with pytest.raises(InvalidArgumentError):
            assemble(props, 1)


class TestNaturalFrequencies:
    def test_measured_beam(self, model):
        """测试默认梁前三阶频率与实测值相差在7%以内"""
        modes = natural_frequencies(model, 3)
        for mode, measured in zip(modes, (2.8, 17.6, 49.2)):
            assert mode.frequency_hz == pytest.approx(measured, rel=0.07)

    def test_analytic_oracle(self, props):
        """测试80单元模型与解析悬臂梁频率相差小于0.1%"""
        modes = natural_frequencies(assemble(props, 80), 3)
        exact = analytic_cantilever_frequencies(props, 3)
        for mode, f in zip(modes, exact):
            assert mode.frequency_hz == pytest.approx(f, rel=1e-3)

    def test_mesh_convergence(self, props):
        """测试20到40单元加密后前三阶频率变化小于0.01%"""
        coarse = natural_frequencies(assemble(props, 20), 3)
        fine = natural_frequencies(assemble(props, 40), 3)
        for a, b in zip(coarse, fine):
            assert abs(a.frequency_hz - b.frequency_hz) / b.frequency_hz < 1e-4

    def test_second_mode_damping(self, model):
        """测试第二阶模态阻尼比约为0.8%"""
        modes = natural_frequencies(model, 2)
        assert modes[1].damping_ratio == pytest.approx(0.008, abs=5e-4)
        assert modes[0].damping_ratio > modes[1].damping_ratio

    def test_sorted_and_consistent(self, model):
        """测试频率升序且与特征值模一致"""
        modes = natural_frequencies(model, 5)
        freqs = [m.frequency_hz for m in modes]
        assert freqs == sorted(freqs)
        for m in modes:
            assert abs(m.eigenvalue) / (2.0 * np.pi) * 1000.0 == pytest.approx(m.frequency_hz)

    def test_invalid_count(self, model):
        """测试模态数超出范围时抛出参数错误"""
        with pytest.raises(InvalidArgumentError):
            natural_frequencies(model, 0)
        with pytest.raises(InvalidArgumentError):
            analytic_cantilever_frequencies(model.props, 100)


class TestModalQueries:
    def test_pencil_eigenvalue_count(self, small_model):
        """测试二次特征值问题给出2n个特征值"""
        assert len(pencil_eigenvalues(small_model)) == 2 * small_model.ndof

    def test_node_at(self, model):
        """测试最近节点查询"""
        assert node_at(model, 170.0) == 17
        assert node_at(model, 174.0) == 17

    def test_second_mode_has_one_node(self, model):
        """测试第二阶振型有且仅有一个节点"""
        _, shapes = mode_shapes(model, 2)
        w = shapes[1:, 1]
        assert np.count_nonzero(np.sign(w[:-1]) != np.sign(w[1:])) == 1
