import math

import pytest

from hybrid_beam.tools.mdbm import CellBisection, is_candidate


class TestCandidate:
    def test_sign_changes(self):
        """测试实部和虚部同时变号才算候选单元"""
        assert is_candidate([1 + 1j, -1 + 1j, 1 - 1j, -1 - 1j])
        assert not is_candidate([1 + 1j, -1 + 1j, 1 + 2j, -1 + 3j])

    def test_nan_corner(self):
        """测试含NaN角点的单元被剔除"""
        assert not is_candidate([complex("nan"), -1 + 1j, 1 - 1j, -1 - 1j])


class TestCellBisection:
    def test_single_root(self):
        """测试线性函数的唯一零点被一个细化单元包围"""
        root = (0.3, 0.7)
        bisection = CellBisection(lambda x, y: complex(x - root[0], y - root[1]), (-1.0, 1.0), (-1.0, 1.0), 8, 8, 3)
        cells = bisection.run()
        assert len(cells) == 1
        cell = cells[0]
        assert cell.x0 <= root[0] <= cell.x1
        assert cell.y0 <= root[1] <= cell.y1
        assert cell.x1 - cell.x0 == pytest.approx(2.0 / 64)

    def test_no_repeated_evaluations(self):
        """测试细化过程中每个格点只计算一次"""
        calls = []

        def func(x, y):
            calls.append((x, y))
            return complex(math.sin(3.0 * x), y - 0.123)

        bisection = CellBisection(func, (-2.0, 2.0), (-1.0, 1.0), 10, 6, 2)
        bisection.run()
        assert len(calls) == len(set(calls)) == bisection.evaluations

    def test_no_roots(self):
        """测试无零点时没有候选单元"""
        bisection = CellBisection(lambda x, y: complex(1.0 + x * x, 1.0), (-1.0, 1.0), (-1.0, 1.0), 5, 5, 2)
        assert bisection.run() == []

    def test_minimum_resolution(self):
        """测试网格少于4格时报错"""
        with pytest.raises(ValueError):
            CellBisection(lambda x, y: 0j, (0.0, 1.0), (0.0, 1.0), 3, 8)
