import warnings

import numpy as np
import pytest

from hybrid_beam.run_config import RunConfig, build_model, build_partition, build_rig
from hybrid_beam.tools.beam_fe import BoundaryCondition, assemble


# 定义全局pytest配置
def pytest_configure(config):
    """配置pytest运行时环境"""
    config.addinivalue_line("markers", "slow: 长时间仿真或稳定性网格")
    config.addinivalue_line("markers", "integration: 命令行端到端运行")


# 忽略asyncio警告的fixture
@pytest.fixture(autouse=True)
def ignore_asyncio_warnings():
    """忽略asyncio相关的运行时警告"""
    warnings.filterwarnings("ignore", category=DeprecationWarning, module="asyncio")
    yield
    warnings.resetwarnings()


@pytest.fixture
def config():
    """默认运行配置（钢尺梁实验参数）"""
    return RunConfig()


@pytest.fixture
def props(config):
    """默认钢尺梁参数"""
    return config.beam.properties()


@pytest.fixture(scope="module")
def model():
    """默认53单元悬臂梁模型"""
    return build_model(RunConfig())


@pytest.fixture(scope="module")
def part(model):
    """默认界面位置（距固定端170 mm）的子结构划分"""
    return build_partition(RunConfig(), model)


@pytest.fixture
def small_model(props):
    """10单元粗网格模型，用于快速的稳定性测试"""
    return assemble(props, 10, BoundaryCondition.CLAMPED_FREE)


@pytest.fixture
def ideal_rig(config, part):
    """无噪声、无滞后、无滤波、精确反力测量的虚拟试验台"""
    return build_rig(config, part, ideal=True)


@pytest.fixture
def quiet_rig(config, part):
    """带滤波和作动器滞后但无噪声的虚拟试验台"""
    noise = config.rig.noise.model_copy(update={"enabled": False})
    quiet = config.model_copy(update={"rig": config.rig.model_copy(update={"noise": noise})})
    return build_rig(quiet, part)


@pytest.fixture
def rng():
    """固定种子的随机数生成器"""
    return np.random.default_rng(2024)
