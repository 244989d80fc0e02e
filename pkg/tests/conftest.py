"""Shared fixtures: builtin problems, their exact optima and problem files"""

from pathlib import Path

import numpy as np
import pytest
import yaml

from octool.app_manager import AppManager
from octool.args import OctoolArgs
from octool.builtins import lq_scalar, steering


@pytest.fixture
def steering_problem():
    """x' = u, f0 = -u^2/2, h = x(T) - pi, xi0 = 0, T = 1"""
    return steering()


@pytest.fixture
def steering_process(steering_problem):
    """Exact optimum of steering at pi = 1"""
    return steering_problem.exact_solution(np.array([1.0]))


@pytest.fixture
def lq_problem():
    """Scalar LQ regulator with xi0 = 1, T = 1"""
    return lq_scalar()


@pytest.fixture
def lq_process(lq_problem):
    """Exact optimum of the LQ regulator at pi = 0"""
    return lq_problem.exact_solution(np.array([0.0]))


@pytest.fixture
def write_problem(tmp_path):
    """Write a mapping as a YAML problem file and return its path"""
    def write(data, name='problem.yaml'):
        path = tmp_path / name
        path.write_text(yaml.safe_dump(data), encoding='utf-8')
        return str(path)
    return write


@pytest.fixture(autouse=True)
def reset_singletons():
    """OctoolArgs and AppManager are process-wide singletons"""
    yield
    OctoolArgs._instance = None
    AppManager._instance = None


@pytest.fixture
def samples_dir():
    return Path(__file__).resolve().parent.parent / 'samples'
