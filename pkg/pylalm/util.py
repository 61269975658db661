import logging
import logging.config
import os

import numpy as np

CONFIG_FILE = os.path.join(os.path.dirname(__file__), 'config.ini')

logging.config.fileConfig(CONFIG_FILE, disable_existing_loggers=False)
logger = logging.getLogger('pylalm')

CACHE_ENV = 'PYLALM_CACHE_DIR'


def cache_dir():
    """Directory for cached reference solutions, created on demand."""

    path = os.environ.get(CACHE_ENV) or os.path.join(os.path.expanduser('~'), '.cache', 'pylalm')
    os.makedirs(path, exist_ok=True)
    return path


def as_vector(x, name='x', dim=None):
    """
    Convert the input into a 1-D float array.

    Args:
        x (array_like): The input.
        name (str): Name used in error messages.
        dim (int, optional): Expected length.

    Returns:
        np.ndarray: A float64 copy of the input.
    """

    v = np.array(x, dtype=float).reshape(-1)
    if dim is not None and v.size != dim:
        raise ValueError(f"dimension mismatch for {name}: expected {dim}, got {v.size}")
    return v


def positive_part(v):
    return np.maximum(v, 0.0)


def check_gradient(func, x, step=None):
    """
    Relative error between an analytic gradient and central finite differences.

    The step is 1e-6 * (1 + ||x||) per coordinate.
    """

    x = as_vector(x)
    h = 1e-6 * (1.0 + np.linalg.norm(x)) if step is None else step
    g = func.grad(x)
    fd = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        fd[i] = (func(x + e) - func(x - e)) / (2 * h)
    return np.linalg.norm(g - fd) / max(1.0, np.linalg.norm(fd))
