import logging

import numpy as np

logger = logging.getLogger('pylalm.model')


class OperatorNormError(RuntimeError):
    """Power iteration reached its iteration cap; `estimate` holds the best value."""

    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate


def even_partition(dim, n):
    """
    Split range(dim) into `n` contiguous blocks whose sizes differ by at most one.

    Returns:
        list: The blocks as slices.
    """

    if not 1 <= n <= dim:
        raise ValueError(f"cannot split {dim} coordinates into {n} nonempty blocks")
    bounds = np.linspace(0, dim, n + 1).round().astype(int)
    return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


def operator_norm_sq(A, tol=1e-8, max_iter=None, seed=0):
    """
    Largest eigenvalue of A'A by power iteration.

    Args:
        A: A dense matrix, or any object with `matvec`, `rmatvec` and `dim`.
        tol (float): Relative change at which the iteration stops.
        max_iter (int, optional): Iteration cap, max(10 * dim, 500) by default.
        seed (int): Seed of the random start vector.

    Returns:
        float: The estimate of ||A||^2.
    """

    if hasattr(A, 'matvec'):
        forward, adjoint, dim = A.matvec, A.rmatvec, A.dim
    else:
        A = np.atleast_2d(np.asarray(A, dtype=float))
        forward, adjoint, dim = A.__matmul__, A.T.__matmul__, A.shape[1]
    if dim == 0:
        raise ValueError("operator has no columns")

    max_iter = max(10 * dim, 500) if max_iter is None else max_iter
    v = np.random.default_rng(seed).standard_normal(dim)
    v /= np.linalg.norm(v)
    val = 0.0
    for it in range(max_iter):
        w = adjoint(forward(v))
        new_val = float(v @ w)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0
        v = w / norm_w
        if abs(new_val - val) <= tol * new_val:
            logger.debug("power iteration converged after %d iterations", it + 1)
            return new_val
        val = new_val

    logger.warning("power iteration stopped at its cap of %d iterations", max_iter)
    raise OperatorNormError(f"power iteration did not converge in {max_iter} iterations", val)
