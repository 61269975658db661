"""
The classic augmented Lagrangian

    L(x, y, z) = g(x) + h(x) + y'(Ax - b) + beta/2 ||Ax - b||^2 + Psi(x, z),
    Psi(x, z)  = sum_j psi(f_j(x), z_j),

its smooth part F = L - h, the gradients of F, and the point-dependent
Lipschitz estimate used for analytic step sizes.
"""

import numpy as np

from ..util import as_vector, positive_part


class MissingConstantError(ValueError):
    """A smoothness constant needed for analytic step sizes is unknown."""


def _check_beta(beta):
    if not beta > 0:
        raise ValueError(f"penalty parameter beta must be positive, got {beta}")


def psi(u, v, beta):
    """
    uv + beta/2 u^2   if beta u + v >= 0,
    -v^2 / (2 beta)   otherwise.
    """

    _check_beta(beta)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    res = np.where(beta * u + v >= 0, u * v + 0.5 * beta * u * u, -v * v / (2.0 * beta))
    return float(res) if res.ndim == 0 else res


def psi_du(u, v, beta):
    """Partial derivative of psi in u: [beta u + v]_+."""

    _check_beta(beta)
    res = positive_part(beta * np.asarray(u, dtype=float) + np.asarray(v, dtype=float))
    return float(res) if np.ndim(res) == 0 else res


def Psi(x, z, beta, prob, fvals=None):
    """Sum of psi(f_j(x), z_j) over the inequality constraints."""

    z = as_vector(z, 'z', prob.m)
    fvals = prob.constraint_values(x) if fvals is None else as_vector(fvals, 'fvals', prob.m)
    if prob.m == 0:
        _check_beta(beta)
        return 0.0
    return float(np.sum(psi(fvals, z, beta)))


def smooth_value(x, y, z, beta, prob, r=None, fvals=None):
    """F(x, y, z) = g(x) + y'r + beta/2 ||r||^2 + Psi(x, z)."""

    r = prob.affine.residual(x) if r is None else r
    return prob.objective(x) + float(y @ r) + 0.5 * beta * float(r @ r) + Psi(x, z, beta, prob, fvals)


def auglag_value(w, beta, prob):
    """The augmented Lagrangian at w; +inf outside dom(h)."""

    hx = prob.regularizer(w.x)
    if not np.isfinite(hx):
        return np.inf
    return hx + smooth_value(w.x, w.y, w.z, beta, prob, w.r, w.fvals)


def penalty_weights(w, beta):
    """The coefficients [beta f_j(x) + z_j]_+ multiplying grad f_j in grad_x F."""
    return positive_part(beta * w.fvals + w.z)


def grad_x_F(w, beta, prob):
    """grad g(x) + A'y + beta A'r + sum_j [beta f_j(x) + z_j]_+ grad f_j(x)."""

    _check_beta(beta)
    if w.x.size != prob.dim or w.z.size != prob.m or w.y.size != prob.affine.rows:
        raise ValueError("dimension mismatch between the point and the problem")
    grad = prob.objective.grad(w.x) + prob.affine.rmatvec(w.y + beta * w.r)
    weights = penalty_weights(w, beta)
    for c, a in zip(prob.constraints, weights):
        if a > 0:
            grad += a * c.grad(w.x)
    return grad


def partial_grad_block(w, beta, prob, i, trackers=None):
    """
    Block i of grad_x F.

    Args:
        w (PrimalDualPoint): The current point.
        beta (float): Penalty parameter.
        prob (ProblemInstance): The problem; must carry a partition.
        i (int): Block index.
        trackers (ProblemTrackers, optional): Incremental state; when given,
            the partial gradients of g and f_j are read from it instead of
            being sliced out of full gradients.
    """

    if prob.blocks is None:
        raise ValueError("partial gradients need a block partition")
    if not 0 <= i < len(prob.blocks):
        raise ValueError(f"block index {i} out of range")
    sl = prob.blocks[i]
    weights = penalty_weights(w, beta)

    if trackers is None:
        grad = prob.objective.grad(w.x)[sl].copy()
        for c, a in zip(prob.constraints, weights):
            if a > 0:
                grad += a * c.grad(w.x)[sl]
    else:
        grad = trackers.objective.grad_block(w.x, sl)
        for t, a in zip(trackers.constraints, weights):
            if a > 0:
                grad += a * t.grad_block(w.x, sl)

    if not prob.affine.is_empty:
        grad += prob.affine.block(sl).T @ (w.y + beta * w.r)
    return grad


class ProblemTrackers:
    """Incremental trackers for g and every f_j along a sequence of block changes."""

    def __init__(self, prob, x):
        self.objective = prob.objective.track(x)
        self.constraints = [c.track(x) for c in prob.constraints]

    @property
    def fvals(self):
        return np.array([t.value for t in self.constraints], dtype=float)

    def peek(self, x, sl, delta):
        """(g, fvals) after the block change, without committing."""
        return (self.objective.peek(x, sl, delta),
                np.array([t.peek(x, sl, delta) for t in self.constraints], dtype=float))

    def update(self, x, sl, delta):
        self.objective.update(x, sl, delta)
        for t in self.constraints:
            t.update(x, sl, delta)

    def refresh(self, x):
        self.objective.refresh(x)
        for t in self.constraints:
            t.refresh(x)


def L_Psi(x, z, beta, prob, fvals=None):
    """sum_j (beta B_j^2 + L_j [beta f_j(x) + z_j]_+)."""

    _check_beta(beta)
    z = as_vector(z, 'z', prob.m)
    for c in prob.constraints:
        if c.bound is None or c.lipschitz is None:
            raise MissingConstantError(
                f"{c!r} has no gradient bound or Lipschitz constant; use the backtracking step mode")
    if prob.m == 0:
        return 0.0
    fvals = prob.constraint_values(x) if fvals is None else fvals
    B = np.array([c.bound for c in prob.constraints])
    L = np.array([c.lipschitz for c in prob.constraints])
    return float(np.sum(beta * B ** 2 + L * positive_part(beta * fvals + z)))


def L_F(x, z, beta, prob, fvals=None):
    """L_g + beta ||A||^2 + L_Psi(x, z)."""

    if prob.objective.lipschitz is None:
        raise MissingConstantError("the objective has no Lipschitz constant; use the backtracking step mode")
    return prob.objective.lipschitz + beta * prob.affine.norm_sq + L_Psi(x, z, beta, prob, fvals)
