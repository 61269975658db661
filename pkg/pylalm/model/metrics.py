from typing import NamedTuple

import numpy as np

from ..util import as_vector, positive_part


class Optimality(NamedTuple):
    objective_gap: float
    feasibility: float
    optimal: bool


class KKTResidual(NamedTuple):
    stationarity: float
    feasibility: float
    complementarity: float

    @property
    def max(self):
        return max(self)


def phi_gap(x_bar, at, prob):
    """
    Phi(x_bar; x, y, z) = f0(x_bar) - f0(x) + y'(A x_bar - b) + sum_j z_j f_j(x_bar).

    At a KKT point this is nonnegative for every x_bar.
    """

    x_bar = as_vector(x_bar, 'x_bar', prob.dim)
    if at.y.size != prob.affine.rows or at.z.size != prob.m:
        raise ValueError("dimension mismatch between the point and the problem")
    return (prob.objective_value(x_bar) - prob.objective_value(at.x)
            + float(at.y @ prob.affine.residual(x_bar))
            + float(at.z @ prob.constraint_values(x_bar)))


def eps_optimality(x_bar, f0_star, eps, prob):
    """
    Objective gap and combined feasibility residual of x_bar, and whether
    both are within eps.
    """

    if not np.isfinite(f0_star):
        raise ValueError("the reference optimal value must be finite")
    x_bar = as_vector(x_bar, 'x_bar', prob.dim)
    gap = abs(prob.objective_value(x_bar) - f0_star)
    feas = prob.feasibility(x_bar)
    return Optimality(gap, feas, bool(gap <= eps and feas <= eps))


def kkt_residual(w, prob):
    """
    Stationarity, feasibility and complementarity residuals of w.

    Stationarity is measured through the prox of h with unit step, so all three
    vanish exactly at KKT points with x in dom(h).
    """

    if np.any(w.z < 0):
        raise ValueError("inequality multipliers z must be nonnegative")
    grad = prob.objective.grad(w.x) + prob.affine.rmatvec(w.y)
    for c, zj in zip(prob.constraints, w.z):
        if zj != 0:
            grad += zj * c.grad(w.x)
    stationarity = float(np.linalg.norm(w.x - prob.regularizer.prox(w.x - grad, 1.0)))
    feasibility = float(np.linalg.norm(w.r) + positive_part(w.fvals).sum())
    complementarity = float(np.abs(w.z * w.fvals).sum())
    return KKTResidual(stationarity, feasibility, complementarity)
