"""
Linearized augmented Lagrangian method.

Each iteration takes one proximal gradient step on the smooth part F of the
augmented Lagrangian and then updates both multipliers:

    x+ = prox_h(x - grad_x F(w) / eta, 1 / eta)
    y+ = y + rho_y (A x+ - b)
    z+ = z + rho_z max(-z / beta, f(x+))
"""

import logging

import numpy as np

from ..model.auglag import L_F, MissingConstantError, grad_x_F, smooth_value
from ..model.basic import PrimalDualPoint
from ..model.prox import project_box
from .base import (ErgodicAccumulator, Recorder, SolveResult, SolverConfig, SolverError, ergodic_point,
                   backtrack, descent_holds, y_update, z_update)

logger = logging.getLogger('pylalm.solvers')


class LalmState:
    """
    Mutable state of one LALM solve.

    Attributes:
        w (PrimalDualPoint): The current iterate.
        eta (float): The current step parameter, nondecreasing in k.
        k (int): Iteration counter.
        ergodic (ErgodicAccumulator): Weighted average with weights 1/eta^t.
        backtracks (int): Total number of eta multiplications so far.
    """

    def __init__(self, w, eta):
        self.w = w
        self.eta = eta
        self.k = 0
        self.ergodic = ErgodicAccumulator('weighted')
        self.backtracks = 0


def default_start(prob):
    """The origin clamped into the domain box of h."""
    return project_box(np.zeros(prob.dim), *prob.regularizer.bounds())


class LALM:
    """
    Full-vector solver.

    Args:
        prob (ProblemInstance): The problem.
        config (SolverConfig, optional): Parameters; rho_y and rho_z default to beta.
    """

    method = 'lalm'

    def __init__(self, prob, config=None):
        self.prob = prob
        self.config = (config or SolverConfig()).resolve(self.method)
        self.step_mode = self.config.step_mode_for(prob)
        if self.step_mode == 'analytic' and not prob.has_step_constants:
            raise MissingConstantError(
                "analytic steps need L_g and every L_j and B_j; use the backtracking step mode")

    def initial_state(self, x0=None, y0=None, z0=None):
        x0 = default_start(self.prob) if x0 is None else x0
        w = PrimalDualPoint.at(self.prob, x0, y0, z0)
        # eta^{-1} = 0 for the analytic rule; backtracking needs a positive seed
        eta = 0.0 if self.step_mode == 'analytic' else self.config.initial_eta(self.prob)
        return LalmState(w, eta)

    def eta_analytic(self, state):
        """max(eta^{k-1}, L_F(x^k, z^k) + delta)."""
        w = state.w
        lf = L_F(w.x, w.z, self.config.beta, self.prob, w.fvals)
        return max(state.eta, lf + self.config.delta)

    def x_update(self, state, eta, grad=None):
        """The prox-gradient step with step size 1/eta."""
        w = state.w
        grad = grad_x_F(w, self.config.beta, self.prob) if grad is None else grad
        return self.prob.regularizer.prox(w.x - grad / eta, 1.0 / eta)

    def eta_backtrack(self, state, grad=None):
        """
        Smallest eta in eta^{k-1} * factor^i passing the descent test on F.

        Returns:
            tuple: (eta, candidate point with x+ and its cached r, f values;
            the multipliers are still those of w^k).
        """

        prob, beta = self.prob, self.config.beta
        w = state.w
        grad = grad_x_F(w, beta, prob) if grad is None else grad
        f_old = smooth_value(w.x, w.y, w.z, beta, prob, w.r, w.fvals)
        if not np.isfinite(f_old):
            logger.error("non-finite augmented Lagrangian at iteration %d", state.k)
            raise SolverError(f"non-finite augmented Lagrangian at iteration {state.k}")

        def trial(eta):
            x_plus = prob.regularizer.prox(w.x - grad / eta, 1.0 / eta)
            d = x_plus - w.x
            r = prob.affine.residual(x_plus)
            fvals = prob.constraint_values(x_plus)
            f_new = smooth_value(x_plus, w.y, w.z, beta, prob, r, fvals)
            accepted = descent_holds(f_new, f_old, float(grad @ d), eta, float(d @ d))
            return accepted, PrimalDualPoint(x_plus, w.y, w.z, r, fvals)

        eta, candidate, n = backtrack(trial, state.eta, self.config.backtrack_factor,
                                      self.config.max_backtracks)
        state.backtracks += n
        return eta, candidate

    def step(self, state):
        prob, cfg = self.prob, self.config
        w = state.w
        grad = grad_x_F(w, cfg.beta, prob)
        if self.step_mode == 'analytic':
            eta = self.eta_analytic(state)
            x_next = self.x_update(state, eta, grad)
            r, fvals = prob.affine.residual(x_next), prob.constraint_values(x_next)
        else:
            eta, candidate = self.eta_backtrack(state, grad)
            x_next, r, fvals = candidate.x, candidate.r, candidate.fvals

        state.eta = eta
        state.ergodic.add(x_next, 1.0 / eta)
        state.w = PrimalDualPoint(x_next, y_update(w.y, r, cfg.rho_y),
                                  z_update(w.z, fvals, cfg.rho_z, cfg.beta), r, fvals)
        state.k += 1
        return state

    def solve(self, x0=None, y0=None, z0=None, callback=None):
        """
        Run until the epoch budget is spent or the stopping test passes.

        Args:
            x0, y0, z0: Starting point; z0 must be nonnegative.
            callback (callable, optional): Called with the state after every iteration.

        Returns:
            SolveResult: (final point, ergodic average, trace).
        """

        cfg = self.config
        state = self.initial_state(x0, y0, z0)
        recorder = Recorder(self.method, self.prob, cfg)
        logger.info("lalm on %r: beta=%g rho_y=%g rho_z=%g step=%s",
                    self.prob, cfg.beta, cfg.rho_y, cfg.rho_z, self.step_mode)

        try:
            recorder.record(0, state.w, state.eta or None, state.ergodic)
            for epoch in range(1, cfg.max_epochs + 1):
                self.step(state)
                if callback is not None:
                    callback(state)
                if not np.all(np.isfinite(state.w.x)):
                    logger.error("non-finite iterate at iteration %d", state.k)
                    raise SolverError(f"non-finite iterate at iteration {state.k}")
                stop = cfg.tol > 0 and recorder.converged(state.w)
                if stop or recorder.due(epoch):
                    recorder.record(epoch, state.w, state.eta, state.ergodic)
                if stop:
                    logger.info("lalm stopped at epoch %d", epoch)
                    break
        except SolverError as e:
            e.trace = e.trace or recorder.trace
            raise

        trace = recorder.finish(state.k, state.w, state.eta, state.ergodic)
        logger.info("lalm finished after %d iterations (%d backtracks)", state.k, state.backtracks)
        return SolveResult(state.w, ergodic_point(state.ergodic) if state.ergodic.count else None, trace)


def solve(prob, config=None, x0=None, y0=None, z0=None, callback=None):
    return LALM(prob, config).solve(x0, y0, z0, callback)
