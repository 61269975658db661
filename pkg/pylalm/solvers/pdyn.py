"""
Primal-dual baseline with virtual-queue multipliers.

For  min g(x)  s.t.  f_j(x) <= 0,  x in a box,  each iteration performs

    z_j      = lam_j + f_j(x)
    x+       = proj(x - (grad g(x) + sum_j z_j grad f_j(x)) / eta)
    lam_j+   = max(-f_j(x), lam_j + f_j(x))

starting from lam_j = max(0, -f_j(x0)). The step eta is found by
backtracking on phi(x, z) = g(x) + sum_j z_j f_j(x), or held fixed.
"""

import logging

import numpy as np

from ..model.auglag import MissingConstantError
from ..model.basic import PrimalDualPoint
from ..model.prox import BoxIndicator
from ..util import positive_part
from .base import (ConfigurationError, Recorder, SolveResult, SolverConfig, SolverError,
                   backtrack, descent_holds)
from .lalm import default_start

logger = logging.getLogger('pylalm.solvers')


class PdynState:
    """
    Attributes:
        x (np.ndarray): Primal iterate.
        lam (np.ndarray): Virtual-queue multipliers.
        fvals (np.ndarray): f_j(x) at the current x.
        eta (float): Step parameter, nondecreasing in k.
        k (int): Iteration counter.
    """

    def __init__(self, x, lam, fvals, eta):
        self.x = x
        self.lam = lam
        self.fvals = fvals
        self.eta = eta
        self.k = 0
        self.backtracks = 0

    @property
    def z(self):
        """z_j = lam_j + f_j(x)."""
        return self.lam + self.fvals

    def point(self, prob):
        """The primal-dual point used for metrics, with z clipped at zero."""
        return PrimalDualPoint(self.x, np.zeros(0), positive_part(self.z),
                               prob.affine.residual(self.x), self.fvals)


def phi(x, z, prob, fvals=None):
    """g(x) + sum_j z_j f_j(x)."""
    fvals = prob.constraint_values(x) if fvals is None else fvals
    return prob.objective(x) + float(z @ fvals)


def grad_phi(x, z, prob):
    grad = prob.objective.grad(x)
    for c, zj in zip(prob.constraints, z):
        if zj != 0:
            grad = grad + zj * c.grad(x)
    return grad


class PDYN:
    """
    Baseline solver for problems without equality constraints whose h is a
    box indicator.
    """

    method = 'pdyn'

    def __init__(self, prob, config=None):
        if not prob.affine.is_empty:
            raise ConfigurationError("the primal-dual baseline does not handle equality constraints")
        if not isinstance(prob.regularizer, BoxIndicator):
            raise ConfigurationError("the primal-dual baseline needs h to be a box indicator")
        self.prob = prob
        self.config = (config or SolverConfig()).resolve(self.method)
        self.adaptive = self.config.pdyn_adaptive

    def initial_state(self, x0=None):
        prob = self.prob
        x = default_start(prob) if x0 is None else PrimalDualPoint.at(prob, x0).x
        fvals = prob.constraint_values(x)
        lam = positive_part(-fvals)
        eta = self.config.initial_eta(prob) if self.adaptive else self.fixed_eta(lam, fvals)
        return PdynState(x, lam, fvals, eta)

    def fixed_eta(self, lam, fvals):
        """eta0, or L_g + sum_j (L_j max(lam_j + f_j, 0) + B_j^2) at the start."""

        if self.config.eta0 is not None:
            return self.config.eta0
        prob = self.prob
        if not prob.has_step_constants:
            raise MissingConstantError("a fixed step needs L_g and every L_j and B_j; set eta0")
        eta = prob.objective.lipschitz
        for c, zj in zip(prob.constraints, positive_part(lam + fvals)):
            eta += c.lipschitz * zj + c.bound ** 2
        return max(eta, np.finfo(float).tiny)

    def _project(self, v):
        return self.prob.regularizer.prox(v, 1.0)

    def pdyn_backtrack(self, state, grad=None):
        """
        Smallest eta * factor^t passing the descent test on phi(., z^k).

        Returns:
            tuple: (eta, x+, f(x+)).
        """

        prob, z, x = self.prob, state.z, state.x
        grad = grad_phi(x, z, prob) if grad is None else grad
        phi_old = phi(x, z, prob, state.fvals)
        if not np.isfinite(phi_old):
            logger.error("non-finite objective at iteration %d", state.k)
            raise SolverError(f"non-finite objective at iteration {state.k}")

        def trial(eta):
            x_plus = self._project(x - grad / eta)
            d = x_plus - x
            fvals = prob.constraint_values(x_plus)
            accepted = descent_holds(phi(x_plus, z, prob, fvals), phi_old, float(grad @ d), eta, float(d @ d))
            return accepted, (x_plus, fvals)

        eta, (x_plus, fvals), n = backtrack(trial, state.eta, self.config.backtrack_factor,
                                            self.config.max_backtracks)
        state.backtracks += n
        return eta, x_plus, fvals

    def pdyn_step(self, state):
        prob = self.prob
        grad = grad_phi(state.x, state.z, prob)
        if self.adaptive:
            eta, x_plus, fvals = self.pdyn_backtrack(state, grad)
        else:
            eta = state.eta
            x_plus = self._project(state.x - grad / eta)
            fvals = prob.constraint_values(x_plus)
        # the queue update uses f at the old iterate
        state.lam = np.maximum(-state.fvals, state.lam + state.fvals)
        state.x, state.fvals, state.eta = x_plus, fvals, eta
        state.k += 1
        return state

    def solve(self, x0=None, callback=None):
        """
        Run for up to `max_epochs` iterations.

        Returns:
            SolveResult: The final point carries z = max(lam + f(x), 0); there
            is no ergodic average.
        """

        cfg, prob = self.config, self.prob
        state = self.initial_state(x0)
        recorder = Recorder(self.method, prob, cfg)
        logger.info("pdyn on %r: adaptive=%s eta=%g", prob, self.adaptive, state.eta)

        try:
            recorder.record(0, state.point(prob), state.eta)
            for epoch in range(1, cfg.max_epochs + 1):
                self.pdyn_step(state)
                if callback is not None:
                    callback(state)
                if not np.all(np.isfinite(state.x)):
                    logger.error("non-finite iterate at iteration %d", state.k)
                    raise SolverError(f"non-finite iterate at iteration {state.k}")
                w = state.point(prob)
                stop = cfg.tol > 0 and recorder.converged(w)
                if stop or recorder.due(epoch):
                    recorder.record(epoch, w, state.eta)
                if stop:
                    logger.info("pdyn stopped at epoch %d", epoch)
                    break
        except SolverError as e:
            e.trace = e.trace or recorder.trace
            raise

        w = state.point(prob)
        trace = recorder.finish(state.k, w, state.eta)
        logger.info("pdyn finished after %d iterations (%d backtracks)", state.k, state.backtracks)
        return SolveResult(w, None, trace)


def solve(prob, config=None, x0=None, callback=None):
    return PDYN(prob, config).solve(x0, callback)
