"""
Randomized block linearized augmented Lagrangian method.

Each iteration picks one block uniformly at random, takes a prox-gradient
step on that block only and updates both multipliers at once. The residual
Ax - b and the constraint values are maintained incrementally; one epoch is
n block updates.
"""

import logging

import numpy as np

from ..model.auglag import L_Psi, MissingConstantError, ProblemTrackers, partial_grad_block, psi
from ..model.basic import PrimalDualPoint
from .base import (ConfigurationError, ErgodicAccumulator, Recorder, SolveResult, SolverConfig,
                   SolverError, backtrack, descent_holds, ergodic_point, y_update, z_update)
from .lalm import default_start

logger = logging.getLogger('pylalm.solvers')

DRIFT_WARNING = 1e-9


def pick_block(rng, n):
    """A block index drawn uniformly from range(n)."""
    if n < 1:
        raise ValueError("need at least one block")
    return int(rng.integers(n))


class BlockState:
    """
    Mutable state of one BLALM solve.

    `w.x` is updated in place one block at a time; `w.r` and `w.fvals` are
    the incrementally maintained caches.
    """

    def __init__(self, w, eta, trackers, seed, n_blocks):
        self.w = w
        self.eta = eta
        self.trackers = trackers
        self.rng = np.random.default_rng(seed)
        self.k = 0
        self.ergodic = ErgodicAccumulator('uniform', n_blocks)
        self.backtracks = 0

    @property
    def eta_max(self):
        return float(np.max(self.eta))


class BLALM:
    """
    Block solver.

    Args:
        prob (ProblemInstance): The problem; needs a block partition and a separable h.
        config (SolverConfig, optional): Parameters; rho_y and rho_z default to beta / n.
        theorem_defaults (bool): Use rho_z = beta / (2n) instead.
    """

    method = 'blalm'

    def __init__(self, prob, config=None, theorem_defaults=False):
        if prob.blocks is None:
            raise ConfigurationError("the block method needs a block partition of the variables")
        if not getattr(prob.regularizer, 'separable', False):
            raise ConfigurationError("the block method needs h to be separable across blocks")
        self.prob = prob
        self.n = prob.n_blocks
        self.config = (config or SolverConfig()).resolve(self.method, self.n, theorem_defaults)
        self.step_mode = self.config.step_mode_for(prob)
        if self.step_mode == 'analytic' and not prob.has_step_constants:
            raise MissingConstantError(
                "analytic steps need L_g and every L_j and B_j; use the backtracking step mode")

    def initial_state(self, x0=None, y0=None, z0=None, seed=0):
        x0 = default_start(self.prob) if x0 is None else x0
        w = PrimalDualPoint.at(self.prob, x0, y0, z0)
        trackers = ProblemTrackers(self.prob, w.x)
        if self.step_mode == 'analytic':
            eta = np.zeros(self.n)
        else:
            eta = np.full(self.n, self.config.initial_eta(self.prob))
        return BlockState(w, eta, trackers, seed, self.n)

    def _smooth(self, g, r, fvals, y, z):
        res = g + float(y @ r) + 0.5 * self.config.beta * float(r @ r)
        if fvals.size:
            res += float(np.sum(psi(fvals, z, self.config.beta)))
        return res

    def eta_analytic_block(self, state, i):
        """max(eta_i, L_g + beta ||A_i||^2 + L_Psi(x^k, z^k) + delta)."""

        prob, cfg, w = self.prob, self.config, state.w
        bound = (prob.objective.lipschitz + cfg.beta * prob.affine.block_norm_sq(prob.blocks[i])
                 + L_Psi(w.x, w.z, cfg.beta, prob, w.fvals))
        return max(state.eta[i], bound + cfg.delta)

    def block_x_update(self, state, i, eta, grad=None):
        """The prox-gradient step on block i; the other blocks are untouched."""

        sl = self.prob.blocks[i]
        if grad is None:
            grad = partial_grad_block(state.w, self.config.beta, self.prob, i, state.trackers)
        return self.prob.regularizer.prox(state.w.x[sl] - grad / eta, 1.0 / eta, sl)

    def residual_increment(self, state, i, delta):
        """r + A_i delta."""
        if self.prob.affine.is_empty:
            return state.w.r
        return state.w.r + self.prob.affine.block_matvec(self.prob.blocks[i], delta)

    def constraint_increment(self, state, i, delta):
        """
        Commit the block change to the trackers and return the new f values.

        Must be called after block i of `state.w.x` holds the new values.
        """

        state.trackers.update(state.w.x, self.prob.blocks[i], delta)
        return state.trackers.fvals

    def eta_backtrack_block(self, state, i, grad=None):
        """
        Smallest eta_i * factor^t passing the descent test on F for a change of block i.

        Returns:
            tuple: (eta_i, new block values).
        """

        prob, cfg, w = self.prob, self.config, state.w
        sl = prob.blocks[i]
        if grad is None:
            grad = partial_grad_block(w, cfg.beta, prob, i, state.trackers)
        xi = w.x[sl]
        f_old = self._smooth(state.trackers.objective.value, w.r, w.fvals, w.y, w.z)
        if not np.isfinite(f_old):
            logger.error("non-finite augmented Lagrangian at iteration %d", state.k)
            raise SolverError(f"non-finite augmented Lagrangian at iteration {state.k}")

        def trial(eta):
            block = prob.regularizer.prox(xi - grad / eta, 1.0 / eta, sl)
            d = block - xi
            g_new, fvals_new = state.trackers.peek(w.x, sl, d)
            r_new = w.r if prob.affine.is_empty else w.r + prob.affine.block_matvec(sl, d)
            f_new = self._smooth(g_new, r_new, fvals_new, w.y, w.z)
            return descent_holds(f_new, f_old, float(grad @ d), eta, float(d @ d)), block

        eta, block, n = backtrack(trial, state.eta[i], cfg.backtrack_factor, cfg.max_backtracks)
        state.backtracks += n
        return eta, block

    def step(self, state):
        prob, cfg, w = self.prob, self.config, state.w
        i = pick_block(state.rng, self.n)
        sl = prob.blocks[i]
        grad = partial_grad_block(w, cfg.beta, prob, i, state.trackers)
        if self.step_mode == 'analytic':
            eta = self.eta_analytic_block(state, i)
            block = self.block_x_update(state, i, eta, grad)
        else:
            eta, block = self.eta_backtrack_block(state, i, grad)
        state.eta[i] = eta

        delta = block - w.x[sl]
        w.x[sl] = block
        w.r = self.residual_increment(state, i, delta)
        w.fvals = self.constraint_increment(state, i, delta)
        w.y = y_update(w.y, w.r, cfg.rho_y)
        w.z = z_update(w.z, w.fvals, cfg.rho_z, cfg.beta)

        state.ergodic.add(w.x)
        state.k += 1
        return i

    def refresh(self, state):
        """Recompute the residual and constraint caches from scratch."""

        state.trackers.refresh(state.w.x)
        drift = state.w.refresh(self.prob)
        if drift > DRIFT_WARNING:
            logger.warning("incremental caches drifted by %.3g at iteration %d", drift, state.k)
        else:
            logger.debug("cache refresh at iteration %d, drift %.3g", state.k, drift)
        return drift

    def solve(self, x0=None, y0=None, z0=None, seed=0, callback=None):
        """
        Run for up to `max_epochs` epochs of n block updates each.

        Args:
            x0, y0, z0: Starting point; z0 must be nonnegative.
            seed (int): Seed of the block sampler.
            callback (callable, optional): Called with the state after every block update.

        Returns:
            SolveResult: (final point, ergodic average, trace).
        """

        cfg = self.config
        state = self.initial_state(x0, y0, z0, seed)
        recorder = Recorder(self.method, self.prob, cfg)
        refresh_period = cfg.refresh_every * self.n
        logger.info("blalm on %r: beta=%g rho_y=%g rho_z=%g step=%s seed=%d",
                    self.prob, cfg.beta, cfg.rho_y, cfg.rho_z, self.step_mode, seed)

        epoch = 0
        try:
            recorder.record(0, state.w, state.eta_max or None, state.ergodic)
            for epoch in range(1, cfg.max_epochs + 1):
                for _ in range(self.n):
                    self.step(state)
                    if callback is not None:
                        callback(state)
                    if state.k % refresh_period == 0:
                        self.refresh(state)
                if not np.all(np.isfinite(state.w.x)):
                    logger.error("non-finite iterate at epoch %d", epoch)
                    raise SolverError(f"non-finite iterate at epoch {epoch}")
                stop = cfg.tol > 0 and recorder.converged(state.w)
                if stop or recorder.due(epoch):
                    recorder.record(epoch, state.w, state.eta_max, state.ergodic)
                if stop:
                    logger.info("blalm stopped at epoch %d", epoch)
                    break
        except SolverError as e:
            e.trace = e.trace or recorder.trace
            raise

        trace = recorder.finish(epoch, state.w, state.eta_max, state.ergodic)
        logger.info("blalm finished after %d block updates (%d backtracks)", state.k, state.backtracks)
        return SolveResult(state.w, ergodic_point(state.ergodic) if state.ergodic.count else None, trace)


def solve(prob, config=None, x0=None, y0=None, z0=None, seed=0, callback=None, theorem_defaults=False):
    return BLALM(prob, config, theorem_defaults).solve(x0, y0, z0, seed, callback)
