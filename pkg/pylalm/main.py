"""
This is the main experiment module. It defines the Experiment class, which
builds an instance, resolves its reference solution, runs one method and
writes the convergence trace, plus the helpers used to analyze traces.
"""

import concurrent.futures
import dataclasses
import json
import logging
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import instances
from .instances import (BpdnSpec, MinimaxSpec, QcqpSpec, ReferenceSolution, TINY_KINDS, brute_force_reference,
                        instance_from_json, instance_hash, tiny_reference)
from .model.auglag import MissingConstantError
from .model.metrics import kkt_residual
from .solvers import SOLVERS, ConfigurationError, SolverConfig, SolverError, Trace
from .solvers import lalm
from .util import cache_dir

logger = logging.getLogger('pylalm.harness')

PROBLEMS = ('bpdn', 'qcqp', 'minimax')
REFERENCE_MODES = ('auto', 'hand', 'brute-force', 'long-run', 'none')


@dataclass
class ExperimentConfig:
    """
    One run: a problem, a method and its parameters.

    `problem` is one of 'bpdn', 'qcqp', 'minimax', 'tiny:<kind>' or
    'file:<path>' for a JSON instance. Field names mirror the command-line
    flags with dashes replaced by underscores.
    """

    method: str = 'lalm'
    problem: str = 'bpdn'
    seed: int = 0
    beta: float = 1.0
    rho_y: Optional[float] = None
    rho_z: Optional[float] = None
    delta: float = 0.0
    blocks: Optional[int] = None
    epochs: int = 100000
    tol: float = 0.0
    eta0: Optional[float] = None
    step_mode: str = 'backtracking'
    record_every: Optional[int] = None
    reference: str = 'auto'
    reference_budget: int = 1000000
    theorem_defaults: bool = False
    pdyn_adaptive: bool = True
    ergodic: bool = True
    timing: bool = True
    out: Optional[str] = None
    # instance sizes
    rows: int = 50
    cols: int = 100
    sparsity: int = 5
    noise: float = 0.1
    p: int = 2000
    m: int = 10
    # box of the qcqp and minimax generators; each keeps its own default when None
    lower: Optional[float] = None
    upper: Optional[float] = None

    def validate(self):
        if self.method not in SOLVERS:
            raise ConfigurationError(f"unknown method '{self.method}', expected one of {', '.join(SOLVERS)}")
        kind, _, arg = self.problem.partition(':')
        if kind == 'tiny':
            if arg not in TINY_KINDS:
                raise ConfigurationError(f"unknown reference kind '{arg}'")
        elif kind == 'file':
            if not arg:
                raise ConfigurationError("'file:' needs a path")
        elif self.problem not in PROBLEMS:
            raise ConfigurationError(f"unknown problem '{self.problem}'")
        if self.epochs < 1:
            raise ConfigurationError("the epoch budget must be at least 1")
        if self.blocks is not None and self.blocks < 1:
            raise ConfigurationError("the number of blocks must be at least 1")
        if self.reference not in REFERENCE_MODES:
            raise ConfigurationError(f"unknown reference mode '{self.reference}'")
        self.solver_config().validate()
        return self

    def solver_config(self):
        return SolverConfig(
            beta=self.beta, rho_y=self.rho_y, rho_z=self.rho_z, delta=self.delta,
            step_mode=self.step_mode, eta0=self.eta0, max_epochs=self.epochs, tol=self.tol,
            record_every=self.record_every, pdyn_adaptive=self.pdyn_adaptive,
            ergodic=self.ergodic, timing=self.timing,
        )

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        values = {}
        for key, value in d.items():
            name = key.replace('-', '_')
            if name not in names:
                raise ConfigurationError(f"unknown configuration key '{key}'")
            values[name] = value
        return cls(**values)

    @classmethod
    def load(cls, path):
        """Read a flat JSON document."""
        with open(path, 'r', encoding='utf8') as f:
            doc = json.load(f)
        if not isinstance(doc, dict):
            raise ConfigurationError(f"{path}: expected a JSON object")
        return cls.from_dict(doc)

    def merge(self, overrides):
        """A copy with every non-None entry of `overrides` applied."""
        base = dataclasses.asdict(self)
        base.update({k.replace('-', '_'): v for k, v in overrides.items() if v is not None})
        return type(self).from_dict(base)


class Experiment:
    """
    Drives one run.

    Args:
        config (ExperimentConfig): What to run.
    """

    def __init__(self, config):
        self.config = config.validate()
        self.instance = None
        self.reference = None

    def build_instance(self):
        cfg = self.config
        kind, _, arg = cfg.problem.partition(':')
        logger.info("Building the %s instance...", cfg.problem)
        if kind == 'tiny':
            prob, self.reference = tiny_reference(arg)
        elif kind == 'file':
            with open(arg, 'r', encoding='utf8') as f:
                prob = instance_from_json(f.read())
        elif kind == 'bpdn':
            prob = instances.gen_bpdn(BpdnSpec(cfg.rows, cfg.cols, cfg.sparsity, cfg.noise, seed=cfg.seed))
        elif kind == 'qcqp':
            prob = instances.gen_qcqp(QcqpSpec(cfg.m, cfg.p, seed=cfg.seed, **self._box()))
        else:
            prob = instances.gen_minimax(MinimaxSpec(cfg.m, seed=cfg.seed, **self._box()))

        if cfg.method == 'blalm':
            prob = prob.with_blocks(cfg.blocks or min(10, prob.dim))
        self.instance = prob
        return prob

    def _box(self):
        return {k: v for k, v in (('lower', self.config.lower), ('upper', self.config.upper)) if v is not None}

    def resolve_reference(self):
        """Attach f0* to the instance according to the reference mode."""

        cfg, prob = self.config, self.instance
        mode = cfg.reference
        if mode == 'auto':
            if self.reference is not None:
                mode = 'hand'
            elif prob.optimal_value is not None:
                mode = 'none'
            else:
                lower, upper = prob.regularizer.bounds()
                bounded = bool(np.all(np.isfinite(lower)) and np.all(np.isfinite(upper)))
                mode = 'brute-force' if prob.dim <= 3 and bounded else 'none'

        if mode == 'hand':
            if self.reference is None:
                raise ConfigurationError("hand references exist only for the tiny instances")
        elif mode == 'brute-force':
            self.reference = brute_force_reference(prob)
        elif mode == 'long-run':
            self.reference = long_run_reference(prob, cfg.reference_budget)
        elif mode == 'none' and cfg.reference == 'none':
            self.reference = None
            self.instance = prob.with_optimal_value(None)
            return None

        if self.reference is not None:
            logger.info("Reference (%s): f0* = %.12g", self.reference.provenance, self.reference.f0)
            self.instance = prob.with_optimal_value(self.reference.f0)
        return self.reference

    def solve(self):
        cfg = self.config
        if self.instance is None:
            self.build_instance()
            self.resolve_reference()
        solver_cls = SOLVERS[cfg.method]
        logger.info("Running %s for %d epochs...", cfg.method, cfg.epochs)
        if cfg.method == 'blalm':
            result = solver_cls(self.instance, cfg.solver_config(), cfg.theorem_defaults).solve(seed=cfg.seed)
        else:
            result = solver_cls(self.instance, cfg.solver_config()).solve()
        final = result.trace.final
        logger.info("Done. epoch %d: obj %.10g, feas %.3g, stationarity %.3g",
                    final.epoch, final.obj, final.feas, final.kkt_stat)
        return result

    def run(self):
        """Solve and write the CSV trace to `config.out` when set."""
        result = self.solve()
        if self.config.out:
            result.trace.to_csv(self.config.out)
            logger.info("Trace written to %s", self.config.out)
        return result.trace


def run(config):
    return Experiment(config).run()


def _run_one(config):
    return Experiment(config).run()


def run_many(configs, workers=None):
    """
    Run independent experiments in a process pool.

    Returns:
        list: The traces, in the order of `configs`.
    """

    configs = list(configs)
    for c in configs:
        c.validate()
    if workers == 1 or len(configs) <= 1:
        return [run(c) for c in configs]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, configs))


# trace analysis ---------------------------------------------------------------

def _window_mask(epochs, values, window):
    mask = np.isfinite(values) & (values > 0) & (epochs > 0)
    if window is not None:
        lo, hi = window
        mask &= (epochs >= lo) & (epochs <= hi)
    return mask


def fit_slope(epochs, values, window=None):
    """
    Least-squares slope of log(value) against log(epoch).

    Nonpositive and missing values are dropped; at least 10 samples must remain.
    """

    epochs = np.asarray(epochs, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = _window_mask(epochs, values, window)
    if mask.sum() < 10:
        raise ValueError(f"rate fit needs at least 10 positive samples, got {int(mask.sum())}")
    slope, _ = np.polyfit(np.log(epochs[mask]), np.log(values[mask]), 1)
    return float(slope)


def rate_fit(trace, column='erg_obj_gap', window=None):
    """
    Log-log decay rate of a trace column; about -1 for O(1/k) behavior.

    Args:
        trace (Trace): A convergence trace.
        column (str): A TraceRecord field.
        window (tuple, optional): Inclusive (first, last) epoch range.
    """

    return fit_slope(trace.column('epoch'), trace.column(column), window)


def tail_ratio(trace, column='kkt_stat', window=None):
    """
    Median ratio of successive positive values of a column per epoch.

    A ratio clearly below one over the tail indicates a geometric decay.
    """

    epochs = trace.column('epoch')
    values = trace.column(column)
    mask = _window_mask(epochs, values, window)
    e, v = epochs[mask], values[mask]
    if e.size < 2:
        raise ValueError("tail ratio needs at least two positive samples")
    per_epoch = (v[1:] / v[:-1]) ** (1.0 / np.diff(e))
    return float(np.median(per_epoch))


# long-run references ----------------------------------------------------------

def long_run_reference(instance, budget=1000000, eta0=None, tol=1e-10, use_cache=True):
    """
    A reference solution from a long LALM run, cached on disk by instance hash.

    The run stops once the KKT residual reaches `tol`. If it never does, the
    last point is returned with a warning and its residual recorded.
    """

    prob = instance.with_optimal_value(None)
    key = instance_hash(prob)
    path = os.path.join(cache_dir(), f'{key}.json')
    if use_cache and os.path.exists(path):
        with open(path, 'r', encoding='utf8') as f:
            logger.info("Reference cache hit for %r", prob)
            return ReferenceSolution.from_dict(json.load(f))

    config = SolverConfig(max_epochs=budget, tol=tol, eta0=eta0, record_every=budget,
                          ergodic=False, timing=False)
    logger.info("Computing a long-run reference for %r (budget %d)...", prob, budget)
    try:
        result = lalm.solve(prob, config)
    except (SolverError, MissingConstantError) as e:
        logger.error("The long-run reference failed: %s", e)
        raise

    w = result.point
    residual = kkt_residual(w, prob).max
    if residual > tol:
        logger.warning("long-run reference stopped at KKT residual %.3g above the target %.1g", residual, tol)
    ref = ReferenceSolution(w.x, w.y, w.z, prob.objective_value(w.x), 'long-run', residual)
    if use_cache:
        with open(path, 'w', encoding='utf8') as f:
            json.dump(ref.to_dict(), f)
    return ref


__all__ = ['ExperimentConfig', 'Experiment', 'run', 'run_many', 'rate_fit', 'fit_slope', 'tail_ratio',
           'long_run_reference', 'Trace']
