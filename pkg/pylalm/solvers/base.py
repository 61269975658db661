import csv
import dataclasses
import io
import logging
import time
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from ..model.metrics import kkt_residual

logger = logging.getLogger('pylalm.solvers')

STEP_MODES = ('backtracking', 'analytic', 'auto')

CSV_FIELDS = ('method', 'epoch', 'obj', 'obj_gap', 'feas', 'kkt_stat',
              'erg_obj_gap', 'erg_feas', 'eta_max', 'time_ms')


class ConfigurationError(ValueError):
    """Invalid solver settings or an incompatible method and problem."""


class SolverError(RuntimeError):
    """
    A solve could not continue.

    Attributes:
        trace (Trace): The metrics recorded up to the failure.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass
class SolverConfig:
    """
    Parameters shared by all solvers.

    Attributes:
        beta: Penalty parameter.
        rho_y: Dual step for y; method default when None.
        rho_z: Dual step for z; method default when None.
        delta: Added to L_F in the analytic step rule.
        step_mode: 'backtracking', 'analytic' or 'auto'.
        backtrack_factor: Multiplier applied to eta when the descent test fails.
        eta0: Initial eta in backtracking mode.
        max_epochs: Epoch budget; one epoch is n block updates.
        tol: Stopping tolerance; 0 disables early stopping.
        record_every: Epochs between trace rows; None for the default schedule.
        max_backtracks: Cap on multiplications per step.
        refresh_every: Epochs between full recomputations of incremental caches.
        pdyn_adaptive: Backtracking step for PD-YN, otherwise a fixed step.
        ergodic: Whether to report ergodic metrics.
        timing: Whether to report wall time.
    """

    beta: float = 1.0
    rho_y: Optional[float] = None
    rho_z: Optional[float] = None
    delta: float = 0.0
    step_mode: str = 'backtracking'
    backtrack_factor: float = 1.5
    eta0: Optional[float] = None
    max_epochs: int = 1000
    tol: float = 1e-6
    record_every: Optional[int] = None
    max_backtracks: int = 200
    refresh_every: int = 10
    pdyn_adaptive: bool = True
    ergodic: bool = True
    timing: bool = True

    def validate(self):
        if not self.beta > 0:
            raise ConfigurationError(f"beta must be positive, got {self.beta}")
        for name in ('rho_y', 'rho_z'):
            rho = getattr(self, name)
            if rho is not None and not 0 < rho <= self.beta:
                raise ConfigurationError(f"{name} must lie in (0, beta], got {rho}")
        if self.delta < 0:
            raise ConfigurationError("delta must be nonnegative")
        if self.step_mode not in STEP_MODES:
            raise ConfigurationError(f"unknown step mode '{self.step_mode}'")
        if not self.backtrack_factor > 1:
            raise ConfigurationError("the backtracking factor must exceed 1")
        if self.eta0 is not None and not self.eta0 > 0:
            raise ConfigurationError("eta0 must be positive")
        if self.max_epochs < 1:
            raise ConfigurationError("the epoch budget must be at least 1")
        if self.tol < 0:
            raise ConfigurationError("tol must be nonnegative")
        if self.record_every is not None and self.record_every < 1:
            raise ConfigurationError("record_every must be at least 1")
        if self.refresh_every < 1:
            raise ConfigurationError("refresh_every must be at least 1")
        return self

    def resolve(self, method, n_blocks=1, theorem_defaults=False):
        """
        Fill in the method-dependent multiplier steps.

        LALM uses rho_y = rho_z = beta. BLALM uses beta / n for both, or
        rho_y = beta / n and rho_z = beta / (2n) with `theorem_defaults`.
        """

        self.validate()
        if method == 'blalm':
            rho_y = self.beta / n_blocks
            rho_z = self.beta / (2 * n_blocks) if theorem_defaults else self.beta / n_blocks
        else:
            rho_y = rho_z = self.beta
        return dataclasses.replace(
            self,
            rho_y=rho_y if self.rho_y is None else self.rho_y,
            rho_z=rho_z if self.rho_z is None else self.rho_z,
        )

    def step_mode_for(self, prob):
        """The concrete step mode, resolving 'auto' from the available constants."""
        if self.step_mode != 'auto':
            return self.step_mode
        return 'analytic' if prob.has_step_constants else 'backtracking'

    def initial_eta(self, prob):
        if self.eta0 is not None:
            return self.eta0
        lg = prob.objective.lipschitz
        return max(1.0, lg) if lg is not None else 1.0


def y_update(y, r, rho_y):
    return y + rho_y * r


def z_update(z, fvals, rho_z, beta):
    """
    z_j + rho_z * max(-z_j / beta, f_j), nonnegative whenever rho_z <= beta.

    The floor branch is evaluated as z_j (1 - rho_z / beta), which is exactly
    zero for rho_z == beta.
    """

    floor = beta * fvals < -z
    res = np.where(floor, z * (1.0 - rho_z / beta), z + rho_z * fvals)
    return np.maximum(res, 0.0)


def descent_holds(f_new, f_old, linear, eta, dist_sq):
    """The sufficient-decrease test f_new <= f_old + linear + eta/2 dist_sq."""

    if not np.isfinite(f_new):
        return False
    return f_new <= f_old + linear + 0.5 * eta * dist_sq + 1e-12 * (1.0 + abs(f_old))


def backtrack(trial, eta, factor, max_backtracks):
    """
    Grow eta geometrically until `trial(eta)` accepts.

    Args:
        trial (callable): eta -> (accepted, payload).

    Returns:
        tuple: (eta, payload, number of multiplications).
    """

    for n in range(max_backtracks + 1):
        accepted, payload = trial(eta)
        if accepted:
            if n:
                logger.debug("backtracking accepted eta=%.6g after %d multiplications", eta, n)
            return eta, payload, n
        eta *= factor
    logger.error("backtracking gave up at eta=%.6g", eta)
    raise SolverError(f"backtracking exceeded {max_backtracks} multiplications "
                      "(non-finite oracle values?)")


class ErgodicAccumulator:
    """
    Running average of primal iterates.

    In 'weighted' mode the average is sum_t x^{t+1} / eta^t over sum_t 1 / eta^t.
    In 'uniform' mode (block method with n blocks) the latest iterate has
    weight 1 and each earlier one weight 1/n, normalized by 1 + k/n. The
    plain mean over all k + 1 iterates and the plain sum over 1 + k/n are
    kept alongside.
    """

    def __init__(self, mode='weighted', n_blocks=1):
        if mode not in ('weighted', 'uniform'):
            raise ValueError(f"unknown averaging mode '{mode}'")
        self.mode = mode
        self.n_blocks = n_blocks
        self.count = 0
        self.weight = 0.0
        self._sum = None
        self._past = None
        self._latest = None
        self._plain = None

    def add(self, x, weight=1.0):
        x = np.asarray(x, dtype=float)
        if self.count == 0:
            self._plain = np.zeros_like(x)
            self._sum = np.zeros_like(x)
            self._past = np.zeros_like(x)
        self._plain += x
        if self.mode == 'weighted':
            self._sum += weight * x
            self.weight += weight
        else:
            if self._latest is not None:
                self._past += self._latest / self.n_blocks
            self._latest = x.copy()
            self.weight = 1.0 + self.count / self.n_blocks
        self.count += 1

    def average(self):
        if self.count == 0:
            raise ValueError("no iterate has been accumulated")
        if self.mode == 'weighted':
            return self._sum / self.weight
        return (self._past + self._latest) / self.weight

    def mean(self):
        if self.count == 0:
            raise ValueError("no iterate has been accumulated")
        return self._plain / self.count

    def normalized_sum(self):
        """Uniform mode: the sum of all k + 1 iterates divided by 1 + k/n."""
        if self.mode != 'uniform':
            raise ValueError("the normalized sum exists only in uniform mode")
        if self.count == 0:
            raise ValueError("no iterate has been accumulated")
        return self._plain / self.weight


def ergodic_point(acc):
    """The averaged primal point of an accumulator; raises ValueError when it is empty."""
    return acc.average()


@dataclass
class TraceRecord:
    """One row of convergence metrics. Fields that cannot be computed are None."""

    epoch: int
    obj: float
    obj_gap: Optional[float]
    feas: float
    kkt_stat: float
    erg_obj_gap: Optional[float] = None
    erg_feas: Optional[float] = None
    eta_max: Optional[float] = None
    time_ms: Optional[float] = None
    kkt_feas: Optional[float] = None
    kkt_comp: Optional[float] = None
    erg_mean_obj_gap: Optional[float] = None
    erg_mean_feas: Optional[float] = None
    erg_sum_obj_gap: Optional[float] = None
    erg_sum_feas: Optional[float] = None


class Trace:
    """The sequence of TraceRecord rows of one solve."""

    def __init__(self, method):
        self.method = method
        self.records = []

    def append(self, record):
        if self.records and record.epoch <= self.records[-1].epoch:
            raise ValueError("trace epochs must be strictly increasing")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def final(self):
        return self.records[-1]

    def column(self, name):
        """The named field as a float array, with NaN for missing values."""
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name)
                         for r in self.records], dtype=float)

    def write_csv(self, file):
        writer = csv.writer(file, lineterminator='\n')
        writer.writerow(CSV_FIELDS)
        for r in self.records:
            row = [self.method]
            for name in CSV_FIELDS[1:]:
                v = getattr(r, name)
                row.append('' if v is None else repr(v))
            writer.writerow(row)

    def to_csv(self, path=None):
        """Write the trace as CSV to `path`, or return the text when no path is given."""
        if path is None:
            buf = io.StringIO()
            self.write_csv(buf)
            return buf.getvalue()
        with open(path, 'w', newline='', encoding='utf8') as f:
            self.write_csv(f)
        return path


def record_schedule(max_epochs, record_every=None):
    """
    Epochs at which a trace row is written.

    Every `record_every` epochs when given; otherwise every epoch up to 1000
    epochs and about 500 log-spaced epochs beyond.
    """

    if record_every is not None:
        return set(range(0, max_epochs + 1, record_every))
    if max_epochs <= 1000:
        return set(range(max_epochs + 1))
    grid = np.unique(np.round(np.logspace(0, np.log10(max_epochs), 500)).astype(int))
    return {0, max_epochs} | {int(e) for e in grid}


class Recorder:
    """Computes trace rows and the stopping test for one solve."""

    def __init__(self, method, prob, config):
        self.trace = Trace(method)
        self.prob = prob
        self.config = config
        self.schedule = record_schedule(config.max_epochs, config.record_every)
        self.f0_star = prob.optimal_value
        self._start = time.perf_counter()

    def due(self, epoch):
        return epoch in self.schedule

    def record(self, epoch, w, eta_max, ergodic=None):
        prob = self.prob
        obj = prob.objective_value(w.x)
        if not np.isfinite(obj):
            logger.error("non-finite objective at epoch %d", epoch)
            raise SolverError(f"non-finite objective value at epoch {epoch}", self.trace)
        kkt = kkt_residual(w, prob)
        rec = TraceRecord(
            epoch=int(epoch),
            obj=obj,
            obj_gap=None if self.f0_star is None else abs(obj - self.f0_star),
            feas=prob.feasibility(w.x, w.r, w.fvals),
            kkt_stat=kkt.stationarity,
            eta_max=None if eta_max is None else float(eta_max),
            time_ms=(time.perf_counter() - self._start) * 1000.0 if self.config.timing else None,
            kkt_feas=kkt.feasibility,
            kkt_comp=kkt.complementarity,
        )
        if self.config.ergodic and ergodic is not None and ergodic.count:
            rec.erg_obj_gap, rec.erg_feas = self._ergodic_metrics(ergodic.average())
            if ergodic.mode == 'uniform':
                rec.erg_mean_obj_gap, rec.erg_mean_feas = self._ergodic_metrics(ergodic.mean())
                rec.erg_sum_obj_gap, rec.erg_sum_feas = self._ergodic_metrics(ergodic.normalized_sum())
        self.trace.append(rec)
        return rec

    def _ergodic_metrics(self, x):
        gap = None if self.f0_star is None else abs(self.prob.objective_value(x) - self.f0_star)
        return gap, self.prob.feasibility(x)

    def converged(self, w):
        """
        Objective gap and feasibility of the current iterate when f0* is known,
        otherwise the KKT residual.
        """

        tol = self.config.tol
        prob = self.prob
        if self.f0_star is not None:
            gap = abs(prob.objective_value(w.x) - self.f0_star)
            return gap <= tol and prob.feasibility(w.x, w.r, w.fvals) <= tol
        return kkt_residual(w, prob).max <= tol

    def finish(self, epoch, w, eta_max, ergodic=None):
        """
        The completed trace. Rows exist only at scheduled epochs and at an
        early stop, so a budget that is not a multiple of `record_every` adds
        no extra row; an empty trace still gets the row for `epoch`.
        """

        if not self.trace.records:
            self.record(epoch, w, eta_max, ergodic)
        return self.trace


class SolveResult(NamedTuple):
    """Final point, ergodic primal average (None when nothing was averaged) and trace."""

    point: object
    ergodic: Optional[np.ndarray]
    trace: Trace
