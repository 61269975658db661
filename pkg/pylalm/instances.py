"""
Problem generators, hand-checked reference instances, a grid-search oracle
for very small problems, and JSON (de)serialization of instances.
"""

import dataclasses
import hashlib
import itertools
import json
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model.basic import (AffineConstraint, InequalityConstraint, LeastSquaresFunction, PrimalDualPoint,
                          ProblemInstance, QuadraticFunction, ShiftedFunction)
from .model.metrics import kkt_residual
from .model.prox import BoxIndicator, L1Norm, ZeroFunction
from .util import as_vector

logger = logging.getLogger('pylalm.instances')

TINY_KINDS = ('equality-qp', 'scalar-qcqp', 'scalar-bpdn')
PROVENANCES = ('hand', 'brute-force', 'long-run')


@dataclass
class BpdnSpec:
    """
    Random sparse recovery instance  min ||x||_1  s.t.  ||Ax - b||^2 <= delta.

    `delta=None` uses the realized noise power ||noise * xi||^2, which makes
    the planted signal exactly feasible.
    """

    rows: int = 50
    cols: int = 100
    sparsity: int = 5
    noise: float = 0.1
    delta: Optional[float] = None
    seed: int = 0
    dictionary: str = 'identity'
    box: Optional[float] = None

    def validate(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("BPDN needs at least one row and one column")
        if not 0 <= self.sparsity <= self.cols:
            raise ValueError(f"sparsity must lie in [0, {self.cols}], got {self.sparsity}")
        if self.dictionary != 'identity':
            raise ValueError(f"unsupported dictionary '{self.dictionary}'")
        if self.box is not None and not self.box > 0:
            raise ValueError("box radius must be positive")
        return self


@dataclass
class QcqpSpec:
    """Random convex QCQP with m quadratic constraints on a box; x = 0 is strictly feasible."""

    m: int = 10
    p: int = 2000
    lower: float = -10.0
    upper: float = 10.0
    seed: int = 0
    d: float = -1.0

    def validate(self):
        if self.m < 0 or self.p < 1:
            raise ValueError("QCQP needs p >= 1 and m >= 0")
        if not self.d < 0:
            raise ValueError("constraint offsets must be negative so that x = 0 is strictly feasible")
        if not self.lower < self.upper:
            raise ValueError("box has a lower bound above its upper bound")
        return self


@dataclass
class MinimaxSpec:
    """Pointwise maximum of `functions` random strongly convex quadratics on a box."""

    functions: int = 3
    p: int = 1
    lower: float = -5.0
    upper: float = 5.0
    seed: int = 0

    def validate(self):
        if self.functions < 1 or self.p < 1:
            raise ValueError("minimax needs at least one function of at least one variable")
        if not self.lower < self.upper:
            raise ValueError("box has a lower bound above its upper bound")
        return self


@dataclass
class ReferenceSolution:
    """A KKT point with its optimal value and where it came from."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    f0: float
    provenance: str
    residual: float = 0.0

    def to_dict(self):
        return {'x': self.x.tolist(), 'y': self.y.tolist(), 'z': self.z.tolist(),
                'f0': self.f0, 'provenance': self.provenance, 'residual': self.residual}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d['x'], dtype=float), np.array(d['y'], dtype=float),
                   np.array(d['z'], dtype=float), float(d['f0']), d['provenance'], float(d['residual']))


def _radius(lower, upper):
    """Euclidean radius of the box around the origin; inf if unbounded."""
    return float(np.linalg.norm(np.maximum(np.abs(lower), np.abs(upper))))


def quadratic_bound(func, radius):
    """Bound ||Q|| R + ||c|| on the gradient norm of a quadratic over a ball of radius R."""
    if not np.isfinite(radius):
        return None
    return func.lipschitz * radius + float(np.linalg.norm(func.c))


def least_squares_bound(func, radius):
    """Bound 2 ||M|| (||M|| R + ||b||) on the gradient norm of ||Mx - b||^2."""
    if not np.isfinite(radius):
        return None
    norm = float(np.linalg.norm(func.M, 2))
    return 2.0 * norm * (norm * radius + float(np.linalg.norm(func.b)))


# builders ---------------------------------------------------------------------

def bpdn_instance(A, b, delta, box=None, name='bpdn', metadata=None):
    """
    min ||x||_1  s.t.  ||Ax - b||^2 - delta <= 0, optionally with |x_i| <= box.
    """

    A = np.atleast_2d(np.array(A, dtype=float))
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    dim = A.shape[1]
    lower = None if box is None else np.full(dim, -float(box))
    upper = None if box is None else np.full(dim, float(box))
    func = LeastSquaresFunction(A, b, offset=-float(delta))
    bound = None if box is None else least_squares_bound(func, _radius(lower, upper))
    return ProblemInstance(
        objective=QuadraticFunction(dim),
        regularizer=L1Norm(dim=dim, lower=lower, upper=upper),
        constraints=[InequalityConstraint(func, bound, name='residual')],
        name=name,
        metadata=metadata,
    )


def qcqp_instance(Qs, cs, ds, lower, upper, name='qcqp', metadata=None):
    """
    min 0.5 x'Q_0 x + c_0'x + d_0  s.t.  0.5 x'Q_j x + c_j'x + d_j <= 0,  lower <= x <= upper.

    Gradient bounds of the constraints are derived from the box.
    """

    if not len(Qs) == len(cs) == len(ds) >= 1:
        raise ValueError("need matching Q, c and d for the objective and every constraint")
    p = np.asarray(cs[0]).size
    lower = np.broadcast_to(np.asarray(lower, dtype=float), (p,)).copy()
    upper = np.broadcast_to(np.asarray(upper, dtype=float), (p,)).copy()
    radius = _radius(lower, upper)
    funcs = [QuadraticFunction(p, Q, c, d) for Q, c, d in zip(Qs, cs, ds)]
    constraints = [InequalityConstraint(f, quadratic_bound(f, radius), name=f'q{j}')
                   for j, f in enumerate(funcs[1:], start=1)]
    return ProblemInstance(funcs[0], BoxIndicator(lower, upper), constraints=constraints,
                           name=name, metadata=metadata)


# generators -------------------------------------------------------------------

def gen_bpdn(spec=None):
    spec = (spec or BpdnSpec()).validate()
    rng = np.random.default_rng(spec.seed)
    A = rng.standard_normal((spec.rows, spec.cols))
    x_true = np.zeros(spec.cols)
    support = rng.choice(spec.cols, spec.sparsity, replace=False)
    x_true[support] = rng.standard_normal(spec.sparsity)
    noise = spec.noise * rng.standard_normal(spec.rows)
    b = A @ x_true + noise
    delta = float(noise @ noise) if spec.delta is None else float(spec.delta)
    logger.debug("bpdn %dx%d, seed %d, delta %.6g", spec.rows, spec.cols, spec.seed, delta)
    return bpdn_instance(A, b, delta, spec.box, name=f'bpdn-{spec.rows}x{spec.cols}-s{spec.seed}',
                         metadata={'spec': dataclasses.asdict(spec), 'x_true': x_true.tolist(),
                                   'delta': delta})


def gen_qcqp(spec=None):
    spec = (spec or QcqpSpec()).validate()
    rng = np.random.default_rng(spec.seed)
    p = spec.p
    Qs, cs = [], []
    for _ in range(spec.m + 1):
        M = rng.standard_normal((p, p))
        Q = M.T @ M / p
        Qs.append(0.5 * (Q + Q.T))
        cs.append(rng.standard_normal(p))
    ds = [0.0] + [spec.d] * spec.m
    logger.debug("qcqp p=%d m=%d, seed %d", p, spec.m, spec.seed)
    return qcqp_instance(Qs, cs, ds, spec.lower, spec.upper, name=f'qcqp-{p}-{spec.m}-s{spec.seed}',
                         metadata={'spec': dataclasses.asdict(spec)})


def minimax_reformulate(functions, lower, upper, bounds=None, name='minimax', metadata=None):
    """
    min_x max_j f_j(x) over a box, as  min t  s.t.  f_j(x) - t <= 0.

    Args:
        functions (list): SmoothFunction objects on the same dimension.
        lower, upper (array_like): The box on x; t is unbounded.
        bounds (list, optional): Gradient bounds of the f_j over the box.
            Quadratics get one from the box when not given.

    Returns:
        ProblemInstance: On the stacked variable (x, t).
    """

    functions = list(functions)
    if not functions:
        raise ValueError("minimax needs at least one function")
    p = functions[0].dim
    if p is None or any(f.dim != p for f in functions):
        raise ValueError("all functions must declare the same dimension")
    lower = np.broadcast_to(np.asarray(lower, dtype=float), (p,))
    upper = np.broadcast_to(np.asarray(upper, dtype=float), (p,))
    radius = _radius(lower, upper)
    bounds = [None] * len(functions) if bounds is None else list(bounds)

    constraints = []
    for j, (f, B) in enumerate(zip(functions, bounds)):
        if B is None and isinstance(f, QuadraticFunction):
            B = quadratic_bound(f, radius)
        # the gradient of f(x) - t is (grad f, -1)
        bound = None if B is None else float(np.sqrt(B * B + 1.0))
        constraints.append(InequalityConstraint(ShiftedFunction(f), bound, name=f'f{j}'))

    objective = QuadraticFunction(p + 1, c=np.eye(p + 1)[-1])
    box = BoxIndicator(np.append(lower, -np.inf), np.append(upper, np.inf))
    return ProblemInstance(objective, box, constraints=constraints, name=name, metadata=metadata)


def gen_minimax(spec=None):
    spec = (spec or MinimaxSpec()).validate()
    rng = np.random.default_rng(spec.seed)
    p = spec.p
    functions = []
    for _ in range(spec.functions):
        M = rng.standard_normal((p, p))
        Q = M.T @ M / p + 0.1 * np.eye(p)
        functions.append(QuadraticFunction(p, 0.5 * (Q + Q.T), rng.standard_normal(p), rng.standard_normal()))
    return minimax_reformulate(functions, spec.lower, spec.upper,
                               name=f'minimax-{spec.functions}x{p}-s{spec.seed}',
                               metadata={'spec': dataclasses.asdict(spec)})


# references -------------------------------------------------------------------

def _hand(prob, x, y, z, f0):
    w = PrimalDualPoint.at(prob, x, y, z)
    ref = ReferenceSolution(w.x, w.y, w.z, float(f0), 'hand', kkt_residual(w, prob).max)
    return prob.with_optimal_value(f0), ref


def tiny_reference(kind):
    """
    One of the hand-solved instances with its exact KKT triple.

    'equality-qp'   min 0.5 ||x||^2  s.t.  x_1 + x_2 = 1
    'scalar-qcqp'   min 0.5 x^2 + 2x  s.t.  x^2 - 1 <= 0,  |x| <= 10
    'scalar-bpdn'   min |x|  s.t.  (x - 2)^2 - 1 <= 0,  |x| <= 10
    """

    if kind == 'equality-qp':
        prob = ProblemInstance(QuadraticFunction(2, np.eye(2)), ZeroFunction(2),
                               affine=AffineConstraint([[1.0, 1.0]], [1.0]), name=kind)
        return _hand(prob, [0.5, 0.5], [-0.5], [], 0.25)
    if kind == 'scalar-qcqp':
        prob = qcqp_instance([[[1.0]], [[2.0]]], [[2.0], [0.0]], [0.0, -1.0], -10.0, 10.0, name=kind)
        return _hand(prob, [-1.0], [], [0.5], -1.5)
    if kind == 'scalar-bpdn':
        prob = bpdn_instance([[1.0]], [2.0], 1.0, box=10.0, name=kind)
        return _hand(prob, [1.0], [], [0.5], 1.0)
    raise ValueError(f"unknown reference kind '{kind}', expected one of {', '.join(TINY_KINDS)}")


def _grid_defaults(dim):
    return {1: 2001, 2: 101, 3: 31}[dim]


def brute_force_reference(prob, resolution=None, rounds=8, extent=10.0):
    """
    Grid search over the domain box with repeated zooming, for dim <= 3.

    Infinite bounds are replaced by +-extent. Equality constraints are accepted
    within the spread of A over one grid cell. Multipliers come from a
    least-squares fit of the stationarity condition on the coordinates where
    h has a unique subgradient.

    Returns:
        ReferenceSolution: With provenance 'brute-force'; `residual` is the
        KKT residual of the recovered triple.
    """

    if prob.dim > 3:
        raise ValueError(f"grid search supports at most 3 variables, got {prob.dim}; "
                         "use a long-run reference instead")
    resolution = _grid_defaults(prob.dim) if resolution is None else int(resolution)
    if resolution < 5:
        raise ValueError("grid resolution must be at least 5")

    lower, upper = (np.broadcast_to(v, (prob.dim,)).astype(float) for v in prob.regularizer.bounds())
    box_lo = np.where(np.isfinite(lower), lower, -extent)
    box_hi = np.where(np.isfinite(upper), upper, extent)
    row_spread = np.abs(prob.affine.matrix).sum(axis=1)

    lo, hi = box_lo.copy(), box_hi.copy()
    best, best_val = None, np.inf
    for _ in range(rounds):
        axes = [np.linspace(a, b, resolution) for a, b in zip(lo, hi)]
        spacing = float(np.max((hi - lo) / (resolution - 1)))
        eq_tol = spacing * row_spread
        # the equality tolerance shrinks with the grid, so each round starts over
        round_best, round_val = None, np.inf
        for point in itertools.product(*axes):
            x = np.array(point)
            if prob.m and np.any(prob.constraint_values(x) > 0):
                continue
            if prob.affine.rows and np.any(np.abs(prob.affine.residual(x)) > eq_tol):
                continue
            val = prob.objective_value(x)
            if val < round_val:
                round_best, round_val = x, val
        if round_best is None:
            if best is None:
                raise ValueError("no feasible grid point; increase the resolution or the extent")
            break
        best, best_val, best_spacing = round_best, round_val, spacing
        lo = np.maximum(best - 2 * spacing, box_lo)
        hi = np.minimum(best + 2 * spacing, box_hi)

    y, z = _fit_multipliers(prob, best, best_spacing)
    w = PrimalDualPoint.at(prob, best, y, z)
    residual = kkt_residual(w, prob).max
    logger.info("grid reference for %r: f0=%.10g, KKT residual %.3g", prob, best_val, residual)
    return ReferenceSolution(w.x, w.y, w.z, float(best_val), 'brute-force', residual)


def _fit_multipliers(prob, x, spacing):
    sub, free = prob.regularizer.subgradient(x)
    rows = ~free
    active = [j for j, c in enumerate(prob.constraints)
              if c(x) >= -10 * spacing * (1.0 + np.linalg.norm(c.grad(x)))]
    columns = [prob.affine.matrix.T] + [prob.constraints[j].grad(x)[:, None] for j in active]
    M = np.hstack(columns)[rows]
    rhs = -(prob.objective.grad(x) + sub)[rows]
    y = np.zeros(prob.affine.rows)
    z = np.zeros(prob.m)
    if M.size:
        coef = np.linalg.lstsq(M, rhs, rcond=None)[0]
        y = coef[:prob.affine.rows]
        z[active] = np.maximum(coef[prob.affine.rows:], 0.0)
    return y, z


# serialization ----------------------------------------------------------------

def _decode_bound(v, fill):
    if v is None:
        return None
    return np.array([fill if a is None else a for a in v], dtype=float)


def function_from_dict(d):
    kind = d['type']
    if kind == 'quadratic':
        return QuadraticFunction(d['dim'], d['Q'], d['c'], d['d'])
    if kind == 'least_squares':
        return LeastSquaresFunction(d['M'], d['b'], d['offset'])
    if kind == 'shifted':
        return ShiftedFunction(function_from_dict(d['inner']))
    raise ValueError(f"unknown function type '{kind}'")


def regularizer_from_dict(d):
    kind = d['type']
    if kind == 'zero':
        return ZeroFunction(d['dim'])
    if kind == 'box':
        return BoxIndicator(_decode_bound(d['lower'], -np.inf), _decode_bound(d['upper'], np.inf))
    if kind == 'l1':
        return L1Norm(d['scale'], _decode_bound(d['lower'], -np.inf), _decode_bound(d['upper'], np.inf),
                      dim=d['dim'])
    raise ValueError(f"unknown regularizer type '{kind}'")


def instance_to_json(prob):
    """
    Serialize an instance built from the concrete function classes.

    Keys are sorted so that equal instances give identical text.
    """

    doc = {
        'name': prob.name,
        'dim': prob.dim,
        'objective': prob.objective.to_dict(),
        'regularizer': prob.regularizer.to_dict(),
        'affine': prob.affine.to_dict(),
        'constraints': [c.to_dict() for c in prob.constraints],
        'blocks': None if prob.blocks is None else [[sl.start, sl.stop] for sl in prob.blocks],
        'optimal_value': prob.optimal_value,
        'metadata': prob.metadata,
    }
    return json.dumps(doc, sort_keys=True)


def instance_from_json(text):
    doc = json.loads(text)
    dim = doc['dim']
    affine = doc['affine']
    return ProblemInstance(
        objective=function_from_dict(doc['objective']),
        regularizer=regularizer_from_dict(doc['regularizer']),
        affine=AffineConstraint(np.reshape(affine['A'], (-1, dim)), affine['b']),
        constraints=[InequalityConstraint(function_from_dict(c['function']), c['bound'], c['name'])
                     for c in doc['constraints']],
        blocks=doc['blocks'],
        optimal_value=doc['optimal_value'],
        name=doc['name'],
        metadata=doc['metadata'],
        dim=dim,
    )


def instance_hash(prob):
    """SHA-256 of the JSON text, used as the reference cache key."""
    return hashlib.sha256(instance_to_json(prob).encode('utf8')).hexdigest()


def reference_point(prob, ref):
    return PrimalDualPoint.at(prob, as_vector(ref.x, 'x', prob.dim), ref.y, ref.z)
