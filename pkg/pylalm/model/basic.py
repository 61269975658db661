import copy
import logging

import numpy as np

from ..util import as_vector, positive_part

logger = logging.getLogger('pylalm.model')


# smooth functions --------------------------------------------------------------

class SmoothFunction:
    """
    A convex function with a Lipschitz continuous gradient.

    Args:
        value (callable): Vector -> float.
        gradient (callable): Vector -> vector.
        lipschitz (float, optional): Lipschitz constant of the gradient.
        dim (int, optional): Number of variables.
    """

    def __init__(self, value, gradient, lipschitz=None, dim=None):
        self._value = value
        self._gradient = gradient
        self.lipschitz = None if lipschitz is None else float(lipschitz)
        self.dim = dim

    def __call__(self, x):
        return float(self._value(x))

    def grad(self, x):
        return np.asarray(self._gradient(x), dtype=float).reshape(-1)

    def track(self, x):
        """Return a per-solve tracker positioned at `x`."""
        return FunctionTracker(self, x)

    def to_dict(self):
        raise TypeError(f"{type(self).__name__} built from callables cannot be serialized")


class QuadraticFunction(SmoothFunction):
    """
    The function 0.5 x'Qx + c'x + d.

    `Q=None` gives an affine function and `Q=None, c=None` the zero function.
    """

    def __init__(self, dim, Q=None, c=None, d=0.0):
        self.dim = int(dim)
        self.Q = None if Q is None else np.array(Q, dtype=float).reshape(self.dim, self.dim)
        self.c = np.zeros(self.dim) if c is None else as_vector(c, 'c', self.dim)
        self.d = float(d)
        if self.Q is not None and not np.allclose(self.Q, self.Q.T):
            raise ValueError("Q must be symmetric")
        self.lipschitz = 0.0 if self.Q is None else float(np.linalg.eigvalsh(self.Q)[-1])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        res = self.c @ x + self.d
        if self.Q is not None:
            res += 0.5 * x @ (self.Q @ x)
        return float(res)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        if self.Q is None:
            return self.c.copy()
        return self.Q @ x + self.c

    def track(self, x):
        return QuadraticTracker(self, x)

    def to_dict(self):
        return {
            'type': 'quadratic',
            'dim': self.dim,
            'Q': None if self.Q is None else self.Q.tolist(),
            'c': self.c.tolist(),
            'd': self.d,
        }


class LeastSquaresFunction(SmoothFunction):
    """The function ||Mx - b||^2 + offset."""

    def __init__(self, M, b, offset=0.0):
        self.M = np.atleast_2d(np.array(M, dtype=float))
        self.dim = self.M.shape[1]
        self.b = as_vector(b, 'b', self.M.shape[0])
        self.offset = float(offset)
        self.lipschitz = 2.0 * float(np.linalg.norm(self.M, 2)) ** 2

    def __call__(self, x):
        s = self.M @ x - self.b
        return float(s @ s + self.offset)

    def grad(self, x):
        return 2.0 * self.M.T @ (self.M @ x - self.b)

    def track(self, x):
        return LeastSquaresTracker(self, x)

    def to_dict(self):
        return {'type': 'least_squares', 'M': self.M.tolist(), 'b': self.b.tolist(),
                'offset': self.offset}


class ShiftedFunction(SmoothFunction):
    """
    The function (x, t) -> f(x) - t on the stacked variable, t being the
    last coordinate.
    """

    def __init__(self, inner):
        if inner.dim is None:
            raise ValueError("the inner function must declare its dimension")
        self.inner = inner
        self.dim = inner.dim + 1
        self.lipschitz = inner.lipschitz

    def __call__(self, x):
        return self.inner(x[:-1]) - float(x[-1])

    def grad(self, x):
        return np.append(self.inner.grad(x[:-1]), -1.0)

    def track(self, x):
        return ShiftedTracker(self, x)

    def to_dict(self):
        return {'type': 'shifted', 'inner': self.inner.to_dict()}


# trackers ---------------------------------------------------------------------

class FunctionTracker:
    """
    Keeps the value of a function along a sequence of block changes.

    This generic version re-evaluates the function from scratch; subclasses
    exploit structure so that a block change costs a fraction of a full
    evaluation. All methods take the current point explicitly; `update` is
    called after the block of `x` has been overwritten.
    """

    def __init__(self, func, x):
        self.func = func
        self.refresh(x)

    def refresh(self, x):
        self.value = self.func(x)

    def peek(self, x, sl, delta):
        """Value after adding `delta` to block `sl`, without committing."""
        trial = np.array(x, dtype=float)
        trial[sl] += delta
        return self.func(trial)

    def update(self, x, sl, delta):
        self.value = self.func(x)

    def grad(self, x):
        return self.func.grad(x)

    def grad_block(self, x, sl):
        return self.func.grad(x)[sl].copy()


class QuadraticTracker(FunctionTracker):
    """Maintains Qx, so block values and partial gradients cost O(p * width)."""

    def refresh(self, x):
        f = self.func
        self.Qx = None if f.Q is None else f.Q @ x
        self.value = float(f.c @ x + f.d)
        if self.Qx is not None:
            self.value += 0.5 * float(x @ self.Qx)

    def _step(self, sl, delta):
        f = self.func
        dv = f.c[sl] @ delta
        if f.Q is not None:
            dv += self.Qx[sl] @ delta + 0.5 * delta @ (f.Q[sl, sl] @ delta)
        return float(dv)

    def peek(self, x, sl, delta):
        return self.value + self._step(sl, delta)

    def update(self, x, sl, delta):
        self.value += self._step(sl, delta)
        if self.Qx is not None:
            self.Qx += self.func.Q[:, sl] @ delta

    def grad(self, x):
        if self.Qx is None:
            return self.func.c.copy()
        return self.Qx + self.func.c

    def grad_block(self, x, sl):
        if self.Qx is None:
            return self.func.c[sl].copy()
        return self.Qx[sl] + self.func.c[sl]


class LeastSquaresTracker(FunctionTracker):
    """Maintains the residual Mx - b."""

    def refresh(self, x):
        f = self.func
        self.residual = f.M @ x - f.b
        self.value = float(self.residual @ self.residual + f.offset)

    def peek(self, x, sl, delta):
        s = self.residual + self.func.M[:, sl] @ delta
        return float(s @ s + self.func.offset)

    def update(self, x, sl, delta):
        self.residual += self.func.M[:, sl] @ delta
        self.value = float(self.residual @ self.residual + self.func.offset)

    def grad(self, x):
        return 2.0 * self.func.M.T @ self.residual

    def grad_block(self, x, sl):
        return 2.0 * self.func.M[:, sl].T @ self.residual


class ShiftedTracker(FunctionTracker):
    """Splits a block change into its part on x and its part on t."""

    def refresh(self, x):
        self.inner = self.func.inner.track(x[:-1])
        self.value = self.inner.value - float(x[-1])

    def _split(self, sl, delta):
        p = self.func.inner.dim
        inner_sl = slice(sl.start, min(sl.stop, p))
        width = max(inner_sl.stop - inner_sl.start, 0)
        dt = float(delta[width:].sum()) if sl.stop > p else 0.0
        return inner_sl, delta[:width], dt

    def peek(self, x, sl, delta):
        inner_sl, d, dt = self._split(sl, delta)
        inner_value = self.inner.peek(x[:-1], inner_sl, d) if d.size else self.inner.value
        return inner_value - (float(x[-1]) + dt)

    def update(self, x, sl, delta):
        inner_sl, d, _ = self._split(sl, delta)
        if d.size:
            self.inner.update(x[:-1], inner_sl, d)
        self.value = self.inner.value - float(x[-1])

    def grad(self, x):
        return np.append(self.inner.grad(x[:-1]), -1.0)

    def grad_block(self, x, sl):
        return self.grad(x)[sl]


# constraints ------------------------------------------------------------------

class InequalityConstraint:
    """
    The constraint f(x) <= 0.

    Args:
        function (SmoothFunction): The constraint function f.
        bound (float, optional): Bound B on ||grad f(x)|| over dom(h).
        name (str): Label used in logs.
    """

    def __init__(self, function, bound=None, name=''):
        self.function = function
        self.bound = None if bound is None else float(bound)
        self.name = name

    def __call__(self, x):
        return self.function(x)

    def grad(self, x):
        return self.function.grad(x)

    @property
    def lipschitz(self):
        return self.function.lipschitz

    def track(self, x):
        return self.function.track(x)

    def to_dict(self):
        return {'function': self.function.to_dict(), 'bound': self.bound, 'name': self.name}

    def __repr__(self):
        return f"InequalityConstraint({self.name or type(self.function).__name__})"


class AffineConstraint:
    """
    The constraint Ax = b with a dense matrix A.

    Block applications use column slices A[:, sl]; the squared operator norm
    is computed once by power iteration and cached.
    """

    def __init__(self, matrix, rhs):
        A = np.array(matrix, dtype=float)
        if A.ndim != 2:
            raise ValueError("the affine constraint needs a 2-D matrix")
        self.matrix = A
        self.rhs = as_vector(rhs, 'b', A.shape[0])
        self._norm_sq = None
        self._block_norm_sq = {}

    @classmethod
    def empty(cls, dim):
        return cls(np.zeros((0, dim)), np.zeros(0))

    @property
    def rows(self):
        return self.matrix.shape[0]

    @property
    def dim(self):
        return self.matrix.shape[1]

    @property
    def is_empty(self):
        return self.rows == 0

    def matvec(self, x):
        return self.matrix @ x

    def rmatvec(self, y):
        return self.matrix.T @ y

    def residual(self, x):
        return self.matrix @ x - self.rhs

    def block(self, sl):
        return self.matrix[:, sl]

    def block_matvec(self, sl, xs):
        return self.matrix[:, sl] @ xs

    @property
    def norm_sq(self):
        if self._norm_sq is None:
            from .util import operator_norm_sq
            self._norm_sq = 0.0 if self.is_empty else operator_norm_sq(self.matrix)
        return self._norm_sq

    def block_norm_sq(self, sl):
        key = (sl.start, sl.stop)
        if key not in self._block_norm_sq:
            from .util import operator_norm_sq
            self._block_norm_sq[key] = 0.0 if self.is_empty else operator_norm_sq(self.matrix[:, sl])
        return self._block_norm_sq[key]

    def to_dict(self):
        return {'A': self.matrix.tolist(), 'b': self.rhs.tolist()}


# problem ----------------------------------------------------------------------

class ProblemInstance:
    """
    The program  min g(x) + h(x)  s.t.  Ax = b,  f_j(x) <= 0.

    Args:
        objective (SmoothFunction): The smooth part g.
        regularizer (ProxFunction): The proximable part h.
        affine (AffineConstraint, optional): The equality constraint.
        constraints (list): InequalityConstraint objects.
        blocks (int or list, optional): Number of even blocks, or contiguous
            (start, stop) ranges covering all coordinates.
        optimal_value (float, optional): Known optimal value f0*.
        name (str): Instance label.
        metadata (dict, optional): Free-form generator metadata.
    """

    def __init__(self, objective, regularizer, affine=None, constraints=(), blocks=None,
                 optimal_value=None, name='', metadata=None, dim=None):

        dim = dim or objective.dim or getattr(regularizer, 'dim', None) or (affine.dim if affine else None)
        if dim is None:
            raise ValueError("cannot infer the problem dimension")
        self.dim = int(dim)
        self.objective = objective
        self.regularizer = regularizer
        self.affine = AffineConstraint.empty(self.dim) if affine is None else affine
        if self.affine.dim != self.dim:
            raise ValueError(f"dimension mismatch for A: expected {self.dim} columns, got {self.affine.dim}")
        self.constraints = list(constraints)
        for c in self.constraints:
            if not isinstance(c, InequalityConstraint):
                raise TypeError(f"expected InequalityConstraint, got {type(c).__name__}")
        self.blocks = None if blocks is None else self._check_blocks(blocks)
        self.optimal_value = None if optimal_value is None else float(optimal_value)
        self.name = name
        self.metadata = {} if metadata is None else dict(metadata)

    def _check_blocks(self, blocks):
        from .util import even_partition
        if isinstance(blocks, (int, np.integer)):
            return even_partition(self.dim, int(blocks))
        slices = [b if isinstance(b, slice) else slice(int(b[0]), int(b[1])) for b in blocks]
        pos = 0
        for sl in slices:
            if sl.start != pos or sl.stop <= sl.start:
                raise ValueError("blocks must be disjoint, nonempty, contiguous ranges covering all coordinates")
            pos = sl.stop
        if pos != self.dim:
            raise ValueError("blocks must be disjoint, nonempty, contiguous ranges covering all coordinates")
        return slices

    @property
    def m(self):
        return len(self.constraints)

    @property
    def n_blocks(self):
        return 1 if self.blocks is None else len(self.blocks)

    @property
    def has_step_constants(self):
        """Whether L_g, every L_j and every B_j are known."""
        return (self.objective.lipschitz is not None
                and all(c.bound is not None and c.lipschitz is not None for c in self.constraints))

    def with_blocks(self, blocks):
        res = copy.copy(self)
        res.blocks = self._check_blocks(blocks)
        return res

    def with_optimal_value(self, value):
        res = copy.copy(self)
        res.optimal_value = None if value is None else float(value)
        return res

    def objective_value(self, x):
        """f0(x) = g(x) + h(x)."""
        return self.objective(x) + self.regularizer(x)

    def constraint_values(self, x):
        return np.array([c(x) for c in self.constraints], dtype=float)

    def constraint_jacobian(self, x):
        if not self.constraints:
            return np.zeros((0, self.dim))
        return np.vstack([c.grad(x) for c in self.constraints])

    def feasibility(self, x, r=None, fvals=None):
        """||Ax - b|| + sum_j [f_j(x)]_+."""
        r = self.affine.residual(x) if r is None else r
        fvals = self.constraint_values(x) if fvals is None else fvals
        return float(np.linalg.norm(r) + positive_part(fvals).sum())

    def point(self, x, y=None, z=None):
        return PrimalDualPoint.at(self, x, y, z)

    def __repr__(self):
        return (f"ProblemInstance({self.name or 'unnamed'}: dim={self.dim}, "
                f"equalities={self.affine.rows}, inequalities={self.m}, blocks={self.n_blocks})")


class PrimalDualPoint:
    """
    The triple w = (x, y, z) with cached r = Ax - b and f_j(x).

    Use `PrimalDualPoint.at` to build one with fresh caches; the solvers
    construct points directly from values they already hold.
    """

    def __init__(self, x, y, z, r, fvals):
        self.x, self.y, self.z, self.r, self.fvals = x, y, z, r, fvals

    @classmethod
    def at(cls, prob, x, y=None, z=None):
        x = as_vector(x, 'x', prob.dim)
        y = np.zeros(prob.affine.rows) if y is None else as_vector(y, 'y', prob.affine.rows)
        z = np.zeros(prob.m) if z is None else as_vector(z, 'z', prob.m)
        if np.any(z < 0):
            raise ValueError("inequality multipliers z must be nonnegative")
        return cls(x, y, z, prob.affine.residual(x), prob.constraint_values(x))

    def refresh(self, prob):
        """
        Recompute the caches from scratch.

        Returns:
            float: The largest relative drift observed in r or fvals.
        """

        r = prob.affine.residual(self.x)
        fvals = prob.constraint_values(self.x)
        drift = 0.0
        for old, new in ((self.r, r), (self.fvals, fvals)):
            if new.size:
                drift = max(drift, np.linalg.norm(old - new) / max(1.0, np.linalg.norm(new)))
        self.r, self.fvals = r, fvals
        return drift

    def copy(self):
        return PrimalDualPoint(self.x.copy(), self.y.copy(), self.z.copy(), self.r.copy(), self.fvals.copy())

    def __repr__(self):
        return f"PrimalDualPoint(x={self.x!r}, y={self.y!r}, z={self.z!r})"
