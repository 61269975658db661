"""
Proximal operators and the proximable functions h.

The prox convention throughout is

    prox(v, tau) = argmin_u  h(u) + ||u - v||^2 / (2 tau),

so a linearized step with step size 1/eta is `prox(x - grad / eta, 1 / eta)`,
and tau -> 0 recovers the projection onto dom(h).
"""

import numpy as np

from ..util import as_vector


def prox_l1(v, tau):
    """Soft-thresholding: sign(v) * max(|v| - tau, 0)."""

    if not tau > 0:
        raise ValueError(f"threshold must be positive, got {tau}")
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("prox_l1 received non-finite input")
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


def project_box(v, lower, upper):
    """Componentwise clamp of v into [lower, upper]."""

    v = np.asarray(v, dtype=float)
    lower = np.broadcast_to(np.asarray(lower, dtype=float), v.shape)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), v.shape)
    if np.any(lower > upper):
        raise ValueError("box has a lower bound above its upper bound")
    return np.minimum(np.maximum(v, lower), upper)


class ProxFunction:
    """
    A proper closed convex function given by its value and prox oracles.

    Args:
        value (callable): Vector -> float (may return inf).
        prox (callable): (vector, tau) -> vector.
        lower, upper (array_like, optional): Domain box; entries may be infinite.
        dim (int, optional): Number of variables.
        separable (bool): Whether h is a sum of coordinatewise terms, so that
            `prox` may be applied to a single block.
    """

    def __init__(self, value=None, prox=None, lower=None, upper=None, dim=None, separable=False):
        self._value = value
        self._prox = prox
        self.dim = dim
        self.separable = separable
        self.lower = None if lower is None else as_vector(lower, 'lower', dim)
        self.upper = None if upper is None else as_vector(upper, 'upper', dim)
        if self.lower is not None and self.upper is not None and np.any(self.lower > self.upper):
            raise ValueError("box has a lower bound above its upper bound")
        if self.dim is None and self.lower is not None:
            self.dim = self.lower.size

    def __call__(self, x):
        if not self.in_domain(x):
            return np.inf
        return float(self._value(x))

    def prox(self, v, tau, sl=None):
        if not tau > 0:
            raise ValueError(f"prox step must be positive, got {tau}")
        if sl is not None and not self.separable:
            raise ValueError("block prox requires a separable function")
        return np.asarray(self._prox(v, tau), dtype=float)

    def bounds(self, sl=None):
        """The (lower, upper) box restricted to block `sl`."""
        sl = slice(None) if sl is None else sl
        lower = -np.inf if self.lower is None else self.lower[sl]
        upper = np.inf if self.upper is None else self.upper[sl]
        return lower, upper

    def in_domain(self, x):
        lower, upper = self.bounds()
        return bool(np.all(x >= lower) and np.all(x <= upper))

    def subgradient(self, x):
        """
        A subgradient of h at x and the mask of coordinates where the
        subdifferential is not a singleton.

        The default treats h as differentiable inside its box with zero
        gradient, which is exact for box indicators.
        """

        x = np.asarray(x, dtype=float)
        lower, upper = self.bounds()
        free = (x <= lower) | (x >= upper)
        return np.zeros_like(x), np.broadcast_to(free, x.shape).copy()

    def to_dict(self):
        raise TypeError(f"{type(self).__name__} built from callables cannot be serialized")


class BoxIndicator(ProxFunction):
    """Indicator of the box [lower, upper]; its prox is the projection."""

    def __init__(self, lower, upper):
        super().__init__(lower=lower, upper=upper, dim=np.size(lower), separable=True)

    def __call__(self, x):
        return 0.0 if self.in_domain(x) else np.inf

    def prox(self, v, tau, sl=None):
        if not tau > 0:
            raise ValueError(f"prox step must be positive, got {tau}")
        return project_box(v, *self.bounds(sl))

    def to_dict(self):
        return {'type': 'box', 'lower': _encode(self.lower), 'upper': _encode(self.upper)}


class ZeroFunction(BoxIndicator):
    """h = 0 on the whole space."""

    def __init__(self, dim):
        super().__init__(np.full(dim, -np.inf), np.full(dim, np.inf))

    def prox(self, v, tau, sl=None):
        if not tau > 0:
            raise ValueError(f"prox step must be positive, got {tau}")
        return np.array(v, dtype=float)

    def to_dict(self):
        return {'type': 'zero', 'dim': self.dim}


class L1Norm(ProxFunction):
    """
    scale * ||x||_1, optionally restricted to a box.

    For each coordinate the prox of |.| plus a box indicator is the clamp of
    the soft-thresholded value.
    """

    def __init__(self, scale=1.0, lower=None, upper=None, dim=None):
        if not scale > 0:
            raise ValueError("the l1 weight must be positive")
        super().__init__(lower=lower, upper=upper, dim=dim, separable=True)
        self.scale = float(scale)

    def __call__(self, x):
        if not self.in_domain(x):
            return np.inf
        return self.scale * float(np.abs(x).sum())

    def prox(self, v, tau, sl=None):
        res = prox_l1(v, tau * self.scale)
        if self.lower is None and self.upper is None:
            return res
        return project_box(res, *self.bounds(sl))

    def subgradient(self, x):
        x = np.asarray(x, dtype=float)
        lower, upper = self.bounds()
        free = (x == 0) | (x <= lower) | (x >= upper)
        return self.scale * np.sign(x), free

    def to_dict(self):
        return {'type': 'l1', 'scale': self.scale, 'dim': self.dim,
                'lower': _encode(self.lower), 'upper': _encode(self.upper)}


def _encode(v):
    # JSON has no infinities
    if v is None:
        return None
    return [None if not np.isfinite(a) else float(a) for a in v]
