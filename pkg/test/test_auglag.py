import unittest

import numpy as np
import numpy.testing as npt

from pylalm.instances import BpdnSpec, QcqpSpec, gen_bpdn, gen_qcqp, tiny_reference
from pylalm.model import (AffineConstraint, InequalityConstraint, L_F, L_Psi, MissingConstantError,
                          ProblemInstance, ProblemTrackers, Psi, QuadraticFunction, ZeroFunction, auglag_value,
                          eps_optimality, grad_x_F, kkt_residual, partial_grad_block, phi_gap, psi, psi_du,
                          smooth_value)
from pylalm.solvers import descent_holds
from pylalm.util import check_gradient, positive_part


class SmoothPart:
    """F(., y, z) as a function of x alone, for finite-difference checks."""

    def __init__(self, prob, y, z, beta):
        self.prob, self.y, self.z, self.beta = prob, y, z, beta

    def __call__(self, x):
        return smooth_value(x, self.y, self.z, self.beta, self.prob)

    def grad(self, x):
        return grad_x_F(self.prob.point(x, self.y, self.z), self.beta, self.prob)


def grad_Psi(x, z, beta, prob):
    weights = positive_part(beta * prob.constraint_values(x) + z)
    return prob.constraint_jacobian(x).T @ weights


def qcqp_with_equalities(seed=0):
    prob = gen_qcqp(QcqpSpec(m=3, p=20, seed=seed))
    A = np.random.default_rng(seed + 100).standard_normal((4, 20))
    return ProblemInstance(prob.objective, prob.regularizer, AffineConstraint(A, np.ones(4)), prob.constraints)


class TestPsi(unittest.TestCase):

    def test_branches_meet(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            v, beta = rng.standard_normal(), rng.uniform(0.1, 5.0)
            u = -v / beta
            self.assertAlmostEqual(psi(u, v, beta), -v * v / (2 * beta), delta=1e-12)
            self.assertAlmostEqual(u * v + 0.5 * beta * u * u, -v * v / (2 * beta), delta=1e-12)
            self.assertAlmostEqual(psi_du(u, v, beta), 0.0, delta=1e-12)

    def test_derivative(self):
        rng = np.random.default_rng(1)
        h = 1e-6
        for _ in range(20):
            u, v, beta = rng.standard_normal(), rng.standard_normal(), rng.uniform(0.1, 5.0)
            fd = (psi(u + h, v, beta) - psi(u - h, v, beta)) / (2 * h)
            self.assertAlmostEqual(psi_du(u, v, beta), fd, delta=1e-6)

    def test_values(self):
        self.assertAlmostEqual(psi(1.0, 0.5, 1.0), 1.0)
        self.assertAlmostEqual(psi(-2.0, 0.5, 1.0), -0.125)
        npt.assert_allclose(psi(np.array([1.0, -2.0]), np.array([0.5, 0.5]), 1.0), [1.0, -0.125])

    def test_derivative_lipschitz_in_u(self):
        rng = np.random.default_rng(2)
        for _ in range(500):
            u1, u2, v = 3 * rng.standard_normal(3)
            beta = rng.uniform(0.1, 5.0)
            diff = abs(psi_du(u1, v, beta) - psi_du(u2, v, beta))
            self.assertLessEqual(diff, beta * abs(u1 - u2) + 1e-12)

    def test_beta_positive(self):
        with self.assertRaises(ValueError):
            psi(1.0, 1.0, 0.0)


class TestSmoothPart(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.bpdn = gen_bpdn(BpdnSpec(rows=10, cols=20, sparsity=3, seed=0))
        cls.qcqp = gen_qcqp(QcqpSpec(m=3, p=20, seed=0))
        cls.mixed = qcqp_with_equalities()

    def check_states(self, prob, seed):
        rng = np.random.default_rng(seed)
        for _ in range(20):
            x = rng.standard_normal(prob.dim)
            y = rng.standard_normal(prob.affine.rows)
            z = np.abs(rng.standard_normal(prob.m))
            beta = rng.uniform(0.1, 2.0)
            self.assertLess(check_gradient(SmoothPart(prob, y, z, beta), x), 1e-5)

    def test_gradient_bpdn(self):
        self.check_states(self.bpdn, 0)

    def test_gradient_qcqp(self):
        self.check_states(self.qcqp, 1)

    def test_gradient_with_equalities(self):
        self.check_states(self.mixed, 2)

    def test_partial_gradient(self):
        prob = self.mixed.with_blocks(4)
        rng = np.random.default_rng(3)
        w = prob.point(rng.standard_normal(20), rng.standard_normal(4), np.abs(rng.standard_normal(3)))
        full = grad_x_F(w, 0.7, prob)
        trackers = ProblemTrackers(prob, w.x)
        for i, sl in enumerate(prob.blocks):
            npt.assert_allclose(partial_grad_block(w, 0.7, prob, i), full[sl], rtol=1e-10, atol=1e-10)
            npt.assert_allclose(partial_grad_block(w, 0.7, prob, i, trackers), full[sl], rtol=1e-10, atol=1e-10)

    def test_partial_gradient_needs_blocks(self):
        w = self.qcqp.point(np.zeros(20))
        with self.assertRaises(ValueError):
            partial_grad_block(w, 1.0, self.qcqp, 0)

    def test_auglag_outside_domain(self):
        x = np.full(20, 11.0)
        w = self.qcqp.point(x)
        self.assertEqual(auglag_value(w, 1.0, self.qcqp), np.inf)
        w = self.qcqp.point(np.zeros(20), z=np.ones(3))
        expected = self.qcqp.objective(w.x) + Psi(w.x, w.z, 1.0, self.qcqp)
        self.assertAlmostEqual(auglag_value(w, 1.0, self.qcqp), expected)


class TestLipschitzEstimate(unittest.TestCase):

    def test_sampled_pairs(self):
        prob = gen_qcqp(QcqpSpec(m=3, p=20, seed=4))
        rng = np.random.default_rng(4)
        for _ in range(1000):
            x = rng.uniform(-10, 10, 20)
            x_hat = rng.uniform(-10, 10, 20)
            z = np.abs(rng.standard_normal(3)) * 10
            beta = rng.uniform(0.01, 2.0)
            lhs = np.linalg.norm(grad_Psi(x_hat, z, beta, prob) - grad_Psi(x, z, beta, prob))
            self.assertLessEqual(lhs, L_Psi(x, z, beta, prob) * np.linalg.norm(x_hat - x) + 1e-8)

    def test_monotone_in_z(self):
        prob = gen_qcqp(QcqpSpec(m=3, p=10, seed=5))
        rng = np.random.default_rng(5)
        for _ in range(100):
            x = rng.uniform(-10, 10, 10)
            z = np.abs(rng.standard_normal(3))
            z_up = z + np.abs(rng.standard_normal(3))
            beta = rng.uniform(0.01, 2.0)
            self.assertLessEqual(L_Psi(x, z, beta, prob), L_Psi(x, z_up, beta, prob) + 1e-12)

    def test_descent_at_l_f(self):
        # a prox-gradient step with eta = L_F passes the sufficient-decrease test
        prob = qcqp_with_equalities(seed=6)
        rng = np.random.default_rng(6)
        for _ in range(50):
            x = rng.uniform(-10, 10, 20)
            y = rng.standard_normal(4)
            z = 5 * np.abs(rng.standard_normal(3))
            beta = rng.uniform(0.01, 2.0)
            w = prob.point(x, y, z)
            grad = grad_x_F(w, beta, prob)
            eta = L_F(x, z, beta, prob)
            x_plus = prob.regularizer.prox(x - grad / eta, 1.0 / eta)
            d = x_plus - x
            self.assertTrue(descent_holds(smooth_value(x_plus, y, z, beta, prob), smooth_value(x, y, z, beta, prob),
                                          float(grad @ d), eta, float(d @ d)))

    def test_missing_constants(self):
        prob = ProblemInstance(QuadraticFunction(2), ZeroFunction(2),
                               constraints=[InequalityConstraint(QuadraticFunction(2, np.eye(2), d=-1.0))])
        with self.assertRaises(MissingConstantError):
            L_Psi(np.zeros(2), np.zeros(1), 1.0, prob)
        with self.assertRaises(MissingConstantError):
            L_F(np.zeros(2), np.zeros(1), 1.0, prob)

    def test_l_f(self):
        prob, _ = tiny_reference('equality-qp')
        self.assertAlmostEqual(L_F(np.zeros(2), np.zeros(0), 2.0, prob), 1.0 + 2.0 * 2.0, places=8)
        prob, _ = tiny_reference('scalar-qcqp')
        # L_g + beta B^2 + L [beta f + z]_+ at x = 0, z = 3: 1 + 400 + 2 * 2
        self.assertAlmostEqual(L_F(np.zeros(1), np.array([3.0]), 1.0, prob), 405.0)


class TestMetrics(unittest.TestCase):

    def test_kkt_residual_at_references(self):
        for kind in ('equality-qp', 'scalar-qcqp', 'scalar-bpdn'):
            prob, ref = tiny_reference(kind)
            res = kkt_residual(prob.point(ref.x, ref.y, ref.z), prob)
            self.assertLess(res.max, 1e-12, kind)

    def test_kkt_residual_away(self):
        prob, ref = tiny_reference('scalar-qcqp')
        res = kkt_residual(prob.point([-0.5], z=[0.5]), prob)
        self.assertGreater(res.stationarity, 0.0)
        self.assertAlmostEqual(res.complementarity, 0.5 * 0.75)

    def test_kkt_rejects_negative_z(self):
        prob, _ = tiny_reference('scalar-qcqp')
        w = prob.point([0.0])
        w.z = np.array([-1.0])
        with self.assertRaises(ValueError):
            kkt_residual(w, prob)

    def test_phi_gap_nonnegative(self):
        rng = np.random.default_rng(5)
        for kind in ('equality-qp', 'scalar-qcqp', 'scalar-bpdn'):
            prob, ref = tiny_reference(kind)
            at = prob.point(ref.x, ref.y, ref.z)
            for _ in range(100):
                x_bar = rng.uniform(-10, 10, prob.dim)
                self.assertGreaterEqual(phi_gap(x_bar, at, prob), -1e-12, kind)

    def test_eps_optimality(self):
        prob, ref = tiny_reference('scalar-qcqp')
        res = eps_optimality(ref.x, ref.f0, 1e-8, prob)
        self.assertTrue(res.optimal)
        res = eps_optimality([-1.1], ref.f0, 1e-3, prob)
        self.assertFalse(res.optimal)
        self.assertAlmostEqual(res.feasibility, 0.21)
        with self.assertRaises(ValueError):
            eps_optimality(ref.x, np.inf, 1e-3, prob)


if __name__ == '__main__':
    unittest.main()
