import unittest

import numpy as np
import numpy.testing as npt

from pylalm.instances import BpdnSpec, QcqpSpec, gen_bpdn, gen_qcqp, tiny_reference
from pylalm.model import AffineConstraint, ProblemInstance, ProxFunction, QuadraticFunction, ZeroFunction
from pylalm.solvers import BLALM, ConfigurationError, SolverConfig, pick_block
from pylalm.solvers import blalm, lalm


def small_qcqp(seed=0, blocks=4):
    return gen_qcqp(QcqpSpec(m=2, p=8, seed=seed)).with_blocks(blocks)


class TestSampling(unittest.TestCase):

    def test_uniform(self):
        rng = np.random.default_rng(0)
        freq = np.bincount([pick_block(rng, 10) for _ in range(100000)], minlength=10) / 100000
        self.assertTrue(np.all((0.09 <= freq) & (freq <= 0.11)), freq)

    def test_no_blocks(self):
        with self.assertRaises(ValueError):
            pick_block(np.random.default_rng(0), 0)


class TestSetup(unittest.TestCase):

    def test_needs_partition(self):
        prob, _ = tiny_reference('equality-qp')
        with self.assertRaises(ConfigurationError):
            BLALM(prob)

    def test_needs_separable_h(self):
        h = ProxFunction(lambda x: 0.0, lambda v, tau: v, dim=2)
        prob = ProblemInstance(QuadraticFunction(2, np.eye(2)), h,
                               affine=AffineConstraint([[1.0, 1.0]], [1.0]), blocks=2)
        with self.assertRaises(ConfigurationError):
            BLALM(prob)

    def test_multiplier_steps(self):
        prob = small_qcqp()
        self.assertEqual(BLALM(prob, SolverConfig(beta=2.0)).config.rho_z, 0.5)
        self.assertEqual(BLALM(prob, SolverConfig(beta=2.0), theorem_defaults=True).config.rho_z, 0.25)
        self.assertEqual(BLALM(prob, SolverConfig(beta=2.0, rho_z=1.5)).config.rho_z, 1.5)


class TestBlockBacktracking(unittest.TestCase):

    def test_multiplication_count(self):
        # separable 0.5 sum_i c_i x_i^2: block i needs the first 1.5^t >= c_i
        curvatures = np.array([3.0, 10.0, 0.5])
        prob = ProblemInstance(QuadraticFunction(3, np.diag(curvatures)), ZeroFunction(3), blocks=3)
        solver = BLALM(prob, SolverConfig(eta0=1.0))
        for i, expected in enumerate((3, 6, 0)):
            state = solver.initial_state(np.ones(3))
            eta, block = solver.eta_backtrack_block(state, i)
            self.assertEqual(state.backtracks, expected)
            self.assertAlmostEqual(eta, 1.5 ** expected)
            self.assertGreaterEqual(eta, curvatures[i])
            npt.assert_allclose(block, [1.0 - curvatures[i] / eta])

    def test_analytic_step_needs_no_backtracking(self):
        prob = small_qcqp(seed=3)
        backtracking = BLALM(prob, SolverConfig(beta=0.5))
        analytic = BLALM(prob, SolverConfig(beta=0.5, step_mode='analytic'))
        rng = np.random.default_rng(3)
        for _ in range(20):
            x0 = rng.uniform(-10.0, 10.0, prob.dim)
            state = backtracking.initial_state(x0, z0=3 * np.abs(rng.standard_normal(prob.m)))
            state.eta[:] = 0.0
            for i in range(prob.n_blocks):
                state.eta[i] = analytic.eta_analytic_block(state, i)
                eta, _ = backtracking.eta_backtrack_block(state, i)
                self.assertEqual(eta, state.eta[i])
            self.assertEqual(state.backtracks, 0)


class TestSingleBlock(unittest.TestCase):
    """With one block, every block update is a full LALM step."""

    def check_same_path(self, prob, iterations=100, atol=1e-12):
        cfg = SolverConfig(step_mode='analytic', max_epochs=iterations, tol=0.0)
        full, block = [], []
        lalm.solve(prob, cfg, callback=lambda s: full.append(s.w.x.copy()))
        blalm.solve(prob.with_blocks(1), cfg, callback=lambda s: block.append(s.w.x.copy()))
        self.assertEqual(len(full), len(block))
        for a, b in zip(full, block):
            npt.assert_allclose(b, a, rtol=0, atol=atol)

    def test_equality_qp(self):
        self.check_same_path(tiny_reference('equality-qp')[0])

    def test_scalar_qcqp(self):
        self.check_same_path(tiny_reference('scalar-qcqp')[0])

    def test_random_qcqp(self):
        self.check_same_path(gen_qcqp(QcqpSpec(m=2, p=5, seed=3)), atol=1e-10)


class TestBlockSolve(unittest.TestCase):

    def test_equality_qp(self):
        prob, ref = tiny_reference('equality-qp')
        result = blalm.solve(prob.with_blocks(2), SolverConfig(max_epochs=10000, tol=0.0), seed=1)
        self.assertLessEqual(np.linalg.norm(result.point.x - ref.x), 1e-5)
        self.assertLessEqual(abs(result.point.y[0] - ref.y[0]), 1e-5)

    def test_epoch_counts_block_updates(self):
        prob = small_qcqp()
        ks = []
        blalm.solve(prob, SolverConfig(max_epochs=7, tol=0.0), callback=lambda s: ks.append(s.k))
        self.assertEqual(ks[-1], 7 * 4)

    def test_same_seed_same_path(self):
        prob = small_qcqp()
        cfg = SolverConfig(max_epochs=20, tol=0.0, timing=False)
        a = blalm.solve(prob, cfg, seed=5)
        b = blalm.solve(prob, cfg, seed=5)
        c = blalm.solve(prob, cfg, seed=6)
        npt.assert_array_equal(a.point.x, b.point.x)
        self.assertEqual(a.trace.to_csv(), b.trace.to_csv())
        self.assertFalse(np.array_equal(a.point.x, c.point.x))

    def test_caches_stay_exact(self):
        prob = gen_qcqp(QcqpSpec(m=3, p=12, seed=2)).with_blocks(3)
        A = np.random.default_rng(2).standard_normal((2, 12))
        prob = ProblemInstance(prob.objective, prob.regularizer, AffineConstraint(A, np.ones(2)),
                               prob.constraints, blocks=3)
        solver = BLALM(prob, SolverConfig(max_epochs=200, tol=0.0, refresh_every=10000))
        seen = {}
        result = solver.solve(callback=lambda s: seen.setdefault('state', s))
        state = seen['state']
        w = result.point
        npt.assert_allclose(w.r, prob.affine.residual(w.x), atol=1e-9)
        npt.assert_allclose(w.fvals, prob.constraint_values(w.x), rtol=1e-9, atol=1e-9)
        self.assertAlmostEqual(state.trackers.objective.value, prob.objective(w.x), delta=1e-8)

    def test_refresh_reports_drift(self):
        prob = small_qcqp()
        solver = BLALM(prob)
        state = solver.initial_state(seed=0)
        self.assertLess(solver.refresh(state), 1e-12)
        state.w.fvals = state.w.fvals + 1.0
        with self.assertLogs('pylalm.solvers', 'WARNING'):
            self.assertGreater(solver.refresh(state), 1e-9)
        npt.assert_allclose(state.w.fvals, prob.constraint_values(state.w.x))

    def test_multipliers_stay_nonnegative(self):
        for prob in (small_qcqp(seed=1), gen_bpdn(BpdnSpec(rows=10, cols=20, sparsity=3, seed=1)).with_blocks(4)):
            zs = []
            blalm.solve(prob, SolverConfig(max_epochs=300, tol=0.0, record_every=100),
                        callback=lambda s: zs.append(s.w.z.min()))
            self.assertGreaterEqual(min(zs), 0.0, prob.name)

    def test_ergodic_columns(self):
        prob, _ = tiny_reference('equality-qp')
        result = blalm.solve(prob.with_blocks(2), SolverConfig(max_epochs=50, tol=0.0))
        final = result.trace.final
        self.assertIsNotNone(final.erg_obj_gap)
        self.assertIsNotNone(final.erg_mean_obj_gap)
        self.assertIsNotNone(final.erg_sum_obj_gap)
        self.assertIsNotNone(final.erg_sum_feas)
        self.assertEqual(result.ergodic.shape, (2,))

    def test_block_eta_nondecreasing(self):
        prob = small_qcqp()
        history = []
        blalm.solve(prob, SolverConfig(max_epochs=50, tol=0.0), callback=lambda s: history.append(s.eta.copy()))
        self.assertTrue(np.all(np.diff(np.array(history), axis=0) >= 0))


if __name__ == '__main__':
    unittest.main()
