"""
Desk-scale reproductions of the convergence experiments. These take minutes;
set PYLALM_SLOW_TESTS=1 to run them.
"""

import os
import tempfile
import unittest
from unittest import mock

import numpy as np

from pylalm import ExperimentConfig, rate_fit, run, tail_ratio
from pylalm.instances import BpdnSpec, MinimaxSpec, QcqpSpec, gen_bpdn, gen_minimax, gen_qcqp
from pylalm.solvers import SolverConfig
from pylalm.solvers import blalm, lalm

SLOW = unittest.skipUnless(os.environ.get('PYLALM_SLOW_TESTS'), "set PYLALM_SLOW_TESTS=1 to run")


def first_epoch(trace, column, threshold):
    """First recorded epoch at which `column` is at most `threshold`, or inf."""
    values = trace.column(column)
    hits = np.flatnonzero(values <= threshold)
    return trace.column('epoch')[hits[0]] if hits.size else np.inf


@SLOW
class TestMultiplierSigns(unittest.TestCase):

    def test_all_families(self):
        problems = [gen_bpdn(BpdnSpec(seed=2)), gen_qcqp(QcqpSpec(m=5, p=50, seed=2)),
                    gen_minimax(MinimaxSpec(5, p=3, seed=2))]
        for prob in problems:
            for method, solve in (('lalm', lalm.solve), ('blalm', blalm.solve)):
                instance = prob.with_blocks(min(5, prob.dim)) if method == 'blalm' else prob
                lowest = [np.inf]

                def watch(state):
                    lowest[0] = min(lowest[0], state.w.z.min())

                cfg = SolverConfig(max_epochs=10000, tol=0.0, record_every=10000, timing=False)
                if method == 'blalm':
                    solve(instance, cfg, callback=watch, seed=0)
                else:
                    solve(instance, cfg, callback=watch)
                self.assertGreaterEqual(lowest[0], 0.0, f"{method} on {prob.name}")


@SLOW
class TestSparseRecovery(unittest.TestCase):
    """50 x 100 BPDN with a 5-sparse signal and noise level 0.1."""

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        with mock.patch.dict(os.environ, {'PYLALM_CACHE_DIR': cls.tmp.name}):
            cls.traces = {
                'lalm': run(ExperimentConfig(method='lalm', problem='bpdn', reference='long-run',
                                             epochs=100000, timing=False)),
                'blalm': run(ExperimentConfig(method='blalm', problem='bpdn', reference='long-run',
                                              blocks=10, epochs=100000, timing=False)),
            }

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def test_ergodic_rate(self):
        for method, trace in self.traces.items():
            for column in ('erg_obj_gap', 'erg_feas'):
                slope = rate_fit(trace, column, window=(100, 10000))
                self.assertTrue(-1.3 <= slope <= -0.7, f"{method} {column}: slope {slope:.3f}")

    def test_nonergodic_feasibility(self):
        for method, trace in self.traces.items():
            self.assertLess(first_epoch(trace, 'feas', 1e-8), 100000, method)


@SLOW
class TestQcqpComparison(unittest.TestCase):
    """p = 200, m = 10, beta = 0.1 with 20 blocks (rho_z = beta / 20 for the block method)."""

    @classmethod
    def setUpClass(cls):
        common = dict(problem='qcqp', p=200, m=10, beta=0.1, epochs=100000, tol=1e-10,
                      reference='none', timing=False)
        cls.traces = {
            'lalm': run(ExperimentConfig(method='lalm', **common)),
            'blalm': run(ExperimentConfig(method='blalm', blocks=20, **common)),
            'pdyn': run(ExperimentConfig(method='pdyn', **common)),
        }

    def test_ordering(self):
        baseline = first_epoch(self.traces['pdyn'], 'kkt_stat', 1e-4)
        for method in ('lalm', 'blalm'):
            reached = first_epoch(self.traces[method], 'kkt_stat', 1e-6)
            self.assertTrue(np.isfinite(reached), method)
            self.assertLess(reached, baseline, method)

    def test_linear_tail(self):
        for method in ('lalm', 'blalm'):
            trace = self.traces[method]
            end = first_epoch(trace, 'kkt_stat', 1e-9)
            self.assertTrue(np.isfinite(end), method)
            window = (max(1, end // 10), end)
            self.assertLess(tail_ratio(trace, 'kkt_stat', window), 0.999, method)
            self.assertLessEqual(rate_fit(trace, 'kkt_stat', window), -2.0, method)


if __name__ == '__main__':
    unittest.main()
