"""End-to-end acceptance runs, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line and asserts the same outcome; the
lines are repeated in the terminal summary by ``conftest.py``. Runtimes are
checked against the stated budgets on the machine running the suite.
"""
import time

import pytest

from relenlab import experiments as ex

from conftest import ACCEPTANCE_LINES


def report(number, title, result, elapsed, budget):
    ok = result.passed and elapsed < budget
    details = "; ".join(f"{c.name}: {c.detail}" for c in result.checks)
    line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({title}) [{elapsed:.1f}s / {budget:.0f}s] {details}"
    ACCEPTANCE_LINES.append(line)
    print("\n" + line)
    failed = [f"{c.name}: {c.detail}" for c in result.checks if not c.passed]
    assert not failed, failed
    assert elapsed < budget, f"runtime {elapsed:.1f}s over budget {budget}s"


def timed(fn, **kw):
    start = time.perf_counter()
    result = fn(**kw)
    return result, time.perf_counter() - start


def test_criterion_01_noether_stress_identity():
    result, elapsed = timed(ex.run_noether_battery)
    assert {c.name for c in result.checks} >= {
        "noether[korteweg_constant]", "noether[korteweg_1+rho^2]", "noether[qhd_eps0.5]",
        "noether[euler_poisson_beta0]", "noether[euler_poisson_beta1]"}
    report(1, "Noether stress identity", result, elapsed, 5)


def test_criterion_02_energy_law():
    result, elapsed = timed(ex.run_energy_law)
    report(2, "energy law", result, elapsed, 60)


@pytest.mark.slow
def test_criterion_03_relative_energy_identity():
    result, elapsed = timed(ex.run_identity_study)
    report(3, "relative-energy identity closure", result, elapsed, 300)


@pytest.mark.slow
def test_criterion_04_local_identity():
    result, elapsed = timed(ex.run_local_identity_study)
    report(4, "local identity and flux", result, elapsed, 300)


@pytest.mark.slow
def test_criterion_05_rate_terms():
    result, elapsed = timed(ex.run_rate_term_study)
    report(5, "rate-term closures", result, elapsed, 300)


@pytest.mark.slow
def test_criterion_06_twin_stability():
    result, elapsed = timed(ex.run_twin_stability)
    report(6, "twin stability", result, elapsed, 600)


@pytest.mark.slow
def test_criterion_07_model_convergence():
    result, elapsed = timed(ex.run_model_convergence)
    report(7, "model convergence in alpha", result, elapsed, 900)


def test_criterion_08_elliptic_approximation():
    result, elapsed = timed(ex.run_elliptic_approximation)
    report(8, "elliptic approximation", result, elapsed, 5)


def test_criterion_09_variational_oracles():
    result, elapsed = timed(ex.run_variational)
    report(9, "variational oracle suite", result, elapsed, 60)


def test_criterion_10_structural_facts():
    result, elapsed = timed(ex.run_structural)
    report(10, "structural facts", result, elapsed, 5)
