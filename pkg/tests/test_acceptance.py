"""End-to-end acceptance run over the shipped configs.

Each criterion runs its config through the same entry point as the
``stochscl run`` command and records one PASS/FAIL line, printed in the
terminal summary. Determinism reruns every config with eight worker
threads and compares the report documents byte for byte.
"""

import time
from pathlib import Path

import pytest

from conftest import ACCEPTANCE_LINES
from stochscl.cli import load_config, report_document, run_experiment

pytestmark = pytest.mark.slow

CONFIGS = Path(__file__).parents[1] / "configs"
_CACHE = {}


def run(name, threads=1):
    key = (name, threads)
    if key not in _CACHE:
        cfg = load_config(CONFIGS / f"{name}.ini")
        t0 = time.perf_counter()
        reports, _ = run_experiment(cfg, threads)
        _CACHE[key] = (reports, report_document(cfg, reports), time.perf_counter() - t0)
    return _CACHE[key]


def by_name(reports, name):
    (r,) = [r for r in reports if r.property_name == name]
    return r


def record(number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_01_entropy_envelope():
    reports, _, secs = run("c01_entropy_envelope")
    r = by_name(reports, "entropy_envelope")
    ok = r.passed and r.estimate <= 1e-12 and secs < 1.0
    record(1, "entropy-pair envelope", ok, f"max violation {r.estimate:.3g} (tol 1e-12), {secs:.2f}s (< 1s)")


def test_criterion_02_linear_additive():
    reports, _, secs = run("c02_linear_additive")
    r = reports[0]
    errs = r.metadata["l2_errors"]
    ratio = errs[0] / errs[1]
    ok = ratio >= 1.7 and errs[1] <= 0.05 and secs < 30
    record(2, "linear flux, additive noise vs exact", ok,
           f"L2 errors {errs[0]:.4g} -> {errs[1]:.4g}, ratio {ratio:.3g} (>= 1.7), final <= 0.05, {secs:.1f}s (< 30s)")


def test_criterion_03_riemann_shock():
    reports, _, secs = run("c03_riemann_shock")
    r = reports[0]
    rel = abs(r.metadata["measured"] - 0.5) / 0.5
    ok = rel <= 0.02 and secs < 10
    record(3, "deterministic Burgers shock", ok,
           f"position {r.metadata['measured']:.4f}, rel err {rel:.3g} (<= 0.02), {secs:.1f}s (< 10s)")


def test_criterion_04_contraction():
    reports, _, secs = run("c04_contraction")
    r = reports[0]
    m = r.metadata
    bound = [m["initial_distance"] * 1.05 + 2 * se for se in m["std_errors"]]
    ok = all(e <= b for e, b in zip(m["estimates"], bound)) and secs < 180
    record(4, "L1 contraction", ok,
           f"worst E|u-v|_1 {max(m['estimates']):.4g} vs bound {min(bound):.4g}, {secs:.0f}s (< 180s)")


def test_criterion_05_comparison():
    reports, _, secs = run("c05_comparison")
    r = reports[0]
    m = r.metadata
    bound = [0.05 * m["initial_distance"] + 2 * se for se in m["std_errors"]]
    ok = all(e <= b for e, b in zip(m["estimates"], bound)) and secs < 180
    record(5, "comparison principle", ok,
           f"worst E|(v-u)+|_1 {max(m['estimates']):.3g} vs bound {min(bound):.3g}, {secs:.0f}s (< 180s)")


def test_criterion_06_initial_attainment():
    reports, _, secs = run("c06_initial_attainment")
    A = reports[0].metadata["A"]
    dec = all(b < a for a, b in zip(A, A[1:]))
    ok = dec and A[-1] <= A[0] / 2 and secs < 60
    record(6, "initial attainment", ok,
           f"A(h) = {', '.join(f'{a:.3g}' for a in A)}, strictly decreasing {dec}, {secs:.0f}s (< 60s)")


def test_criterion_07_entropy_inequality():
    reports, _, secs = run("c07_entropy_inequality")
    r = reports[0]
    ok = r.estimate >= 0.95 and secs < 300
    record(7, "entropy inequality", ok, f"fraction nonnegative {r.estimate:.3f} (>= 0.95), {secs:.0f}s (< 300s)")


def test_criterion_08_strong_entropy():
    reports, _, secs = run("c08_strong_entropy")
    R = [abs(r.estimate) for r in reports]
    dec = all(b < a for a, b in zip(R, R[1:]))
    last = reports[-1]
    bound = 2 * last.std_error + last.metadata["interpolation_budget"]
    ok = dec and R[-1] <= bound and secs < 600
    record(8, "strong entropy residual decay", ok,
           f"R = {', '.join(f'{x:.3g}' for x in R)}, decreasing {dec}, final {R[-1]:.3g} vs 2SE+budget "
           f"{bound:.3g}, {secs:.0f}s (< 600s)")


def test_criterion_09_young():
    reports, _, secs = run("c09_young")
    r = by_name(reports, "young_diagnostic")
    D = r.metadata["D"]
    dec = all(b < a for a, b in zip(D, D[1:]))
    ctrl_reports, _, csecs = run("c09_young_linear_control")
    c = by_name(ctrl_reports, "young_diagnostic_control")
    ctrl = max(c.metadata["D"])
    ok = dec and ctrl <= 1e-12 and secs + csecs < 300
    record(9, "Young measure concentration", ok,
           f"D = {', '.join(f'{d:.3g}' for d in D)}, decreasing {dec}, linear control max D {ctrl:.3g} "
           f"(<= 1e-12), {secs + csecs:.0f}s (< 300s)")


def test_criterion_10_moments():
    reports, _, _ = run("c09_young")
    r = by_name(reports, "moment_uniformity")
    ok = r.estimate < 2.0
    record(10, "moment uniformity", ok, f"worst rung-to-rung ratio {r.estimate:.4f} (< 2)")


ALL = ["c01_entropy_envelope", "c02_linear_additive", "c03_riemann_shock", "c04_contraction", "c05_comparison",
       "c06_initial_attainment", "c07_entropy_inequality", "c08_strong_entropy", "c09_young",
       "c09_young_linear_control"]


def test_criterion_11_determinism():
    differing = []
    for name in ALL:
        one = run(name, 1)[1]
        eight = run(name, 8)[1]
        if one.encode() != eight.encode():
            differing.append(name)
    record(11, "determinism across runs and thread counts", not differing,
           f"{len(ALL) - len(differing)}/{len(ALL)} report documents byte-identical between a --threads 1 run "
           f"and a separate --threads 8 run" + (f"; differing: {differing}" if differing else ""))
