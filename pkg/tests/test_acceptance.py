"""Acceptance criteria, each run at its stated tolerance.

Every test records one PASS/FAIL line, printed in the terminal summary.
Defaults: w0' = 1, gamma = 0.01, times in units of 1/w0'.
"""
import json

import numpy as np
import pytest

from qregress.cli import main
from qregress.correlators import (
    first_order_in_gamma, reduced_four_point, reduced_three_point, reduced_two_point, spin_boson_coupling,
)
from qregress.markov import ClosedSet, closed_set_xy, closed_set_zi, spin_boson, verify_closed_set
from qregress.nonmarkov import TimeDependentClosedSet, flat_bath, nonmarkov_qrt_report, single_mode
from qregress.operators import I2, SM, SP, SX, SY, SZ, density, max_abs_diff
from qregress.oracle import ExactSystem, TruncatedBath
from qregress.qrt import qrt_four_point, qrt_n_point, qrt_otoc, qrt_three_point, qrt_two_point

from conftest import record_criterion

GAMMA = 0.01


def spec_at(gamma):
    return spin_boson_coupling(spin_boson(1.0, gamma))


def first_order(fn, gamma=GAMMA):
    return first_order_in_gamma(lambda g: fn(spec_at(g)), gamma)


def test_criterion_1_closed_sets():
    m = spin_boson(1.0, GAMMA)
    zi = ClosedSet((SZ, I2), [[-GAMMA, -GAMMA], [0, 0]])
    xy = ClosedSet((SX, SY), [[-GAMMA / 2, -1.0], [1.0, -GAMMA / 2]])
    r = max(verify_closed_set(m, zi), verify_closed_set(m, xy))
    assert record_criterion(1, r <= 1e-12, f"max closed-set residual {r:.2e} (tol 1e-12)")


def reference_two_point(t1, t2, g=GAMMA):
    d = t2 - t1
    decay = 1 - g / 2 * d
    xx = np.diag([decay * np.exp(-1j * d) + 2j * g * t1 * np.sin(d), decay * np.exp(1j * d)])
    xy = np.diag([1j * decay * np.exp(-1j * d) - 2j * g * t1 * np.cos(d), -1j * decay * np.exp(1j * d)])
    return xx, xy


def test_criterion_2_two_point_entries():
    worst = 0.0
    for t1, t2 in [(0.5, 1.5), (1.0, 2.0), (2.0, 3.7)]:
        xx, xy = reference_two_point(t1, t2)
        worst = max(worst, max_abs_diff(first_order(lambda s: reduced_two_point(s, SX, SX, t1, t2).value), xx))
        worst = max(worst, max_abs_diff(first_order(lambda s: reduced_two_point(s, SX, SY, t1, t2).value), xy))
    assert record_criterion(2, worst <= 1e-9, f"max entrywise gap {worst:.2e} (tol 1e-9)")


def test_criterion_3_qrt_identities():
    spec, xy = spec_at(GAMMA), closed_set_xy(spin_boson(1.0, GAMMA))
    checks = {
        "2-point": lambda h: qrt_two_point(spec, xy, SX, "sx", 1.0, 2.0, h),
        "3-point t1<t2<t3": lambda h: qrt_three_point(spec, xy, SX, SX, "sx", 0.5, 1.2, 2.0, h),
        "3-point t2<t1<t3": lambda h: qrt_three_point(spec, xy, SX, SX, "sx", 1.2, 0.5, 2.0, h),
        "4-point": lambda h: qrt_four_point(spec, xy, SX, SX, SX, "sx", 0.5, 1.2, 2.0, 2.6, h),
        "5-point": lambda h: qrt_n_point(spec, xy, [SX] * 5, "sx", [0.3, 0.9, 1.4, 2.0, 2.7], 4, h),
    }
    ok = True
    parts = []
    for name, fn in checks.items():
        r1, r2 = fn(1e-4).residual, fn(5e-5).residual
        ratio = r1 / r2
        ok &= r1 <= 1e-6 and 3.5 <= ratio <= 4.5
        parts.append(f"{name} {r1:.1e} ratio {ratio:.2f}")
    assert record_criterion(3, ok, "; ".join(parts))


def reference_three_point(t1, t2, t3, g=GAMMA):
    a = t1 + t3 - t2
    e = np.exp(1j * a)
    low = (1 - g / 2 * (-t1 + t2 + t3)) / e
    cross = g * (t2 - t1) * np.exp(1j * (-t1 - t2 + t3))
    xxx = np.array([[0, (1 - g / 2 * a) * e], [low + cross, 0]])
    xxy = np.array([[0, -1j * (1 - g / 2 * a) * e], [1j * low - 1j * cross, 0]])
    return xxx, xxy


def reference_four_point_first_entry(t1, t2, t3, t4, g=GAMMA):
    return ((1 - g / 2 * (t1 + t3 - t2 - t4)) * np.exp(1j * (t1 + t3 - t2 - t4))
            + g * t1 * np.exp(1j * (-t1 + t2 - t3 + t4))
            + g * (t3 - t2) * np.exp(1j * (t1 - t2 - t3 + t4)))


FOUR_POINT_REASON = (
    "the reference first diagonal entry of the four-point matrix carries the decay factor "
    "1 - (gamma/2)(t1 + t3 - t2 - t4), which grows with t4 and contradicts the four-point regression "
    "identity with M = [[-gamma/2, -w], [w, -gamma/2]]; the module satisfies that identity (criterion 3) "
    "and sits closer to the exact oracle, differing from the reference entry by gamma*t4 in magnitude"
)


@pytest.mark.xfail(strict=True, reason=FOUR_POINT_REASON)
def test_criterion_4_three_and_four_point_entries():
    three = 0.0
    for t in [(0.5, 1.2, 2.0), (0.3, 0.9, 1.7)]:
        xxx, xxy = reference_three_point(*t)
        three = max(three, max_abs_diff(first_order(lambda s: reduced_three_point(s, SX, SX, SX, *t).value), xxx))
        three = max(three, max_abs_diff(first_order(lambda s: reduced_three_point(s, SX, SX, SY, *t).value), xxy))
    four = 0.0
    for t in [(0.5, 1.2, 2.0, 2.6), (0.3, 0.9, 1.7, 3.0)]:
        got = first_order(lambda s: reduced_four_point(s, SX, SX, SX, SX, *t).value)[0, 0]
        four = max(four, abs(got - reference_four_point_first_entry(*t)))
    ok = three <= 1e-9 and four <= 1e-9
    record_criterion(4, ok, f"three-point gap {three:.2e}, four-point first-entry gap {four:.2e} (tol 1e-9)")
    assert ok


def otoc_lhs(o, gamma):
    spec, zi = spec_at(gamma), closed_set_zi(spin_boson(1.0, gamma))
    return qrt_otoc(spec, zi, zi, o, o, "sz", "sz", 0.5, 1.5).lhs


def test_criterion_5_otoc():
    gx = max_abs_diff(first_order_in_gamma(lambda g: otoc_lhs(SX, g), GAMMA), 2 * GAMMA * I2)
    gz = max_abs_diff(first_order_in_gamma(lambda g: otoc_lhs(SZ, g), GAMMA), -8 * GAMMA * np.diag([1, 0]))
    spec, zi = spec_at(GAMMA), closed_set_zi(spin_boson(1.0, GAMMA))
    res = max(qrt_otoc(spec, zi, zi, o, o, "sz", "sz", 0.5, 1.5).residual for o in (SX, SZ))
    spec5, zi5 = spec_at(0.05), closed_set_zi(spin_boson(1.0, 0.05))
    with_f = qrt_otoc(spec5, zi5, zi5, SZ, SZ, "sz", "sz", 0.5, 1.5).residual
    without = qrt_otoc(spec5, zi5, zi5, SZ, SZ, "sz", "sz", 0.5, 1.5, include_f=False).residual
    ok = gx <= 1e-6 and gz <= 1e-6 and res <= 1e-6 and without >= 100 * with_f
    assert record_criterion(
        5, ok, f"derivative gaps {gx:.1e}/{gz:.1e}, residual {res:.1e}, F dropped x{without / with_f:.1e}")


def test_criterion_6_violation_witnesses():
    spec, xy = spec_at(0.05), closed_set_xy(spin_boson(1.0, 0.05))
    times = [0.7, 1.3, 2.1, 3.0]
    worst = np.inf
    for n in (2, 3, 4):
        matched = qrt_n_point(spec, xy, [SX] * n, "sx", times[:n], n - 1).residual
        for k in range(n - 1):
            wrong = qrt_n_point(spec, xy, [SX] * n, "sx", times[:n], k, require_max_time=False).residual
            worst = min(worst, wrong / matched)
    assert record_criterion(6, worst >= 100, f"smallest violation ratio {worst:.2e} (need >= 100)")


def test_criterion_7_nonmarkov_recovery():
    bare = spin_boson(1.0, 0.0)
    xy = TimeDependentClosedSet((SX, SY), None, ("sx", "sy"))
    wide = nonmarkov_qrt_report(flat_bath(1.0, 40 * GAMMA, 64, GAMMA), bare, xy, SX, "sx", 3.0, 1.0)
    ratio = wide.extra["correction_norm"] / wide.extra["main_norm"]
    mode = single_mode(1.0, 0.1)
    with_c = nonmarkov_qrt_report(mode, bare, xy, SX, "sx", 3.0, 1.0)
    without = nonmarkov_qrt_report(mode, bare, xy, SX, "sx", 3.0, 1.0, include_corrections=False)
    ok = ratio <= 1e-3 and with_c.residual <= 1e-5 and without.residual >= 100 * with_c.residual
    assert record_criterion(
        7, ok, f"flat-bath correction/main {ratio:.1e}; single mode residual {with_c.residual:.1e} "
               f"vs {without.residual:.1e} without corrections")


def test_criterion_8_oracle_equivalence():
    gamma = 0.05
    model = spin_boson(1.0, gamma)
    decay_sys = ExactSystem(model, TruncatedBath.from_correlation(flat_bath(1.0, 3.0, 8, gamma), 1))
    decay_gap = 0.0
    for t in np.linspace(0.0, 0.5 / gamma, 21):
        exact = decay_sys.reduced_operator([SP, SM], [t, t])[0, 0].real
        decay_gap = max(decay_gap, abs(exact - np.exp(-gamma * t)) / np.exp(-gamma * t))

    spec = spin_boson_coupling(model)
    corr_sys = ExactSystem(model, TruncatedBath.from_correlation(flat_bath(1.0, 3.0, 5, gamma), 2))
    corr_gap = 0.0
    for t2 in np.linspace(0.5, 0.3 / gamma, 12):
        for t1 in (0.0, t2 / 2, t2):
            exact = corr_sys.reduced_operator([SX, SX], [t1, t2])
            pert = reduced_two_point(spec, SX, SX, t1, t2).value
            for name in ("excited", "ground", "mixed", "plus"):
                rho = density(name)
                e, p = np.trace(exact @ rho), np.trace(pert @ rho)
                corr_gap = max(corr_gap, abs(p - e) / abs(e))
    ok = decay_gap <= 0.10 and corr_gap <= 0.10
    assert record_criterion(8, ok, f"decay gap {decay_gap:.3f}, two-point gap {corr_gap:.3f} (tol 0.10)")


CLI_SUITE = {
    "evolve": """
[scenario]
ops = ["sigma_x"]
grid = { start = 0.0, stop = 5.0, count = 11 }
rho_s = "plus"
""",
    "corr": """
[scenario]
ops = ["sigma_x", "sigma_x"]
times = [1.0, "t"]
grid = { start = 1.0, stop = 4.0, count = 7 }
rho_s = "mixed"
""",
    "qrt2": """
[scenario]
ops = ["sigma_x", "sigma_x"]
times = [1.0, "t"]
grid = { start = 1.5, stop = 3.0, count = 4 }
closed_set = "xy"
mu = "sx"
[tolerances]
residual = 1e-6
""",
    "qrt3": """
[scenario]
ops = ["sigma_x", "sigma_x", "sigma_x"]
times = [1.2, 0.5, 2.0]
closed_set = "xy"
mu = "sx"
""",
    "qrt4": """
[scenario]
ops = ["sigma_x", "sigma_x", "sigma_x", "sigma_x"]
times = [0.5, 1.2, 2.0, 2.6]
closed_set = "xy"
mu = "sx"
""",
    "qrtn": """
[scenario]
ops = ["sigma_x", "sigma_y", "sigma_z", "sigma_x", "sigma_x"]
times = [0.3, 0.9, 1.4, 2.0, 2.7]
closed_set = "xy"
mu = "sx"
""",
    "otoc": """
[model]
gamma = 0.05
[scenario]
ops = ["sigma_z", "sigma_z"]
times = [0.5, 1.5]
closed_set = "zi"
mu = "sz"
nu = "sz"
""",
    "nonmarkov": """
[scenario]
ops = ["sigma_x"]
times = [3.0, 1.0]
closed_set = "xy"
mu = "sx"
[bath]
modes = [[1.0, 0.1]]
""",
    "oracle-compare": """
[model]
gamma = 0.05
[scenario]
ops = ["sigma_p", "sigma_m"]
times = ["t", "t"]
grid = { start = 0.0, stop = 10.0, count = 6 }
[bath]
n_modes = 8
bandwidth = 3.0
gamma_target = 0.05
fock_cutoff = 1
""",
    "sweep": """
[scenario]
ops = ["sigma_x", "sigma_x"]
times = [1.0, 2.0]
closed_set = "xy"
mu = "sx"
[sweep]
target = "qrt2"
parameter = "gamma"
start = 0.0
stop = 0.05
count = 4
""",
}


def run_cli_suite(root):
    root.mkdir(parents=True)
    codes = {}
    for sub, text in CLI_SUITE.items():
        cfg = root / f"{sub}.toml"
        cfg.write_text(text)
        extra = ["--jobs", "2"] if sub == "sweep" else []
        codes[sub] = main([sub, "--config", str(cfg), "--out", str(root / sub), *extra])
    files = {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}
    return codes, files


def test_criterion_9_determinism(tmp_path):
    codes_a, files_a = run_cli_suite(tmp_path / "a")
    codes_b, files_b = run_cli_suite(tmp_path / "b")
    same = files_a.keys() == files_b.keys() and all(files_a[k] == files_b[k] for k in files_a)
    ok = same and set(codes_a.values()) == {0} and codes_a == codes_b
    n_out = sum(1 for k in files_a if k.suffix != ".toml")
    assert record_criterion(9, ok, f"{n_out} output files byte-identical across two runs: {same}; exit codes {sorted(set(codes_a.values()))}")


def test_four_point_mismatch_is_gamma_t4_and_oracle_sides_with_module():
    t = (0.5, 1.2, 2.0, 2.6)
    got = first_order(lambda s: reduced_four_point(s, SX, SX, SX, SX, *t).value)[0, 0]
    assert abs(got - reference_four_point_first_entry(*t)) == pytest.approx(GAMMA * t[3], rel=1e-6)

    gamma = 0.05
    model = spin_boson(1.0, gamma)
    exact = ExactSystem(model, TruncatedBath.from_correlation(flat_bath(1.0, 3.0, 5, gamma), 2))
    oracle = exact.reduced_operator([SX] * 4, list(t))[0, 0]
    module = reduced_four_point(spin_boson_coupling(model), SX, SX, SX, SX, *t).value[0, 0]
    reference = reference_four_point_first_entry(*t, g=gamma)
    assert abs(module - oracle) < 0.5 * abs(reference - oracle)
