"""End-to-end acceptance checks, driven through the command-line interface.

Each test records one PASS/FAIL line, printed in the terminal summary.
"""

import json
import math
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qwalk.cli import main
from qwalk.geometry import jump_distribution
from qwalk.stats import total_variation

A0_2D, A1_2D = "2,1;1,1", "3,1;2,1"
pytestmark = pytest.mark.slow

LAMBDA = 4 / 7 * math.log(2) + 3 / 7 * math.log(3)


def run(*argv):
    code = main([str(a) for a in argv])
    assert code == 0, f"command failed: {argv}"


def load(path):
    return json.loads(Path(path).read_text())


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def env1d(work):
    # covers n = 10^4 steps with jumps up to 2
    path = work / "seed0_1d.env"
    run("env", "--seed", 0, "--p0", "1/2", "--extent", 20001, "--out", path)
    return path


@pytest.fixture(scope="module")
def clt_run(work, env1d):
    prefix = work / "clt"
    run("sim", "--model", "1d", "--mode", "markov", "--env", env1d, "--n", 10_000, "--count", 100_000,
        "--seed", 0, "--out-prefix", prefix)
    return load(f"{prefix}.summary.json")


def test_1_analytic_exactness(work, record):
    run("analytic", "--model", "1d", "--A0", 2, "--A1", 3, "--p0", "1/2", "--out", work / "a1.json")
    run("analytic", "--model", "2d", "--A0", A0_2D, "--A1", A1_2D, "--p0", "1/2", "--out", work / "a2.json")
    a1, a2 = load(work / "a1.json"), load(work / "a2.json")
    got = (a1["p"], a1["D"], a1["sigma2"], a2["alpha_star"], a2["p"], a2["D0"], a2["D1"], a2["D"])
    want = ("4/7", "5/7", "24/49", [["5/8", "3/8"], ["5/12", "7/12"]], "10/19", ["1", "1/2"], ["3/2", "1"],
            ["47/38", "14/19"])
    ok = got == want
    record(1, ok, f"1D p={a1['p']} D={a1['D']} sigma2={a1['sigma2']}; 2D alpha*={a2['alpha_star']} "
                  f"p={a2['p']} D={a2['D']}")
    assert ok


def test_2_exact_distribution(work, env1d, record):
    run("dist", "--env", env1d, "--A0", 2, "--A1", 3, "--n", 1000, "--out", work / "dist1000.csv")
    info = load(work / "dist1000.json")
    mean_n, var_n = float(info["mean_over_n"]), float(info["variance_over_n"])
    d_mean = abs(mean_n - 5 / 7)
    d_var = abs(var_n - 24 / 49) / (24 / 49)
    ok = info["exact"] and d_mean <= 0.01 and d_var <= 0.05
    record(2, ok, f"mean/n={mean_n:.6f} (|delta|={d_mean:.4f} <= 0.01), var/n={var_n:.6f} "
                  f"(rel {d_var:.4f} <= 0.05)")
    assert ok


def test_3_monte_carlo_vs_exact(work, env1d, record):
    run("dist", "--env", env1d, "--n", 20, "--out", work / "dist20.csv")
    exact = {}
    for row in (work / "dist20.csv").read_text().splitlines()[1:]:
        k, w = row.split(",")
        exact[int(k)] = Fraction(w)
    prefix = work / "mc20"
    run("sim", "--model", "1d", "--mode", "markov", "--env", env1d, "--n", 20, "--count", 1_000_000,
        "--seed", 0, "--out-prefix", prefix)
    emp = {}
    for row in Path(f"{prefix}.hist.csv").read_text().splitlines()[1:]:
        k, c, _, _ = row.split(",")
        emp[int(k)] = int(c) / 1_000_000
    tv = total_variation(emp, exact)
    record(3, tv <= 0.01, f"TV(empirical, exact) = {tv:.5f} <= 0.01")
    assert tv <= 0.01


def test_4_clt_ks_distance(clt_run, record):
    ks = clt_run["ks_distance"]
    record(4, ks <= 0.012, f"KS((V_n - nD)/sqrt(n), N(0, 24/49)) = {ks:.4f} <= 0.012 "
                           f"[mean/n = {clt_run['mean'][0] / 1e4:.5f}]")
    assert ks <= 0.012


def test_5a_label0_mass(clt_run, record):
    mass0 = clt_run["label_mass"][0]
    ok = abs(mass0 - 4 / 7) <= 0.01
    record("5.a", ok, f"label-0 end mass = {mass0:.5f}, |delta from 4/7| = {abs(mass0 - 4 / 7):.5f} <= 0.01")
    assert ok


def test_5b_label_curves(clt_run, record):
    l1 = clt_run["label_curve_l1"]
    record("5.b", l1 <= 0.05, f"L1(hist0, (p/(1-p)) hist1) = {l1:.4f} <= 0.05")
    assert l1 <= 0.05


def test_6_lyapunov(work, record):
    env = work / "seed0_1d_long.env"
    run("env", "--seed", 0, "--p0", "1/2", "--extent", 200_001, "--out", env)
    prefix = work / "lyap"
    run("sim", "--model", "1d", "--mode", "det", "--env", env, "--n", 100_000, "--count", 1, "--seed", 0,
        "--out-prefix", prefix)
    s = load(f"{prefix}.summary.json")
    lam = s["lyapunov_estimate"]
    rel = abs(lam - LAMBDA) / LAMBDA
    record(6, rel <= 0.01 and s["stopped"] == 0, f"lambda_hat = {lam:.6f} vs {LAMBDA:.6f}, rel {rel:.5f} <= 0.01")
    assert rel <= 0.01 and s["stopped"] == 0


def test_7_effective_transitions(work, env1d, record):
    prefix = work / "alpha"
    run("sim", "--model", "1d", "--mode", "markov", "--env", env1d, "--n", 101, "--count", 100_000,
        "--seed", 0, "--alpha-step", 100, "--out-prefix", prefix)
    alpha = np.array(load(f"{prefix}.summary.json")["empirical_alpha"], dtype=float)
    target = np.array([[3 / 4, 1 / 4], [1 / 3, 2 / 3]])
    diff = float(np.max(np.abs(alpha - target)))
    record(7, diff <= 0.02, f"alpha(100) = {np.round(alpha, 4).tolist()}, max |entry - alpha*| = "
                            f"{diff:.4f} <= 0.02")
    assert diff <= 0.02


@pytest.fixture(scope="module")
def run_2d(work):
    env = work / "seed0_2d.env"
    # max row sum 4 per step
    run("env", "--seed", 0, "--p0", "1/2", "--dim", 2, "--extent", "8001,8001", "--out", env)
    prefix = work / "walk2d"
    run("sim", "--model", "2d", "--mode", "det", "--env", env, "--A0", A0_2D, "--A1", A1_2D, "--n", 2000,
        "--count", 10_000, "--seed", 0, "--out-prefix", prefix)
    return load(f"{prefix}.summary.json")


def test_8a_2d_drift(run_2d, record):
    D = (47 / 38, 14 / 19)
    drift = [m / 2000 for m in run_2d["mean"]]
    rel = [abs(d - t) / t for d, t in zip(drift, D)]
    ok = max(rel) <= 0.02
    record("8.a", ok, f"drift = ({drift[0]:.5f}, {drift[1]:.5f}), rel errors ({rel[0]:.4f}, {rel[1]:.4f}) "
                      f"<= 0.02")
    assert ok


def test_8b_2d_gaussian_cdf(run_2d, record):
    diff = run_2d["cdf_max_diff"]
    record("8.b", diff <= 0.05, f"grid max |F_emp - Phi_cov| = {diff:.4f} <= 0.05 "
                                f"[scaled mean = ({run_2d['scaled_mean'][0]:.3f}, {run_2d['scaled_mean'][1]:.3f}), "
                                f"about the sample mean: {run_2d['cdf_max_diff_recentred']:.4f}]")
    assert diff <= 0.05


unimodular = st.tuples(st.integers(1, 15), st.integers(1, 15), st.integers(1, 15)).filter(
    lambda t: (1 + t[1] * t[2]) % t[0] == 0).map(lambda t: ((t[0], t[1]), (t[2], (1 + t[1] * t[2]) // t[0])))
_masses = []


@settings(max_examples=100, deadline=None)
@given(unimodular)
def _mass_property(M):
    mass = sum(p for _, p in jump_distribution(M))
    _masses.append(mass)
    assert mass == 1


def test_9_geometry_oracle(record):
    law0 = dict(jump_distribution(((2, 1), (1, 1))))
    law1 = dict(jump_distribution(((3, 1), (2, 1))))
    exact = (law0[(0, 0)] == Fraction(1, 4) and law1[(0, 0)] == Fraction(1, 6)
             and sum(law0.values()) == 1 and sum(law1.values()) == 1)
    _masses.clear()
    _mass_property()
    ok = exact and len(_masses) >= 100 and all(m == 1 for m in _masses)
    record(9, ok, f"s0={law0[(0, 0)]}, s1={law1[(0, 0)]}, mass 1 on {len(_masses)} random unimodular matrices")
    assert ok


def _outputs(prefix):
    files = sorted(prefix.parent.glob(prefix.name + ".*"))
    return {f.name[len(prefix.name):]: f.read_bytes() for f in files if not f.name.endswith(".manifest.json")}


def test_10_determinism(work, env1d, record):
    env2 = work / "det2d.env"
    run("env", "--seed", 3, "--dim", 2, "--extent", "801,801", "--out", env2)
    cases = {
        "1d-markov": ["--model", "1d", "--mode", "markov", "--env", env1d, "--n", 1000, "--count", 200_000,
                      "--alpha-step", 500, "--retain-samples"],
        "1d-det": ["--model", "1d", "--mode", "det", "--env", env1d, "--n", 1000, "--count", 50_000],
        "2d-det": ["--model", "2d", "--mode", "det", "--env", env2, "--n", 200, "--count", 2000,
                   "--retain-samples"],
    }
    failures = []
    for name, args in cases.items():
        outs, params = [], []
        for tag, threads in (("a", 1), ("b", 1), ("c", 8)):
            # same prefix name in separate directories: the summary lists its sibling files
            prefix = work / f"det_{tag}" / name
            run("sim", *args, "--seed", 11, "--threads", threads, "--out-prefix", prefix)
            outs.append(_outputs(prefix))
            manifest = load(f"{prefix}.manifest.json")
            params.append({k: v for k, v in manifest["params"].items() if k != "out_prefix"})
            params[-1]["version"] = manifest["version"]
        if not (params[0] == params[1] == params[2]):
            failures.append(f"{name}: manifests differ")
        if not (outs[0] == outs[1] == outs[2]) or len(outs[0]) < 3:
            failures.append(f"{name}: output bytes differ")
    ok = not failures
    record(10, ok, "byte-identical outputs (repeat and --threads 1 vs 8) for " + ", ".join(cases)
           if ok else "; ".join(failures))
    assert ok
