"""Acceptance checks at their stated tolerances.

Each test prints a single ``ACCEPTANCE <n> PASS|FAIL`` line (visible without
``-s``) and then asserts.  Expensive shared work lives in module fixtures.
"""
import math
import time

import numpy as np
import pytest

from blockcert import (
    FixedPointConfig, InnerOptions, Invalid, OmegaQuery, bound_l2, omega_lower_bound,
    solve_fixed_point, verify_s_star,
)
from blockcert.block_core import block_norm, block_norms, block_support, threshold_support
from blockcert.bounds import bound_binf, bound_report
from blockcert.fixedpoint import eval_g, eval_h
from blockcert.harness import EnsembleSpec, generate, preset
from blockcert.inner_solver import InnerProblem, inner_objective, solve_inner
from blockcert.oracles import (
    MAX_KERNEL, OracleConfig, oracle_f_s, oracle_omega, oracle_rho, oracle_s_star,
)
from blockcert.recovery import RecoveryOptions, solve_bsbp, solve_bsds, solve_noisefree

from conftest import gaussian

N_BLOCK, P_BLOCKS = 4, 60
SEEDS = range(10)
RANGES = {72: ((3.37, 4.55), 1), 96: ((4.14, 5.60), 2)}


def verdict(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {number} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def table_ensemble():
    """``{(m, seed): (A, certifier result, seconds)}`` for m in (72, 96)."""
    out = {}
    for m in RANGES:
        for seed in SEEDS:
            A = generate(EnsembleSpec("gaussian", m, N_BLOCK, P_BLOCKS, seed))
            t0 = time.perf_counter()
            res = verify_s_star(A, N_BLOCK)
            out[m, seed] = (A, res, time.perf_counter() - t0)
    return out


def test_criterion_1_certified_kernel_ratio(table_ensemble, capsys):
    parts, ok = [], True
    for m, ((lo, hi), k_expected) in RANGES.items():
        hits = sum(lo <= table_ensemble[m, s][1].s_star <= hi and table_ensemble[m, s][1].k_star == k_expected
                   for s in SEEDS)
        vals = [table_ensemble[m, s][1].s_star for s in SEEDS]
        secs = sum(table_ensemble[m, s][2] for s in SEEDS)
        ok &= hits >= 8 and secs <= 300
        parts.append(f"m={m}: {hits}/10 in [{lo}, {hi}] with k_*={k_expected}, "
                     f"s_* {min(vals):.3f}..{max(vals):.3f}, {secs:.0f}s")
    verdict(capsys, 1, ok, "; ".join(parts))


@pytest.fixture(scope="module")
def headline_reports(table_ensemble):
    reports = []
    for seed in range(3):
        A, res, _ = table_ensemble[72, seed]
        reports.append(bound_report(A, N_BLOCK, 1, "bsbp", 1.0, s_star=res.s_star,
                                    rip_trials=1000, seed=seed))
    return reports


def test_criterion_2_omega_versus_rip(headline_reports, capsys):
    ok = True
    parts = []
    for seed, rep in enumerate(headline_reports):
        good = (rep.certified and 0.36 <= rep.omega_lb <= 0.54
                and 0.77 <= rep.rip_delta_hat <= 1.04
                and rep.rip_delta_hat > math.sqrt(2) - 1 and rep.rip_bound is Invalid
                and math.isfinite(rep.l2_bound))
        ok &= good
        parts.append(f"seed {seed}: omega2={rep.omega_lb:.4f} delta={rep.rip_delta_hat:.3f} "
                     f"rip={rep.rip_bound} l2={rep.l2_bound:.3f}")
    verdict(capsys, 2, ok, "; ".join(parts))


def test_criterion_3_l2_formula(headline_reports, capsys):
    worst = 0.0
    for rep in headline_reports:
        for k in (1, 2, 3, 4):
            for eps in (0.1, 1.0, 3.0):
                want = 2 * math.sqrt(2 * k) * eps / rep.omega_lb
                worst = max(worst, abs(bound_l2("bsbp", rep.omega_lb, eps, k=k) - want))
        worst = max(worst, abs(rep.l2_bound - 2 * math.sqrt(2) * rep.noise / rep.omega_lb))
    verdict(capsys, 3, worst <= 1e-12, f"max |l2 - 2 sqrt(2k) eps / omega| = {worst:.1e}")


# (m, n, p) up to m = 72 and np = 160
AGREEMENT_SIZES = [(10, 2, 6), (12, 2, 8), (16, 2, 10), (20, 4, 6), (24, 2, 16),
                   (30, 3, 14), (36, 3, 14), (48, 2, 40), (60, 4, 25), (72, 4, 40)]


def test_criterion_4_strategies(capsys):
    worst, parts = 0.0, []
    for idx, (m, n, p) in enumerate(AGREEMENT_SIZES):
        A = gaussian(m, n, p, seed=400 + idx)
        s_star = verify_s_star(A, n, InnerOptions(tol=1e-6)).s_star
        s = min(2.0, 1 + 0.5 * (s_star - 1))
        etas = [solve_fixed_point(OmegaQuery(A, n, s, "omega2", s_star=s_star),
                                  FixedPointConfig(tol=1e-5, strategy=st)).eta_star
                for st in ("naive", "bisection", "hybrid")]
        worst = max(worst, max(etas) - min(etas))
    parts.append(f"max pairwise eta* spread {worst:.2e} over {len(AGREEMENT_SIZES)} instances")

    cfg = preset("runtime_compare")
    A = generate(cfg.ensemble)
    n = cfg.ensemble.n
    s_star = verify_s_star(A, n, InnerOptions(tol=cfg.tol)).s_star
    secs = {}
    for st in cfg.strategies:
        lo, hi = cfg.wide_bracket if st == "bisection" else (cfg.eta_lo, cfg.eta_hi)
        t0 = time.perf_counter()
        solve_fixed_point(OmegaQuery(A, n, cfg.s_values[0], "omega2", s_star=s_star),
                          FixedPointConfig(tol=cfg.tol, eta_lo=lo, eta_hi=hi, strategy=st))
        secs[st] = time.perf_counter() - t0
    ranked = secs["hybrid"] <= secs["naive"] <= secs["bisection"]
    parts.append("seconds " + ", ".join(f"{k} {v:.1f}" for k, v in secs.items()))
    verdict(capsys, 4, worst <= 2e-5 and ranked, "; ".join(parts))


def tiny_instances(count=20):
    """Deterministic tiny matrices with np <= 12 and kernel dimension <= MAX_KERNEL."""
    out, seed = [], 0
    while len(out) < count:
        rng = np.random.default_rng([500, seed])
        seed += 1
        n = int(rng.choice([1, 2, 3]))
        p = int(rng.integers(3, 12 // n + 1))
        N = n * p
        m = int(rng.integers(max(2, N - MAX_KERNEL), N))
        A = rng.standard_normal((m, N))
        out.append((A / np.linalg.norm(A, axis=0), n))
    return out


def test_criterion_5_oracle_sandwich(capsys):
    cfg = OracleConfig(direction_samples=32)
    fails = []
    checked = 0
    for idx, (A, n) in enumerate(tiny_instances()):
        ver = verify_s_star(A, n, InnerOptions(tol=1e-7))
        s_true = oracle_s_star(A, n, cfg)
        if not ver.s_star <= s_true + 1e-6:
            fails.append(f"#{idx} s_* {ver.s_star} > oracle {s_true}")
        if ver.s_star <= 1.05:
            continue
        s = min(1.5, 1 + 0.5 * (ver.s_star - 1))
        lb, _ = omega_lower_bound(OmegaQuery(A, n, s, "omega2", s_star=ver.s_star))
        o2 = oracle_omega(A, n, s, "omega2", cfg)
        ob = oracle_omega(A, n, s, "omegabinf", cfg)
        rho = oracle_rho(A, n, s * s, cfg)
        checked += 1
        if not lb <= o2 + 1e-4:
            fails.append(f"#{idx} engine omega {lb} > oracle {o2}")
        if not (math.sqrt(s * ob) >= o2 - 1e-6 and o2 >= rho - 1e-6):
            fails.append(f"#{idx} chain {math.sqrt(s * ob)} >= {o2} >= {rho} broken")
        # monotone in eta and f_s(eta) >= s eta near zero, for f_s and both relaxations
        grid = [0.05, 0.2, 0.5, 1.0]
        f = [oracle_f_s(A, n, s, e, "2", cfg) for e in grid]
        g = [eval_g(A, n, s, e)[0] for e in grid]
        h = [eval_h(A, n, s, e)[0] for e in grid]
        for name, vals in (("f", f), ("g", g), ("h", h)):
            if not all(b > a for a, b in zip(vals, vals[1:])):
                fails.append(f"#{idx} {name}_s not increasing: {vals}")
        # the conic solver behind the oracle is accurate to ~1e-9 absolute
        tiny = 1e-6
        for name, val, slack in (("f", oracle_f_s(A, n, s, tiny, "2", cfg), 1e-8),
                                 ("g", eval_g(A, n, s, tiny)[0], 1e-12),
                                 ("h", eval_h(A, n, s, tiny)[0], 1e-12)):
            if not val >= s * tiny - slack:
                fails.append(f"#{idx} {name}_s({tiny}) = {val} < s eta")
    verdict(capsys, 5, not fails,
            f"20 instances, {checked} with s_* > 1.05; " + ("; ".join(fails) if fails else "all checks hold"))


@pytest.fixture(scope="module")
def certified_small():
    """Three 20 x 32 matrices (n=2, p=16) with k_* = 1 and both omegas at s = 2."""
    mats = []
    for seed in range(3):
        A = gaussian(20, 2, 16, seed=seed)
        s_star = verify_s_star(A, 2).s_star
        assert s_star > 2
        w2, _ = omega_lower_bound(OmegaQuery(A, 2, 2.0, "omega2", s_star=s_star))
        wb, _ = omega_lower_bound(OmegaQuery(A, 2, 2.0, "omegabinf", s_star=s_star))
        mats.append((A, math.floor(s_star / 2), w2, wb))
    return mats


def _signal(rng, n, p, k):
    x = np.zeros(n * p)
    for i in rng.choice(p, size=k, replace=False):
        u = rng.standard_normal(n)
        x[i * n:(i + 1) * n] = rng.uniform(1.0, 30.0) * u / np.linalg.norm(u)
    return x


def _support_ok(xhat, x, n, bound):
    beta = block_norms(x, n)[block_norms(x, n) > 0].min()
    if bound >= beta / 2:
        return None
    return threshold_support(xhat, n, beta) == block_support(x, n)


def test_criterion_6_bound_validity(certified_small, capsys):
    n, p = 2, 16
    fails, supp_checked = [], 0
    opts = RecoveryOptions(strict=False)
    for variant in ("bsbp", "bsds"):
        for t in range(100):
            rng = np.random.default_rng([600, t, variant == "bsds"])
            A, k_star, w2, wb = certified_small[t % 3]
            k = int(rng.integers(1, k_star + 1))
            x = _signal(rng, n, p, k)
            w = rng.standard_normal(A.shape[0])
            if variant == "bsbp":
                eps = 1.0
                w *= rng.uniform(0, eps) / np.linalg.norm(w)
                res = solve_bsbp(A, A @ x + w, n, eps, opts)
                b_inf, b_2 = bound_binf("bsbp", w2, eps), bound_l2("bsbp", w2, eps, k=k)
            else:
                mu = 1.0
                w *= rng.uniform(0, mu) / block_norm(A.T @ w, n, "binf")
                res = solve_bsds(A, A @ x + w, n, mu, opts)
                b_inf, b_2 = bound_binf("bsds", wb, mu), bound_l2("bsds", wb, mu, k=k)
            err = res.xhat - x
            e_inf, e_2 = block_norm(err, n, "binf"), np.linalg.norm(err)
            if not (res.converged and e_inf <= b_inf + 1e-6 and e_2 <= b_2 + 1e-6):
                fails.append(f"{variant}#{t} err {e_inf:.3g}/{e_2:.3g} vs {b_inf:.3g}/{b_2:.3g}")
            sup = _support_ok(res.xhat, x, n, b_inf)
            if sup is not None:
                supp_checked += 1
                if not sup:
                    fails.append(f"{variant}#{t} support not recovered")
    verdict(capsys, 6, not fails,
            f"200 instances, {supp_checked} support checks; " + ("; ".join(fails[:5]) or "all bounds hold"))


HAND_BUILT = [
    (np.array([[1.0, 2.0]]), 1),
    (np.array([[1.0, 3.0]]), 1),
    (np.array([[1.0, 5.0]]), 1),
    (np.hstack([np.eye(2), 2 * np.eye(2)]), 2),
    (np.hstack([np.eye(2), 4 * np.eye(2)]), 2),
]


def test_criterion_7_exact_recovery(certified_small, table_ensemble, capsys):
    worst, count = 0.0, 0
    pools = [(A, 2, k_star) for A, k_star, _, _ in certified_small]
    pools += [(table_ensemble[72, 0][0], N_BLOCK, table_ensemble[72, 0][1].k_star),
              (table_ensemble[96, 0][0], N_BLOCK, table_ensemble[96, 0][1].k_star)]
    for t in range(50):
        rng = np.random.default_rng([700, t])
        A, n, k_star = pools[t % len(pools)]
        k = int(rng.integers(1, k_star + 1))
        x = _signal(rng, n, A.shape[1] // n, k)
        res = solve_noisefree(A, A @ x, n)
        worst = max(worst, block_norm(res.xhat - x, n, "binf"))
        count += 1
    failures = 0
    for A, n in HAND_BUILT:
        x = np.zeros(A.shape[1])
        x[0] = 1.0
        res = solve_noisefree(A, A @ x, n)
        failures += block_norm(res.xhat - x, n, "binf") > 1e-3
    ok = worst <= 1e-6 and failures == len(HAND_BUILT)
    verdict(capsys, 7, ok, f"{count} certified instances, worst binf error {worst:.1e}; "
                           f"{failures}/{len(HAND_BUILT)} hand-built instances fail as expected")


def test_criterion_8_certificates(capsys):
    fails = []
    for t in range(20):
        rng = np.random.default_rng([800, t])
        n = int(rng.choice([1, 2, 3]))
        p = int(rng.integers(4, 10))
        m = int(rng.integers(n * p // 2, n * p))
        penalty = ("none", "spectral", "blocksum")[t % 3]
        A = gaussian(m, n, p, seed=800 + t)
        Q = A.T @ A if penalty == "blocksum" else A
        weight = 1.0 if penalty == "none" else float(rng.uniform(0.5, 3.0))
        prob = InnerProblem(Q, n, int(rng.integers(p)), weight=weight, penalty=penalty)
        sol = solve_inner(prob, InnerOptions(record_history=True, check_every=5))
        objs = [h[1] for h in sol.history]
        best = [h[2] for h in sol.history]
        if any(b2 > b1 for b1, b2 in zip(best, best[1:])):
            fails.append(f"#{t} best-so-far increased")
        if min(objs) < sol.lower_bound - 1e-9:
            fails.append(f"#{t} iterate below the certified lower bound")
        if sol.objective != pytest.approx(inner_objective(prob, sol.P)[0], abs=1e-12):
            fails.append(f"#{t} returned objective does not match its multiplier")
        P1, P2 = rng.standard_normal((2, Q.shape[0], n))
        f1, f2 = inner_objective(prob, P1)[0], inner_objective(prob, P2)[0]
        for lam in (0.1, 0.25, 0.5, 0.75, 0.9):
            mid = inner_objective(prob, lam * P1 + (1 - lam) * P2)[0]
            if mid > lam * f1 + (1 - lam) * f2 + 1e-10:
                fails.append(f"#{t} midpoint convexity violated at {lam}")
    verdict(capsys, 8, not fails, "20 instances; " + ("; ".join(fails) if fails else "all certificates valid"))
