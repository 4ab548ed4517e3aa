import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from blockcert.bounds import (
    RIP_LIMIT, BoundReport, Invalid, ReportConfig, block_rip_mc, bound_binf, bound_l2,
    bound_report, compare_report, rip_bound, s_used,
)
from blockcert.errors import InvalidK, NonPositiveOmega

from conftest import gaussian


def test_binf_examples():
    assert bound_binf("bsbp", 0.45, 1.0) == pytest.approx(2 / 0.45)
    assert bound_binf("bsds", 0.3, 0.5) == pytest.approx(2 * 0.5 / 0.3)
    assert bound_binf("bslasso", 0.3, 0.5, kappa=0.5) == pytest.approx(1.5 * 0.5 / 0.3)
    assert bound_binf("bsbp", 0.45, 0.0) == 0.0


def test_l2_examples():
    assert bound_l2("bsbp", 0.45, 1.0, k=1) == pytest.approx(2 * math.sqrt(2) / 0.45)
    assert bound_l2("bsbp", 0.13, 1.0, k=2) == pytest.approx(4 / 0.13)
    assert bound_l2("bslasso", 0.2, 1.0, kappa=0.5, k=1) == pytest.approx(math.sqrt(4) * 1.5 / 0.2)
    assert bound_l2("bsds", 0.45, 0.0, k=3) == 0.0


def test_bound_errors():
    with pytest.raises(NonPositiveOmega):
        bound_binf("bsbp", 0.0, 1.0)
    with pytest.raises(NonPositiveOmega):
        bound_l2("bsds", -1.0, 1.0, k=1)
    with pytest.raises(ValueError):
        bound_binf("bslasso", 0.3, 1.0)
    with pytest.raises(ValueError):
        bound_binf("bsbp", 0.3, -1.0)
    with pytest.raises(InvalidK):
        bound_l2("bsbp", 0.3, 1.0, k=0)


def test_s_used():
    assert s_used("bsbp", 2) == 4.0
    assert s_used("bslasso", 1, 0.5) == 4.0
    # kappa near one pushes s past any finite s_*
    assert s_used("bslasso", 1, 1 - 1e-9) > 1e8


def test_rip_bound_examples():
    assert rip_bound(0.0, 1.0) == pytest.approx(4.0)
    assert rip_bound(0.2, 1.0) == pytest.approx(4 * math.sqrt(1.2) / (1 - (1 + math.sqrt(2)) * 0.2))
    assert rip_bound(0.9) is Invalid
    assert rip_bound(RIP_LIMIT) is Invalid
    assert not Invalid and str(Invalid).startswith("invalid")


@given(st.floats(0, RIP_LIMIT - 1e-6), st.floats(0, RIP_LIMIT - 1e-6))
def test_rip_bound_increasing(a, b):
    lo, hi = sorted((a, b))
    assert rip_bound(lo) <= rip_bound(hi)


def test_rip_orthogonal_blocks():
    Q = np.linalg.qr(np.random.default_rng(0).standard_normal((20, 12)))[0]
    assert block_rip_mc(Q, 2, 2, trials=50, seed=1) == pytest.approx(0.0, abs=1e-12)


def test_rip_determinism_and_nesting():
    A = gaussian(20, 2, 15, seed=3)
    assert block_rip_mc(A, 2, 1, 1, seed=5) == block_rip_mc(A, 2, 1, 1, seed=5)
    vals = [block_rip_mc(A, 2, 1, t, seed=5) for t in (1, 10, 100)]
    assert vals[0] <= vals[1] <= vals[2]


def test_rip_underestimates_exact():
    A = gaussian(10, 1, 6, seed=4)
    # exact delta_2 by enumerating all pairs of columns
    exact = 0.0
    for i in range(6):
        for j in range(i + 1, 6):
            sv = np.linalg.svd(A[:, [i, j]], compute_uv=False)
            exact = max(exact, sv[0] ** 2 - 1, 1 - sv[-1] ** 2)
    assert block_rip_mc(A, 1, 1, 40, seed=0) <= exact + 1e-12


def test_rip_rank_deficient_submatrix():
    A = gaussian(3, 2, 4, seed=5)
    assert block_rip_mc(A, 2, 1, 5) >= 1.0 - 1e-12


def test_rip_invalid_k():
    A = gaussian(10, 2, 4)
    with pytest.raises(InvalidK):
        block_rip_mc(A, 2, 3)
    with pytest.raises(InvalidK):
        block_rip_mc(A, 2, 0)


def test_report_rows():
    A = gaussian(16, 2, 10, seed=6)
    rows = compare_report(A, 2, [1, 3], {"bsbp": 1.0}, ReportConfig(variants=("bsbp",), rip_trials=20))
    assert len(rows) == 2
    ok, dashed = rows
    assert ok.certified and ok.omega_lb > 0
    assert ok.l2_bound == pytest.approx(2 * math.sqrt(2) / ok.omega_lb, rel=1e-12)
    assert not dashed.certified
    assert dashed.row()["omega_lb"] == "-" and dashed.row()["l2_bound"] == "-"
    assert dashed.row()["rip_bound"] == "invalid"


def test_report_dict_roundtrip():
    rep = BoundReport("bsbp", 1, 2.0, 0.5, 1.0, binf_bound=4.0, l2_bound=5.6, rip_bound=Invalid)
    d = rep.to_dict()
    assert d["rip_bound"].startswith("invalid") and d["omega_lb"] == 0.5


def test_lasso_row_uses_inflated_s():
    A = gaussian(16, 2, 10, seed=6)
    rep = bound_report(A, 2, 1, "bslasso", noise=0.1, kappa=0.9)
    assert rep.s_used == pytest.approx(20.0)
    assert not rep.certified and rep.binf_bound is None
