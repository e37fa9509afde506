"""Metrics against naive reimplementations and a binary MCC cross-check."""

import numpy as np
import pytest

from rhetseg.errors import DataError
from rhetseg.metrics import (
    accuracy,
    compute_report,
    confusion,
    confusion_csv,
    emit_report,
    macro_prf,
    mcc_multiclass,
)

K = 7


# --------------------------------------------------------------------------
# oracles: plain-python per-class loops and the textbook binary MCC formula
# --------------------------------------------------------------------------


def naive_macro(cm, include_none=True):
    ps, rs, fs = [], [], []
    classes = range(K) if include_none else range(1, K)
    for c in classes:
        tp = cm[c][c]
        fp = sum(cm[g][c] for g in range(K)) - tp
        fn = sum(cm[c][p] for p in range(K)) - tp
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        ps.append(p)
        rs.append(r)
        fs.append(f)
    n = len(ps)
    return sum(ps) / n, sum(rs) / n, sum(fs) / n


def binary_mcc(tp, tn, fp, fn):
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / np.sqrt(denom)


def random_cm(rng, sparse=False):
    cm = rng.integers(0, 40, size=(K, K))
    if sparse:
        cm[rng.integers(0, K, size=3)] = 0
        cm[:, rng.integers(0, K, size=3)] = 0
    if cm.sum() == 0:
        cm[0, 0] = 1
    return cm


def test_confusion_orientation_rows_gold():
    cm = confusion([[1, 1, 2]], [[1, 2, 2]])
    assert cm[1, 1] == 1 and cm[1, 2] == 1 and cm[2, 2] == 1
    assert cm.sum() == 3


def test_confusion_accumulates_documents():
    cm = confusion([[0, 0], [5]], [[0, 1], [5]])
    assert cm[0, 0] == 1 and cm[0, 1] == 1 and cm[5, 5] == 1


def test_confusion_length_mismatch_names_document():
    with pytest.raises(DataError, match="document 1: gold has 2 sentences, prediction has 3"):
        confusion([[0], [1, 2]], [[0], [1, 2, 3]])
    with pytest.raises(DataError):
        confusion([[0]], [[0], [1]])


def test_macro_matches_naive_on_random_matrices():
    rng = np.random.default_rng(0)
    for trial in range(1000):
        cm = random_cm(rng, sparse=trial % 3 == 0)
        for include_none in (True, False):
            got = macro_prf(cm, include_none=include_none)[:3]
            want = naive_macro(cm.tolist(), include_none=include_none)
            assert got == pytest.approx(want, abs=0), (trial, include_none)


def test_macro_hand_fixture():
    # 2 classes used: class 1 has tp=6 fn=2 fp=1; class 2 has tp=3 fn=1 fp=2
    cm = np.zeros((K, K), dtype=int)
    cm[1, 1] = 6
    cm[1, 2] = 2
    cm[2, 2] = 3
    cm[2, 1] = 1
    p, r, f1, per_class = macro_prf(cm)
    assert per_class[1, 0] == pytest.approx(6 / 7)
    assert per_class[1, 1] == pytest.approx(6 / 8)
    assert per_class[2, 0] == pytest.approx(3 / 5)
    assert per_class[2, 1] == pytest.approx(3 / 4)
    f1_1 = 2 * (6 / 7) * (6 / 8) / (6 / 7 + 6 / 8)
    f1_2 = 2 * (3 / 5) * (3 / 4) / (3 / 5 + 3 / 4)
    assert f1 == pytest.approx((f1_1 + f1_2) / 7)


def test_zero_support_classes_count_as_zero():
    # one perfectly predicted class out of 7: macro is exactly 1/7
    cm = np.zeros((K, K), dtype=int)
    cm[3, 3] = 11
    p, r, f1, _ = macro_prf(cm)
    assert (p, r, f1) == (pytest.approx(1 / 7), pytest.approx(1 / 7), pytest.approx(1 / 7))
    p2, _, _, _ = macro_prf(cm, include_none=False)
    assert p2 == pytest.approx(1 / 6)


def test_macro_f1_is_mean_of_f1_not_f1_of_means():
    cm = np.zeros((K, K), dtype=int)
    cm[0, 0] = 9
    cm[0, 1] = 1
    cm[1, 1] = 1
    cm[1, 0] = 9
    p, r, f1, per_class = macro_prf(cm)
    assert f1 == pytest.approx(per_class[:, 2].mean())
    harmonic = 2 * p * r / (p + r)
    assert f1 != pytest.approx(harmonic)


def test_accuracy_trace_over_total():
    rng = np.random.default_rng(1)
    for _ in range(100):
        cm = random_cm(rng)
        assert accuracy(cm) == pytest.approx(np.trace(cm) / cm.sum(), abs=0)
    with pytest.raises(DataError):
        accuracy(np.zeros((K, K)))


def test_mcc_reduces_to_binary_formula():
    # classes {0,1} only: R_K must equal the textbook 2x2 MCC
    rng = np.random.default_rng(2)
    for _ in range(1000):
        tp, tn, fp, fn = (int(v) for v in rng.integers(0, 50, size=4))
        if tp + tn + fp + fn == 0:
            continue
        cm = np.zeros((K, K), dtype=int)
        cm[1, 1] = tp   # positive class 1
        cm[0, 0] = tn
        cm[0, 1] = fp
        cm[1, 0] = fn
        np.testing.assert_allclose(mcc_multiclass(cm), binary_mcc(tp, tn, fp, fn),
                                   rtol=0, atol=1e-12)


def test_mcc_known_values():
    perfect = np.diag(np.arange(1, K + 1))
    assert mcc_multiclass(perfect) == pytest.approx(1.0)
    # uniform confusion carries zero information
    assert mcc_multiclass(np.ones((K, K))) == pytest.approx(0.0, abs=1e-12)
    # single row: denominator degenerates -> 0 by convention
    single = np.zeros((K, K))
    single[2, 2] = 5
    assert mcc_multiclass(single) == 0.0


def test_mcc_symmetric_under_transpose():
    rng = np.random.default_rng(3)
    for _ in range(50):
        cm = random_cm(rng)
        np.testing.assert_allclose(mcc_multiclass(cm), mcc_multiclass(cm.T), atol=1e-14)


def test_metrics_invariant_under_class_relabeling():
    # permuting class identities permutes per-class rows, macro stays put
    rng = np.random.default_rng(4)
    for _ in range(30):
        cm = random_cm(rng)
        perm = rng.permutation(K)
        pcm = cm[np.ix_(perm, perm)]
        a = macro_prf(cm)
        b = macro_prf(pcm)
        np.testing.assert_allclose(a[:3], b[:3], atol=1e-14)
        np.testing.assert_allclose(a[3][perm], b[3], atol=1e-14)
        np.testing.assert_allclose(mcc_multiclass(cm), mcc_multiclass(pcm), atol=1e-14)
        assert accuracy(cm) == accuracy(pcm)


def test_compute_report_fields_are_consistent():
    rng = np.random.default_rng(5)
    cm = random_cm(rng)
    rep = compute_report(cm)
    assert rep.support == tuple(int(v) for v in cm.sum(axis=1))
    assert rep.macro_f1 == pytest.approx(np.mean(rep.per_class_f1))
    assert rep.accuracy == accuracy(cm)
    assert rep.mcc == mcc_multiclass(cm)
    assert rep.include_none


def test_emit_report_csv_golden():
    cm = np.zeros((K, K), dtype=int)
    cm[1, 1] = 3
    cm[1, 2] = 1
    cm[2, 2] = 2
    out = emit_report(compute_report(cm), cm, format="csv")
    lines = out.splitlines()
    assert lines[0] == "label,precision,recall,f1,support"
    assert lines[1] == "None,0.0000,0.0000,0.0000,0"
    assert lines[2] == "Facts,1.0000,0.7500,0.8571,4"
    assert lines[3] == "Issue,0.6667,1.0000,0.8000,2"
    assert lines[8] == f"macro_precision,{(1 + 2 / 3) / 7:.4f}"
    assert lines[11] == "accuracy,0.8333"
    assert "gold\\pred,None,Facts,Issue" in out
    assert out.endswith("\n")


def test_emit_report_markdown_structure():
    cm = np.eye(K, dtype=int) * 2
    out = emit_report(compute_report(cm), cm, format="markdown")
    assert "| label | precision | recall | f1 | support |" in out
    assert "- macro_f1: 1.0000" in out
    assert "- mcc: 1.0000" in out
    assert out.count("|") > 40
    with pytest.raises(DataError):
        emit_report(compute_report(cm), cm, format="html")


def test_confusion_csv_grid():
    cm = np.arange(49).reshape(K, K)
    out = confusion_csv(cm)
    lines = out.splitlines()
    assert lines[0].startswith("gold\\pred,None,Facts,")
    assert lines[1] == "None,0,1,2,3,4,5,6"
    assert lines[7].startswith("Decision,42,")
