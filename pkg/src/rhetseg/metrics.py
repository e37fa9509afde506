"""Evaluation: confusion matrix, macro P/R/F1, accuracy, multiclass MCC, reports.

Confusion-matrix orientation is rows = gold, columns = predicted. Macro
averages are unweighted means over all 7 classes by default; zero-support
classes contribute 0, which matters on small corpora. A flag excludes the
None class for comparison runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .roles import NUM_ROLES, ROLE_NAMES


@dataclass(frozen=True)
class MetricsReport:
    per_class_precision: tuple[float, ...]
    per_class_recall: tuple[float, ...]
    per_class_f1: tuple[float, ...]
    support: tuple[int, ...]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float
    mcc: float
    include_none: bool = True


def confusion(gold: list, pred: list) -> np.ndarray:
    """Accumulate counts[gold][pred] over per-document label sequences."""
    if len(gold) != len(pred):
        raise DataError(f"{len(gold)} gold documents vs {len(pred)} predicted")
    cm = np.zeros((NUM_ROLES, NUM_ROLES), dtype=np.int64)
    for idx, (g_seq, p_seq) in enumerate(zip(gold, pred)):
        if len(g_seq) != len(p_seq):
            raise DataError(
                f"document {idx}: gold has {len(g_seq)} sentences, prediction has {len(p_seq)}"
            )
        for g, p in zip(g_seq, p_seq):
            cm[int(g), int(p)] += 1
    return cm


def _class_indices(include_none: bool) -> np.ndarray:
    return np.arange(0 if include_none else 1, NUM_ROLES)


def macro_prf(
    cm: np.ndarray, include_none: bool = True
) -> tuple[float, float, float, np.ndarray]:
    """Per-class precision/recall/F1 with zero denominators mapped to 0, and
    their unweighted means. Returns (macro_p, macro_r, macro_f1, per_class)
    where per_class is a (7, 3) array of (p, r, f1) rows."""
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    col = cm.sum(axis=0)
    row = cm.sum(axis=1)
    per_class = np.zeros((NUM_ROLES, 3))
    for c in range(NUM_ROLES):
        p = tp[c] / col[c] if col[c] > 0 else 0.0
        r = tp[c] / row[c] if row[c] > 0 else 0.0
        f1 = 2.0 * p * r / (p + r) if (p + r) > 0 else 0.0
        per_class[c] = (p, r, f1)
    idx = _class_indices(include_none)
    macro = per_class[idx].mean(axis=0)
    return float(macro[0]), float(macro[1]), float(macro[2]), per_class


def accuracy(cm: np.ndarray) -> float:
    total = int(np.asarray(cm).sum())
    if total == 0:
        raise DataError("empty confusion matrix")
    return float(np.trace(cm) / total)


def mcc_multiclass(cm: np.ndarray) -> float:
    """R_K statistic: (c*s - sum p_k t_k) / sqrt((s^2 - sum p_k^2)(s^2 - sum t_k^2))
    with column sums p_k, row sums t_k, trace c, total s. Zero denominator -> 0."""
    cm = np.asarray(cm, dtype=np.float64)
    total = cm.sum()
    if total == 0:
        raise DataError("empty confusion matrix")
    c = np.trace(cm)
    p_k = cm.sum(axis=0)
    t_k = cm.sum(axis=1)
    numer = c * total - p_k @ t_k
    denom_sq = (total**2 - p_k @ p_k) * (total**2 - t_k @ t_k)
    if denom_sq <= 0:
        return 0.0
    return float(numer / np.sqrt(denom_sq))


def compute_report(cm: np.ndarray, include_none: bool = True) -> MetricsReport:
    macro_p, macro_r, macro_f1, per_class = macro_prf(cm, include_none=include_none)
    support = np.asarray(cm).sum(axis=1)
    return MetricsReport(
        per_class_precision=tuple(float(v) for v in per_class[:, 0]),
        per_class_recall=tuple(float(v) for v in per_class[:, 1]),
        per_class_f1=tuple(float(v) for v in per_class[:, 2]),
        support=tuple(int(v) for v in support),
        macro_precision=macro_p,
        macro_recall=macro_r,
        macro_f1=macro_f1,
        accuracy=accuracy(cm),
        mcc=mcc_multiclass(cm),
        include_none=include_none,
    )


def confusion_csv(cm: np.ndarray) -> str:
    """Standalone 7x7 grid with label names on both axes."""
    lines = ["gold\\pred," + ",".join(ROLE_NAMES)]
    for c in range(NUM_ROLES):
        lines.append(ROLE_NAMES[c] + "," + ",".join(str(int(v)) for v in cm[c]))
    return "\n".join(lines) + "\n"


_SUMMARY_FIELDS = ("macro_precision", "macro_recall", "macro_f1", "accuracy", "mcc")


def emit_report(report: MetricsReport, cm: np.ndarray, format: str = "csv") -> str:
    """Render the per-label table, the summary rows, and the confusion grid.

    Ordering is label-id order; values use 4 decimals; CSV keeps the fixed
    header "label,precision,recall,f1,support".
    """
    if format == "csv":
        lines = ["label,precision,recall,f1,support"]
        for c in range(NUM_ROLES):
            lines.append(
                f"{ROLE_NAMES[c]},{report.per_class_precision[c]:.4f},"
                f"{report.per_class_recall[c]:.4f},{report.per_class_f1[c]:.4f},{report.support[c]}"
            )
        for name in _SUMMARY_FIELDS:
            lines.append(f"{name},{getattr(report, name):.4f}")
        return "\n".join(lines) + "\n\n" + confusion_csv(cm)
    if format == "markdown":
        lines = [
            "| label | precision | recall | f1 | support |",
            "| --- | --- | --- | --- | --- |",
        ]
        for c in range(NUM_ROLES):
            lines.append(
                f"| {ROLE_NAMES[c]} | {report.per_class_precision[c]:.4f} "
                f"| {report.per_class_recall[c]:.4f} | {report.per_class_f1[c]:.4f} "
                f"| {report.support[c]} |"
            )
        lines.append("")
        for name in _SUMMARY_FIELDS:
            lines.append(f"- {name}: {getattr(report, name):.4f}")
        lines.append("")
        lines.append("| gold\\pred | " + " | ".join(ROLE_NAMES) + " |")
        lines.append("| --- |" + " --- |" * NUM_ROLES)
        for c in range(NUM_ROLES):
            lines.append(
                f"| {ROLE_NAMES[c]} | " + " | ".join(str(int(v)) for v in cm[c]) + " |"
            )
        return "\n".join(lines) + "\n"
    raise DataError(f"unknown report format {format!r}")
