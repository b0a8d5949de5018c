"""Markdown and CSV renderings of an evaluation report.

Two tables are produced. The model table lists every feature-mask model
with its feature checkmarks and the mean accuracy and F-score of each tree
ensemble. The baseline table compares the fusion MLP against gradient
boosting on the same feature mask with precision, recall and AUC.
Both formats carry the same cell strings, so they always show identical
numbers.
"""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Sequence

from .. import schema
from .cv import MODEL_MASKS, EvalReport, ReportRow

CHECK = "x"
ENSEMBLES = (("forest", "Random Forest"), ("gbm", "Gradient Boosting"))
FORMATS = ("markdown", "csv")
SELECTION_NOTE = ("MLP scores use the epoch with the best test accuracy, "
                  "so they are optimistic.")


def _num(v: float | None) -> str:
    return "" if v is None or math.isnan(v) else f"{v:.2f}"


def _sorted(rows: Sequence[ReportRow]) -> list[ReportRow]:
    order = {m: k for k, m in enumerate(MODEL_MASKS)}
    return sorted(rows, key=lambda r: (order[r.model], r.classifier))


def table3(report: EvalReport) -> tuple[list[str], list[list[str]]]:
    header = ["No.", "Model", *schema.GROUPS]
    for _, label in ENSEMBLES:
        header += [f"{label} Accuracy (%)", f"{label} F-score (%)"]
    by_key = {(r.model, r.classifier): r for r in report.rows}
    present = {r.model for r in report.rows if r.classifier in dict(ENSEMBLES)}
    body = []
    for no, (model, mask) in enumerate(MODEL_MASKS.items(), start=1):
        if model not in present:
            continue
        line = [str(no), model, *(CHECK if g in mask else "" for g in schema.GROUPS)]
        for clf, _ in ENSEMBLES:
            row = by_key.get((model, clf))
            line += [_num(row.mean("accuracy")), _num(row.mean("f_score"))] if row else ["", ""]
        body.append(line)
    return header, body


def table4(report: EvalReport) -> tuple[list[str], list[list[str]]]:
    """Each baseline row next to gradient boosting on the same mask."""
    header = ["Model", "Accuracy (%)", "Precision (%)", "Recall (%)", "AUC", "Epoch selection"]
    base_models = [r.model for r in _sorted(report.rows) if r.classifier == "mlp_baseline"]
    body = []
    for model in base_models:
        for clf, label, sel in (("mlp_baseline", f"MLP-{model} (baseline)", "best test epoch"),
                                ("gbm", f"GB-{model}", "")):
            try:
                row = report.row(model, clf)
            except KeyError:
                continue
            a = row.mean("auc")
            body.append([label, _num(row.mean("accuracy")), _num(row.mean("precision")),
                         _num(row.mean("recall")), _num(None if math.isnan(a) else 100 * a), sel])
    return header, body


def to_markdown(header: list[str], body: list[list[str]], note: str | None = None) -> str:
    lines = ["| " + " | ".join(header) + " |",
             "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(row) + " |" for row in body]
    if note:
        lines += ["", note]
    return "\n".join(lines) + "\n"


def to_csv(header: list[str], body: list[list[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(body)
    return buf.getvalue()


def render_report(report: EvalReport, out_dir: str | Path,
                  formats: Sequence[str] = FORMATS) -> list[Path]:
    """Write report_table3 and report_table4 in each format; returns the paths."""
    bad = set(formats) - set(FORMATS)
    if bad:
        raise ValueError(f"unknown report formats {sorted(bad)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (header, body), note in (("report_table3", table3(report), None),
                                       ("report_table4", table4(report), SELECTION_NOTE)):
        for fmt in FORMATS:
            if fmt not in formats:
                continue
            if fmt == "markdown":
                path, text = out / f"{name}.md", to_markdown(header, body, note if body else None)
            else:
                path, text = out / f"{name}.csv", to_csv(header, body)
            path.write_text(text, encoding="utf-8")
            written.append(path)
    return written
