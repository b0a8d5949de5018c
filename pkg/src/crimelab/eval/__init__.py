"""Cross-validated evaluation of the model matrix and report rendering."""
from .cv import (CLASSIFIER_ORDER, METRICS, MODEL_MASKS, CvInputs, CvSettings, EvalReport,
                 FoldResult, ModelSpec, Outcome, ReportRow, derive_seed, evaluate_fold,
                 fit_predict, model_matrix, run_cv, run_matrix)
from .metrics import auc, confusion, metrics
from .report import render_report, table3, table4

__all__ = [
    "CLASSIFIER_ORDER", "METRICS", "MODEL_MASKS", "CvInputs", "CvSettings", "EvalReport",
    "FoldResult", "ModelSpec", "Outcome", "ReportRow", "derive_seed", "evaluate_fold",
    "fit_predict", "model_matrix", "run_cv", "run_matrix", "auc", "confusion", "metrics",
    "render_report", "table3", "table4",
]
