"""Feature selection with E(FP) and FDR control via integrated path stability selection
over tree-ensemble importance scores."""

__version__ = "0.1.0"

from .control import SelectionOutcome, q_values, select_at_efp, select_at_fdr
from .dataio import Dataset, DataError, load_csv, standardize_columns
from .ipss import IpssConfig, IpssResult, run_ipss
from .simgen import SimConfig, generate_trial, selection_metrics
from .trees import TreeConfig, fit_boosting, fit_forest, mdi_importance

__all__ = [
    "Dataset", "DataError", "load_csv", "standardize_columns",
    "TreeConfig", "fit_forest", "fit_boosting", "mdi_importance",
    "IpssConfig", "IpssResult", "run_ipss",
    "SelectionOutcome", "select_at_efp", "select_at_fdr", "q_values",
    "SimConfig", "generate_trial", "selection_metrics",
]
