"""Drug-microbe association prediction with divergent views and attention fusion."""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .config import TrainConfig, load_config
from .data import Dataset, SplitPlan, cold_start_split, load_dataset, warm_split
from .evaluation import MetricsReport, aupr, auroc, evaluate, rank_candidates, run_cold_start
from .model import DcfaModel
from .trainer import fit_model, load_checkpoint, save_checkpoint

__all__ = [
    "BACKEND", "Dataset", "DcfaModel", "MetricsReport", "SplitPlan", "TrainConfig",
    "aupr", "auroc", "cold_start_split", "evaluate", "fit_model", "load_checkpoint",
    "load_config", "load_dataset", "rank_candidates", "run_cold_start", "save_checkpoint",
    "warm_split",
]
