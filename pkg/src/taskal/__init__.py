"""Task-aware active learning: coreset, uncertainty and hybrid samplers
plus a desk-scale simulation harness."""

from .errors import (BudgetError, ConfigError, FormatError, PoolError, TaskalError,
                     TrainingError)
from .metrics import accuracy, coverage_radius, mean_miou, miou, rmse
from .pca import PcaModel, pca_fit, pca_project
from .pool import (EmbeddingMatrix, LabelStore, PoolState, commit_selection,
                   load_embeddings, load_index_list, load_labels, save_embeddings,
                   save_index_list, save_labels)
from .samplers import (ScoreVector, StrategySpec, bvsb_scores, hybrid_select,
                       kcenter_greedy, pca_coreset_select, random_select, select,
                       uncertainty_select)

__version__ = "0.1.0"
