"""From-scratch classifiers: CART, random forest, gradient boosting, fusion MLP."""
from ._backend import BACKEND
from .boost import BoostModel, BoostParams, fit_gbm
from .forest import ForestModel, ForestParams, fit_forest
from .mlp import MlpModel, MlpParams, fit_mlp
from .search import SearchResult, random_search
from .serialize import load_model, save_model
from .tree import Leaf, Split, Tree, TreeNode, TreeParams, fit_tree

__all__ = [
    "BACKEND", "BoostModel", "BoostParams", "fit_gbm", "ForestModel", "ForestParams",
    "fit_forest", "MlpModel", "MlpParams", "fit_mlp", "SearchResult", "random_search",
    "load_model", "save_model", "Leaf", "Split", "Tree", "TreeNode", "TreeParams", "fit_tree",
]
