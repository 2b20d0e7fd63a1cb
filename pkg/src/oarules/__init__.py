"""Sparse Or-of-Ands rule sets learned by exact combinatorial optimization."""

from .dataset import Dataset, Schema, binarize, load_csv, stratified_folds
from .errors import DataError, GuardError, OARulesError, ParseError
from .patterns import OAModel, Pattern, coverage_matrix, objective, parse, serialize
from .selector import SelectionProblem, Solution, brute_force_solve, solve

__version__ = "0.1.0"

__all__ = [
    "DataError", "Dataset", "GuardError", "OAModel", "OARulesError", "ParseError",
    "Pattern", "Schema", "SelectionProblem", "Solution", "binarize", "brute_force_solve",
    "coverage_matrix", "load_csv", "objective", "parse", "serialize", "solve",
    "stratified_folds",
]
