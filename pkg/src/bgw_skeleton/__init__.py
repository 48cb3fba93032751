"""Skeletons of near-critical marked branching processes.

Exact generating-function computations, tree and limit-process simulation,
and a Monte Carlo harness that checks one against the other.
"""
__version__ = "0.1.0"

from ._backend import BACKEND
from .limit import (BirthDeathParams, EscapeLaw, escape_density, escape_mode, escape_tail,
                    extinction_probability, extinction_probability_from_c, leaf_count_pmf,
                    leaf_count_recursion, simulate_Y)
from .mutation import (BinomialMutationModel, SequentialModel, check_lemma_limits, derive_binomial,
                       sequential_q)
from .offspring import (ConditioningError, InvalidLawError, MarkingRule, NumericalError, OffspringLaw,
                        joint_pgf, skeleton_offspring_pgf, skeleton_offspring_pmf, solve_q_exact,
                        validate_family)
from .regime import DegenerateRegimeError, Regime, RegimeReport, classify_regime
from .trees import extract_skeleton, observe, simulate_multitype_tree, simulate_tree

__all__ = [
    "BACKEND", "BinomialMutationModel", "BirthDeathParams", "ConditioningError", "DegenerateRegimeError",
    "EscapeLaw", "InvalidLawError", "MarkingRule", "NumericalError", "OffspringLaw", "Regime",
    "RegimeReport", "SequentialModel", "check_lemma_limits", "classify_regime", "derive_binomial",
    "escape_density", "escape_mode", "escape_tail", "extinction_probability",
    "extinction_probability_from_c", "extract_skeleton", "joint_pgf", "leaf_count_pmf",
    "leaf_count_recursion", "observe", "sequential_q", "simulate_Y", "simulate_multitype_tree",
    "simulate_tree", "skeleton_offspring_pgf", "skeleton_offspring_pmf", "solve_q_exact",
    "validate_family",
]
