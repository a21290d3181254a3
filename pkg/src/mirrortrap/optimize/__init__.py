"""Genetic-algorithm optimisation of the rf rail edges."""
from .edges import EdgeBounds, EdgeGenome, interpolate_edge
from .fitness import FitnessReport, RailFitness
from .ga import GAConfig, GAResult, NoFeasibleCandidateError, evolve, run_ga, select_final

__all__ = ["EdgeBounds", "EdgeGenome", "interpolate_edge", "FitnessReport", "RailFitness",
           "GAConfig", "GAResult", "NoFeasibleCandidateError", "evolve", "run_ga",
           "select_final"]
