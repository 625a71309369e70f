"""Equilibrium pricing and ranking for sequential and page-based product presentation."""

from .distributions import ValuationDistribution, monopoly_price
from .equilibrium import (
    EquilibriumResult,
    StageEquilibrium,
    solve_exponential_closed_form,
    solve_given_ranking,
    surplus_shares,
)
from .model import Instance, Objective, Product, default_instance

__version__ = "0.1.0"
