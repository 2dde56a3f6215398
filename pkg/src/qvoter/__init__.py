"""q-voter model simulation and analysis on the three-dimensional torus.

Subpackages mirror the pipeline: ``lattice`` (geometry and configurations),
``dynamics`` (exact continuous-time simulation), ``duality`` (graphical
representation and coalescing duals), ``equilibrium`` (fate estimation and
local statistics), ``reaction`` (exact reaction-term algebra), ``ode``
(limit ODE integration and comparison), ``statistics`` (box sums, boundary,
extinction ensembles), ``greens`` (hitting-time formulas), ``experiments``
(config-driven runner behind the ``qvoter`` CLI).
"""

from .dynamics import QVoterParams, RateTable, Trajectory, flip_rate, run, \
    run_windowed_voter, set_product_measure
from .lattice import Configuration, TorusLattice, build_torus, neighbors, \
    discordant_fraction, NN6_OFFSETS, E3_OFFSETS
from .reaction import ReactionTerm, UPolynomial, perturbation_rates, \
    phi_from_fates, phi_k3_explicit, delta_ab

__version__ = "0.1.0"

__all__ = [
    "QVoterParams", "RateTable", "Trajectory", "flip_rate", "run",
    "run_windowed_voter", "set_product_measure",
    "Configuration", "TorusLattice", "build_torus", "neighbors",
    "discordant_fraction", "NN6_OFFSETS", "E3_OFFSETS",
    "ReactionTerm", "UPolynomial", "perturbation_rates", "phi_from_fates",
    "phi_k3_explicit", "delta_ab",
    "__version__",
]
