"""Replica-symmetric distortion predictions for RLS-based sparse recovery
in multi-terminal compressive sensing, validated by a built-in finite-size
Monte Carlo simulator."""

from .recovery import Instance, SolveReport, objective, rls_solve, score
from .regularizers import (RegularizerSpec, channel_objective, prox_block,
                           reg_value, scalar_estimate)
from .replica_rs import (DecoupledSystem, RsDomainError, RsProblem, RsSolution,
                         RsState, decouple, mc_expectations, rs_expectations,
                         rs_solve, tune_regularizer)
from .signal_model import (JointSparsityPrior, SampleBlock, ValueDist,
                           distortion, gaussian, point_mass, prior_mixture,
                           sample_joint, second_moment, special_case)
from .spectra import (EmpiricalDos, EnsembleSpec, SpectralLaw, empirical_dos,
                      matrix_r_transform, r_transform, r_transform_derivative,
                      sample_matrix, spectral_law, stieltjes)

__version__ = "0.1.0"
