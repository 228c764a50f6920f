"""Community detection on two-community block models with vertex-label side
information: samplers, the local message-passing estimator, the
density-evolution limit theory, parameter learning, and a Monte Carlo
validation harness."""

__version__ = "0.1.0"

from .bp import BpConfig, ChannelFunctions, MessageState, edge_transfer, run_bp, tree_recursion
from .density import (DensityParams, EvolutionTrace, FixedPoint, FixedPointReport,
                      SweepSpec, alpha1_closed_form, big_g, evolve, find_fixed_points,
                      predict_bp_curve, predicted_success, q_function, tilde_alpha1)
from .evaluation import (ExperimentSpec, SuccessEstimate, empirical_success,
                         example1_experiment, figure_sweep, label_only_baseline,
                         overlap_up_to_flip, sbm_end_to_end, tree_moment_check,
                         tree_sign_rule_success)
from .learn import (EstimatedModel, SpectralResult, degree_separation_check,
                    estimate_label_dists, kernel_split, spectral_partition)
from .model import (GwTree, LabeledGraph, LabelModel, SbmParams, ScalingParams,
                    dtv_labels, params_from_scaling, read_graph, sample_gw_tree,
                    sample_sbm, validate_balance, write_graph)

__all__ = [name for name in dir() if not name.startswith("_")]
