"""Explicit Bernstein-type concentration bounds for additive functionals and
empirical processes of ergodic Markov chains, computed from drift-condition
inputs and verified empirically via split-chain regeneration simulation."""

from .chain import (DriftCertificate, DriftKind, LatticeMatrixModel,
                    LatticeMHModel, QuadratureFailure, RealLineMHModel,
                    SmallSet, StateSpace, step, verify_drift,
                    verify_minorization)
from .constants import (BlockNormSet, GammaUndefined, GeometricNormBundle,
                        Provenance, TauNorms, bound_d, bound_e, combine_orlicz,
                        drift_norm_set, geometric_drift_norms,
                        multiplicative_drift_bound, multiplicative_drift_check,
                        regular_drift_norms, sigma_upper, solve_r,
                        tau_psi1_norms)
from .bounds import (TailBoundCurve, bernstein_psi1_tail,
                     empirical_process_bound, empirical_process_curve,
                     general_markov_bound, general_markov_curve,
                     geometric_bound, geometric_curve, independent_onedep_bound,
                     independent_stopped_bound, klein_rio_tail,
                     klein_rio_tail_basic, n_deviation_psi1, theorem_a_bound,
                     theorem_a_curve, truncated_empirical_bound,
                     uw_expectation_bounds)
from .examples import (AllInfeasible, GaussianProposal, GaussianTarget,
                       InvalidA, LaplaceProposal, NegativeLambda,
                       drift_integrals, geometric_example,
                       geometric_pi_expectation, hilbert_example_bound,
                       logconcave_example, scan_xstar)
from .estimators import (EmpiricalTail, InsufficientData, VarianceEstimate,
                         Verdict, domination_verdict, empirical_tail,
                         estimate_pi_theta, estimate_psi_alpha,
                         estimate_sigma2)
from .splitting import (DependenceReport, InsufficientBlocks, NoRegeneration,
                        RegenerationLedger, ResidualKernelNegative,
                        SplitTrajectory, block_dependence_report, derive_rng,
                        extract_ledger, load_ledger, save_ledger,
                        simulate_split, simulate_split_batch,
                        simulate_sums_batch, split_states_batch)

__version__ = "0.1.0"
