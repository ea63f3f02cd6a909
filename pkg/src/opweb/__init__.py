"""Oriented-percolation exploration clusters and Brownian-web diagnostics."""

__version__ = "0.1.0"

from .errors import (BoxTooNarrowError, InsufficientDataError,
                     InvalidArgumentError, InvalidSiteError, NoPathError,
                     OpwebError, PreconditionNotMetError,
                     ScanLimitExceededError)
from .lattice import (Config, EdgeRef, LatticeSite, Orientation, edge_status,
                      edge_status_array, independence_probe)
from .explore import (ExplorationCluster, GammaApprox, Trajectory,
                      boundary_ordering_check, explore_to_level, gamma_approx)
from .regen import (DriftDiffusivity, RegenAccumulator, RegenRecord,
                    clt_check, detect_break_points, error_gap_frequencies,
                    estimate_alpha_sigma)
from .couple import (CoalescenceTimes, CoupledRun, check_coalescence_structure,
                     coalescence_survival_curve, run_coupled_many,
                     run_coupled_pair, run_right_family)
from .metrics import (CompactifiedPoint, RescaledPath, b1_battery,
                      b2_fkg_check, eta_count, path_distance, rho,
                      set_distance, shear_rescale)
from .oracle import (BoxConfig, cbm_baseline, check_suite,
                     coalescing_walk_survival, dp_right_boundary,
                     dp_rightmost_path)
