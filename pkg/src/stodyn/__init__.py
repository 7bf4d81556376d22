"""Deterministic geometry of stochastic dynamics.

Turns scalar and small-system SDEs driven by Brownian or stable jump
noise into objects you can tabulate and compare: most probable phase
portraits, mean phase portraits, density evolutions, exit statistics,
bifurcation scans, and slow-manifold reductions.
"""

__version__ = "0.1.0"

from .backend import active_backend
from .engine import (EnsembleStats, Orbit, PassageSummary, SystemSpec,
                     first_passage_stats, integrate_em, killed_density_mc,
                     simulate_ensemble)
from .errors import (ConvergenceError, CoverageError, ExprEvalError,
                     ExprSyntaxError, HorizonError, MeanUndefinedError,
                     StabilityError, StodynError, ValidationError)
from .expr import evaluate, parse, pretty
from .fokker_planck import (DensityEvolution, Generator1D, Grid1D,
                            build_adjoint_generator, delta_initial,
                            evolve_density)
from .noise import (NoisePath, NoiseSpec, draw_increments,
                    jump_measure_density, levy_drift_total, make_noise_path,
                    sample_stable, stable_hnorm, stable_tail_mass)
from .portraits import (BifurcationDiagram, Equilibrium, PhasePortrait,
                        bifurcation_scan, mean_equilibria, mean_orbit,
                        mean_orbit_mc, mean_portrait, median_orbit_mc,
                        most_probable_equilibria, most_probable_orbit,
                        most_probable_portrait)
from .scenario import Scenario, bundled_path, list_bundled, load_scenario
from .slow_manifold import (EtaPath, GapReport, ManifoldGraph, SlowFastSpec,
                            full_slowfast_integrate, invariance_error,
                            lyapunov_perron_solve, reduced_slow_integrate,
                            stationary_eta, truncated_h, validate_gap)

__all__ = [name for name in dir() if not name.startswith("_")]
