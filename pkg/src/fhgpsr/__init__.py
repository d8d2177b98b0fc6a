"""Real-time Fermi-Hubbard dynamics in the Gaussian phase-space representation."""
from .gauge import (Analytic, ClassicalSvd, LowRankSvd, RandomizedSvd, factorize_classical,
                    factorize_lowrank, factorize_randomized, verify_factorization)
from .lattice import (BellState, CustomDiagonal, HubbardParams, LatticeSpec, SpinWave,
                      build_lattice, spin_wave_occupation, validate_bell)
from .phase_space import (PhaseSpacePoint, analytic_noise, assemble_diffusion,
                          diagonal_point, diffusion_block, drift)
from .sde import (IntegratorConfig, TrajectoryEnsemble, practical_simulation_time,
                  run_ensemble, run_trajectory, sample_bell_initial)

__all__ = [
    "Analytic", "BellState", "ClassicalSvd", "CustomDiagonal", "HubbardParams",
    "IntegratorConfig", "LatticeSpec", "LowRankSvd", "PhaseSpacePoint", "RandomizedSvd",
    "SpinWave", "TrajectoryEnsemble", "analytic_noise", "assemble_diffusion",
    "build_lattice", "diagonal_point", "diffusion_block", "drift", "factorize_classical",
    "factorize_lowrank", "factorize_randomized", "practical_simulation_time",
    "run_ensemble", "run_trajectory", "sample_bell_initial", "spin_wave_occupation",
    "validate_bell", "verify_factorization",
]
