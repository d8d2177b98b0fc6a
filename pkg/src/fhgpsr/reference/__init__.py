from .ed import (EDState, FockBasis, build_hamiltonian, ed_evolve, ed_observables,
                 ed_step, initial_ed_state)
from .hf import hf_evolve

__all__ = ["EDState", "FockBasis", "build_hamiltonian", "ed_evolve", "ed_observables",
           "ed_step", "hf_evolve", "initial_ed_state"]
