from .spectral import exact_ground_state, hvz_table
from .meanfield import finite_rank_minimize, hartree_fock_scf, random_slater_oracle, slater_energy
from .polaron import PekarModel, binding_scan, pekar_energy, pekar_minimize
from .diagnostics import hoffmann_ostenhof_check

__all__ = [
    "exact_ground_state",
    "hvz_table",
    "finite_rank_minimize",
    "hartree_fock_scf",
    "random_slater_oracle",
    "slater_energy",
    "PekarModel",
    "binding_scan",
    "pekar_energy",
    "pekar_minimize",
    "hoffmann_ostenhof_check",
]
