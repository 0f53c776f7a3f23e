"""Fast all-to-all-Hamiltonian protocol compiler and simulator."""

from .spaces import (AncillaSpace, CollectiveOps, HybridState, build_collective_ops,
                     default_fock_cutoff, dicke_embedding_matrix,
                     dicke_to_full_embedding, embed_initial_state)
from .hamiltonian import (AncillaPolynomial, BudgetVerdict, HamiltonianSpec,
                          RotationLayer, Schedule, Segment, Term, hp_truncate,
                          hp_series_coefficient, schedule_from_json, schedule_to_json,
                          substitute_boson_with_spin, substitute_boson_with_spin_poly,
                          validate_norm_budget)
from .propagate import (evolve, heisenberg_commutator_norm, rotation_matrix,
                        schedule_unitary)
from .oracle import exact_hp_operator, full_state_evolve, hybrid_dicke_to_full
from .reporting import ProtocolReport
from .protocols_fastcz import (CompiledProtocol, FastCzParams, PotentialDesign,
                               build_cn_toffoli_schedule, build_fanout_schedule,
                               build_fast_cz_schedule, build_ghz_schedule,
                               build_w_schedule, compile_circuit_sequential,
                               cz_product_unitary, design_potential, fanout_unitary,
                               fanout_phase_schedule, rescale_for_powerlaw,
                               rescale_to_budget, run_fanout, run_fast_cz)
from .protocols_ms import (LayerSpec, MsAngles, build_fourier_layer_schedule,
                           build_single_cz_schedule, compile_circuit_parallel,
                           pauli_twirl_average, run_fourier_layer,
                           run_single_cz_exact, solve_ms_angles, twirl_randomize)
from .circuits import Circuit, Layer, circuit_from_json, circuit_to_json

__version__ = "0.1.0"
