"""Simulation and analysis of DISQUO scheduling in crosspoint-buffered switches."""
from .disquo import (
    CentralDisquo,
    WeightConfig,
    activation_probability,
    basic_update,
    effective_queue,
    f,
    f_inverse,
    f_prime,
    g,
    weight_functions,
)
from .hamiltonian import HamiltonianWalk, PermutationStream, hamiltonian_next
from .switch import SwitchState, new_switch, step_slot
from .traffic import exact_burst_mean, make_rates, pareto_burst

__version__ = "0.1.0"
