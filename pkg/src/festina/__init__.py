"""Laser cooling of trapped Bose gases to condensation.

Franck-Condon factors and shell bases (trap), pulsed cooling rates (rates),
two-body collisions (collisions), kinetic Monte Carlo and mean-field dynamics
(dynamics), temperature flow (thermo), Bogoliubov quasiparticles
(bogoliubov), feasibility numbers (estimator) and the ``festina`` CLI.
"""
from .bogoliubov import quasi_fc, quasi_rates, solve_bdg, solve_condensate
from .collisions import build_kernel, equilibrium_bed, sample_initial
from .dynamics import SimConfig, run_ensemble, run_kmc, run_meanfield
from .estimator import table1
from .rates import CoolingCycle, OccupationState, PulseSpec, pulse_rates
from .thermo import RateSource, find_stationary_T, temperature_flow
from .trap import BeamSet, EmissionPattern, TrapSpec, build_shells, fc_table

__all__ = ["TrapSpec", "build_shells", "fc_table", "BeamSet", "EmissionPattern",
           "PulseSpec", "CoolingCycle", "OccupationState", "pulse_rates",
           "build_kernel", "equilibrium_bed", "sample_initial",
           "SimConfig", "run_kmc", "run_meanfield", "run_ensemble",
           "RateSource", "temperature_flow", "find_stationary_T",
           "solve_condensate", "solve_bdg", "quasi_fc", "quasi_rates", "table1"]
