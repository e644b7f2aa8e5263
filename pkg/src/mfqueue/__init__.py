"""Mean-field single-server queues with age and residual-service clocks.

Particle simulation (self-consistent, frozen-delay and given-flow modes),
Monte-Carlo generator and Girsanov checks, Picard iteration on measure
flows, and tightness diagnostics.
"""
from .intensity import CellScheme, EmpiricalMeasure, IntensityKernel, MeasureFlow, make_kernel
from .simulator import FrozenDelay, GivenFlow, ParticleSystem, SelfConsistent, SimConfig, simulate
from .state import JumpType, State, Trajectory

__version__ = "0.1.0"

__all__ = ["CellScheme", "EmpiricalMeasure", "FrozenDelay", "GivenFlow", "IntensityKernel", "JumpType",
           "MeasureFlow", "ParticleSystem", "SelfConsistent", "SimConfig", "State", "Trajectory",
           "make_kernel", "simulate"]
