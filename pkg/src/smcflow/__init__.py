"""Compression molding toolkit for sheet molding compound.

Material models, characterization fits, fiber orientation algebra, a 1D
press-rheometer solver and mesoscale bundle kinematics.
"""

from .material import (
    EquationOfState,
    FrictionModel,
    MaterialSet,
    SuspensionParams,
    ThermalProps,
    ViscosityModel,
    eos_pressure,
    eos_pressure_from_density,
    equivalent_shear_rate,
    friction_stress,
    load_material_file,
    viscosity,
)
from .macro1d import (
    MacroState,
    PressController,
    Scenario,
    SimulationOutput,
    run_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "EquationOfState",
    "FrictionModel",
    "MacroState",
    "MaterialSet",
    "PressController",
    "Scenario",
    "SimulationOutput",
    "SuspensionParams",
    "ThermalProps",
    "ViscosityModel",
    "eos_pressure",
    "eos_pressure_from_density",
    "equivalent_shear_rate",
    "friction_stress",
    "load_material_file",
    "run_scenario",
    "viscosity",
    "__version__",
]
