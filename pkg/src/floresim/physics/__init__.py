from .engine import (CONTROL_DT, CompiledModel, ContactPoint, PhysicsConfig, SimState,
                     SimulationDiverged, compile_model, linear_momentum, mass_matrix,
                     mechanical_energy, pendulum_model, step_dynamics)
from .terrain import TERRAIN_KINDS, Terrain, TerrainError, export_csv, height_at, make_terrain

__all__ = [
    "CONTROL_DT", "CompiledModel", "ContactPoint", "PhysicsConfig", "SimState",
    "SimulationDiverged", "compile_model", "linear_momentum", "mass_matrix", "mechanical_energy",
    "pendulum_model", "step_dynamics", "TERRAIN_KINDS", "Terrain", "TerrainError", "export_csv",
    "height_at", "make_terrain",
]
