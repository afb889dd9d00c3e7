"""Software sparse Ising machine: chromatic Gibbs sampling and training of sparse Boltzmann networks."""
from .graph import RoleAssignment, SparseGraph, assign_roles, color_dsatur, generate_graph
from .model import FLOAT64, S63, Model, PrecisionSpec, energy, quantize, to_binary_model
from .sampler import AnnealSchedule, ChainState, run_chain, sweep_chromatic, sweep_sequential
from .trainer import TrainConfig, init_model, train

__version__ = "0.1.0"

__all__ = [
    "RoleAssignment", "SparseGraph", "assign_roles", "color_dsatur", "generate_graph",
    "FLOAT64", "S63", "Model", "PrecisionSpec", "energy", "quantize", "to_binary_model",
    "AnnealSchedule", "ChainState", "run_chain", "sweep_chromatic", "sweep_sequential",
    "TrainConfig", "init_model", "train",
]
