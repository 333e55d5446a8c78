from .core import (
    Network,
    NeuronKind,
    NeuronParams,
    RunState,
    StructuralError,
    Synapse,
    if_neuron,
    run_reference,
    step_network,
    stochastic_neuron,
    tg_neuron,
    write_raster_csv,
)
from .engine import Simulator
from .rng import RngStream, draw_u8, hash64, stream_id

__all__ = [
    "Network",
    "NeuronKind",
    "NeuronParams",
    "RngStream",
    "RunState",
    "Simulator",
    "StructuralError",
    "Synapse",
    "draw_u8",
    "hash64",
    "if_neuron",
    "run_reference",
    "step_network",
    "stochastic_neuron",
    "stream_id",
    "tg_neuron",
    "write_raster_csv",
]
