"""Deferred-execution spiking network modelling on an emulated analog backend."""
from .autodiff import Tape, Tensor, TimeTensor, backward, precision, set_precision
from .emulator import Emulator, HardwareProfile, MembraneSamples, NeuronParams, SpikeTrain
from .graph import (LI, LIF, DataHandle, Dropout, InputHandle, Instance, Synapse,
                    extract_topology, run, set_mock_mode)
from .profiling import Profiler

__version__ = "0.1.0"

__all__ = [
    "DataHandle", "Dropout", "Emulator", "HardwareProfile", "InputHandle",
    "Instance", "LI", "LIF", "MembraneSamples", "NeuronParams", "Profiler",
    "SpikeTrain", "Synapse", "Tape", "Tensor", "TimeTensor", "backward",
    "extract_topology", "precision", "run", "set_mock_mode", "set_precision",
]
