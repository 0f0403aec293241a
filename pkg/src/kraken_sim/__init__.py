"""Functional and performance simulator for a heterogeneous visual-processing SoC.

Three engines are modelled: an event-driven spiking CNN engine (:mod:`.sne`),
a ternary CNN engine (:mod:`.cutie`, packed weights in :mod:`.codec`) and an
8-core SIMD cluster (:mod:`.pulp`). :mod:`.energy` holds the calibrated
throughput and energy curves.
"""

from .codec import TernaryTensor, pack_tensor, pack_trits, packed_size_bits, unpack_tensor, unpack_trits
from .cutie import CutieNetwork, TernaryConvLayer, count_ops, cutie_cycles, cutie_forward, cutie_memcheck, ternarize, ternary_conv
from .energy import EnginePowerPoint, SimReport, SneThroughputModel, efficiency, energy_per_inference, load_calibration, sne_throughput
from .pulp import ClusterCycleModel, ConvPatchSpec, Precision, cluster_inference_rate, patch_cycles, simd_dotp
from .sne import Event, LifConfig, LifLayer, SneNetwork, check_memory_budget, dense_reference, lif_decay, run_stream

__version__ = "0.1.0"
