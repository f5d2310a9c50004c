"""Causal audio-visual target speaker extraction toolchain.

Two-stage streaming system: a visual voice-activity detector drives a
complex-ratio-mask extraction network, frame-synchronously, at 16 kHz /
100 fps audio and 25 fps video, plus the acoustic scene simulator, VAD
tooling and metrics needed to generate test material and verify
real-time behaviour.
"""

from .engine import StreamingEngine, bench, complexity_report, enhance_offline
from .frontend import AudioBuffer, ComplexSpectrogram, CrmMask, apply_crm, istft, stft
from .metrics import energy_ratio_db, si_snr
from .weights import WeightSet, init_random, load_weights, save_weights

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer", "ComplexSpectrogram", "CrmMask", "StreamingEngine",
    "WeightSet", "apply_crm", "bench", "complexity_report", "energy_ratio_db",
    "enhance_offline", "init_random", "istft", "load_weights", "save_weights",
    "si_snr", "stft", "__version__",
]
