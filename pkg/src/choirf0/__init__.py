"""Unison f0 dispersion analysis and multi-f0 evaluation for SATB choir recordings."""
from .dispersion import DispersionConfig, DispersionTrack, UnisonEstimate, analyze_unison
from .mfeval import EvalConfig, EvalReport, match_frame, score
from .sections import SATB, Section
from .signal_io import AudioClip, F0Track, MultiF0Sequence, load_f0_track, load_multif0, load_wav, write_wav
from .spectral import Spectrogram, StftConfig, cents_to_hz, hz_to_cents, stft
from .stats import summarize, welch_t_test
from .synth import UnisonSpec, synth_ensemble, synth_unison

__version__ = "0.1.0"

__all__ = [
    "AudioClip", "DispersionConfig", "DispersionTrack", "EvalConfig", "EvalReport", "F0Track",
    "MultiF0Sequence", "SATB", "Section", "Spectrogram", "StftConfig", "UnisonEstimate",
    "UnisonSpec", "analyze_unison", "cents_to_hz", "hz_to_cents", "load_f0_track",
    "load_multif0", "load_wav", "match_frame", "score", "stft", "summarize",
    "synth_ensemble", "synth_unison", "welch_t_test", "write_wav",
]
