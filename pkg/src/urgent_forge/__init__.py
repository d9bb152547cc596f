"""urgent-forge: reproducible speech degradation simulation and evaluation.

The toolkit covers the full pipeline for building simulated speech
enhancement datasets across heterogeneous sampling frequencies:

- ``audio_io``       WAV reading/writing and the AudioBuffer carrier type
- ``dsp``            resampling, FIR design, convolution, duration-based STFT
- ``bandwidth``      effective-bandwidth estimation and SF normalization
- ``corpus_filter``  activity- and score-based corpus filtering
- ``distortion``     noise / reverb / clipping / bandwidth-limitation generators
- ``manifest``       deterministic manifest generation and parallel simulation
- ``metrics``        SDR, ESTOI, MCD, LSD and the multi-resolution L1 loss
"""

__version__ = "0.1.0"

MANIFEST_FORMAT_VERSION = "1"

from .audio_io import AudioBuffer, load_wav, save_wav

__all__ = [
    "AudioBuffer",
    "load_wav",
    "save_wav",
    "MANIFEST_FORMAT_VERSION",
    "__version__",
]
