"""Array-geometry-agnostic multi-channel speech separation.

Virtual microphone estimation pads any 1..M channel input up to M channels,
spatial dictionary learning and a spectral convolution front-end are fused by
iterative attentional feature fusion, and a hierarchical dual-path Conformer
separates K speakers in the complex STFT domain.
"""

from .dsp import StftConfig, Waveform, istft, read_wav, stft, write_wav
from .geometry import ArrayGeometry, circular_array, from_label, linear_array, subset
from .model import ModelConfig, UniArray
from .scene import MixtureScene, SceneParams, random_scene, synth_scene
from .sdl import SpatialDictionary, spatial_embed
from .train import TrainConfig, load_checkpoint, save_checkpoint, si_sdr, train, upit_loss
from .vme import augment_channels, plan_virtual_mics

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry",
    "MixtureScene",
    "ModelConfig",
    "SceneParams",
    "SpatialDictionary",
    "StftConfig",
    "TrainConfig",
    "UniArray",
    "Waveform",
    "augment_channels",
    "circular_array",
    "from_label",
    "istft",
    "linear_array",
    "load_checkpoint",
    "plan_virtual_mics",
    "random_scene",
    "read_wav",
    "save_checkpoint",
    "si_sdr",
    "spatial_embed",
    "stft",
    "subset",
    "synth_scene",
    "train",
    "upit_loss",
    "write_wav",
]
