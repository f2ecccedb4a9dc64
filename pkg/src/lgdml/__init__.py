"""Language-guided deep metric learning over frozen features."""

from . import (cli, config, datastore, errors, evalkit, guidance, losses,
               pseudolabels, rng, simcore, synth, tape, trainer)
from .config import ScheduleSpec, TrainConfig
from .datastore import DatasetBundle, LanguageTable
from .guidance import GuidanceSpec
from .losses import ContrastiveParams, MarginParams, MultisimParams
from .pseudolabels import PosteriorMatrix, PseudolabelAssignment
from .synth import SynthSpec, synth_dataset
from .trainer import EmbedderHead, TrainHistory, gradcheck, train

__version__ = "0.1.0"
