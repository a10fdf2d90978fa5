"""
The trainable bundle: codec, caption encoder, denoiser and control branch built from one TrainConfig.

Parameters fall into three namespaces that are saved and loaded separately:
    base     text encoder + denoiser
    control  control branch
    codec    image <-> latent codec
"""
import logging
from typing import Iterator, List, Optional, Sequence

import torch
import torch.nn as nn

from textcontrol.config import TrainConfig
from textcontrol.diffusion.codec import build_codec, freeze
from textcontrol.diffusion.controlnet import ControlNet, encode_hint
from textcontrol.diffusion.denoiser import ControlFeatures, Denoiser, predict_eps
from textcontrol.diffusion.schedule import NoiseSchedule, make_schedule
from textcontrol.diffusion.text_encoder import TextEmbedding, TextEncoder
from textcontrol.enums import TrainingStage
from textcontrol.rng import RandomStream

logger = logging.getLogger(__name__)


class TextControlModel(nn.Module):
    def __init__(self, config: TrainConfig):
        super().__init__()
        self.config = config
        self.schedule: NoiseSchedule = make_schedule(config.timesteps, config.beta_start, config.beta_end,
                                                     config.schedule_kind)
        self.codec = build_codec(config.codec_mode, config.image_size, config.latent_channels)
        self.text_encoder = TextEncoder(config.text_dim, config.text_layers, config.text_heads,
                                        config.text_max_length)
        self.denoiser = Denoiser(config.latent_channels, config.latent_size, config.model_widths, config.text_dim)
        self.controlnet = ControlNet(self.denoiser, config.image_size)

    @classmethod
    def initialise(cls, config: TrainConfig, stream: RandomStream) -> 'TextControlModel':
        """
        Builds a model whose initial weights depend only on the stream.
        """
        init_seed = int(stream.substream('init').numpy.integers(0, 2 ** 63 - 1))
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(init_seed)
            return cls(config)

    def base_modules(self) -> List[nn.Module]:
        return [self.text_encoder, self.denoiser]

    def trainable_parameters(self, stage: TrainingStage, freeze_base: bool) -> List[nn.Parameter]:
        if stage == TrainingStage.BASE:
            modules = self.base_modules()
        elif freeze_base:
            modules = [self.controlnet]
        else:
            modules = [self.controlnet] + self.base_modules()
        return [p for module in modules for p in module.parameters()]

    def prepare_for(self, stage: TrainingStage, freeze_base: bool) -> List[nn.Parameter]:
        """
        Sets ``requires_grad`` so only the stage's parameter sets train; the codec is always frozen.
        :return: The trainable parameters.
        """
        trainable = self.trainable_parameters(stage, freeze_base)
        trainable_ids = {id(p) for p in trainable}
        for parameter in self.parameters():
            parameter.requires_grad_(id(parameter) in trainable_ids)
        freeze(self.codec)
        return trainable

    def named_frozen_tensors(self) -> Iterator:
        for name, parameter in self.named_parameters():
            if not parameter.requires_grad:
                yield name, parameter

    def encode_text(self, captions: Sequence[str]) -> TextEmbedding:
        return self.text_encoder(captions)

    def control_features(self, hint: Optional[torch.Tensor], z_t: torch.Tensor, t,
                         text: TextEmbedding) -> Optional[ControlFeatures]:
        if hint is None:
            return None
        return encode_hint(hint, z_t, t, text, self.controlnet)

    def predict_eps(self, z_t: torch.Tensor, t, text: TextEmbedding,
                    hint: Optional[torch.Tensor] = None) -> torch.Tensor:
        """
        eps_theta(z_t, t, c_t, z_f). Without a hint the control branch is skipped entirely.
        """
        return predict_eps(z_t, t, text, self.control_features(hint, z_t, t, text), self.denoiser)

    def base_state_dict(self) -> dict:
        return {'text_encoder': self.text_encoder.state_dict(), 'denoiser': self.denoiser.state_dict()}

    def load_base_state_dict(self, state: dict):
        self.text_encoder.load_state_dict(state['text_encoder'])
        self.denoiser.load_state_dict(state['denoiser'])

    def control_state_dict(self) -> dict:
        return self.controlnet.state_dict()

    def load_control_state_dict(self, state: dict):
        self.controlnet.load_state_dict(state)

    def attach_base(self, state: dict):
        """
        Loads base weights and re-copies the control trunk from them, keeping the control projections at zero.
        """
        self.load_base_state_dict(state)
        self.controlnet.copy_trunk_from(self.denoiser)
        logger.info("Loaded base weights; control trunk re-initialised from the denoiser encoder")
