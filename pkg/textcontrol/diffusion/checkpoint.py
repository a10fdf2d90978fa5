"""
Checkpoint files.

A checkpoint is a ``torch.save`` dictionary:

    header         {'format': 'textcontrol-checkpoint', 'version': 1}
    config         TrainConfig snapshot (plain values)
    schedule       schedule parameters
    loss_reduction reduction of the latent diffusion loss
    base           text encoder + denoiser weights
    control        control branch weights
    codec          codec weights
    train_state    optimiser, RNG and counters, absent for inference-only files

Files are written to a temporary sibling and renamed into place.
"""
import logging
import os
from typing import Optional, Tuple

import torch

from textcontrol.config import TrainConfig
from textcontrol.diffusion.model import TextControlModel
from textcontrol.exceptions import CheckpointError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 'textcontrol-checkpoint'
CHECKPOINT_VERSION = 1

# Fields that change parameter shapes or the meaning of the weights; a checkpoint cannot be used under a config that
# differs in any of them.
ARCHITECTURE_FIELDS = ('image_size', 'latent_channels', 'latent_size', 'codec_mode', 'timesteps', 'beta_start',
                       'beta_end', 'schedule_kind', 'model_widths', 'text_dim', 'text_layers', 'text_heads',
                       'text_max_length')


def atomic_save(payload: dict, path: str):
    """
    :raises CheckpointError: When the file cannot be written. No partial file is left behind.
    """
    directory = os.path.dirname(os.path.abspath(path))
    temporary = os.path.join(directory, f".{os.path.basename(path)}.tmp")
    try:
        os.makedirs(directory, exist_ok=True)
        torch.save(payload, temporary)
        os.replace(temporary, path)
    except OSError as e:
        if os.path.exists(temporary):
            os.remove(temporary)
        raise CheckpointError(f"Could not write checkpoint {path}: {e}") from e


def save_checkpoint(path: str, model: TextControlModel, train_state: Optional[dict] = None) -> str:
    payload = {
        'header': {'format': CHECKPOINT_FORMAT, 'version': CHECKPOINT_VERSION},
        'config': model.config.to_dict(),
        'schedule': model.schedule.to_dict(),
        'loss_reduction': model.config.loss_reduction.value,
        'base': model.base_state_dict(),
        'control': model.control_state_dict(),
        'codec': model.codec.state_dict(),
    }
    if train_state is not None:
        payload['train_state'] = train_state
    atomic_save(payload, path)
    logger.debug("Wrote checkpoint %s", path)
    return path


def read_checkpoint(path: str) -> dict:
    """
    Reads and validates a checkpoint file's header.
    :raises CheckpointError: When the file is missing, unreadable or of another format or version.
    """
    if not os.path.isfile(path):
        raise CheckpointError(f"Checkpoint {path} does not exist")
    try:
        # Checkpoints hold RNG states and optimiser moments besides tensors.
        payload = torch.load(path, map_location='cpu', weights_only=False)
    except Exception as e:
        raise CheckpointError(f"Could not read checkpoint {path}: {e}") from e
    header = payload.get('header', {}) if isinstance(payload, dict) else {}
    if header.get('format') != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a text-control checkpoint")
    if header.get('version') != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path} has checkpoint version {header.get('version')}, "
                              f"expected {CHECKPOINT_VERSION}")
    return payload


def check_compatible(payload: dict, config: TrainConfig, path: str):
    """
    :raises CheckpointError: When the checkpoint's architecture fields differ from the config's.
    """
    expected = config.to_dict()
    differing = [name for name in ARCHITECTURE_FIELDS if payload['config'].get(name) != expected[name]]
    if differing:
        details = ', '.join(f"{n}={payload['config'].get(n)!r} (config {expected[n]!r})" for n in differing)
        raise CheckpointError(f"Checkpoint {path} does not match the configuration: {details}")


def load_checkpoint(path: str, config: Optional[TrainConfig] = None,
                    base_path: Optional[str] = None) -> Tuple[TextControlModel, dict]:
    """
    Rebuilds a model from a checkpoint.
    :param config: Config to load under; defaults to the checkpoint's own snapshot.
    :param base_path: Checkpoint to take the base weights from instead.
    :return: (model, payload).
    """
    payload = read_checkpoint(path)
    config = config or TrainConfig.from_dict(payload['config'])
    check_compatible(payload, config, path)
    model = TextControlModel(config)
    model.codec.load_state_dict(payload['codec'])
    model.load_control_state_dict(payload['control'])
    if base_path:
        base_payload = read_checkpoint(base_path)
        check_compatible(base_payload, config, base_path)
        model.load_base_state_dict(base_payload['base'])
        logger.info("Base weights from %s, control weights from %s", base_path, path)
    else:
        model.load_base_state_dict(payload['base'])
    model.eval()
    return model, payload


def load_base_weights(model: TextControlModel, path: str):
    """
    Loads the base and codec namespaces of another checkpoint into a model, re-initialising the control trunk.
    """
    payload = read_checkpoint(path)
    check_compatible(payload, model.config, path)
    model.codec.load_state_dict(payload['codec'])
    model.attach_base(payload['base'])
