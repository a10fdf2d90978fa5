import logging
import os
from typing import List, Optional

from celery import group, shared_task
from celery.contrib.abortable import AbortableTask

from textcontrol.config import TrainConfig
from textcontrol.domain import AnnotatedImage, TextRegion
from textcontrol.hints.fonts import FontRegistry
from textcontrol.hints.render import HintBuilder
from textcontrol.manifest import read_png, write_png
from textcontrol.trainer import train

logger = logging.getLogger(__name__)


@shared_task
def build_hints(record: dict, image_path: str, config_values: dict, out_dir: str) -> dict:
    """
    Builds the configured hint for one manifest record and writes it as ``hints/<id>.png`` under out_dir.
    :param record: Manifest record, regions already clamped.
    :param image_path: Absolute path of the record's image.
    """
    config = TrainConfig.from_dict(config_values)
    image = AnnotatedImage(image_id=record['id'], image=read_png(image_path), caption=record['caption'],
                           regions=[TextRegion.from_dict(r) for r in record['regions']])
    hint = HintBuilder.from_config(config, FontRegistry.from_settings()).build(image)
    relative = os.path.join('hints', f"{image.image_id}.png")
    write_png(os.path.join(out_dir, relative), hint.to_uint8())
    return {'id': image.image_id, 'hint_path': relative, 'kind': hint.kind.value, 'notes': hint.notes}


def build_hints_group(images: List[AnnotatedImage], manifest_dir: str, config: TrainConfig, out_dir: str) -> list:
    """
    Fans hint building out over the Celery workers (in-process when tasks run eagerly) and collects the results in
    input order.
    """
    os.makedirs(os.path.join(out_dir, 'hints'), exist_ok=True)
    config_values = config.to_dict()
    signatures = []
    for image in images:
        record = {'id': image.image_id, 'caption': image.caption, 'regions': [r.to_dict() for r in image.regions]}
        signatures.append(build_hints.s(record, os.path.join(manifest_dir, image.image_path), config_values,
                                        os.path.abspath(out_dir)))
    return group(signatures).apply_async().get()


@shared_task(bind=True, base=AbortableTask)
def train_run(self, config_values: dict, manifest_path: str, out_dir: str, recognizer_path: Optional[str] = None,
              base_checkpoint: Optional[str] = None, resume: Optional[str] = None) -> dict:
    """
    Runs a training job. Aborting the task stops it between steps after writing a checkpoint.
    """
    config = TrainConfig.from_dict(config_values)

    def should_stop() -> bool:
        # Abort state lives in the result backend, which eager runs do not have.
        return not self.request.is_eager and self.is_aborted()

    result = train(config, manifest_path, out_dir, recognizer_path=recognizer_path,
                   base_checkpoint=base_checkpoint, resume=resume, should_stop=should_stop)
    return {'checkpoint': result.checkpoint_path, 'metrics': result.metrics_path, 'step': result.state.step,
            'stopped': result.stopped, 'averages': result.state.averages}
