import logging
from typing import List, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class OcrEngine:
    """
    Recognises the text of image crops. Implementations must be deterministic per crop.
    """
    name = 'ocr'

    def recognize_crop(self, crop: np.ndarray) -> str:
        """
        Recognises one text line.
        :param crop: h x w x 3 uint8 crop of a text region.
        :return: Recognised text.
        :raises OcrEngineError: When the engine cannot produce a result.
        """
        raise NotImplementedError

    def recognize_crops(self, crops: Sequence[np.ndarray]) -> List[Optional[str]]:
        """
        Recognises many crops.
        :return: Recognised text per crop, None where the engine failed.
        """
        results = []
        for index, crop in enumerate(crops):
            try:
                results.append(self.recognize_crop(crop))
            except Exception as e:
                logger.warning("%s failed on crop %d: %s", self.name, index, e)
                results.append(None)
        return results

    def describe(self) -> dict:
        return {'name': self.name}
