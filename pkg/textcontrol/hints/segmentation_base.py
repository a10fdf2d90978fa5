import numpy as np
from PIL import Image


class Segmenter:
    """
    Per-pixel text segmentation of an image crop.
    """

    def segment(self, crop: np.ndarray) -> np.ndarray:
        """
        Segments the text in a crop.
        :param crop: h x w x 3 uint8 crop of a text box.
        :return: h x w array with 1 where a pixel belongs to text and 0 elsewhere.
        """
        raise NotImplementedError

    def __call__(self, crop: np.ndarray) -> np.ndarray:
        return self.segment(crop)


class ThresholdSegmenter(Segmenter):
    """
    Marks pixels darker than a threshold as text. Exact on synthetic dark-on-light typographic crops.
    """

    def __init__(self, threshold: int = 128):
        self.threshold = threshold

    def segment(self, crop: np.ndarray) -> np.ndarray:
        gray = np.asarray(Image.fromarray(crop, mode='RGB').convert('L'))
        return (gray < self.threshold).astype(np.uint8)

    def __repr__(self):
        return f"<ThresholdSegmenter: {self.threshold}>"
