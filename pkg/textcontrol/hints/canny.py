"""
Canny edge detection on [0, 1] grayscale crops: Gaussian blur, Sobel gradient, non-maximum suppression along the
quantised gradient direction, hysteresis thresholding on the normalised gradient magnitude.
"""
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

# A unit step in one axis gives a raw Sobel response of 4.
SOBEL_NORM = 4.0


@dataclass(frozen=True)
class CannyParams:
    low_threshold: float = 0.1
    high_threshold: float = 0.3
    gaussian_sigma: float = 1.0

    def __post_init__(self):
        if not 0 < self.low_threshold < self.high_threshold:
            raise ValueError(f"Need 0 < low_threshold < high_threshold, got "
                             f"{self.low_threshold}, {self.high_threshold}")

    def to_dict(self) -> dict:
        return {'low_threshold': self.low_threshold, 'high_threshold': self.high_threshold,
                'gaussian_sigma': self.gaussian_sigma}


def gradient(gray: np.ndarray, sigma: float):
    """
    Smoothed Sobel gradient.
    :return: (gx, gy, magnitude) with magnitude normalised so a unit step edge gives 1.
    """
    smoothed = ndimage.gaussian_filter(gray.astype(np.float64), sigma=sigma, mode='nearest') if sigma > 0 \
        else gray.astype(np.float64)
    gx = ndimage.sobel(smoothed, axis=1, mode='nearest')
    gy = ndimage.sobel(smoothed, axis=0, mode='nearest')
    magnitude = np.hypot(gx, gy) / SOBEL_NORM
    return gx, gy, magnitude


def _shifted(array: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """
    array[i + dy, j + dx], zero outside the array.
    """
    padded = np.pad(array, 1, mode='constant')
    h, w = array.shape
    return padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]


def non_max_suppression(gx: np.ndarray, gy: np.ndarray, magnitude: np.ndarray) -> np.ndarray:
    # Direction sectors: 0 horizontal, 1 diagonal (+), 2 vertical, 3 diagonal (-). Image rows grow downward.
    angle = (np.degrees(np.arctan2(gy, gx)) + 180.0) % 180.0
    sector = (((angle + 22.5) // 45.0) % 4).astype(np.int8)
    offsets = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}

    keep = np.zeros(magnitude.shape, dtype=bool)
    for s, (dy, dx) in offsets.items():
        forward = _shifted(magnitude, dy, dx)
        backward = _shifted(magnitude, -dy, -dx)
        # Ties keep the first pixel of a plateau so edges stay one pixel thick.
        local_max = (magnitude >= forward) & (magnitude > backward)
        keep |= (sector == s) & local_max
    return np.where(keep, magnitude, 0.0)


def hysteresis(suppressed: np.ndarray, low: float, high: float) -> np.ndarray:
    weak = suppressed >= low
    strong = suppressed >= high
    labels, count = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    if count == 0:
        return np.zeros(suppressed.shape, dtype=bool)
    connected = np.zeros(count + 1, dtype=bool)
    connected[np.unique(labels[strong])] = True
    connected[0] = False
    return connected[labels]


def canny(gray: np.ndarray, params: CannyParams = CannyParams()) -> np.ndarray:
    """
    Edge map of a grayscale image.
    :param gray: h x w array in [0, 1].
    :return: h x w bool array, True on edge pixels.
    """
    gx, gy, magnitude = gradient(gray, params.gaussian_sigma)
    suppressed = non_max_suppression(gx, gy, magnitude)
    return hysteresis(suppressed, params.low_threshold, params.high_threshold)
