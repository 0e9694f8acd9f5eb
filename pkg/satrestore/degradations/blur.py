import numpy as np
from skimage.filters import gaussian

from satrestore.degradations.base import BaseDegradation
from satrestore.errors import DegradationError

# Kernel radius is int(TRUNCATE * sigma + 0.5)
TRUNCATE = 4.0


class GaussianBlur(BaseDegradation):
    kind = "gaussian_blur"
    defaults = {"sigma": 0.0}

    def validate(self) -> None:
        if self.params["sigma"] < 0:
            raise DegradationError("gaussian_blur: sigma must be ≥ 0")

    def apply(self, img: np.ndarray) -> np.ndarray:
        sigma = self.params["sigma"]
        if sigma == 0:
            return img.copy()
        return gaussian(
            img, sigma=sigma, mode="reflect", truncate=TRUNCATE,
            channel_axis=0, preserve_range=True,
        )
