import numpy as np

from satrestore.degradations.base import BaseDegradation
from satrestore.errors import DegradationError


class GaussianNoise(BaseDegradation):
    kind = "gaussian_noise"
    defaults = {"sigma": 0.0}

    def validate(self) -> None:
        if self.params["sigma"] < 0:
            raise DegradationError("gaussian_noise: sigma must be ≥ 0")

    def apply(self, img: np.ndarray) -> np.ndarray:
        sigma = self.params["sigma"]
        if sigma == 0:
            return img.copy()
        rng = np.random.default_rng(self.spec.seed)
        return np.clip(img + rng.normal(0.0, sigma, size=img.shape), 0.0, 1.0)
