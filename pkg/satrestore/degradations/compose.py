import numpy as np

from satrestore.degradations.base import BaseDegradation
from satrestore.errors import DegradationError
from satrestore.models import DegradationSpec


class Compose(BaseDegradation):
    """Apply already-built degradations in order."""

    kind = "compose"

    def __init__(self, spec: DegradationSpec, children: list[BaseDegradation]):
        super().__init__(spec)
        if not children:
            raise DegradationError("compose: needs at least one stage")
        self.children = children

    def apply(self, img: np.ndarray) -> np.ndarray:
        for child in self.children:
            img = child.apply(img)
        return img
