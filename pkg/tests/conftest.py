import pytest
import torch

from satrestore.degradations import make_validation_pair, parse_spec
from satrestore.degradations.fixture import aerial_scene
from satrestore.models import ImageTensor, RunConfig

# Band for PSNR(distorted, ground truth) under the default degradation on the
# 256x256 procedural scene; wide enough to survive library version drift.
DEFAULT_SPEC_PSNR_BAND = (10.0, 22.0)


def random_image(height: int, width: int, seed: int = 0) -> ImageTensor:
    gen = torch.Generator().manual_seed(seed)
    return ImageTensor(torch.rand(3, height, width, generator=gen))


def constant_image(height: int, width: int, value: float) -> ImageTensor:
    return ImageTensor(torch.full((3, height, width), value))


@pytest.fixture
def tiny_cfg(tmp_path) -> RunConfig:
    """A config small enough to train in well under a second per stage."""
    return RunConfig(
        base_width=4,
        depth=2,
        patch_size=16,
        ddn_iterations=3,
        restore_epochs=2,
        n_alpha=4,
        checkpoint_every=2,
        log_every=1,
        output_dir=str(tmp_path / "output"),
    )


@pytest.fixture(scope="session")
def scene() -> ImageTensor:
    return aerial_scene(64, seed=0)


@pytest.fixture(scope="session")
def validation_triple(scene):
    """(reference, distorted, ground truth), each 48x48."""
    spec = parse_spec(RunConfig().degrade, seed=0)
    return make_validation_pair(scene, spec, offset=(16, 16))
