"""
Checkpoint storage: one raw little-endian float32 blob per parameter tensor plus a
JSON manifest listing networks, tensor names, shapes and SHA-256 checksums.

Saving is deterministic, so loading a checkpoint and saving it again reproduces
every file byte for byte.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from satrestore.errors import CheckpointError
from satrestore.models import RunConfig
from satrestore.networks import from_descriptor

MANIFEST_NAME = "manifest.json"


@dataclass
class TensorEntry:
    network: str
    name: str
    shape: list[int]
    sha256: str
    file: str


@dataclass
class CheckpointManifest:
    networks: dict[str, dict]          # network id -> architecture descriptor
    tensors: list[TensorEntry]
    config: dict
    iteration: int
    seed: int
    format: int = 1
    extra: dict = field(default_factory=dict)


def _blob(tensor: torch.Tensor) -> bytes:
    return tensor.detach().cpu().numpy().astype("<f4").tobytes(order="C")


def parameter_checksum(net: nn.Module) -> str:
    """SHA-256 over every tensor name and value of a network's state."""
    digest = hashlib.sha256()
    for name, tensor in net.state_dict().items():
        digest.update(name.encode("utf-8"))
        digest.update(_blob(tensor))
    return digest.hexdigest()


def file_sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_checkpoint(
    directory: Path,
    networks: dict[str, nn.Module],
    cfg: RunConfig,
    iteration: int,
    extra: dict | None = None,
) -> CheckpointManifest:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    entries = []
    for net_id, net in networks.items():
        for name, tensor in net.state_dict().items():
            blob = _blob(tensor)
            filename = f"{net_id}.{name}.bin"
            (directory / filename).write_bytes(blob)
            entries.append(TensorEntry(
                network=net_id,
                name=name,
                shape=list(tensor.shape),
                sha256=hashlib.sha256(blob).hexdigest(),
                file=filename,
            ))

    manifest = CheckpointManifest(
        networks={net_id: net.descriptor() for net_id, net in networks.items()},
        tensors=entries,
        config=cfg.as_dict(),
        iteration=iteration,
        seed=cfg.seed,
        extra=extra or {},
    )
    write_manifest(directory, manifest)
    return manifest


def write_manifest(directory: Path, manifest: CheckpointManifest) -> None:
    text = json.dumps(asdict(manifest), indent=2, sort_keys=True) + "\n"
    (Path(directory) / MANIFEST_NAME).write_text(text, encoding="utf-8")


def read_manifest(directory: Path) -> CheckpointManifest:
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        raise CheckpointError(f"no checkpoint manifest at {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
        raw["tensors"] = [TensorEntry(**t) for t in raw["tensors"]]
        return CheckpointManifest(**raw)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CheckpointError(f"malformed checkpoint manifest {path}: {exc}") from None


def load_checkpoint(directory: Path) -> tuple[CheckpointManifest, dict[str, nn.Module]]:
    """Rebuild every network listed in the manifest and load its verified tensors."""
    directory = Path(directory)
    manifest = read_manifest(directory)

    states: dict[str, dict[str, torch.Tensor]] = {net_id: {} for net_id in manifest.networks}
    for entry in manifest.tensors:
        path = directory / entry.file
        if not path.exists():
            raise CheckpointError(f"missing tensor file {path}")
        blob = path.read_bytes()
        if hashlib.sha256(blob).hexdigest() != entry.sha256:
            raise CheckpointError(f"checksum mismatch for {entry.network}.{entry.name}")
        arr = np.frombuffer(blob, dtype="<f4")
        if arr.size != int(np.prod(entry.shape, dtype=np.int64)):
            raise CheckpointError(f"size mismatch for {entry.network}.{entry.name}")
        states[entry.network][entry.name] = torch.from_numpy(arr.astype(np.float32)).reshape(
            entry.shape
        )

    networks = {}
    for net_id, desc in manifest.networks.items():
        net = from_descriptor(desc)
        try:
            net.load_state_dict(states[net_id], strict=True)
        except RuntimeError as exc:
            raise CheckpointError(f"cannot load network '{net_id}': {exc}") from None
        networks[net_id] = net
    return manifest, networks
