"""Exception hierarchy. Library code raises these; cli.py maps them to exit codes."""


class SatRestoreError(Exception):
    exit_code = 3


class ConfigError(SatRestoreError):
    exit_code = 2


class ImageError(SatRestoreError):
    pass


class ShapeError(SatRestoreError, ValueError):
    pass


class CheckpointError(SatRestoreError):
    pass


class DegradationError(SatRestoreError, ValueError):
    pass


class DivergenceError(SatRestoreError):
    """A loss term became non-finite during training."""

    exit_code = 4

    def __init__(self, term: str, step: int, value: float):
        super().__init__(f"loss term '{term}' is non-finite ({value}) at step {step}")
        self.term = term
        self.step = step
        self.value = value


class StageError(SatRestoreError):
    def __init__(self, stage: str, message: str, exit_code: int = 3):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.exit_code = exit_code
