"""Exception hierarchy shared across the package."""


class QuadFaultError(Exception):
    """Base class for all package errors."""


class ConfigError(QuadFaultError):
    """Invalid or inconsistent run configuration (CLI exit code 2)."""


class InputDomainError(QuadFaultError, ValueError):
    """An operation received values outside its documented input domain."""


class EpisodeDivergedError(QuadFaultError):
    """Simulated vehicle left the stable flight envelope."""

    def __init__(self, step: int, rate: float):
        self.step = step
        self.rate = rate
        super().__init__(
            f"episode diverged at step {step}: |body rate| = {rate:.3f} rad/s exceeds 50 rad/s"
        )


class DegenerateLogError(QuadFaultError):
    """A flight log cannot support the requested estimate (too short / zero baseline)."""


class ContainerError(QuadFaultError):
    """Base class for on-disk container problems (CLI exit code 3)."""


class ContainerVersionError(ContainerError):
    """Stored format version does not match the reader."""


class ContainerCorruptError(ContainerError):
    """Tensor file truncated or its checksum does not match the manifest."""


class ContainerCountError(ContainerError):
    """Manifest counts disagree with the stored tensors."""


class TrainingError(QuadFaultError):
    """Training could not proceed (CLI exit code 4)."""


class GradientError(TrainingError):
    """A gradient was non-finite or failed verification; names the layer."""
