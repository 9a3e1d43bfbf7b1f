"""Exception taxonomy shared across the library.

The CLI maps these onto its exit-code contract: configuration problems
exit 2, I/O errors 3, container format/validation problems 4, and
verification-sweep failures 5.
"""


class StructAttnError(Exception):
    """Base class for all library errors."""


class ConfigurationError(StructAttnError):
    """A parameter combination violates a documented precondition."""


class UndefinedInputError(StructAttnError):
    """The requested quantity is undefined for this input (e.g. all-zero matrix)."""


class SingularMatrixError(StructAttnError):
    """A matrix required to have full rank is numerically rank deficient."""


class InfeasibleError(ConfigurationError):
    """The requested partition or solve cannot exist for these sizes."""


class ContractError(StructAttnError):
    """An input violates a structural contract (e.g. rows not stochastic)."""


class ContainerFormatError(StructAttnError):
    """The weight container is not a valid SAIW file."""


class ContainerCorruptionError(ContainerFormatError):
    """The container header is valid but the payload is truncated or inconsistent."""


class ContainerValidationError(StructAttnError):
    """The container decodes but its tensors violate documented invariants."""

    def __init__(self, message, tensor_names=()):
        super().__init__(message)
        self.tensor_names = list(tensor_names)


class VerificationError(StructAttnError):
    """A verification sweep found at least one cell outside its expected regime."""
