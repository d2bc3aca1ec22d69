"""Exception types shared across the package.

Every error carries the name of the module that raised it plus a context
dict, so the CLI can serialize failures as machine-readable JSON.
"""


class DepthregError(Exception):
    """Base class for all package errors."""

    module = "depthreg"

    def __init__(self, message, **context):
        super().__init__(message)
        self.message = message
        self.context = context

    def to_json_dict(self, code):
        return {
            "code": code,
            "module": self.module,
            "message": self.message,
            "context": {k: _jsonable(v) for k, v in self.context.items()},
        }


def _jsonable(v):
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    return str(v)


class InvalidDirectionError(DepthregError):
    module = "geometry"


class UnsupportedDimensionError(DepthregError):
    module = "geometry"


class InvalidInputError(DepthregError):
    """Malformed numeric input: non-finite values, empty polygons, ..."""


class InvalidBandwidthError(DepthregError):
    module = "kernels"


class EmptyNeighborhoodError(DepthregError):
    """No observation receives positive kernel weight near w0."""

    module = "kernels"


class DegenerateDesignError(DepthregError):
    """Regressor matrix is rank deficient; names the unidentified block."""

    module = "estimators"


class SolverError(DepthregError):
    """A quantile-regression solve ended with status 'failed'."""

    module = "qr_solver"


class ContourFailureError(DepthregError):
    """Too many per-direction fits failed to assemble a contour."""

    module = "contours"


class IngestionError(DepthregError):
    module = "simlab"


class ConfigError(DepthregError):
    module = "cli"
