"""Exception types raised across the benchmark engine."""


class CtbenchError(Exception):
    """Base class for all engine errors."""


# -- market data -------------------------------------------------------------

class UnreadableSource(CtbenchError):
    """Candle source is missing, malformed, or violates the file contract."""


class NoCommonTimespan(CtbenchError):
    """No hourly range is fully covered by at least one asset."""


class NonPositivePrice(CtbenchError):
    """A candle contains a zero or negative price."""


class InvalidWindow(CtbenchError):
    """Split window/step parameters are inconsistent with the data length."""


class OffsetOutOfRange(CtbenchError):
    """Split offset does not leave room for a full train or test slice."""


# -- features ----------------------------------------------------------------

class UnknownFeature(CtbenchError):
    """Requested feature name is not in the built-in catalog."""


class WindowTooLong(CtbenchError):
    """Input series is shorter than a requested feature window."""


# -- generators --------------------------------------------------------------

class FitFailed(CtbenchError):
    """Generator could not be fitted on the given training data."""


class NotTrained(CtbenchError):
    """Generate/reconstruct called before fit."""


class ModeUnsupported(CtbenchError):
    """Model does not support the requested mode."""


class ShapeMismatch(CtbenchError):
    """Array shape inconsistent with what the operation requires."""


class SchemaVersionUnsupported(CtbenchError):
    """Exchange bundle manifest has an unsupported schema version."""


class PayloadShapeMismatch(CtbenchError):
    """Exchange bundle payload size disagrees with its manifest."""


class BadManifest(CtbenchError):
    """Exchange bundle manifest is missing or malformed."""


class MissingPayload(CtbenchError):
    """Exchange bundle payload file is absent."""


class BundleMissing(CtbenchError):
    """No pre-computed bundle exists for the requested (offset, mode, length)."""


class BridgeFailure(CtbenchError):
    """External adapter process failed or returned an invalid response."""


# -- forecasting -------------------------------------------------------------

class EmptyTrainingSet(CtbenchError):
    """Not enough rows to fit a forecaster."""


class FeatureMismatch(CtbenchError):
    """Prediction-time feature list differs from the training-time list."""


# -- tasks -------------------------------------------------------------------

class NonMeanReverting(CtbenchError):
    """Residual series shows no statistically significant mean reversion."""


class DegenerateSeries(CtbenchError):
    """Residual series has zero variance."""


class AllAssetsExcluded(CtbenchError):
    """Every asset failed the mean-reversion fit; nothing to trade."""


# -- strategies / simulation -------------------------------------------------

class TooFewAssets(CtbenchError):
    """Cross-section too small for the requested portfolio rule."""


class DegeneratePredictions(CtbenchError):
    """All predictions are zero; proportional weights are undefined."""


class Bankruptcy(CtbenchError):
    """Simulated equity reached zero or below."""


# -- metrics -----------------------------------------------------------------

class MissingPhase(CtbenchError):
    """A required timing phase was never recorded."""


class InconsistentGrouping(CtbenchError):
    """Reports to be ranked do not share a consistent grouping."""


class EmptyYear(CtbenchError):
    """No splits fall into the requested calendar year."""


# -- configuration -----------------------------------------------------------

class ParseError(CtbenchError):
    """Config file could not be read or parsed."""


class UnknownKey(CtbenchError):
    """Config contains a key outside the schema."""


class InvalidValue(CtbenchError):
    """Config value fails validation."""
