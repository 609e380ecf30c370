"""Exception types shared across the toolkit."""


class DociError(Exception):
    """Base class for all toolkit errors."""

    code = "doci_error"

    def to_json(self) -> dict:
        return {"code": self.code, "message": str(self)}


class DenominatorTooSmall(DociError):
    """Reference signal too close to background to form a reliable ratio."""

    code = "denominator_too_small"


class EmptyRoi(DociError):
    """Region of interest contains no valid pixels."""

    code = "empty_roi"


class ShapeMismatch(DociError):
    """Rasters that must share dimensions do not."""

    code = "shape_mismatch"


class SpacingBelowNyquist(DociError):
    """Requested bar spacing is finer than two pixels."""

    code = "spacing_below_nyquist"


class OverlappingRegions(DociError):
    """A cancer lesion and a benign lesion claim the same pixels."""

    code = "overlapping_regions"


class MissingClass(DociError):
    """Training data lacks one of the two classes."""

    code = "missing_class"


class SingularCovariance(DociError):
    """Pooled covariance is not invertible (collinear features, zero ridge)."""

    code = "singular_covariance"


class MissingChannel(DociError):
    """A requested filter channel is not present in the stack."""

    code = "missing_channel"


class BlockSetMismatch(DociError):
    """Truth and prediction cover different block sets."""

    code = "block_set_mismatch"


class UndefinedMetric(DociError):
    """A confusion-matrix ratio has a zero denominator."""

    code = "undefined_metric"


class FormatError(DociError):
    """Raster or archive file does not conform to the on-disk format."""

    code = "format_error"


class BadMagic(FormatError):
    code = "bad_magic"


class UnsupportedVersion(FormatError):
    code = "unsupported_version"


class TruncatedPayload(FormatError):
    code = "truncated_payload"


class ChecksumMismatch(FormatError):
    code = "checksum_mismatch"
