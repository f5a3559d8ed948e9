class SonarKitError(Exception):
    """Base class for every error raised by the toolkit."""


class DegeneratePointError(SonarKitError, ValueError):
    pass


class FrustumError(SonarKitError, ValueError):
    """A query lies outside the sonar frustum."""


class ShapeError(SonarKitError, ValueError):
    pass


class EmptyContourError(SonarKitError, ValueError):
    pass


class DegenerateBatchError(SonarKitError, ValueError):
    """No keypoint in a training batch has a usable epipolar contour."""


class PoseError(SonarKitError, ValueError):
    pass


class ConfigError(SonarKitError, ValueError):
    pass


class DatasetError(SonarKitError, OSError):
    pass


class WeightsFormatError(SonarKitError, OSError):
    pass


class UndefinedRatioError(SonarKitError, ArithmeticError):
    pass


class DegenerateGeometryError(SonarKitError, ArithmeticError):
    pass


class SingularSystemError(SonarKitError, ArithmeticError):
    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition number {condition:.3e})")
        self.condition = condition
