"""Exception types raised by geostream."""


class GeostreamError(Exception):
    """Base class for all library errors."""


class NonPositiveDepth(GeostreamError, ValueError):
    pass


class EmptyPatch(GeostreamError, ValueError):
    pass


class EmptyRoi(GeostreamError, ValueError):
    pass


class DegenerateEdge(GeostreamError, ArithmeticError):
    pass


class NonPositiveUncertainty(GeostreamError, ValueError):
    pass


class ExhaustedSampling(GeostreamError, RuntimeError):
    pass


class InsufficientConstraints(GeostreamError, ArithmeticError):
    """An axis has too little data weight to fix its center coordinate.

    Attributes
    ----------
    axis : str
        One of ``"length"``, ``"width"``, ``"height"``.
    determinant : float
        Determinant of the axis' 2x2 normal matrix.
    dimension : float or None
        The dimension along that axis when it is still determined by the size
        prior alone (regularization weight > 0), else ``None``.
    """

    def __init__(self, axis, determinant, dimension=None):
        self.axis = axis
        self.determinant = determinant
        self.dimension = dimension
        super().__init__(
            f"{axis} axis is unconstrained (normal-matrix determinant {determinant:.3e})"
        )


class MalformedLine(GeostreamError, ValueError):
    def __init__(self, line_number, reason):
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"line {line_number}: {reason}")
