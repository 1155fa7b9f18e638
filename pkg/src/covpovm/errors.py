"""Exception hierarchy.

Two families exist so the CLI can map failures onto stable exit codes:
:class:`InputError` (malformed or inconsistent input, exit 1) and
:class:`ValidationError` (a mathematical property does not hold, exit 2).
"""


class CovPovmError(Exception):
    """Root of all library errors."""


class InputError(CovPovmError):
    pass


class ValidationError(CovPovmError):
    pass


class ParseError(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class NotASubgroup(InputError):
    pass


class InvalidPriors(InputError):
    pass


class OutcomeMismatch(InputError):
    pass


class NotAGroup(ValidationError):
    pass


class NotAssociative(NotAGroup):
    def __init__(self, triple):
        self.triple = tuple(int(x) for x in triple)
        a, b, c = self.triple
        super().__init__(f"multiplication is not associative at (a, b, c) = ({a}, {b}, {c})")


class NoIdentity(NotAGroup):
    def __init__(self):
        super().__init__("multiplication table has no two-sided identity element")


class NoInverse(NotAGroup):
    def __init__(self, element):
        self.element = int(element)
        super().__init__(f"element {self.element} has no two-sided inverse")


class NotUnitary(ValidationError):
    def __init__(self, element, residual):
        self.element = int(element)
        self.residual = float(residual)
        super().__init__(f"U_{self.element} is not unitary (residual {self.residual:.3e})")


class NotProjectiveRep(ValidationError):
    def __init__(self, g, h, residual):
        self.pair = (int(g), int(h))
        self.residual = float(residual)
        super().__init__(
            f"U_g U_h is not proportional to U_gh for (g, h) = {self.pair} "
            f"(residual {self.residual:.3e})"
        )


class DegenerateProbe(ValidationError):
    pass


class ReconstructionFailure(ValidationError):
    def __init__(self, residual):
        self.residual = float(residual)
        super().__init__(f"commutant reconstruction residual {self.residual:.3e} exceeds tolerance")


class NotNormalized(ValidationError):
    def __init__(self, residual):
        self.residual = float(residual)
        super().__init__(f"POVM elements do not sum to the identity (residual {self.residual:.3e})")


class NotInvariant(ValidationError):
    def __init__(self, residual, orbit=None):
        self.residual = float(residual)
        self.orbit = orbit
        where = "" if orbit is None else f" for orbit {orbit}"
        super().__init__(
            f"seed does not commute with its stability subgroup{where} "
            f"(residual {self.residual:.3e})"
        )


class NotAWitness(ValidationError):
    pass


class InvalidState(ValidationError):
    pass


class InvalidEnsemble(ValidationError):
    pass


class NotHermitian(ValidationError):
    def __init__(self, what, residual):
        self.residual = float(residual)
        super().__init__(f"{what} is not Hermitian (residual {self.residual:.3e})")
