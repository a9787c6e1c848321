"""Exception hierarchy shared across the package.

Exit-code mapping for the CLI lives in ctrw.cli; everything here derives
from CtrwError so callers can catch broadly.
"""


class CtrwError(Exception):
    pass


# --- configuration / catalog ---

class UnknownProblem(CtrwError):
    pass


class InvalidParams(CtrwError):
    pass


class ParseError(CtrwError):
    pass


class ValidationError(CtrwError):
    pass


# --- realizability / geometry ---

class RealizabilityViolation(CtrwError):
    pass


class NotDiagonallyDominant(RealizabilityViolation):
    pass


class InadmissibleDiffusion(CtrwError):
    pass


class DomainViolation(CtrwError):
    pass


class DecompositionMismatch(CtrwError):
    pass


class EmptyWindow(CtrwError):
    pass


# --- numerics ---

class SingularDiffusion(CtrwError):
    pass


class QuadratureFailure(CtrwError):
    pass


class FactorizationFailure(CtrwError):
    pass


class Overlap(CtrwError):
    pass


class ZeroRate(CtrwError):
    pass


class NonNormalizable(CtrwError):
    pass


class NotIrreducible(CtrwError):
    pass


class NoConvergence(CtrwError):
    pass


class UnstableDrift(CtrwError):
    pass


class InsufficientPaths(CtrwError):
    pass


# --- simulation ---

class AbsorbedState(CtrwError):
    pass


class StepBudgetExceeded(CtrwError):
    pass
