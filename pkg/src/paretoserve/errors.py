"""Exception types shared across the package.

``InfeasibleSetError`` is deliberately absent: an empty feasibility set is an
outcome reported to the client, not an exception (see ``router.ServeOutcome``).
"""


class ParetoServeError(Exception):
    """Base class for all package-specific errors."""


class GranularityViolation(ParetoServeError):
    """A zoo's frontier is incompatible with the configured granularity."""


class DomainError(ParetoServeError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class EmptyFrontier(ParetoServeError):
    """An operation requiring frontier entries was given an empty frontier."""


class EmptyLog(ParetoServeError):
    """A metric was requested over a serve log with no records."""


class NoFeasibleVictim(ParetoServeError):
    """No fingerprinted row fits under the attacker's latency budget."""


class BudgetExhausted(ParetoServeError):
    """The attacker's query budget ran out before the campaign finished."""


class InfeasibleSpec(ParetoServeError):
    """A zoo-generation spec cannot fit the requested number of models."""


class ZooFormatError(ParetoServeError, ValueError):
    """A zoo document does not match the expected schema."""


class MalformedMessage(ParetoServeError, ValueError):
    """A wire message could not be parsed against the protocol schema."""


class OutOfRange(ParetoServeError, ValueError):
    """A wire message carries a spec value outside its allowed range."""


class RegistrationAfterStart(ParetoServeError):
    """A model registration arrived after serving began."""
