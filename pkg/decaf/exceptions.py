class DecafError(Exception):
    """Base exception class for which all our exceptions will inherit from."""


class InvalidCandidateSetError(DecafError):
    """Raised if a candidate set (or its capacities) breaks one of the candidate invariants.

    The message is always one of the short reasons below, so callers (and tests) can match on it:
        - "empty candidate list": an agent was given no candidates at all.
        - "dimension mismatch": a feature or consumption vector has the wrong length.
        - "missing null action": an agent has no null candidate, so feasibility isn't guaranteed.
        - "negative consumption": a consumption entry is below zero.
        - "negative capacity": a capacity entry is below zero.
        - "null action consumes resources": a null candidate has non-zero consumption.
        - "action id mismatch": an action id isn't the candidate's index in its agent's list.
    """

    def __init__(self, reason, agent=None):
        self.reason = reason
        self.agent = agent

        msg = reason if agent is None else f"{reason} (agent {agent})"
        super().__init__(msg)


class EtaUndefinedError(DecafError):
    """Raised if eta = beta / (1 - beta) is requested at beta = 1."""

    def __init__(self):
        super().__init__("eta undefined")


class InvalidTradeoffError(DecafError):
    """Raised if a trade-off weight falls outside of [0, 1]."""

    def __init__(self, beta):
        super().__init__(f"Invalid trade-off weight: beta must lie in [0, 1], got {beta!r}.")


class InvalidProblemError(DecafError):
    """Raised if the value table of an allocation problem doesn't line up with its candidate set."""


class InstanceTooLargeError(DecafError):
    """Raised if the exhaustive oracle would have to enumerate too many joint actions."""

    def __init__(self, size, limit):
        self.size = size
        self.limit = limit

        super().__init__(f"Instance too large for enumeration: {size} joint actions (limit {limit}).")


class InfeasibleAllocationError(DecafError):
    """Raised if an environment is stepped with an allocation that breaks its own constraints.

    This is always a caller bug, the environment never repairs an allocation on its own.
    """


class FairnessDomainError(DecafError):
    """Raised if a fairness function is evaluated outside of its domain (alpha-fair with z_i <= 0)."""


class InvalidFairnessSpecError(DecafError):
    """Raised if a fairness specification is malformed (ex: GGF weights that aren't strictly decreasing)."""


class DimensionMismatchError(DecafError):
    """Raised if an input doesn't match the shape a value network was built for."""

    def __init__(self, expected, got):
        self.expected = expected
        self.got = got

        super().__init__(f"dimension mismatch: expected {expected}, got {got}")


class NonFiniteTargetError(DecafError):
    """Raised if a regression target handed to a value network is NaN or infinite."""


class CheckpointError(DecafError):
    """Raised if a checkpoint payload is truncated, corrupt or of an unknown version."""


class MissingNetworkError(DecafError):
    """Raised if an estimator bundle lacks a network its learning mode needs."""


class BetaMismatchError(DecafError):
    """Raised if a JO model is asked to run at a trade-off weight it wasn't trained on.

    A JO network predicts one blended value, so its beta is baked in at training time.
    """

    def __init__(self, beta_train, beta_test):
        msg = f"JO models only run at their training beta ({beta_train}), got beta_test={beta_test}."

        super().__init__(msg)


class ConfigError(DecafError):
    """Raised if an experiment configuration is malformed or carries unknown keys."""
