"""Exception types shared across the fleet engine.

Every error raised on purpose by this package derives from ``FleetError`` so
the gateway can map it to a status code in one place.
"""


class FleetError(Exception):
    """Base class for all expected failures."""

    status = 400


class ValidationError(FleetError, ValueError):
    status = 422


# -- state store ------------------------------------------------------------

class NotOwner(FleetError):
    status = 403


class StaleVersion(FleetError):
    status = 409


class VersionGap(FleetError):
    status = 409


class NotFound(FleetError, KeyError):
    status = 404

    def __str__(self):
        return Exception.__str__(self)


class ConsistencyMismatch(FleetError):
    status = 409


class EpochStale(FleetError):
    status = 409


class WrongCurrentOwner(FleetError):
    status = 409


class CrossStoreQuery(FleetError):
    pass


class UnknownOrigin(FleetError):
    pass


# -- replication --------------------------------------------------------------

class NotLeader(FleetError):
    status = 421

    def __init__(self, message, leader_hint=None):
        super().__init__(message)
        self.leader_hint = leader_hint


class NoQuorum(FleetError):
    status = 503


class RoundFailed(FleetError):
    status = 503


class KeyMismatch(FleetError):
    pass


# -- fleet model ----------------------------------------------------------------

class Unreachable(FleetError):
    pass


class InvalidTransition(FleetError):
    status = 409


# -- orchestrator -----------------------------------------------------------------

class LeaseLost(FleetError):
    status = 403


class InvalidPlan(ValidationError):
    pass


class CyclicDependency(ValidationError):
    pass


class ReadinessFailed(FleetError):
    status = 500

    def __init__(self, vertex, report=None):
        super().__init__(f"readiness check failed for {vertex!r}")
        self.vertex = vertex
        self.report = report


class UnknownEventKind(ValidationError):
    pass


class CheckpointInvalid(FleetError):
    status = 500


class DuplicateName(FleetError):
    status = 409


class OrchestratorKilled(Exception):
    """Raised by test hooks to simulate the orchestrator process dying."""


# -- provisioning simulator ---------------------------------------------------------

class DiscoveryTimeout(FleetError):
    status = 504


class DuplicateAttachment(FleetError):
    pass


class AddressTimeout(FleetError):
    status = 504


class InsufficientMemory(FleetError):
    pass


class DigestMismatch(FleetError):
    def __init__(self, layer, expected=None, measured=None):
        super().__init__(f"digest mismatch on layer {layer}")
        self.layer = layer
        self.expected = expected
        self.measured = measured


class UnknownNode(FleetError, KeyError):
    status = 404

    def __str__(self):
        return Exception.__str__(self)


class UnknownSwitch(FleetError, KeyError):
    status = 404

    def __str__(self):
        return Exception.__str__(self)


class BmcUnreachable(FleetError):
    status = 503


class AccessDenied(FleetError):
    status = 403


# -- configuration -------------------------------------------------------------------

class AmbiguousPrecedence(FleetError):
    status = 409


class UnknownImage(ValidationError):
    pass


class KeyNotFound(FleetError, KeyError):
    status = 404

    def __str__(self):
        return Exception.__str__(self)


class IntegrityError(FleetError):
    pass


# -- metrics -------------------------------------------------------------------------

class NegativeDuration(ValidationError):
    pass


class UnknownRequestType(FleetError, KeyError):
    status = 404

    def __str__(self):
        return Exception.__str__(self)


class NoSamples(FleetError):
    status = 404


# -- gateway ---------------------------------------------------------------------------

class AllEndpointsFailed(FleetError):
    status = 503

    def __init__(self, message, attempts=()):
        super().__init__(message)
        self.attempts = list(attempts)


class Unauthorized(FleetError):
    status = 403
