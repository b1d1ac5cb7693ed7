from .client import (
    ERROR,
    OK,
    REFUSED,
    TIMEOUT,
    UNAVAILABLE,
    Attempt,
    CallResult,
    FailoverPolicy,
    GatewayClient,
    HttpTransport,
    Request,
    Response,
    SilentFailure,
    call_with_failover,
)
from .endpoints import EndpointSet, publish_endpoint, withdraw_endpoint
from .router import Router
from .server import ROUTES, GatewayApp, GatewayServer
from .simnet import SimClock, SimNetwork

__all__ = [
    "ERROR", "OK", "REFUSED", "ROUTES", "TIMEOUT", "UNAVAILABLE", "Attempt", "CallResult",
    "EndpointSet", "FailoverPolicy", "GatewayApp", "GatewayClient", "GatewayServer",
    "HttpTransport", "Request", "Response", "Router", "SilentFailure", "SimClock", "SimNetwork",
    "call_with_failover", "publish_endpoint", "withdraw_endpoint",
]
