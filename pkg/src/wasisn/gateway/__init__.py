from .broker import (
    DEFAULT_PORT,
    Gateway,
    GatewayConfig,
    GatewaySession,
    SessionMode,
    Subscription,
    TopicRegistry,
)

__all__ = [
    "DEFAULT_PORT",
    "Gateway",
    "GatewayConfig",
    "GatewaySession",
    "SessionMode",
    "Subscription",
    "TopicRegistry",
]
