"""Conditional contact angle distribution and relay outage for LEO-relayed ground links."""

__version__ = "0.1.0"
