"""Sandboxed sensor and MQTT-SN host interfaces with WKD-IBE access control."""

__version__ = "0.1.0"
