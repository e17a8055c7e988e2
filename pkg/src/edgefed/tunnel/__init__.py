"""Reverse tunnel gateway and pod-side agent."""

from .gateway import KeepalivePolicy, TunnelGateway, TunnelRegistration, WebBridge
from .agent import TunnelAgent

__all__ = [
    "KeepalivePolicy",
    "TunnelAgent",
    "TunnelGateway",
    "TunnelRegistration",
    "WebBridge",
]
