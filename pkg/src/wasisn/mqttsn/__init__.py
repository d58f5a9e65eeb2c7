from .client import ClientConfig, InboundMessage, Mode, MqttSnClient, TopicMap
from .codec import Flags, MsgType, ReturnCode, decode, encode
from .network import BROADCAST, SimNetwork, UdpNetwork

__all__ = [
    "BROADCAST",
    "ClientConfig",
    "Flags",
    "InboundMessage",
    "Mode",
    "MqttSnClient",
    "MsgType",
    "ReturnCode",
    "SimNetwork",
    "TopicMap",
    "UdpNetwork",
    "decode",
    "encode",
]
