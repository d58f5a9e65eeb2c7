"""Exception hierarchy shared by every subsystem.

Each error carries the negative status code it surfaces as when raised
underneath a guest host call.
"""


class WasiSnError(Exception):
    code = -15


# sensor errors

class SensorError(WasiSnError):
    pass


class NotFound(SensorError):
    code = -1


class Busy(SensorError):
    code = -2


class BadEncoding(SensorError):
    code = -3


class OutOfRange(SensorError):
    code = -4


class SensorNotAlive(SensorError):
    code = -8


class SensorStopped(SensorNotAlive):
    pass


class SensorSleeping(SensorNotAlive):
    pass


class BufferTooSmall(SensorError):
    code = -9


class ReadOnly(SensorError):
    code = -14


class IllegalTransition(SensorError):
    pass


# network errors

class MqttSnError(WasiSnError):
    pass


class MalformedMessage(MqttSnError):
    code = -3


class BindError(MqttSnError):
    code = -11


class AlreadyStarted(MqttSnError):
    code = -11


class NotStarted(MqttSnError):
    code = -6


class Timeout(MqttSnError):
    code = -5


class Refused(MqttSnError):
    code = -10


class NotConnected(MqttSnError):
    code = -6


class SessionLost(NotConnected):
    pass


class UnknownTopicId(MqttSnError):
    code = -12


class NoSuchSubscription(MqttSnError):
    code = -1


class Empty(MqttSnError):
    code = -7


class RegistryFull(MqttSnError):
    code = -10


class WildcardInName(MqttSnError):
    code = -3


# crypto errors

class CryptoError(WasiSnError):
    pass


class BadPattern(CryptoError):
    pass


class NotDelegable(CryptoError):
    pass


class MissingFreeSlot(CryptoError):
    pass


class CannotDecrypt(CryptoError):
    pass


class AuthenticationFailure(CryptoError):
    pass


class SerializationError(CryptoError):
    pass


# access-control errors

class AccessError(WasiSnError):
    pass


class ParseError(AccessError):
    code = -3


class TooDeep(AccessError):
    pass


class UnsealFailure(AccessError):
    pass


class PolicyDeny(AccessError):
    code = -13


class BadSignature(AccessError):
    pass


class UnknownAuthor(AccessError):
    pass


class UnknownLeaf(AccessError):
    pass


# host errors

class HostError(WasiSnError):
    pass


class PermissionDenied(HostError):
    code = -13


class LifecycleError(HostError):
    pass


class GuestTrap(HostError):
    """Raised by a host function to abort the guest with a trap."""
