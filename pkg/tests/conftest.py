import pytest

from wasisn.clock import SimClock
from wasisn.gateway import Gateway, GatewayConfig
from wasisn.mqttsn import ClientConfig, MqttSnClient, SimNetwork


class Bed:
    """A simulated network with one gateway and helper constructors."""

    def __init__(self, seed=0, loss=0.0, gateway_config=None):
        self.clock = SimClock()
        self.net = SimNetwork(self.clock, seed=seed, loss=loss)
        self.gateway = Gateway(self.net, "gateway", 47193, gateway_config or GatewayConfig()).start()

    def client(self, host, client_id=None, config=None, keep_alive=30):
        c = MqttSnClient(self.net, host, config or ClientConfig())
        c.start(0)
        if client_id is not None:
            c.connect(client_id, keep_alive, "gateway", 47193)
        return c

    def settle(self, seconds=1):
        # keep-alive timers never let the network go idle; run a bounded window instead
        self.net.run_for(int(seconds * 1_000_000_000))

    def types(self, src=None, dst=None, delivered=False):
        return [
            d.data[1] if d.data[0] != 1 else d.data[3]
            for d in self.net.sent(src, dst)
            if not delivered or not d.dropped
        ]


@pytest.fixture
def bed():
    return Bed()


# acceptance criteria report: one line per criterion at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
