import pytest

from sar_gateway.config import GatewayConfig
from sar_gateway.fixtures import build_fixtures
from sar_gateway.gateway import Gateway


@pytest.fixture(scope="session")
def assets(tmp_path_factory):
    """The bundled demo assets, built once per test run."""
    return build_fixtures(tmp_path_factory.mktemp("assets"))


@pytest.fixture
def make_gateway(tmp_path, assets):
    """Factory for started gateways on ephemeral ports; stops them at teardown."""
    started = []
    counter = 0

    def factory(clock=None, backend=None, **overrides):
        nonlocal counter
        params = dict(
            robot_port=0,
            http_port=0,
            data_dir=str(tmp_path / f"gw{counter}"),
            manifest_path=str(assets["manifest"]),
        )
        counter += 1
        params.update(overrides)
        gateway = Gateway(GatewayConfig(**params), clock=clock, backend=backend)
        gateway.start()
        started.append(gateway)
        return gateway

    yield factory
    for gateway in started:
        gateway.stop()
