import pytest

from sensorhub.hub import Hub

from tests_shared import START_MS


class FakeClock:
    def __init__(self, now_ms: int = START_MS):
        self.now_ms = now_ms

    def __call__(self) -> int:
        return self.now_ms

    def advance(self, ms: int) -> int:
        self.now_ms += ms
        return self.now_ms


@pytest.fixture
def clock():
    return FakeClock()


@pytest.fixture
def hub(tmp_path, clock):
    h = Hub(tmp_path / "hub", clock=clock)
    yield h
    h.close()


@pytest.fixture
def household(hub):
    """owner + resident + guest, ready for permission tests."""
    owner = hub.create_principal("alice", "owner", "owner-secret")
    resident = hub.create_principal("bob", "resident", "resident-secret", principal_id=owner.id)
    guest = hub.create_principal("gina", "guest", "guest-secret", principal_id=owner.id)
    return {"owner": owner, "resident": resident, "guest": guest}
