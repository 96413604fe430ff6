import pytest

from covertmail import client_sim


def norm_ws(text: str) -> str:
    return " ".join(text.split())


@pytest.fixture(scope="session")
def profiles():
    return {name: client_sim.load_profile(name) for name in client_sim.list_profiles()}
