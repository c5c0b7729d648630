import pytest
from fastapi.testclient import TestClient

from rerank_service import create_app


@pytest.fixture()
def app():
    # auto_load off so readiness gating is observable
    return create_app(auto_load=False)


@pytest.fixture()
def client(app):
    with TestClient(app) as client:
        yield client


@pytest.fixture()
def ready_client(app):
    app.state.service.load()
    with TestClient(app) as client:
        yield client
