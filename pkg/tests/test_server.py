import numpy as np
from fastapi.testclient import TestClient

from app.core import Expression
from app.server.main import app
from app.tools.embedder import embed_hash

client = TestClient(app)


def test_health():
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json()["status"] == "ok"


def test_embed_matches_local_hash():
    response = client.post("/embed", json={"text": "red circle on the left"})
    assert response.status_code == 200
    values = response.json()["embedding"]
    expected = embed_hash(Expression("red circle on the left"), len(values))
    assert np.allclose(values, expected)


def test_blank_text_is_rejected():
    assert client.post("/embed", json={"text": ""}).status_code == 422
    assert client.post("/embed", json={"text": "   "}).status_code == 422
    assert client.post("/embed", json={}).status_code == 422
