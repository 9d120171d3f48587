"""
Integration tests for API endpoints
"""
import json

import pytest
from fastapi.testclient import TestClient
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker
from sqlalchemy.pool import StaticPool

from backend.app.main import app
from backend.app.models import Base
from backend.app.services.database import get_db


class TestAPIEndpoints:
    """Test cases for API endpoints"""

    @pytest.fixture
    def client(self):
        """Create a test client backed by an in-memory database"""
        engine = create_engine(
            "sqlite:///:memory:", connect_args={"check_same_thread": False}, poolclass=StaticPool
        )
        Base.metadata.create_all(engine)
        TestingSessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)

        def override_get_db():
            db = TestingSessionLocal()
            try:
                yield db
            finally:
                db.close()

        app.dependency_overrides[get_db] = override_get_db
        yield TestClient(app)
        app.dependency_overrides.clear()

    def test_bounds_endpoint(self, client):
        """Test the rate-only local bound"""
        response = client.get("/bounds", params={"regime": "local", "K": 2, "T": 10_000, "epsilon": 1.0, "constant": "rate-only"})
        assert response.status_code == 200
        data = response.json()
        assert data["value"] == pytest.approx(29.0988, abs=1e-4)
        assert data["regime"] == "local"

    def test_bounds_local_problem_dependent(self, client):
        """Test the per-log-T coefficient from comma-separated means"""
        response = client.get(
            "/bounds", params={"regime": "local-problem-dep", "T": 10_000, "epsilon": 1.0, "means": "0.75,0.5"}
        )
        assert response.status_code == 200
        data = response.json()
        assert data["coefficient"] == pytest.approx(0.073582, rel=1e-4)
        assert data["threshold"] == pytest.approx(0.084670, rel=1e-4)

    def test_bounds_bad_means(self, client):
        """Test that unparseable means name the field"""
        response = client.get(
            "/bounds", params={"regime": "local-problem-dep", "T": 100, "epsilon": 1.0, "means": "high,low"}
        )
        assert response.status_code == 422
        assert response.json()["detail"]["field"] == "means"

    def test_bounds_instantaneous_default_constant(self, client):
        """Test that the instantaneous bound defaults to rate-only"""
        response = client.get("/bounds", params={"regime": "instantaneous", "T": 10_000, "epsilon": 1.0})
        assert response.status_code == 200
        assert response.json()["constant_mode"] == "rate-only"

    def test_bounds_missing_horizon(self, client):
        """Test that T is required"""
        response = client.get("/bounds", params={"regime": "local", "epsilon": 1.0})
        assert response.status_code == 422

    def test_bounds_domain_error(self, client):
        """Test that a library error maps to 422 with its class name"""
        response = client.get("/bounds", params={"regime": "dp", "T": 100})
        assert response.status_code == 422
        assert response.json()["detail"]["error"] == "DomainError"

    def test_audit_endpoint(self, client):
        """Test a pan-privacy audit of the softmax policy"""
        response = client.post(
            "/audit",
            json={"definition": "pan-dp", "policy": {"kind": "softmax-empirical-mean", "beta": 5.0}, "K": 2, "T": 2},
        )
        assert response.status_code == 200
        data = response.json()
        assert data["epsilon_measured"] == pytest.approx(2.5, abs=1e-12)
        assert data["verdict"] == "PASS"

    def test_audit_identity_is_infinite(self, client):
        """Test that an unbounded epsilon is sent as Infinity"""
        response = client.post("/audit", json={"definition": "local-mechanism", "mechanism": {"kind": "identity"}})
        assert response.status_code == 200
        assert "Infinity" in response.text
        assert json.loads(response.text)["epsilon_measured"] == float("inf")

    def test_audit_missing_environments(self, client):
        """Test that the environment audit names the missing field"""
        response = client.post("/audit", json={"definition": "environment", "policy": {"kind": "uniform"}})
        assert response.status_code == 422
        detail = response.json()["detail"]
        assert detail["error"] == "ConfigError"
        assert detail["field"] == "environments"

    def test_audit_sampling_only_policy(self, client):
        """Test that auditing UCB1 is refused"""
        response = client.post("/audit", json={"definition": "pan-dp", "policy": {"kind": "ucb1"}})
        assert response.status_code == 422
        assert response.json()["detail"]["error"] == "CapabilityError"

    def test_verify_endpoint(self, client):
        """Test a small Pinsker sweep"""
        response = client.post("/verify/pinsker", json={"samples": 50})
        assert response.status_code == 200
        data = response.json()
        assert data["verdict"] == "PASS"
        assert data["cells"] == 50

    def test_verify_unknown_lemma(self, client):
        """Test that an unknown lemma id is rejected"""
        response = client.post("/verify/7")
        assert response.status_code == 422

    def test_simulate_endpoint(self, client):
        """Test a small simulation"""
        config = {
            "policy": {"kind": "ucb1"},
            "environment": {"bernoulli": [0.9, 0.5]},
            "horizon": 50,
            "replications": 2,
            "seed": 1,
        }
        response = client.post("/simulate", json=config)
        assert response.status_code == 200
        data = response.json()
        assert data["t"][-1] == 50
        assert len(data["curves"]) == 1

    def test_simulate_rejects_output_path(self, client):
        """Test that file output is CLI-only"""
        config = {
            "policy": {"kind": "uniform"},
            "environment": {"bernoulli": [0.5, 0.5]},
            "horizon": 5,
            "output": "results/run.csv",
        }
        response = client.post("/simulate", json=config)
        assert response.status_code == 422

    def test_simulate_rejects_large_jobs(self, client):
        """Test the step cap on API simulations"""
        config = {
            "policy": {"kind": "uniform"},
            "environment": {"bernoulli": [0.5, 0.5]},
            "horizon": 1_000_000,
            "replications": 10,
        }
        response = client.post("/simulate", json=config)
        assert response.status_code == 422

    def test_history_endpoint(self, client):
        """Test that runs are recorded newest first and filtered by kind"""
        client.get("/bounds", params={"regime": "nonprivate-minimax", "T": 100})
        client.post("/verify/pinsker", json={"samples": 10})

        response = client.get("/history")
        assert response.status_code == 200
        data = response.json()
        assert [run["kind"] for run in data] == ["verify", "bounds"]

        response = client.get("/history", params={"kind": "bounds"})
        assert [run["kind"] for run in response.json()] == ["bounds"]

    def test_history_limit_bounds(self, client):
        """Test that the history limit is validated"""
        response = client.get("/history", params={"limit": 0})
        assert response.status_code == 422
