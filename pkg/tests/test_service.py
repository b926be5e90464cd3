import time

import pytest
from fastapi.testclient import TestClient

from slotmac.service import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def exp(**kw):
    base = dict(policy="oracle", n_queues=3, rate=0.1, horizon=5_000,
                warmup=500, seed=1)
    base.update(kw)
    return base


class TestHealthAndAnalysis:
    def test_healthz(self, client):
        body = client.get("/healthz").json()
        assert body["status"] == "ok"

    def test_gxd1_endpoint(self, client):
        body = client.get("/analysis/gxd1", params={"n": 10, "lam": 0.05}).json()
        assert body["mean_delay"] == pytest.approx(1.45)
        assert client.get("/analysis/gxd1", params={"n": 10, "lam": 0.2}).status_code == 400

    def test_capacity_endpoint(self, client):
        body = client.post("/analysis/capacity",
                           json={"rates": [0.3, 0.0]}).json()
        assert body == {"load": 0.3, "interior": True, "in_leq_region": False}
        bad = client.post("/analysis/capacity",
                          json={"rates": [0.3], "fading": [0.0]})
        assert bad.status_code == 400

    def test_fairness_endpoint(self, client):
        body = client.post("/analysis/fairness", json={"shares": [1, 1, 1, 1]}).json()
        assert body["jain_index"] == pytest.approx(1.0)


class TestValidateEndpoint:
    def test_valid_config(self, client):
        assert client.post("/experiments/validate", json=exp()).json()["valid"]

    def test_issues_are_itemised(self, client):
        bad = exp(policy="ezmac", rate=1.5, horizon=10, warmup=20,
                  layout={"t_p": 1})
        report = client.post("/experiments/validate", json=bad).json()
        assert not report["valid"]
        msgs = [i["message"] for i in report["issues"]]
        assert any("arrival rate" in m for m in msgs)
        assert any("horizon" in m for m in msgs)
        assert any("t_p" in m for m in msgs)


class TestRunEndpoints:
    def test_run_experiment(self, client):
        body = client.post("/experiments/run", json=exp()).json()
        assert body["record"]["mean_delay"] > 1.0
        assert body["record"]["zeta"] == pytest.approx(1.0)

    def test_run_rejects_invalid(self, client):
        assert client.post("/experiments/run",
                           json=exp(rate=2.0)).status_code == 422

    def test_sweep(self, client):
        sweep = {"base": exp(), "axes": [{"param": "rate", "values": [0.05, 0.1]}]}
        body = client.post("/sweeps/run", json={"sweep": sweep, "workers": 1}).json()
        assert len(body["records"]) == 2
        assert body["csv"].splitlines()[0].startswith("scenario_id,")

    def test_recipes_listing_and_unknown(self, client):
        names = client.get("/recipes").json()["recipes"]
        assert "delay_protocols_n10" in names
        assert client.post("/recipes/none/run").status_code == 404

    def test_determinism_across_transport(self, client):
        one = client.post("/experiments/run", json=exp()).json()["record"]
        two = client.post("/experiments/run", json=exp()).json()["record"]
        assert one == two


class TestJobs:
    def _wait(self, client, job_id, timeout=20.0):
        deadline = time.time() + timeout
        while time.time() < deadline:
            st = client.get(f"/jobs/{job_id}").json()
            if st["state"] in ("done", "failed"):
                return st
            time.sleep(0.05)
        pytest.fail("job did not finish")

    def test_run_job_lifecycle(self, client):
        sub = client.post("/jobs", json={"kind": "run", "experiment": exp()}).json()
        st = self._wait(client, sub["job_id"])
        assert st["state"] == "done"
        res = client.get(f"/jobs/{sub['job_id']}/result").json()
        assert res["records"][0]["mean_delay"] > 1.0

    def test_sweep_job(self, client):
        sweep = {"base": exp(), "axes": [{"param": "rate", "values": [0.05, 0.1]}]}
        sub = client.post("/jobs", json={"kind": "sweep", "sweep": sweep}).json()
        st = self._wait(client, sub["job_id"])
        assert st["state"] == "done"
        res = client.get(f"/jobs/{sub['job_id']}/result").json()
        assert len(res["records"]) == 2

    def test_failed_recipe_job(self, client):
        sub = client.post("/jobs", json={"kind": "recipe", "recipe": "nope"}).json()
        st = self._wait(client, sub["job_id"])
        assert st["state"] == "failed"

    def test_unknown_job(self, client):
        assert client.get("/jobs/deadbeef").status_code == 404
