from __future__ import annotations

import numpy as np
import pytest
from fastapi.testclient import TestClient

from mialkit.data import (SyntheticConfig, generate_synthetic, load_dataset,
                          save_dataset, split_train_test)
from mialkit.loop import SessionConfig, oracle_answer, run_session
from mialkit.service import create_app
from mialkit.svm import KernelSpec

THREE_BAG_CSV = """\
bag_id,bag_label,instance_label,f0,f1
pos_a,1,1,0.1,0.2
pos_a,1,-1,2.0,2.0
pos_b,1,1,0.3,0.1
neg_a,-1,-1,2.2,2.1
neg_a,-1,-1,2.4,1.9
"""

HUMAN_CSV = """\
bag_id,bag_label,instance_label,f0,f1
p0,1,?,0.0,0.0
p0,1,?,1.9,2.1
n0,-1,?,2.0,2.0
n0,-1,?,2.2,1.8
"""


@pytest.fixture
def service(tmp_path):
    data_dir = tmp_path / "data"
    data_dir.mkdir()
    (data_dir / "threebags.csv").write_text(THREE_BAG_CSV, encoding="utf-8")
    (data_dir / "human.csv").write_text(HUMAN_CSV, encoding="utf-8")
    ds = generate_synthetic(SyntheticConfig(bags=12, positive_bag_fraction=0.5,
                                            instances_per_bag=(2, 3), seed=2))
    save_dataset(ds, data_dir / "synth.csv")
    state_dir = tmp_path / "state"
    app = create_app(data_dir, state_dir)
    return TestClient(app), tmp_path


def create_session(client, dataset="threebags", strategy="agin", config=None):
    body = {"dataset": dataset, "strategy": strategy}
    if config:
        body["config"] = config
    response = client.post("/sessions", json=body)
    assert response.status_code == 200, response.text
    return response.json()


class TestDiscovery:
    def test_capabilities(self, service):
        client, _ = service
        caps = client.get("/capabilities").json()
        assert set(caps["strategies"]) == {"random", "simple-margin", "agin", "cbas"}

    def test_datasets_listing(self, service):
        client, _ = service
        listing = client.get("/datasets").json()["datasets"]
        names = {d["name"] for d in listing}
        assert names == {"threebags", "human", "synth"}
        three = next(d for d in listing if d["name"] == "threebags")
        assert three["bags"] == 3
        assert three["positive_bags"] == 2
        assert three["labels_known"] is True
        human = next(d for d in listing if d["name"] == "human")
        assert human["labels_known"] is False


class TestSessionLifecycle:
    def test_create_reports_remaining(self, service):
        client, _ = service
        summary = create_session(client)
        assert summary["status"] == "awaiting-labels"
        assert summary["remaining_queries"] == 2
        assert summary["pending_bag_id"] in ("pos_a", "pos_b")

    def test_sessions_independent(self, service):
        client, _ = service
        a = create_session(client)
        b = create_session(client)
        assert a["id"] != b["id"]
        bag = client.get(f"/sessions/{a['id']}/query").json()["bag_id"]
        client.post(f"/sessions/{a['id']}/labels", json={"bag_id": bag, "labels": [1, -1] if bag == "pos_a" else [1]})
        assert client.get(f"/sessions/{b['id']}").json()["queried"] == 0

    def test_query_idempotent(self, service):
        client, _ = service
        sid = create_session(client)["id"]
        first = client.get(f"/sessions/{sid}/query").json()
        second = client.get(f"/sessions/{sid}/query").json()
        assert first == second
        assert len(first["features"]) == first["instance_count"]
        assert len(first["scores"]) == first["instance_count"]

    def test_unknown_session_and_dataset(self, service):
        client, _ = service
        assert client.get("/sessions/nope").status_code == 404
        response = client.post("/sessions", json={"dataset": "nope", "strategy": "agin"})
        assert response.status_code == 404

    def test_bad_strategy_rejected(self, service):
        client, _ = service
        response = client.post("/sessions", json={"dataset": "threebags", "strategy": "qbc"})
        assert response.status_code == 400
        body = response.json()
        assert set(body) == {"code", "message"}

    def test_full_session_to_finished(self, service):
        client, _ = service
        truth = {"pos_a": [1, -1], "pos_b": [1]}
        sid = create_session(client)["id"]
        for _ in range(2):
            bag = client.get(f"/sessions/{sid}/query").json()["bag_id"]
            out = client.post(f"/sessions/{sid}/labels",
                              json={"bag_id": bag, "labels": truth[bag]}).json()
        assert out["status"] == "finished"
        assert client.get(f"/sessions/{sid}/query").status_code == 409
        curves = client.get(f"/sessions/{sid}/curves").json()
        assert curves["queries"] == 2
        assert len(curves["series"]["f1_train"]) == 3


class TestSubmissionErrors:
    def test_out_of_order_submission(self, service):
        client, _ = service
        sid = create_session(client)["id"]
        pending = client.get(f"/sessions/{sid}/query").json()["bag_id"]
        other = "pos_b" if pending == "pos_a" else "pos_a"
        labels = [1] if other == "pos_b" else [1, -1]
        response = client.post(f"/sessions/{sid}/labels",
                               json={"bag_id": other, "labels": labels})
        assert response.status_code == 409
        assert response.json()["code"] == "out-of-order"

    def test_duplicate_submission(self, service):
        client, _ = service
        truth = {"pos_a": [1, -1], "pos_b": [1]}
        sid = create_session(client)["id"]
        bag = client.get(f"/sessions/{sid}/query").json()["bag_id"]
        client.post(f"/sessions/{sid}/labels", json={"bag_id": bag, "labels": truth[bag]})
        response = client.post(f"/sessions/{sid}/labels",
                               json={"bag_id": bag, "labels": truth[bag]})
        assert response.status_code == 409
        assert response.json()["code"] == "already-queried"

    def test_count_mismatch(self, service):
        client, _ = service
        sid = create_session(client)["id"]
        bag = client.get(f"/sessions/{sid}/query").json()["bag_id"]
        response = client.post(f"/sessions/{sid}/labels",
                               json={"bag_id": bag, "labels": [1, -1, 1, 1]})
        assert response.status_code == 400
        assert response.json()["code"] == "label-count"

    def test_label_values_checked(self, service):
        client, _ = service
        sid = create_session(client)["id"]
        bag = client.get(f"/sessions/{sid}/query").json()["bag_id"]
        n = client.get(f"/sessions/{sid}/query").json()["instance_count"]
        response = client.post(f"/sessions/{sid}/labels",
                               json={"bag_id": bag, "labels": [0] * n})
        assert response.status_code == 400

    def test_consistency_rejection_and_override(self, service):
        client, _ = service
        sid = create_session(client)["id"]
        query = client.get(f"/sessions/{sid}/query").json()
        all_negative = [-1] * query["instance_count"]
        response = client.post(f"/sessions/{sid}/labels",
                               json={"bag_id": query["bag_id"], "labels": all_negative})
        assert response.status_code == 400
        assert response.json()["code"] == "assumption-violation"
        # the draft was rejected, the query is unchanged
        assert client.get(f"/sessions/{sid}/query").json()["bag_id"] == query["bag_id"]

        relaxed = create_session(client, config={"allow_assumption_violations": True})
        rid = relaxed["id"]
        q2 = client.get(f"/sessions/{rid}/query").json()
        ok = client.post(f"/sessions/{rid}/labels",
                         json={"bag_id": q2["bag_id"], "labels": [-1] * q2["instance_count"]})
        assert ok.status_code == 200


class TestHumanMode:
    def test_curves_omitted_without_truth(self, service):
        client, _ = service
        sid = create_session(client, dataset="human")["id"]
        bag = client.get(f"/sessions/{sid}/query").json()["bag_id"]
        out = client.post(f"/sessions/{sid}/labels",
                          json={"bag_id": bag, "labels": [1, -1]}).json()
        assert out["status"] == "finished"
        assert out["curve_point"] is None
        assert client.get(f"/sessions/{sid}/curves").json()["series"] == {}


class TestReplay:
    def test_event_log_reconstructs_state(self, service):
        client, tmp_path = service
        sid = create_session(client, dataset="synth", strategy="cbas",
                             config={"seed": 9})["id"]
        for _ in range(2):
            query = client.get(f"/sessions/{sid}/query").json()
            ds = load_dataset(tmp_path / "data" / "synth.csv")
            labels = oracle_answer(ds, query["bag_id"]).tolist()
            client.post(f"/sessions/{sid}/labels", json={"bag_id": query["bag_id"], "labels": labels})
        before_summary = client.get(f"/sessions/{sid}").json()
        before_curves = client.get(f"/sessions/{sid}/curves").json()

        reborn = TestClient(create_app(tmp_path / "data", tmp_path / "state"))
        assert reborn.get(f"/sessions/{sid}").json() == before_summary
        assert reborn.get(f"/sessions/{sid}/curves").json() == before_curves


class TestScriptedOracleEquivalence:
    @pytest.mark.parametrize("strategy", ["agin", "random", "cbas"])
    def test_service_matches_simulated_session(self, service, strategy):
        client, tmp_path = service
        full = generate_synthetic(SyntheticConfig(bags=15, positive_bag_fraction=0.4,
                                                  instances_per_bag=(2, 4), seed=31))
        train, _ = split_train_test(full, 2.0 / 3.0, seed=8)
        save_dataset(train, tmp_path / "data" / "trainsplit.csv")
        reborn = TestClient(create_app(tmp_path / "data", tmp_path / "state2"))

        config = {"kernel": "rbf", "gamma": 0.8, "base_cost": 5.0, "seed": 77}
        sid = create_session(reborn, dataset="trainsplit", strategy=strategy, config=config)["id"]
        queried = []
        while True:
            summary = reborn.get(f"/sessions/{sid}").json()
            if summary["status"] == "finished":
                break
            bag = reborn.get(f"/sessions/{sid}/query").json()["bag_id"]
            labels = oracle_answer(train, bag).tolist()
            reborn.post(f"/sessions/{sid}/labels", json={"bag_id": bag, "labels": labels})
            queried.append(bag)

        reference = run_session(train, None, SessionConfig(
            strategy=strategy, kernel=KernelSpec("rbf", 0.8), base_cost=5.0, seed=77))
        assert tuple(queried) == reference.query_log
        assert np.array_equal(reference.query_state.labels, train.instance_true_labels)
        store = reborn.app.state.store
        assert np.array_equal(store.sessions[sid].runner.state.labels,
                              train.instance_true_labels)
