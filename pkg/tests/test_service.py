"""HTTP API over the engine."""

from __future__ import annotations

import time

import pytest
from fastapi.testclient import TestClient

from bioquery.fixtures import EXAMPLE_QUERY
from bioquery.service import create_app


@pytest.fixture()
def client(engine):
    return TestClient(create_app(engine))


def wait_for_state(client, run_id, states, timeout=60.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        body = client.get(f"/api/v1/runs/{run_id}").json()
        if body["state"] in states:
            return body
        time.sleep(0.02)
    raise TimeoutError(f"run never reached {states}")


class TestBasics:
    def test_health(self, client):
        body = client.get("/api/v1/health").json()
        assert body["status"] == "ok"
        assert body["corpus_size"] > 0

    def test_examples_dropdown(self, client):
        body = client.get("/api/v1/examples").json()
        assert EXAMPLE_QUERY in body["examples"]

    def test_unknown_run_404(self, client):
        assert client.get("/api/v1/runs/nope").status_code == 404

    def test_bad_mode_rejected(self, client):
        resp = client.post("/api/v1/runs", json={"query": "x", "mode": "warp"})
        assert resp.status_code == 400

    def test_empty_query_rejected(self, client):
        resp = client.post("/api/v1/runs", json={"query": "", "mode": "auto"})
        assert resp.status_code == 422


class TestAutoFlow:
    def test_create_poll_result(self, client):
        created = client.post(
            "/api/v1/runs", json={"query": EXAMPLE_QUERY, "mode": "auto"}
        )
        assert created.status_code == 201
        run_id = created.json()["id"]
        body = wait_for_state(client, run_id, {"done", "failed"})
        assert body["state"] == "done", body["error"]

        steps = client.get(f"/api/v1/runs/{run_id}/steps").json()["steps"]
        stages = [s["stage"] for s in steps]
        assert "query_processed" in stages and "plan_executed" in stages

        csv = client.get(f"/api/v1/runs/{run_id}/result", params={"format": "csv"})
        assert csv.status_code == 200
        assert csv.text.startswith("GeneSymbol,")

        tsv = client.get(f"/api/v1/runs/{run_id}/result", params={"format": "tsv"})
        assert "\t" in tsv.text

        structured = client.get(f"/api/v1/runs/{run_id}/result").json()
        assert structured["columns"][0]["name"] == "GeneSymbol"
        assert len(structured["rows"]) == 2

    def test_result_conflict_while_running(self, client):
        run_id = client.post(
            "/api/v1/runs", json={"query": EXAMPLE_QUERY, "mode": "guided"}
        ).json()["id"]
        wait_for_state(client, run_id, {"awaiting_choice"})
        assert client.get(f"/api/v1/runs/{run_id}/result").status_code == 409

    def test_unknown_format_rejected(self, client):
        run_id = client.post(
            "/api/v1/runs", json={"query": EXAMPLE_QUERY, "mode": "auto"}
        ).json()["id"]
        wait_for_state(client, run_id, {"done"})
        resp = client.get(f"/api/v1/runs/{run_id}/result", params={"format": "xml"})
        assert resp.status_code == 400


class TestGuidedFlow:
    def test_choice_cycle(self, client):
        run_id = client.post(
            "/api/v1/runs", json={"query": EXAMPLE_QUERY, "mode": "guided"}
        ).json()["id"]
        wait_for_state(client, run_id, {"awaiting_choice"})

        choice = client.get(f"/api/v1/runs/{run_id}/choice").json()["choice"]
        assert choice["choice_kind"] == "source"
        assert choice["multi"] is True
        assert choice["options"]

        # select all offered sources
        resp = client.post(
            f"/api/v1/runs/{run_id}/choice",
            json={"option_ids": [o["id"] for o in choice["options"]]},
        )
        assert resp.status_code == 200

        # then answer each link choice until done
        for _ in range(8):
            body = wait_for_state(client, run_id, {"awaiting_choice", "done", "failed"})
            if body["state"] != "awaiting_choice":
                break
            link_choice = client.get(f"/api/v1/runs/{run_id}/choice").json()["choice"]
            assert link_choice["choice_kind"] == "link"
            client.post(
                f"/api/v1/runs/{run_id}/choice",
                json={"option_id": link_choice["options"][0]["id"]},
            )
        body = wait_for_state(client, run_id, {"done", "failed"})
        assert body["state"] == "done", body["error"]

    def test_invalid_choice_conflict(self, client):
        run_id = client.post(
            "/api/v1/runs", json={"query": EXAMPLE_QUERY, "mode": "guided"}
        ).json()["id"]
        wait_for_state(client, run_id, {"awaiting_choice"})
        resp = client.post(
            f"/api/v1/runs/{run_id}/choice", json={"option_id": "c9o9"}
        )
        assert resp.status_code == 409

    def test_choice_on_auto_run_conflict(self, client):
        run_id = client.post(
            "/api/v1/runs", json={"query": EXAMPLE_QUERY, "mode": "auto"}
        ).json()["id"]
        wait_for_state(client, run_id, {"done"})
        resp = client.post(
            f"/api/v1/runs/{run_id}/choice", json={"option_id": "zzz"}
        )
        assert resp.status_code == 409


class TestFollowupEndpoint:
    def test_filter_followup(self, client):
        run_id = client.post(
            "/api/v1/runs", json={"query": EXAMPLE_QUERY, "mode": "auto"}
        ).json()["id"]
        wait_for_state(client, run_id, {"done"})
        created = client.post(
            f"/api/v1/runs/{run_id}/followup",
            json={"followup": "filter GeneSymbol = 'H2AC1'"},
        )
        assert created.status_code == 201
        new_id = created.json()["id"]
        assert created.json()["base_run_id"] == run_id
        body = wait_for_state(client, new_id, {"done", "failed"})
        assert body["state"] == "done"
        rows = client.get(f"/api/v1/runs/{new_id}/result").json()["rows"]
        assert len(rows) == 1


class TestEvaluateEndpoint:
    def test_metrics_report(self, client):
        lines = [
            '{"query_id": "q1", "relevant_doc_id": "a", "ranked": ["a"]}',
            '{"query_id": "q2", "relevant_doc_id": "a", "ranked": ["b", "a"]}',
            '{"query_id": "q3", "relevant_doc_id": "b", "ranked": ["b"]}',
            '{"query_id": "q4", "relevant_doc_id": "b", "ranked": []}',
        ]
        resp = client.post(
            "/api/v1/evaluate", json={"run_lines": lines, "k": 4, "m": 2}
        )
        assert resp.status_code == 200
        body = resp.json()
        assert body["hit_rate"] == 0.75
        assert body["mrr"] == pytest.approx((1 + 0.5 + 1 + 0) / 4)
        assert body["per_doc_findability"]["a"] == pytest.approx(0.75)

    def test_bad_lines_rejected(self, client):
        resp = client.post("/api/v1/evaluate", json={"run_lines": ["{oops"]})
        assert resp.status_code == 400

    def test_runs_listed(self, client):
        run_id = client.post(
            "/api/v1/runs", json={"query": EXAMPLE_QUERY, "mode": "auto"}
        ).json()["id"]
        wait_for_state(client, run_id, {"done"})
        assert run_id in client.get("/api/v1/runs").json()["runs"]


class TestBioflowEndpoint:
    QUERY = (
        "select GeneSymbol, Count from ( with a as ( extract GeneSymbol, Count "
        "using matcher S-match wrapper Web-Prospector from table://a submit a ) ) "
        "where GeneSymbol = 'H2AC1';"
    )
    TABLES = {"table://a": "GeneSymbol,Count\nH2AC1,5\nBRCA1,2\n"}

    def test_structured_result(self, client):
        resp = client.post(
            "/api/v1/bioflow", json={"query": self.QUERY, "tables": self.TABLES}
        )
        assert resp.status_code == 200
        body = resp.json()
        assert body["rows"] == [["H2AC1", 5]]

    def test_csv_negotiation(self, client):
        resp = client.post(
            "/api/v1/bioflow",
            params={"format": "csv"},
            json={"query": self.QUERY, "tables": self.TABLES},
        )
        assert resp.text == "GeneSymbol,Count\nH2AC1,5\n"

    def test_parse_error_400(self, client):
        resp = client.post("/api/v1/bioflow", json={"query": "select ;"})
        assert resp.status_code == 400


class TestStepLogDetail:
    def test_issued_keyword_queries_logged(self, client):
        run_id = client.post(
            "/api/v1/runs", json={"query": EXAMPLE_QUERY, "mode": "auto"}
        ).json()["id"]
        wait_for_state(client, run_id, {"done"})
        steps = client.get(f"/api/v1/runs/{run_id}/steps").json()["steps"]
        ranked = [s for s in steps if s["stage"] == "sources_ranked"][0]
        assert isinstance(ranked["payload"]["keyword_queries"], list)
        assert ranked["payload"]["keyword_queries"]
