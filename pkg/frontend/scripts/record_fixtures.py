"""Record real service responses as JSON fixtures for the console's
contract tests. Run from the repo root after installing the package:

    python frontend/scripts/record_fixtures.py
"""

import json
from pathlib import Path

from fastapi.testclient import TestClient

from aps.service import create_app

OUT = Path(__file__).resolve().parent.parent / "test" / "fixtures"

CREATE = {
    "budget": 1200,
    "name": "demo",
    "categories": [
        {"name": "urban", "weight": 0.65, "theta": 0.003},
        {"name": "rural", "weight": 0.35},
    ],
    "theta0": 0.0015,
}

BATCH = {"counts": [
    {"category": "urban", "samples": 150, "positives": 9},
    {"category": "rural", "samples": 50, "positives": 2},
]}


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    app = create_app(None)
    client = TestClient(app)

    created = client.post("/sessions", json=CREATE).json()
    sid = created["id"]
    after_batch = client.post(f"/sessions/{sid}/batches", json=BATCH).json()
    session_view = client.get(f"/sessions/{sid}").json()
    recommendation = client.get(f"/sessions/{sid}/recommendation?b=120").json()
    whatif_edit = client.post(f"/sessions/{sid}/whatif", json={
        "b": 120, "theta": {"rural": 0.0001}}).json()
    whatif_noop = client.post(f"/sessions/{sid}/whatif", json={"b": 120}).json()
    error_unknown = client.post(f"/sessions/{sid}/whatif", json={
        "b": 120, "theta": {"nowhere": 0.1}}).json()

    for name, payload in [
        ("created.json", created),
        ("after_batch.json", after_batch),
        ("session_view.json", session_view),
        ("recommendation.json", recommendation),
        ("whatif_edit.json", whatif_edit),
        ("whatif_noop.json", whatif_noop),
        ("error_unknown_category.json", error_unknown),
    ]:
        (OUT / name).write_text(json.dumps(payload, indent=2, sort_keys=True)
                                + "\n", encoding="utf-8")
        print("wrote", OUT / name)


if __name__ == "__main__":
    main()
