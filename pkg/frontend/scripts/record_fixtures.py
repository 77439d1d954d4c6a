"""Record real service responses for the frontend contract tests.

Run from the repository root:

    python frontend/scripts/record_fixtures.py

Starts the FastAPI app in-process with the reference pipelines plus a small
deterministic GTM set, replays every fixture case (the nine canonical ones
and the threshold-boundary pairs), and freezes request/response pairs into
frontend/tests/fixtures/recorded_responses.json.
"""
import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[2]
sys.path.insert(0, str(ROOT / "tests"))

from fastapi.testclient import TestClient

from t2dpolicy.cohort import inclusion_filter
from t2dpolicy.evaluate import train_gtms
from t2dpolicy.forest import ForestParams
from t2dpolicy.pipeline import export_bundle, reference_pipelines
from t2dpolicy.service import create_app
from t2dpolicy.synthgen import GeneratorConfig, generate

from fixture_cases import ALL_CASES


def main() -> None:
    bundle = export_bundle(reference_pipelines())
    cohort, _ = generate(GeneratorConfig(n_visits=4000, seed=42))
    gtms = train_gtms(
        inclusion_filter(cohort), ForestParams(tree_count=30, max_depth=8), seed=42
    )
    client = TestClient(create_app(bundle, gtms))

    pipelines_doc = client.get("/pipelines").json()
    cases = []
    for case in ALL_CASES:
        request = {"group": case["group"], "features": case["features"]}
        response = client.post("/recommend", json=request)
        assert response.status_code == 200, (case["name"], response.json())
        doc = response.json()
        assert doc["recommendation"] == case["expected"], case["name"]
        cases.append(
            {
                "name": case["name"],
                "expected": case["expected"],
                "request": request,
                "response": doc,
            }
        )

    # one invalid request so the error path is covered by recorded data too
    bad_features = dict(ALL_CASES[0]["features"])
    del bad_features["bmi_median"]
    bad = client.post(
        "/recommend", json={"group": "NoMedication", "features": bad_features}
    )
    out = {
        "pipelines": pipelines_doc,
        "cases": cases,
        "invalid_case": {
            "request": {"group": "NoMedication", "features": bad_features},
            "status": bad.status_code,
            "response": bad.json(),
        },
    }
    target = ROOT / "frontend" / "tests" / "fixtures" / "recorded_responses.json"
    target.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    print(f"recorded {len(cases)} cases to {target}")


if __name__ == "__main__":
    main()
