"""HTTP serving layer: read-only recommendation endpoints over a pipeline
bundle snapshot loaded at startup."""
from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .cohort import SPLIT_FEATURES
from .evaluate import GtmSet
from .pipeline import bundle_digest, import_bundle, recommend


class RecommendRequest(BaseModel):
    group: str
    features: dict[str, float]
    sex: str | None = None
    race: str | None = None


_RANGES = {
    "hba1c_last": (3.0, 20.0),
    "hba1c_p25": (3.0, 20.0),
    "hba1c_median": (3.0, 20.0),
    "hba1c_mean": (3.0, 20.0),
    "hba1c_p75": (3.0, 20.0),
    "bmi_last": (10.0, 80.0),
    "bmi_p25": (10.0, 80.0),
    "bmi_median": (10.0, 80.0),
    "bmi_mean": (10.0, 80.0),
    "bmi_p75": (10.0, 80.0),
}


def validate_features(features: dict) -> list[dict]:
    """Field-level validation mirroring the visit invariants."""
    errors = []
    for name in SPLIT_FEATURES:
        if name not in features:
            errors.append({"field": f"features.{name}", "message": "required"})
    if errors:
        return errors
    for name, (lo, hi) in _RANGES.items():
        v = features[name]
        if not lo < v < hi:
            errors.append(
                {"field": f"features.{name}", "message": f"must be in ({lo}, {hi})"}
            )
    if not features["age"] > 0:
        errors.append({"field": "features.age", "message": "must be positive"})
    if features["kidney_contraindication"] not in (0.0, 1.0):
        errors.append(
            {"field": "features.kidney_contraindication", "message": "must be 0 or 1"}
        )
    for stem in ("hba1c", "bmi"):
        p25 = features[f"{stem}_p25"]
        med = features[f"{stem}_median"]
        p75 = features[f"{stem}_p75"]
        if not p25 <= med <= p75:
            errors.append(
                {
                    "field": f"features.{stem}_median",
                    "message": f"{stem} quantiles must satisfy p25 <= median <= p75",
                }
            )
    return errors


def create_app(bundle: dict, gtms: GtmSet | None = None) -> FastAPI:
    pipelines = import_bundle(bundle)
    digest = bundle_digest(bundle)
    app = FastAPI(title="t2dpolicy", docs_url=None, redoc_url=None)
    # read-only, unauthenticated service; let the what-if page call it from
    # any origin
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"])

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        errors = [
            {"field": ".".join(str(p) for p in e["loc"] if p != "body"), "message": e["msg"]}
            for e in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"errors": errors})

    @app.get("/health")
    async def health():
        return {
            "status": "ok",
            "pipelines_digest": digest,
            "gtm_pairs": len(gtms.models) if gtms is not None else 0,
        }

    @app.get("/pipelines")
    async def get_pipelines():
        return {"digest": digest, **bundle}

    @app.post("/recommend")
    async def post_recommend(body: RecommendRequest):
        if body.group not in pipelines:
            return JSONResponse(
                status_code=404, content={"detail": f"unknown group {body.group!r}"}
            )
        errors = validate_features(body.features)
        if errors:
            return JSONResponse(status_code=400, content={"errors": errors})
        action, trace = recommend(pipelines[body.group], body.features)
        predicted = None
        if gtms is not None and gtms.get(body.group, action) is not None:
            features = dict(body.features)
            features["sex"] = body.sex
            features["race"] = body.race
            predicted = gtms.predict_reduction(body.group, action, features)
        return {
            "group": body.group,
            "recommendation": action,
            "trace": trace.to_json(),
            "predicted_reduction": predicted,
            "pipelines_digest": digest,
        }

    return app
