"""HTTP service exposing a trained critic.

POST /predict takes {"question", "context", "answer", "rationale"} and
returns {"label", "score"} (plus "truncated" when the context was cut to
fit the model's input budget); GET /health reports liveness. Malformed
requests get HTTP 400 with field diagnostics.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .model import CriticModel
from .textio import LABELS, render_input, truncate_context


class DocumentPayload(BaseModel):
    doc_id: str
    title: str
    text: str


class TurnPayload(BaseModel):
    query: str
    documents: list[DocumentPayload]


class PredictRequest(BaseModel):
    question: str
    context: list[TurnPayload]
    answer: str
    rationale: str


def create_app(model_dir: str | Path) -> FastAPI:
    model = CriticModel.load(model_dir)
    app = FastAPI(title="critic-service")

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        # the wire contract specifies 400 for malformed requests
        return JSONResponse(
            status_code=400,
            content={"error": "invalid request", "detail": exc.errors()},
        )

    @app.get("/health")
    async def health():
        return {"status": "ok"}

    @app.post("/predict")
    async def predict(request: PredictRequest):
        context = [turn.model_dump() for turn in request.context]
        turns, truncated, overflow = truncate_context(
            request.question, context, request.answer, request.rationale,
            model.max_input_tokens,
        )
        body = render_input(request.question, turns, request.answer, request.rationale)
        score = model.score_accept(model.instruction + "\n\n" + body)
        label = "Accept" if score >= 0.5 else "Reject"
        assert label in LABELS
        response = {"label": label, "score": score}
        if truncated or overflow:
            response["truncated"] = True
        return response

    return app
