"""HTTP service: tokenization, sessions, streaming guided generation, attention maps.

Streaming uses server-sent events, one event per generated token
followed by a ``done`` event carrying the full GenerationResult; a
mid-stream failure emits an ``error`` event and closes the stream.
Sessions serialize their own generations (409 when busy) and share one
immutable model.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse

from .conversation import Conversation, placeholder_image
from .errors import CapacityError, ShapeError, SinkTokenError
from .guidance import GenerationResult, GuidanceConfig
from .model import TransformerModel
from .probe import ui_export
from .tokenizer import encode
from .weights import ModelConfig, load_weights

log = logging.getLogger("hlgen.service")

TOKENIZE_BODY_LIMIT = 64 * 1024

PARAM_RANGES = {
    "alpha": (0.0, 1.0),
    "beta": (0.0, 64.0),
    "beta_qformer": (0.0, 64.0),
    "gamma": (0.5, 4.0),
}
MAX_NEW_TOKENS_LIMIT = 256


@dataclass
class Session:
    id: str
    conversation: Conversation | None = None
    busy: bool = False
    last_result: GenerationResult | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


def _parse_params(raw: dict) -> GuidanceConfig | str:
    """GuidanceConfig from request params, or an error message string."""
    kwargs = {}
    for name in ("alpha", "beta", "beta_qformer", "gamma"):
        if name in raw:
            try:
                value = float(raw[name])
            except (TypeError, ValueError):
                return f"param {name} must be a number"
            lo, hi = PARAM_RANGES[name]
            open_low = name in ("beta", "beta_qformer")
            if value > hi or value < lo or (open_low and value == lo):
                return f"param {name}={value} outside allowed range"
            kwargs[name] = value
    if "max_new_tokens" in raw:
        try:
            mnt = int(raw["max_new_tokens"])
        except (TypeError, ValueError):
            return "param max_new_tokens must be an integer"
        if not (1 <= mnt <= MAX_NEW_TOKENS_LIMIT):
            return f"param max_new_tokens={mnt} outside [1, {MAX_NEW_TOKENS_LIMIT}]"
        kwargs["max_new_tokens"] = mnt
    if "rescale" in raw:
        if raw["rescale"] not in ("logsoftmax", "softmax"):
            return f"param rescale={raw['rescale']!r} not one of logsoftmax|softmax"
        kwargs["rescale"] = raw["rescale"]
    return GuidanceConfig(**kwargs)


def _sse(event: str, data: dict) -> str:
    return f"event: {event}\ndata: {json.dumps(data)}\n\n"


def create_app(model: TransformerModel, max_sessions: int = 32, image_seed: int = 2024) -> FastAPI:
    app = FastAPI(title="hlgen", docs_url=None, redoc_url=None)
    try:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
        )
    except ImportError:  # pragma: no cover
        pass

    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()
    app.state.model = model
    app.state.sessions = sessions

    @app.get("/v1/config")
    def get_config():
        cfg = model.config
        return {
            **cfg.to_json_dict(),
            "patch_grid": cfg.patch_grid,
            "defaults": GuidanceConfig().to_params_dict(),
        }

    @app.post("/v1/tokenize")
    async def tokenize(request: Request):
        body = await request.body()
        if len(body) > TOKENIZE_BODY_LIMIT:
            return _error(413, f"body exceeds {TOKENIZE_BODY_LIMIT} bytes")
        try:
            payload = json.loads(body)
        except (UnicodeDecodeError, json.JSONDecodeError):
            return _error(400, "body is not valid JSON")
        if not isinstance(payload, dict) or not isinstance(payload.get("text"), str):
            return _error(400, "expected {\"text\": string}")
        ids, offsets = encode(payload["text"])
        return {"tokens": ids, "offsets": [[s, e] for s, e in offsets]}

    @app.post("/v1/sessions")
    def create_session():
        with registry_lock:
            if len(sessions) >= max_sessions:
                return _error(429, f"session limit {max_sessions} reached")
            sid = uuid.uuid4().hex
            sessions[sid] = Session(id=sid)
        return {"id": sid}

    @app.post("/v1/sessions/{sid}/generate")
    async def generate(sid: str, request: Request):
        session = sessions.get(sid)
        if session is None:
            return _error(404, f"unknown session {sid}")
        try:
            payload = json.loads(await request.body())
        except (UnicodeDecodeError, json.JSONDecodeError):
            return _error(400, "body is not valid JSON")
        if not isinstance(payload, dict):
            return _error(400, "body must be a JSON object")
        text = payload.get("text", "")
        if not isinstance(text, str):
            return _error(400, "text must be a string")
        spans_raw = payload.get("spans", []) or []
        try:
            byte_spans = [(int(s["char_start"]), int(s["char_end"])) for s in spans_raw]
        except (TypeError, KeyError, ValueError):
            return _error(400, "spans must be [{char_start, char_end}, ...]")
        patch_mask = payload.get("patch_mask")
        if patch_mask is not None:
            if not isinstance(patch_mask, list) or any(b not in (0, 1) for b in patch_mask):
                return _error(400, "patch_mask must be a list of 0/1")
            if len(patch_mask) != model.config.n_patches:
                return _error(
                    422, f"patch_mask length {len(patch_mask)} != {model.config.n_patches}"
                )
        mapping = payload.get("mapping", "direct")
        if mapping not in ("direct", "qformer"):
            return _error(422, f"mapping={mapping!r} not one of direct|qformer")
        cfg = _parse_params(payload.get("params", {}) or {})
        if isinstance(cfg, str):
            return _error(422, cfg)

        with session.lock:
            if session.busy:
                return _error(409, "session is already generating")
            session.busy = True
        try:
            if session.conversation is None:
                image = placeholder_image(model.config, image_seed) if patch_mask is not None else None
                session.conversation = Conversation(model, image_features=image, mapping=mapping)
            conv = session.conversation
            if patch_mask is not None and not conv.has_image:
                return _error(422, "patch_mask requires an image; none in this session")
            conv.add_round(text, byte_spans=byte_spans, patch_mask=patch_mask)
            try:
                events = conv.generate_events(cfg, capture=True)
            except Exception:
                conv.rollback_round()
                raise
        except (ShapeError, SinkTokenError, CapacityError, ValueError) as exc:
            with session.lock:
                session.busy = False
            return _error(422, str(exc))
        except Exception as exc:  # pragma: no cover - defensive
            with session.lock:
                session.busy = False
            return _error(500, str(exc))

        def stream():
            completed = False
            try:
                for event in events:
                    if event[0] == "token":
                        _, tid, piece = event
                        yield _sse("token", {"id": tid, "text": piece})
                    elif event[0] == "done":
                        result = event[1]
                        conv.record(result)
                        session.last_result = result
                        completed = True
                        yield _sse("done", result.to_json_dict())
            except Exception as exc:
                log.exception("generation failed mid-stream")
                yield _sse("error", {"message": str(exc)})
            finally:
                if not completed:
                    conv.rollback_round()
                with session.lock:
                    session.busy = False

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/v1/sessions/{sid}/attention")
    def attention(sid: str):
        session = sessions.get(sid)
        if session is None:
            return _error(404, f"unknown session {sid}")
        result = session.last_result
        if result is None or result.snapshot is None:
            return _error(404, "no completed generation in this session")
        context_mask = result.state.mask.bits[: result.context_len]
        return ui_export(result.snapshot, context_mask)

    return app


def run_server(model_path, config_path, port: int = 7878, max_sessions: int = 32, ui_dir=None):
    import uvicorn

    config = ModelConfig.load(config_path)
    weights = load_weights(model_path, config)
    model = TransformerModel(config, weights)
    app = create_app(model, max_sessions=max_sessions)
    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    level = os.environ.get("HL_LOG", "info").lower()
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO))
    uvicorn.run(app, host="127.0.0.1", port=port, log_level=level)
