"""Chat-completions HTTP server in front of a trained artifact.

Implements the schema the chainworld gateway consumes: POST
/v1/chat/completions (and /chat/completions) reading the last user message,
answering with greedy decoding; GET /health for liveness.  Temperature in
requests is accepted and ignored: decoding is always greedy.
"""

from __future__ import annotations

import socket
import time

import uvicorn
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .train import Artifact


class Message(BaseModel):
    role: str
    content: str


class ChatRequest(BaseModel):
    model: str = ""
    messages: list[Message]
    temperature: float | None = None
    max_tokens: int | None = None


def create_app(model_dir: str) -> FastAPI:
    artifact = Artifact(model_dir)  # fails fast when the artifact is missing
    app = FastAPI(title="chainworld-finetune", version="0.1.0")
    counter = {"n": 0}

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "model_dir": str(model_dir)}

    def completion(request: ChatRequest) -> dict:
        user_turns = [m for m in request.messages if m.role == "user"]
        if not user_turns:
            raise HTTPException(status_code=400, detail="no user message in request")
        prompt = user_turns[-1].content
        text = artifact.generate(prompt)
        counter["n"] += 1
        prompt_tokens = len(artifact.tokenizer.encode(prompt))
        completion_tokens = len(artifact.tokenizer.encode(text))
        return {
            "id": f"chatcmpl-{counter['n']}",
            "object": "chat.completion",
            "created": int(time.time()),
            "model": request.model or artifact.meta.get("base_model", "chainworld-finetune"),
            "choices": [
                {
                    "index": 0,
                    "message": {"role": "assistant", "content": text},
                    "finish_reason": "stop",
                }
            ],
            "usage": {
                "prompt_tokens": prompt_tokens,
                "completion_tokens": completion_tokens,
                "total_tokens": prompt_tokens + completion_tokens,
            },
        }

    app.post("/v1/chat/completions")(completion)
    app.post("/chat/completions")(completion)
    return app


def _ensure_port_free(host: str, port: int) -> None:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as probe:
        try:
            probe.bind((host, port))
        except OSError as exc:
            raise OSError(f"port {port} on {host} is already in use") from exc


def serve(model_dir: str, port: int, host: str = "127.0.0.1") -> None:
    """Run the server until interrupted; raises on missing artifact or busy port."""
    app = create_app(model_dir)
    _ensure_port_free(host, port)
    uvicorn.run(app, host=host, port=port, log_level="warning")
