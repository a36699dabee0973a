"""FastAPI application exposing the embedding wire protocol.

POST /embed  {"texts": [...]}  ->  {"model", "dim", "embeddings", "truncated"}
GET  /health                   ->  {"status": "ok", "model", "dim"}

The model is loaded during application startup; /health answers 503 until
it is ready. Handlers keep no per-client state.
"""

from __future__ import annotations

import argparse
from contextlib import asynccontextmanager
from typing import Callable

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from embed_service.backends import DEFAULT_MODEL, Backend, load_backend


class EmbedRequest(BaseModel):
    texts: list[str]


def create_app(backend_factory: Callable[[], Backend],
               max_batch: int = 256) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        app.state.backend = backend_factory()
        yield

    app = FastAPI(title="embed-service", lifespan=lifespan)
    app.state.backend = None
    app.state.max_batch = max_batch

    def ready_backend() -> Backend:
        backend = app.state.backend
        if backend is None:
            raise HTTPException(status_code=503, detail="model not loaded")
        return backend

    @app.get("/health")
    def health():
        backend = ready_backend()
        return {"status": "ok", "model": backend.model_id, "dim": backend.dimension}

    @app.post("/embed")
    def embed(request: EmbedRequest):
        backend = ready_backend()
        if not request.texts:
            raise HTTPException(status_code=400, detail="texts must be non-empty")
        if len(request.texts) > app.state.max_batch:
            raise HTTPException(
                status_code=413,
                detail=f"batch of {len(request.texts)} exceeds limit {app.state.max_batch}")
        try:
            vectors, truncated = backend.embed(request.texts)
        except Exception:
            # model failures stay opaque to clients
            return JSONResponse(status_code=500,
                                content={"detail": "internal error"})
        return {
            "model": backend.model_id,
            "dim": backend.dimension,
            "embeddings": vectors.tolist(),
            "truncated": truncated,
        }

    return app


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="embed-service")
    parser.add_argument("--model", default=DEFAULT_MODEL,
                        help="sentence-transformers model name")
    parser.add_argument("--backend", default="sentence-transformers",
                        choices=["sentence-transformers", "hash"])
    parser.add_argument("--dimension", type=int, default=384,
                        help="output dimension (hash backend only)")
    parser.add_argument("--max-batch", type=int, default=256)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    args = parser.parse_args(argv)

    import uvicorn

    app = create_app(
        lambda: load_backend(args.backend, model=args.model,
                             dimension=args.dimension),
        max_batch=args.max_batch)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
