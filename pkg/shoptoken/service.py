"""JSON-over-HTTP search service over a loaded, read-only index."""

import json
import logging
import time

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from starlette.concurrency import run_in_threadpool

from shoptoken.EngineConfig import EngineConfig
from shoptoken.errors import InvalidRequestError, RestrictionSyntaxError
from shoptoken.RetrievalEngine import RetrievalEngine
from shoptoken.SnapshotHandler import load_index

logger = logging.getLogger(__name__)


def _bad_request(error: Exception) -> JSONResponse:
    content = {'error': str(error)}
    if isinstance(error, RestrictionSyntaxError):
        content['offset'] = error.offset
        content['expected'] = error.expected
    return JSONResponse(status_code=400, content=content)


def create_app(engine: RetrievalEngine) -> FastAPI:
    """
    Build the application around a retrieval engine.

    Routes:
        POST /v1/search: ``{embedding, category, gender?, restrict?, k?}`` ->
            ``{results: [{id, distance, token_matches}], restriction, took_ms}``
        GET /v1/health: index statistics
    """
    app = FastAPI(title='shoptoken')

    @app.post('/v1/search')
    async def product_search(request: Request):
        started = time.perf_counter()
        try:
            body = await request.json()
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            return _bad_request(InvalidRequestError(f"request body is not valid JSON ({e})"))
        try:
            response = await run_in_threadpool(engine.search_request, body)
        except (InvalidRequestError, RestrictionSyntaxError) as e:
            logger.debug(f"Rejected search request: {e}")
            return _bad_request(e)
        response['took_ms'] = (time.perf_counter() - started) * 1000.0
        return response

    @app.get('/v1/health')
    async def health():
        return engine.health()

    return app


def serve_search(snapshot: str, config: EngineConfig, host: str = None, port: int = None):
    """Load a snapshot and serve it with uvicorn until interrupted."""
    import uvicorn

    shard_set = load_index(snapshot)
    engine = RetrievalEngine(shard_set, config.search_config())
    host = host or config.service.host
    port = port or config.service.port
    logger.info(f"Serving {shard_set.num_docs} documents in {len(shard_set)} shards on {host}:{port}")
    uvicorn.run(create_app(engine), host=host, port=port, log_level='info')
