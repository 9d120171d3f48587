import json

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import models
from .exceptions import ConfigError, PrivateBanditsError
from .routes import audit, bounds, experiments, history, verify
from .services.database import Base, engine


class ReportResponse(JSONResponse):
    # Infinite divergences and epsilons go out as Infinity, as in the report files.
    def render(self, content) -> bytes:
        return json.dumps(content, ensure_ascii=False, allow_nan=True, separators=(",", ":")).encode("utf-8")


# This will create the tables defined in models
Base.metadata.create_all(bind=engine)


app = FastAPI(title="Private Bandits", default_response_class=ReportResponse)


# Enable CORS for all origins
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.exception_handler(PrivateBanditsError)
async def private_bandits_error_handler(request: Request, exc: PrivateBanditsError):
    detail = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        detail["field"] = exc.field
    return ReportResponse(status_code=422, content={"detail": detail})


app.include_router(bounds.router)
app.include_router(audit.router)
app.include_router(verify.router)
app.include_router(experiments.router)
app.include_router(history.router)
