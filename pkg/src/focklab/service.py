"""HTTP facade over the scenario runner and the verify battery.

The service is stateless: a run request carries the whole config text, and
the response carries every artifact as a string, so the caller owns the
filesystem.  Config problems map to 422, solver failures to 500, and both
carry a single-line detail message.
"""

from __future__ import annotations

import json
from typing import Literal, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict, Field

from . import __version__
from .config import ConfigError, parse_config_text
from .io import _json_fallback
from .scenarios import ComputationError, run_scenario
from .verify import verify_suite


class RunRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config_text: str
    seed: Optional[int] = Field(default=None, ge=0)
    restarts: Optional[int] = Field(default=None, ge=0, le=64)


class RunResponse(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: str
    files: dict
    summary: dict


class VerifyRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    level: Literal["quick", "full"] = "quick"
    seed: int = Field(default=20240521, ge=0)


class VerifyResponse(BaseModel):
    model_config = ConfigDict(extra="forbid")

    level: str
    all_passed: bool
    elapsed_seconds: float
    rows: list
    table: str


app = FastAPI(title="focklab", version=__version__)


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/run", response_model=RunResponse)
def run(request: RunRequest) -> RunResponse:
    try:
        config = parse_config_text(request.config_text)
    except ConfigError as err:
        raise HTTPException(status_code=422, detail=str(err))
    try:
        result = run_scenario(config, seed=request.seed,
                              restarts=request.restarts)
    except ComputationError as err:
        raise HTTPException(status_code=500, detail=str(err))
    summary = json.loads(json.dumps(result.summary, default=_json_fallback))
    return RunResponse(scenario=config.scenario, files=result.files,
                       summary=summary)


@app.post("/verify", response_model=VerifyResponse)
def verify(request: VerifyRequest) -> VerifyResponse:
    report = verify_suite(level=request.level, seed=request.seed)
    payload = report.as_dict()
    return VerifyResponse(level=payload["level"],
                          all_passed=payload["all_passed"],
                          elapsed_seconds=payload["elapsed_seconds"],
                          rows=payload["rows"], table=report.table())
