import json
from typing import Optional, Union

from pydantic import BaseModel
from sqlalchemy.orm import Session

from . import models


def _serialize(payload: Union[BaseModel, dict, list, str]) -> str:
    if isinstance(payload, BaseModel):
        return payload.model_dump_json()
    if isinstance(payload, str):
        return payload
    if isinstance(payload, list):
        payload = [p.model_dump(mode="json") if isinstance(p, BaseModel) else p for p in payload]
    return json.dumps(payload, default=str)


# CREATE - record a finished run and its report
def save_run(
    db: Session,
    kind: str,
    label: str,
    payload: Union[BaseModel, dict, list, str],
    verdict: Optional[str] = None,
) -> models.ExperimentRun:
    run = models.ExperimentRun(kind=kind, label=label, verdict=verdict, payload=_serialize(payload))
    db.add(run)
    db.commit()
    db.refresh(run)
    return run


# READ - most recent runs first, optionally of one kind
def get_run_history(db: Session, limit: int = 10, kind: Optional[str] = None):
    query = db.query(models.ExperimentRun)
    if kind is not None:
        query = query.filter(models.ExperimentRun.kind == kind)
    return query.order_by(models.ExperimentRun.created_at.desc(), models.ExperimentRun.id.desc()).limit(limit).all()
