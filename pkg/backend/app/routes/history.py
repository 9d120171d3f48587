from typing import Optional

from fastapi import APIRouter, Depends, Query
from sqlalchemy.orm import Session

from ..crud import get_run_history
from ..schemas import RunRecord
from ..services.database import get_db

router = APIRouter()


@router.get("/history", response_model=list[RunRecord])
def get_history(
    limit: int = Query(10, ge=1, le=500),
    kind: Optional[str] = None,
    db: Session = Depends(get_db),
):
    runs = get_run_history(db, limit=limit, kind=kind)
    return [RunRecord.model_validate(run, from_attributes=True) for run in runs]
