from typing import Literal, Optional

from fastapi import APIRouter, Depends
from sqlalchemy.orm import Session

from .. import crud, schemas
from ..services.database import get_db
from ..services.runner import run_verification

router = APIRouter()

LemmaId = Literal["3", "4", "6", "equivalence", "composition", "pinsker", "bretagnolle-huber"]


@router.post("/verify/{lemma}", response_model=schemas.SweepSummary)
def verify_lemma(lemma: LemmaId, request: Optional[schemas.VerifyRequest] = None, db: Session = Depends(get_db)):
    request = request or schemas.VerifyRequest()
    summary = run_verification(lemma, request)
    crud.save_run(db, "verify", lemma, summary, summary.verdict.value)
    return summary
