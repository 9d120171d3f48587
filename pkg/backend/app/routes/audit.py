from fastapi import APIRouter, Depends
from sqlalchemy.orm import Session

from .. import crud, schemas
from ..services.database import get_db
from ..services.runner import run_audit

router = APIRouter()


@router.post("/audit")
def create_audit(request: schemas.AuditRequest, db: Session = Depends(get_db)):
    # AuditReport for single audits, CheckReport for equivalence/composition
    report = run_audit(request)
    crud.save_run(db, "audit", f"{request.definition} K={request.K} T={request.T}", report, report.verdict.value)
    return report
