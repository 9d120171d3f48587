from fastapi import APIRouter, Depends, HTTPException
from sqlalchemy.orm import Session

from .. import crud, schemas
from ..services.database import get_db
from ..services.experiments import run_experiment

router = APIRouter()

# Simulations run inside the request, so the API only takes small jobs.
MAX_API_STEPS = 2_000_000


@router.post("/simulate", response_model=schemas.RegretCurve)
def simulate(config: schemas.ExperimentConfig, db: Session = Depends(get_db)):
    if config.output is not None:
        raise HTTPException(status_code=422, detail="output paths are only accepted by the CLI")
    if config.horizon * config.replications > MAX_API_STEPS:
        raise HTTPException(status_code=422, detail=f"horizon x replications above {MAX_API_STEPS}; use the CLI")
    curve = run_experiment(config)
    crud.save_run(db, "simulate", curve.policy.get("kind", ""), curve)
    return curve
