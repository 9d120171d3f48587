from typing import Literal, Optional

from fastapi import APIRouter, Depends, Query
from sqlalchemy.orm import Session

from .. import crud
from ..exceptions import ConfigError
from ..schemas import BoundSpec
from ..services.database import get_db
from ..services.lower_bounds import evaluate_bound

router = APIRouter()


@router.get("/bounds", response_model=BoundSpec)
def get_bound(
    regime: Literal[
        "local", "instantaneous", "dp", "nonprivate-minimax", "local-problem-dep", "nonprivate-problem-dep"
    ] = "local",
    K: int = Query(2, ge=2),
    T: int = Query(..., ge=1),
    epsilon: Optional[float] = Query(None, gt=0),
    c: float = Query(0.0, ge=0),
    constant: Optional[Literal["proof-constant", "rate-only", "custom"]] = None,
    custom_constant: Optional[float] = None,
    variant: Optional[str] = None,
    means: Optional[str] = Query(None, description="Comma-separated Bernoulli arm means"),
    db: Session = Depends(get_db),
):
    try:
        arm_means = [float(v) for v in means.split(",") if v.strip()] if means else None
    except ValueError as exc:
        raise ConfigError("means", f"expected comma-separated numbers, got {means!r}") from exc
    spec = evaluate_bound(regime, K, T, epsilon, c, constant, variant, custom_constant, arm_means)
    crud.save_run(db, "bounds", f"{regime} K={K} T={T}", spec)
    return spec
