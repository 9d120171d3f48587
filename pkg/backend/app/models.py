from sqlalchemy import Column, DateTime, Integer, String, Text, func

from .services.database import Base


class ExperimentRun(Base):
    __tablename__ = "experiment_runs"
    id = Column(Integer, primary_key=True, index=True, autoincrement=True)
    # simulate | audit | verify | bounds | sweep
    kind = Column(String(32), nullable=False, index=True)
    label = Column(String, nullable=False)
    verdict = Column(String(32), nullable=True)
    payload = Column(Text, nullable=False)
    created_at = Column(DateTime(timezone=True), server_default=func.now())
