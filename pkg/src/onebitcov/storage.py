from typing import Any, Dict, List, Optional

from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker

from onebitcov.models import Base, RunRecord


class Storage:
    def __init__(self, db_url: str = "sqlite:///onebitcov.db"):
        self.engine = create_engine(db_url)
        self._Session = sessionmaker(bind=self.engine, expire_on_commit=False)

    @property
    def Session(self):
        """Returns the session maker for creating database sessions."""
        return self._Session

    def init_db(self):
        """Creates the ledger tables if they do not exist yet."""
        Base.metadata.create_all(self.engine)

    def add_run(
        self,
        command: str,
        seed: int,
        config_yaml: str,
        backend: Optional[str] = None,
        output_dir: Optional[str] = None,
        wall_time: Optional[float] = None,
        status: str = "ok",
        metrics: Optional[Dict[str, Any]] = None,
    ) -> RunRecord:
        record = RunRecord(
            command=command,
            backend=backend,
            seed=seed,
            config_yaml=config_yaml,
            output_dir=output_dir,
            wall_time=wall_time,
            status=status,
            metrics=metrics or {},
        )
        with self._Session() as session:
            session.add(record)
            session.commit()
            return record

    def get_runs(self, command: Optional[str] = None, limit: Optional[int] = None) -> List[RunRecord]:
        """
        Gets recorded runs, newest first.

        :param command: If provided, filters by CLI subcommand.
        :param limit: If provided, returns at most this many runs.
        """
        with self._Session() as session:
            query = session.query(RunRecord)

            if command:
                query = query.filter(RunRecord.command == command)

            query = query.order_by(RunRecord.started_at.desc(), RunRecord.id.desc())
            if limit:
                query = query.limit(limit)
            return query.all()

    def get_run(self, run_id: int) -> Optional[RunRecord]:
        with self._Session() as session:
            return session.query(RunRecord).filter(RunRecord.id == run_id).first()
