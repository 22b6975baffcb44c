import datetime

from sqlalchemy import JSON, Column, DateTime, Float, Integer, String, Text
from sqlalchemy.orm import declarative_base

Base = declarative_base()


class RunRecord(Base):
    __tablename__ = 'runs'

    id = Column(Integer, primary_key=True)
    command = Column(String, nullable=False, index=True)
    backend = Column(String, nullable=True)
    seed = Column(Integer, nullable=False)
    config_yaml = Column(Text, nullable=False)  # merged config, enough to replay the run
    output_dir = Column(String, nullable=True)
    started_at = Column(DateTime, nullable=False, default=datetime.datetime.utcnow)
    wall_time = Column(Float, nullable=True)
    status = Column(String, nullable=False, default='ok')  # 'ok' or the error kind

    metrics = Column(JSON, default={}, nullable=False)

    def __repr__(self):
        return f"<RunRecord(id={self.id}, command='{self.command}', status='{self.status}')>"
