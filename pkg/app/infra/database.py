"""Database engine and schema for the server store."""

from contextlib import contextmanager
from typing import Generator, Optional
from sqlalchemy import (
    Column,
    DateTime,
    Integer,
    LargeBinary,
    MetaData,
    String,
    Table,
    UniqueConstraint,
    create_engine,
    func,
    text,
)
from sqlalchemy.engine import Connection, Engine
from sqlalchemy.pool import StaticPool

from app.infra.config import config


metadata = MetaData()

# All tables are insert-only; nothing in the code base issues UPDATE or DELETE.
deployments = Table(
    "deployments",
    metadata,
    Column("params_digest", String(64), primary_key=True),
    Column("first_epoch_id", Integer, nullable=False),
    Column("created_at", DateTime, server_default=func.now()),
)

announcements = Table(
    "announcements",
    metadata,
    Column("epoch_id", Integer, primary_key=True),
    Column("params_digest", String(64), nullable=False),
    Column("payload", LargeBinary, nullable=False),
    Column("created_at", DateTime, server_default=func.now()),
)

helper_batches = Table(
    "helper_batches",
    metadata,
    Column("epoch_id", Integer, primary_key=True),
    Column("record_count", Integer, nullable=False),
    Column("payload", LargeBinary, nullable=False),
    Column("created_at", DateTime, server_default=func.now()),
)

submissions = Table(
    "submissions",
    metadata,
    Column("id", Integer, primary_key=True, autoincrement=True),
    Column("epoch_id", Integer, nullable=False),
    Column("site", String(1), nullable=False),
    Column("params_digest", String(64), nullable=False),
    Column("payload", LargeBinary, nullable=False),
    Column("created_at", DateTime, server_default=func.now()),
    UniqueConstraint("epoch_id", "site", name="uq_submission_epoch_site"),
)


def create_store_engine(url: Optional[str] = None) -> Engine:
    """
    Create an engine for the server store and make sure the schema exists.

    In-memory SQLite URLs share one connection so every session sees the same data.
    """
    url = url or config.STORE_URL
    kwargs = {"echo": False}
    if url.startswith("sqlite"):
        kwargs["connect_args"] = {"check_same_thread": False}
        if url in ("sqlite://", "sqlite:///:memory:"):
            kwargs["poolclass"] = StaticPool
    else:
        kwargs.update(pool_size=5, max_overflow=10, pool_pre_ping=True)

    engine = create_engine(url, **kwargs)
    metadata.create_all(engine)
    return engine


@contextmanager
def get_db_connection(engine: Engine) -> Generator[Connection, None, None]:
    """Transactional connection; commits on success, rolls back on error."""
    with engine.begin() as connection:
        yield connection


def ping(engine: Engine) -> bool:
    """Readiness check used by the health router."""
    try:
        with engine.connect() as connection:
            connection.execute(text("SELECT 1"))
        return True
    except Exception:
        return False
