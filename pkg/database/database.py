# database.py
# Registro de execuções (sweeps) em SQLite via SQLAlchemy ORM
import logging
import os
from datetime import datetime
from pathlib import Path

from dotenv import load_dotenv

# Importações do SQLAlchemy para ORM
from sqlalchemy import Column, DateTime, Float, ForeignKey, Integer, String, UniqueConstraint, create_engine
from sqlalchemy.orm import declarative_base, relationship, sessionmaker

logger = logging.getLogger(__name__)

# --- Configuração do banco de dados ---
load_dotenv()  # Carrega variáveis do .env
OUT_DIR = os.getenv("LENDING_OUT_DIR", "./out")
DATABASE_URL = os.getenv("LENDING_DB_URL", f"sqlite:///{Path(OUT_DIR) / 'runs.db'}")  # Permite sobrescrever via .env

Base = declarative_base()  # Classe base para os modelos ORM

# --- Definição dos Modelos ---

class Sweep(Base):
    __tablename__ = "sweeps"
    id = Column(Integer, primary_key=True, index=True)
    scenario = Column(String, nullable=False)
    config_hash = Column(String, nullable=False)
    master_seed = Column(String, nullable=False)  # u64 não cabe em INTEGER do SQLite
    created_at = Column(DateTime, default=datetime.now)

    # Um sweep tem várias células (um-para-muitos)
    runs = relationship("RunRecord", back_populates="sweep", cascade="all, delete-orphan")

    __table_args__ = (UniqueConstraint("config_hash", "master_seed", name="uq_sweep_config_seed"),)

class RunRecord(Base):
    __tablename__ = "runs"
    id = Column(Integer, primary_key=True, index=True)
    horizon = Column(Integer, nullable=False)
    repetition = Column(Integer, nullable=False)
    seed = Column(String, nullable=False)
    engine = Column(String, nullable=False)
    R_alg = Column(Float, nullable=False)
    R_star = Column(Float, nullable=False)
    regret = Column(Float, nullable=False)
    dynamic_regret = Column(Float)
    competitive_ratio = Column(Float)
    created_at = Column(DateTime, default=datetime.now)

    # Cada célula pertence a um sweep - muitos-para-um
    sweep_id = Column(Integer, ForeignKey("sweeps.id"), nullable=False)
    sweep = relationship("Sweep", back_populates="runs")

    __table_args__ = (UniqueConstraint("sweep_id", "horizon", "repetition", name="uq_run_cell"),)

# --- Engine e sessões ---

def get_engine(url=None):
    """Cria o engine; para SQLite garante que o diretório do arquivo exista."""
    url = url or DATABASE_URL
    if url.startswith("sqlite:///") and url != "sqlite:///:memory:":
        Path(url[len("sqlite:///"):]).parent.mkdir(parents=True, exist_ok=True)
    return create_engine(url)

def make_session(engine):
    """Fábrica de sessões ligada ao engine."""
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)()

# --- Funções de Operação Seguras ---

def create_tables(engine):
    """Cria as tabelas no banco de dados conforme os modelos definidos."""
    Base.metadata.create_all(bind=engine)
    logger.info("registry tables checked/created at %s", engine.url)

def add_sweep(session, scenario, config_hash, master_seed):
    """Verifica se o sweep existe (mesma config e seed) e adiciona se não existir."""
    existing = session.query(Sweep).filter(Sweep.config_hash == config_hash,
                                           Sweep.master_seed == str(master_seed)).first()
    if existing:
        logger.info("sweep for '%s' (seed %s) already registered", scenario, master_seed)
        return existing

    sweep = Sweep(scenario=scenario, config_hash=config_hash, master_seed=str(master_seed))
    session.add(sweep)
    session.commit()
    logger.info("registered sweep %d for '%s'", sweep.id, scenario)
    return sweep

def add_run(session, sweep, horizon, repetition, seed, engine, R_alg, R_star, regret,
            dynamic_regret=None, competitive_ratio=None):
    """Adiciona a célula (T, repetição) ao sweep; células já registradas são devolvidas sem alteração."""
    existing = session.query(RunRecord).filter(RunRecord.sweep_id == sweep.id,
                                               RunRecord.horizon == horizon,
                                               RunRecord.repetition == repetition).first()
    if existing:
        return existing

    record = RunRecord(sweep_id=sweep.id, horizon=horizon, repetition=repetition, seed=str(seed), engine=engine,
                       R_alg=R_alg, R_star=R_star, regret=regret, dynamic_regret=dynamic_regret,
                       competitive_ratio=competitive_ratio)
    session.add(record)
    session.commit()
    return record

def list_runs(session, scenario=None):
    """Lista as células registradas, opcionalmente filtradas pelo cenário, em ordem (T, repetição)."""
    query = session.query(RunRecord).join(Sweep)
    if scenario is not None:
        query = query.filter(Sweep.scenario == scenario)
    return query.order_by(Sweep.id, RunRecord.horizon, RunRecord.repetition).all()

# --- Script de Demonstração ---
if __name__ == '__main__':
    logging.basicConfig(level=logging.INFO, format="[%(levelname)s][%(name)s][%(asctime)s] %(message)s")
    engine = get_engine()
    create_tables(engine)
    with make_session(engine) as session:
        for run in list_runs(session):
            print(f"{run.sweep.scenario} T={run.horizon} rep={run.repetition} regret={run.regret:.6g}")
