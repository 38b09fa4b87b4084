"""HTTP session service: a human oracle drives the query loop.

Each session proposes one bag at a time, accepts its instance labels,
retrains synchronously and reports the learning curve so far. All
mutations are appended to a per-session JSON-lines event log; replaying
the log reconstructs the exact state because retraining is deterministic.
"""

from __future__ import annotations

import json
import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .data import MILDataset, POSITIVE, load_dataset
from .loop import STRATEGY_NAMES, SessionConfig, SessionRunner
from .svm import KernelSpec

_DEFAULT_CONFIG = {
    "kernel": "rbf",
    "gamma": 0.5,
    "base_cost": 10.0,
    "seed": 0,
    "cluster_levels": 20,
    "inconsistency_depth": 16,
    "allow_assumption_violations": False,
}

AWAITING = "awaiting-labels"
FINISHED = "finished"


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        self.status = status
        self.code = code
        self.message = message
        super().__init__(message)


class AnnotationSession:
    """One live query loop plus its persistence and write lock."""

    def __init__(self, session_id: str, dataset_name: str, dataset: MILDataset,
                 strategy: str, config: dict, log_path: Path):
        self.id = session_id
        self.dataset_name = dataset_name
        self.dataset = dataset
        self.strategy = strategy
        self.config = config
        self.allow_violations = bool(config["allow_assumption_violations"])
        self.log_path = log_path
        self.lock = threading.Lock()
        self.runner = SessionRunner(
            train=dataset,
            test=None,
            config=SessionConfig(
                strategy=strategy,
                kernel=KernelSpec(kind=config["kernel"], gamma=config["gamma"]),
                base_cost=float(config["base_cost"]),
                seed=int(config["seed"]),
                cluster_levels=int(config["cluster_levels"]),
                inconsistency_depth=int(config["inconsistency_depth"]),
            ),
        )

    @property
    def status(self) -> str:
        return FINISHED if self.runner.finished else AWAITING

    def summary(self) -> dict:
        state = self.runner.state
        return {
            "id": self.id,
            "dataset": self.dataset_name,
            "strategy": self.strategy,
            "status": self.status,
            "queried_bags": state.queried_bag_ids,
            "queried": len(state.queried),
            "remaining_queries": len(state.candidates),
            "pending_bag_id": self.runner.propose()[0] if not self.runner.finished else None,
        }

    def query_payload(self) -> dict:
        if self.runner.finished:
            raise ServiceError(409, "session-finished", "no positive bags are left to query")
        bag_id, _ = self.runner.propose()
        index = self.dataset.index_of(bag_id)
        bag = self.dataset.bags[index]
        sl = self.dataset.bag_slices[index]
        scores = self.runner.train_scores[sl]
        return {
            "bag_id": bag_id,
            "instance_count": len(bag),
            "features": [[float(v) for v in row] for row in bag.features],
            "scores": [float(s) for s in scores],
        }

    def submit(self, bag_id: str, labels: list[int], record: bool = True) -> dict:
        if self.runner.finished:
            raise ServiceError(409, "session-finished", "no positive bags are left to query")
        state = self.runner.state
        if bag_id in state.queried_bag_ids:
            raise ServiceError(409, "already-queried", f"bag {bag_id!r} was already labeled")
        pending, _ = self.runner.propose()
        if bag_id != pending:
            raise ServiceError(409, "out-of-order", f"pending query is {pending!r}, not {bag_id!r}")
        index = self.dataset.index_of(bag_id)
        bag = self.dataset.bags[index]
        if len(labels) != len(bag):
            raise ServiceError(400, "label-count",
                               f"bag {bag_id!r} holds {len(bag)} instances, got {len(labels)} labels")
        if any(v not in (-1, 1) for v in labels):
            raise ServiceError(400, "label-value", "labels must be -1 or +1")
        if (bag.label == POSITIVE and all(v == -1 for v in labels)
                and not self.allow_violations):
            raise ServiceError(
                400, "assumption-violation",
                "a positive bag must contain at least one positive instance; "
                "set allow_assumption_violations to override")
        audit = self.runner.apply(bag_id, labels)
        if record:
            self._append({"event": "labels", "bag_id": bag_id, "labels": list(labels)})
        return {
            "status": self.status,
            "queried": len(self.runner.state.queried),
            "remaining_queries": len(self.runner.state.candidates),
            "curve_point": audit["metrics"] or None,
            "next_bag_id": self.runner.propose()[0] if not self.runner.finished else None,
        }

    def curves_payload(self) -> dict:
        series = {
            f"{metric}_{split}": list(values)
            for (metric, split), values in self.runner.curves.items()
            if values
        }
        return {"queries": len(self.runner.state.queried), "series": series}

    def _append(self, entry: dict) -> None:
        with self.log_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")


class SessionStore:
    """Datasets plus live sessions; rebuilds sessions from event logs."""

    def __init__(self, data_dir: Path, state_dir: Path):
        self.data_dir = Path(data_dir)
        self.state_dir = Path(state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        if not self.data_dir.is_dir():
            raise FileNotFoundError(f"dataset directory {self.data_dir} does not exist")
        self._datasets: dict[str, MILDataset] = {}
        self.sessions: dict[str, AnnotationSession] = {}
        self._replay()

    def dataset_names(self) -> list[str]:
        return sorted(p.stem for p in self.data_dir.glob("*.csv"))

    def dataset(self, name: str) -> MILDataset:
        if name not in self._datasets:
            path = self.data_dir / f"{name}.csv"
            if not path.is_file():
                raise ServiceError(404, "unknown-dataset", f"no dataset named {name!r}")
            self._datasets[name] = load_dataset(path, strict=True)
        return self._datasets[name]

    def create(self, dataset_name: str, strategy: str, config_overrides: dict | None,
               session_id: str | None = None, record: bool = True) -> AnnotationSession:
        if strategy not in STRATEGY_NAMES:
            raise ServiceError(400, "unknown-strategy",
                               f"strategy must be one of {list(STRATEGY_NAMES)}")
        config = dict(_DEFAULT_CONFIG)
        overrides = config_overrides or {}
        unknown = set(overrides) - set(_DEFAULT_CONFIG)
        if unknown:
            raise ServiceError(400, "bad-config", f"unknown config keys {sorted(unknown)}")
        config.update(overrides)
        dataset = self.dataset(dataset_name)
        session_id = session_id or uuid.uuid4().hex
        try:
            session = AnnotationSession(
                session_id, dataset_name, dataset, strategy, config,
                self.state_dir / f"{session_id}.jsonl")
        except (ValueError, KeyError) as exc:
            raise ServiceError(400, "bad-config", str(exc)) from None
        self.sessions[session_id] = session
        if record:
            session._append({
                "event": "create",
                "session_id": session_id,
                "dataset": dataset_name,
                "strategy": strategy,
                "config": config,
            })
        return session

    def get(self, session_id: str) -> AnnotationSession:
        session = self.sessions.get(session_id)
        if session is None:
            raise ServiceError(404, "unknown-session", f"no session {session_id!r}")
        return session

    def _replay(self) -> None:
        for log_path in sorted(self.state_dir.glob("*.jsonl")):
            entries = [json.loads(line) for line in log_path.read_text(encoding="utf-8").splitlines()
                       if line.strip()]
            if not entries or entries[0].get("event") != "create":
                continue
            head = entries[0]
            session = self.create(head["dataset"], head["strategy"], head["config"],
                                  session_id=head["session_id"], record=False)
            for entry in entries[1:]:
                if entry.get("event") == "labels":
                    session.submit(entry["bag_id"], entry["labels"], record=False)


def create_app(data_dir: Path, state_dir: Path) -> FastAPI:
    app = FastAPI(title="mialkit annotation service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    store = SessionStore(data_dir, state_dir)
    app.state.store = store

    @app.exception_handler(ServiceError)
    async def _service_error(_: Request, exc: ServiceError) -> JSONResponse:
        return JSONResponse(status_code=exc.status,
                            content={"code": exc.code, "message": exc.message})

    @app.get("/capabilities")
    def capabilities() -> dict:
        return {"strategies": list(STRATEGY_NAMES), "kernels": ["rbf", "chi2"]}

    @app.get("/datasets")
    def datasets() -> dict:
        out = []
        for name in store.dataset_names():
            ds = store.dataset(name)
            info = ds.summary()
            out.append({
                "name": name,
                "bags": info["bags"],
                "positive_bags": info["positive_bags"],
                "instances": info["instances"],
                "feature_dim": info["feature_dim"],
                "labels_known": ds.labels_known,
            })
        return {"datasets": out}

    @app.post("/sessions")
    def create_session(body: dict) -> dict:
        dataset_name = body.get("dataset")
        strategy = body.get("strategy")
        if not dataset_name or not strategy:
            raise ServiceError(400, "bad-request", "body needs 'dataset' and 'strategy'")
        session = store.create(dataset_name, strategy, body.get("config"))
        return session.summary()

    @app.get("/sessions/{session_id}")
    def session_summary(session_id: str) -> dict:
        return store.get(session_id).summary()

    @app.get("/sessions/{session_id}/query")
    def next_query(session_id: str) -> dict:
        return store.get(session_id).query_payload()

    @app.post("/sessions/{session_id}/labels")
    def submit_labels(session_id: str, body: dict) -> dict:
        session = store.get(session_id)
        bag_id = body.get("bag_id")
        labels = body.get("labels")
        if not bag_id or not isinstance(labels, list):
            raise ServiceError(400, "bad-request", "body needs 'bag_id' and a 'labels' list")
        with session.lock:
            return session.submit(bag_id, labels)

    @app.get("/sessions/{session_id}/curves")
    def curves(session_id: str) -> dict:
        return store.get(session_id).curves_payload()

    return app
