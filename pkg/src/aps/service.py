"""HTTP/JSON API for live survey planning.

Each session holds a Bernoulli-category posterior, its running confidence
intervals, and a batch log. State changes only through session creation and
batch recording; recommendations and what-if queries are pure reads. Every
mutation is appended to a JSON-lines journal, and startup rebuilds all
sessions by replaying it, so a session's state is a deterministic function of
its event history.

Endpoints:
    POST /sessions                      create a session
    GET  /sessions/{id}                 full session view
    POST /sessions/{id}/batches         record a batch of outcome counts
    GET  /sessions/{id}/recommendation  next-batch allocation (?b=B)
    POST /sessions/{id}/whatif          side-by-side allocation under edited targets
    GET  /sessions/{id}/estimates       per-category and overall estimates
    GET  /healthz                       liveness probe

Errors are structured ``{code, message, field?}``. If APS_TOKEN is set, all
endpoints except /healthz require ``Authorization: Bearer <token>``.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import Depends, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .allocation import BatchConstraintSpec, batch_allocate
from .bounds import DeltaSchedule, IntervalSet, update_intervals, variance_ucb
from .exceptions import ApsError
from .posterior import PosteriorState, PriorSpec

__all__ = ["create_app", "ServiceError", "session_state_hash"]


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str,
                 fieldname: str | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.field = fieldname

    def payload(self) -> dict:
        body = {"code": self.code, "message": self.message}
        if self.field is not None:
            body["field"] = self.field
        return body


class CategoryDef(BaseModel):
    name: str
    weight: float
    theta: float | None = None


class PriorDef(BaseModel):
    alphas: list[list[float]] | None = None
    truncation: list[tuple[float, float] | None] | None = None


class CreateSessionRequest(BaseModel):
    categories: list[CategoryDef]
    budget: int
    name: str | None = None
    eta: float | None = None
    theta0: float | None = None
    prior: PriorDef | None = None


class BatchEntry(BaseModel):
    category: str
    samples: int
    positives: int


class RecordBatchRequest(BaseModel):
    counts: list[BatchEntry]


class WhatIfRequest(BaseModel):
    b: int = Field(gt=0)
    theta: dict[str, float] | None = None
    theta0: float | None = None


@dataclass
class Session:
    id: str
    name: str | None
    budget: int
    eta: float
    theta0: float | None
    category_names: list[str]
    weights: np.ndarray
    thetas: np.ndarray
    prior: PriorSpec
    counts: np.ndarray
    intervals: IntervalSet
    batches: list[list[dict]] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def num_categories(self) -> int:
        return len(self.category_names)

    @property
    def total_samples(self) -> int:
        return int(self.counts.sum())

    def schedule(self) -> DeltaSchedule:
        return DeltaSchedule(self.num_categories, 2, self.budget, self.eta)

    def posterior(self) -> PosteriorState:
        return PosteriorState(self.prior.alphas, self.counts,
                              step=self.total_samples + 1,
                              truncation=self.prior.truncation)

    def bounds(self) -> np.ndarray:
        return np.array([variance_ucb(self.intervals, k).value
                         for k in range(self.num_categories)])


def _build_session(sid: str, req: CreateSessionRequest) -> Session:
    if not req.categories:
        raise ServiceError(422, "validation", "at least one category required",
                           "categories")
    names = [c.name for c in req.categories]
    if len(set(names)) != len(names):
        raise ServiceError(422, "validation", "duplicate category names",
                           "categories")
    K = len(names)
    weights = np.array([c.weight for c in req.categories], dtype=np.float64)
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
        raise ServiceError(422, "validation",
                           f"weights must be nonnegative and sum to 1 "
                           f"(got {weights.sum():.6g})", "categories.weight")
    thetas = np.array([c.theta if c.theta is not None else np.inf
                       for c in req.categories])
    if np.any(thetas <= 0):
        raise ServiceError(422, "validation", "theta targets must be positive",
                           "categories.theta")
    if req.budget < 1:
        raise ServiceError(422, "validation", "budget must be >= 1", "budget")
    eta = req.eta if req.eta is not None else min(1.0, 1.0 / req.budget)
    if not (0.0 < eta <= 1.0):
        raise ServiceError(422, "validation", "eta must lie in (0, 1]", "eta")
    if req.theta0 is not None and req.theta0 <= 0:
        raise ServiceError(422, "validation", "theta0 must be positive", "theta0")

    alphas = np.ones((K, 2))
    truncation = None
    if req.prior is not None:
        if req.prior.alphas is not None:
            alphas = np.asarray(req.prior.alphas, dtype=np.float64)
            if alphas.shape != (K, 2) or np.any(alphas <= 0):
                raise ServiceError(422, "validation",
                                   "prior.alphas must be a positive K x 2 matrix",
                                   "prior.alphas")
        if req.prior.truncation is not None:
            rows = req.prior.truncation
            if len(rows) != K:
                raise ServiceError(422, "validation",
                                   "prior.truncation needs one entry per category",
                                   "prior.truncation")
            truncation = np.array([[0.0, 1.0] if r is None else [r[0], r[1]]
                                   for r in rows], dtype=np.float64)
            ok = np.all((truncation[:, 0] >= 0) & (truncation[:, 1] <= 1)
                        & (truncation[:, 0] < truncation[:, 1]))
            if not ok:
                raise ServiceError(422, "validation",
                                   "truncation rows must satisfy 0 <= lo < hi <= 1",
                                   "prior.truncation")
    try:
        prior = PriorSpec(alphas, truncation)
    except ApsError as exc:
        raise ServiceError(422, "validation", str(exc), "prior") from exc

    session = Session(
        id=sid, name=req.name, budget=req.budget, eta=eta,
        theta0=req.theta0, category_names=names, weights=weights,
        thetas=thetas, prior=prior,
        counts=np.zeros((K, 2), dtype=np.int64),
        intervals=IntervalSet.full(K, 2),
    )
    # Prior-informed intervals exist from the start (step 1 refresh).
    session.intervals = update_intervals(session.intervals,
                                         session.posterior(),
                                         session.schedule())
    return session


def _apply_batch(session: Session, req: RecordBatchRequest) -> None:
    index = {n: i for i, n in enumerate(session.category_names)}
    delta = np.zeros_like(session.counts)
    for j, entry in enumerate(req.counts):
        if entry.category not in index:
            raise ServiceError(422, "validation",
                               f"unknown category {entry.category!r}",
                               f"counts[{j}].category")
        if entry.samples < 0 or entry.positives < 0:
            raise ServiceError(422, "validation", "counts must be nonnegative",
                               f"counts[{j}]")
        if entry.positives > entry.samples:
            raise ServiceError(422, "validation",
                               f"positives {entry.positives} exceed samples "
                               f"{entry.samples}", f"counts[{j}].positives")
        k = index[entry.category]
        delta[k, 1] += entry.positives
        delta[k, 0] += entry.samples - entry.positives
    session.counts = session.counts + delta
    session.batches.append([e.model_dump() for e in req.counts])
    # One interval refresh per recorded batch.
    session.intervals = update_intervals(session.intervals,
                                         session.posterior(),
                                         session.schedule())


def _estimates_payload(session: Session) -> dict:
    post = session.posterior()
    means = post.posterior_mean()[:, 1]
    t = session.counts.sum(axis=1)
    cats = []
    for k, name in enumerate(session.category_names):
        tk = int(t[k])
        empirical = (session.counts[k, 1] / tk) if tk > 0 else None
        cats.append({
            "name": name,
            "weight": float(session.weights[k]),
            "theta": (None if not np.isfinite(session.thetas[k])
                      else float(session.thetas[k])),
            "alpha": [float(a) for a in post.alpha[k]],
            "samples": tk,
            "positives": int(session.counts[k, 1]),
            "posterior_mean": float(means[k]),
            "empirical": None if empirical is None else float(empirical),
            "interval": {
                "lower": float(session.intervals.lower[k, 1]),
                "upper": float(session.intervals.upper[k, 1]),
            },
        })
    starved = bool(np.any(t == 0))
    r_emp = None
    if not starved:
        r_emp = float(np.sum(session.weights * session.counts[:, 1]
                             / np.maximum(t, 1)))
    return {
        "id": session.id,
        "n": session.total_samples,
        "budget": session.budget,
        "eta": session.eta,
        "theta0": session.theta0,
        "categories": cats,
        "overall": {
            "r_hat": r_emp,
            "r_hat_posterior": float(np.sum(session.weights * means)),
        },
    }


def session_state_hash(session: Session) -> str:
    """Canonical digest of everything that defines the session's state."""
    body = {
        "id": session.id,
        "budget": session.budget,
        "eta": session.eta,
        "theta0": session.theta0,
        "names": session.category_names,
        "weights": session.weights.tolist(),
        "thetas": [None if not np.isfinite(t) else float(t)
                   for t in session.thetas],
        "prior": session.prior.alphas.tolist(),
        "truncation": (None if session.prior.truncation is None
                       else session.prior.truncation.tolist()),
        "counts": session.counts.tolist(),
        "intervals": [session.intervals.lower.tolist(),
                      session.intervals.upper.tolist()],
        "batches": session.batches,
    }
    blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _recommendation_payload(session: Session, b: int,
                            theta: np.ndarray | None = None,
                            theta0: float | None = None) -> dict:
    if b < 1:
        raise ServiceError(422, "validation", "batch size must be >= 1", "b")
    use_theta = session.thetas if theta is None else theta
    use_theta0 = (theta0 if theta0 is not None
                  else (session.theta0 if session.theta0 is not None else np.inf))
    if not (np.isfinite(use_theta).any() or np.isfinite(use_theta0)):
        # Nothing to balance: fall back to protecting the overall estimate.
        use_theta0 = 1.0
    u = session.bounds()
    spec = BatchConstraintSpec(theta=use_theta, theta0=use_theta0,
                               weights=session.weights, batch_size=b)
    result = batch_allocate(u, session.counts.sum(axis=1).astype(np.float64),
                            spec)
    t = session.counts.sum(axis=1)
    return {
        "b": b,
        "lam": result.lam,
        "overall_term": result.overall_term,
        "binding_overall": result.binding_overall,
        "categories": [
            {
                "name": session.category_names[k],
                "tau": float(result.real[k]),
                "tau_int": int(result.integer[k]),
                "u": float(u[k]),
                "T": int(t[k]),
                "theta": (None if not np.isfinite(use_theta[k])
                          else float(use_theta[k])),
                "binding": bool(result.binding_per_category[k]),
            }
            for k in range(session.num_categories)
        ],
    }


class _Journal:
    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()

    def append(self, event: dict) -> None:
        if self.path is None:
            return
        line = json.dumps(event, sort_keys=True, separators=(",", ":"))
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())

    def replay(self) -> list[dict]:
        if self.path is None or not self.path.exists():
            return []
        events = []
        with open(self.path, encoding="utf-8") as fh:
            for i, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    events.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ServiceError(500, "journal-corrupt",
                                       f"journal line {i} unreadable: {exc}") from exc
        return events


def create_app(journal_path: str | Path | None = None) -> FastAPI:
    """Build the service; replays the journal (if any) to rebuild sessions."""
    app = FastAPI(title="aps planning service", docs_url=None, redoc_url=None)
    # The browser console is served from its own origin during development.
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    journal = _Journal(journal_path)
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()

    def require_auth(request: Request) -> None:
        token = os.environ.get("APS_TOKEN", "")
        if not token:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise ServiceError(401, "unauthorized", "missing or bad token")

    def get_session(sid: str) -> Session:
        with registry_lock:
            session = sessions.get(sid)
        if session is None:
            raise ServiceError(404, "not-found", f"no session {sid!r}")
        return session

    @app.exception_handler(ServiceError)
    async def _service_error(_req: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status, content=exc.payload())

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_req: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        loc = ".".join(str(p) for p in first.get("loc", ()) if p != "body")
        return JSONResponse(status_code=422, content={
            "code": "validation",
            "message": first.get("msg", "invalid request"),
            "field": loc or None,
        })

    @app.exception_handler(ApsError)
    async def _aps_error(_req: Request, exc: ApsError):
        return JSONResponse(status_code=422, content={
            "code": "invalid-input", "message": str(exc)})

    def _create(req: CreateSessionRequest, sid: str | None = None) -> Session:
        session = _build_session(sid or uuid.uuid4().hex[:12], req)
        with registry_lock:
            if session.id in sessions:
                raise ServiceError(409, "conflict",
                                   f"session {session.id} already exists")
            sessions[session.id] = session
        return session

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "sessions": len(sessions)}

    @app.post("/sessions", status_code=201,
              dependencies=[Depends(require_auth)])
    def create_session(req: CreateSessionRequest):
        session = _create(req)
        journal.append({"type": "create", "id": session.id,
                        "payload": req.model_dump()})
        return _estimates_payload(session) | {
            "state_hash": session_state_hash(session)}

    @app.get("/sessions/{sid}", dependencies=[Depends(require_auth)])
    def get_session_view(sid: str):
        session = get_session(sid)
        with session.lock:
            return _estimates_payload(session) | {
                "batches": session.batches,
                "state_hash": session_state_hash(session),
            }

    @app.post("/sessions/{sid}/batches", dependencies=[Depends(require_auth)])
    def record_batch(sid: str, req: RecordBatchRequest):
        session = get_session(sid)
        with session.lock:
            _apply_batch(session, req)
            journal.append({"type": "batch", "id": sid,
                            "payload": req.model_dump()})
            return _estimates_payload(session) | {
                "state_hash": session_state_hash(session)}

    @app.get("/sessions/{sid}/recommendation",
             dependencies=[Depends(require_auth)])
    def recommend(sid: str, b: int = 100):
        session = get_session(sid)
        with session.lock:
            return _recommendation_payload(session, b)

    @app.post("/sessions/{sid}/whatif", dependencies=[Depends(require_auth)])
    def whatif(sid: str, req: WhatIfRequest):
        session = get_session(sid)
        with session.lock:
            current = _recommendation_payload(session, req.b)
            theta = session.thetas.copy()
            if req.theta:
                index = {n: i for i, n in enumerate(session.category_names)}
                for name, val in req.theta.items():
                    if name not in index:
                        raise ServiceError(422, "validation",
                                           f"unknown category {name!r}", "theta")
                    if val <= 0:
                        raise ServiceError(422, "validation",
                                           "theta must be positive",
                                           f"theta.{name}")
                    theta[index[name]] = val
            hypothetical = _recommendation_payload(session, req.b, theta,
                                                   req.theta0)
            return {"current": current, "hypothetical": hypothetical}

    @app.get("/sessions/{sid}/estimates", dependencies=[Depends(require_auth)])
    def estimates(sid: str):
        session = get_session(sid)
        with session.lock:
            return _estimates_payload(session)

    # Rebuild state from the journal (ids come from the recorded events).
    for event in journal.replay():
        if event["type"] == "create":
            _create(CreateSessionRequest(**event["payload"]), sid=event["id"])
        elif event["type"] == "batch":
            session = get_session(event["id"])
            _apply_batch(session, RecordBatchRequest(**event["payload"]))

    app.state.sessions = sessions
    app.state.journal = journal
    return app
