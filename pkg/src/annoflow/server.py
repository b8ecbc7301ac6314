"""HTTP facade: auth, protocol delivery, session workflow, admin consoles.

The client runs the machine locally but is never trusted: POST /annotations
carries the full answer trace and the server re-executes it through the
engine against the installed machine. A bundle reaches the store only when
the replay ends at `end`.

Errors are ``{"code", "message"}`` JSON bodies; 401 means no or bad
credentials, 403 means the role is insufficient.
"""

from __future__ import annotations

import secrets
import threading
import time
from typing import Callable

from fastapi import Depends, FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, RedirectResponse
from pydantic import BaseModel, Field

from .config import ServerConfig, load_config, load_registry
from .engine import finish_bundle, replay_trace, trace_from_dicts, Status
from .errors import EngineError, StoreError
from .machine import MachineDefinition
from .protocol import compile_source
from .registry import ApiRegistry
from .store import Datastore, UserRecord

_STORE_ERROR_STATUS = {
    "invalid-credentials": 401,
    "inactive": 401,
    "user-inactive": 401,
    "duplicate-username": 409,
    "not-assigned": 409,
    "duplicate-commit": 409,
    "unknown-instance": 409,
    "unknown-user": 404,
    "invalid-options": 422,
    "invalid-user": 422,
}


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class TokenTable:
    """In-process session tokens: 256-bit, expiring, revocable."""

    def __init__(self, ttl_minutes: int, clock: Callable[[], float] = time.time):
        self._ttl = ttl_minutes * 60
        self._clock = clock
        self._tokens: dict[str, tuple[int, float]] = {}
        self._lock = threading.Lock()

    def issue(self, user_id: int) -> tuple[str, float]:
        token = secrets.token_urlsafe(32)
        expires_at = self._clock() + self._ttl
        with self._lock:
            self._tokens[token] = (user_id, expires_at)
        return token, expires_at

    def resolve(self, token: str) -> int | None:
        now = self._clock()
        with self._lock:
            entry = self._tokens.get(token)
            if entry is None:
                return None
            user_id, expires_at = entry
            if expires_at <= now:
                del self._tokens[token]
                return None
            return user_id

    def revoke(self, token: str) -> None:
        with self._lock:
            self._tokens.pop(token, None)


class RegisterBody(BaseModel):
    username: str = Field(min_length=1)
    email: str = ""
    full_name: str = ""
    password: str = Field(min_length=1)


class LoginBody(BaseModel):
    username: str
    password: str


class TraceStep(BaseModel):
    state: str
    answer: dict


class AnnotationsBody(BaseModel):
    instance_id: int
    answer_trace: list[TraceStep]


class ApiCallBody(BaseModel):
    instance_id: int
    answers: list[dict] = Field(default_factory=list)


class OptionsBody(BaseModel):
    annotators_per_instance: int | None = None
    assignment_lease_minutes: int | None = None


class PasswordBody(BaseModel):
    password: str = Field(min_length=1)


def create_app(store: Datastore, *, machine: MachineDefinition | None = None,
               registry: ApiRegistry | None = None, static_dir: str | None = None,
               token_ttl_minutes: int = 720,
               clock: Callable[[], float] = time.time) -> FastAPI:
    app = FastAPI(title="annoflow", docs_url=None, redoc_url=None, openapi_url=None)
    tokens = TokenTable(token_ttl_minutes, clock)
    registry = registry if registry is not None else ApiRegistry()
    machine_json = machine.to_json() if machine is not None else None

    app.state.store = store
    app.state.machine = machine
    app.state.registry = registry

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status,
                            content={"code": exc.code, "message": exc.message})

    @app.exception_handler(StoreError)
    async def handle_store_error(request: Request, exc: StoreError):
        return JSONResponse(status_code=_STORE_ERROR_STATUS.get(exc.code, 400),
                            content={"code": exc.code, "message": exc.message})

    @app.exception_handler(EngineError)
    async def handle_engine_error(request: Request, exc: EngineError):
        return JSONResponse(status_code=422,
                            content={"code": exc.code, "message": exc.message})

    @app.exception_handler(RequestValidationError)
    async def handle_validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=422,
                            content={"code": "bad-request", "message": str(exc.errors())})

    def require_user(request: Request) -> UserRecord:
        header = request.headers.get("Authorization", "")
        if not header.startswith("Bearer "):
            raise ApiError(401, "unauthorized", "missing bearer token")
        user_id = tokens.resolve(header[len("Bearer "):])
        if user_id is None:
            raise ApiError(401, "unauthorized", "invalid or expired token")
        user = store.get_user(user_id)
        if user is None or not user.active:
            raise ApiError(401, "inactive", "account is not active")
        return user

    def require_admin(user: UserRecord = Depends(require_user)) -> UserRecord:
        if user.role != "administrator":
            raise ApiError(403, "forbidden", "administrator role required")
        return user

    # -- auth ---------------------------------------------------------------

    @app.post("/auth/register")
    def register(body: RegisterBody):
        user = store.create_user(body.username, body.email, body.full_name,
                                 body.password, role="annotator", active=False)
        return {"id": user.id, "username": user.username, "active": user.active}

    @app.post("/auth/login")
    def login(body: LoginBody):
        user = store.authenticate(body.username, body.password)
        token, expires_at = tokens.issue(user.id)
        return {"token": token, "user_id": user.id, "role": user.role,
                "expires_at": expires_at}

    @app.post("/auth/logout")
    def logout(request: Request, user: UserRecord = Depends(require_user)):
        tokens.revoke(request.headers["Authorization"][len("Bearer "):])
        return {"ok": True}

    # -- protocol and workflow ------------------------------------------------

    @app.get("/protocol")
    def protocol(user: UserRecord = Depends(require_user)):
        if machine_json is None:
            raise ApiError(503, "no-protocol", "no valid protocol is installed")
        return Response(content=machine_json, media_type="application/json")

    @app.get("/instances/next")
    def next_instance(user: UserRecord = Depends(require_user)):
        record = store.next_instance(user.id)
        if record is None:
            return {"instance": None, "lease": None}
        # `meta` stays server-side; annotators never see it.
        payload = record.to_engine_instance().payload(include_meta=False)
        return {"instance": payload,
                "lease": {"expires_at": store.lease_expiry(user.id, record.id)}}

    @app.post("/annotations")
    def submit_annotations(body: AnnotationsBody,
                           user: UserRecord = Depends(require_user)):
        if machine is None:
            raise ApiError(503, "no-protocol", "no valid protocol is installed")
        record = store.get_instance(body.instance_id)
        if record is None:
            raise StoreError("unknown-instance", f"no instance {body.instance_id}")
        trace = trace_from_dicts([step.model_dump() for step in body.answer_trace])
        session = replay_trace(machine, record.to_engine_instance(), trace, registry)
        if session.status is not Status.COMPLETED:
            raise ApiError(422, "replay-failed",
                           session.diagnostic or "trace did not reach the end state")
        committed = store.commit_bundle(user.id, finish_bundle(session))
        return {"instance_id": committed.instance_id, "user_id": committed.user_id,
                "saved_answers": len(committed.answers),
                "committed_at": committed.committed_at}

    @app.post("/api/call/{name}")
    def api_call(name: str, body: ApiCallBody,
                 user: UserRecord = Depends(require_user)):
        handler = registry.get(name)
        if handler is None:
            raise ApiError(404, "unknown-function",
                           f"no API function named {name!r}")
        record = store.get_instance(body.instance_id)
        if record is None:
            raise ApiError(422, "unknown-instance", f"no instance {body.instance_id}")
        try:
            payload = handler(record.to_engine_instance().payload(), body.answers)
        except Exception as exc:  # noqa: BLE001 - plugin code is untrusted
            raise ApiError(502, "handler-failure",
                           f"API function {name!r} failed: {exc}") from exc
        return JSONResponse(content=payload)

    # -- data console -----------------------------------------------------------

    @app.post("/data/upload")
    async def upload(request: Request, user: UserRecord = Depends(require_admin)):
        raw = await request.body()
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ApiError(422, "bad-encoding", f"body is not UTF-8: {exc}") from exc
        return store.import_tsv(text).to_dict()

    @app.get("/data/export")
    def export(table: str | None = None, user: UserRecord = Depends(require_admin)):
        if table is None:
            order = machine.state_order() if machine is not None else None
            text, filename = store.export_annotations(order), "export.tsv"
        else:
            tables = store.export_tables()
            if table not in tables:
                raise ApiError(422, "unknown-table",
                               f"table must be one of: {', '.join(sorted(tables))}")
            text, filename = tables[table], f"{table}.tsv"
        return Response(content=text, media_type="text/tab-separated-values",
                        headers={"Content-Disposition":
                                 f'attachment; filename="{filename}"'})

    # -- admin console ------------------------------------------------------------

    @app.get("/admin/options")
    def get_options(user: UserRecord = Depends(require_admin)):
        options = store.get_options()
        return {"annotators_per_instance": options.annotators_per_instance,
                "assignment_lease_minutes": options.assignment_lease_minutes}

    @app.put("/admin/options")
    def put_options(body: OptionsBody, user: UserRecord = Depends(require_admin)):
        options = store.set_options(body.annotators_per_instance,
                                    body.assignment_lease_minutes)
        return {"annotators_per_instance": options.annotators_per_instance,
                "assignment_lease_minutes": options.assignment_lease_minutes}

    @app.post("/admin/users/{user_id}/activate")
    def activate(user_id: int, user: UserRecord = Depends(require_admin)):
        changed = store.set_active(user_id, True)
        return {"id": changed.id, "active": changed.active}

    @app.post("/admin/users/{user_id}/deactivate")
    def deactivate(user_id: int, user: UserRecord = Depends(require_admin)):
        changed = store.set_active(user_id, False)
        return {"id": changed.id, "active": changed.active}

    @app.post("/admin/users/{user_id}/password")
    def change_password(user_id: int, body: PasswordBody,
                        user: UserRecord = Depends(require_admin)):
        store.set_password(user_id, body.password)
        return {"id": user_id, "ok": True}

    @app.get("/admin/stats")
    def stats(user: UserRecord = Depends(require_admin)):
        return store.stats()

    # -- client bundle --------------------------------------------------------------

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/app", StaticFiles(directory=static_dir, html=True), name="app")

        @app.get("/", include_in_schema=False)
        def index():
            return RedirectResponse(url="/app/")

    return app


def build_app(config: ServerConfig | None = None,
              config_path: str | None = None) -> FastAPI:
    """Assemble an app from configuration: store, protocol, plugins, assets."""
    if config is None:
        config = load_config(config_path)
    store = Datastore(config.store_path)
    if config.lease_minutes is not None:
        store.set_options(assignment_lease_minutes=config.lease_minutes)
    machine = None
    if config.ap_path:
        from pathlib import Path

        machine = compile_source(Path(config.ap_path).read_text(encoding="utf-8"))
    registry = load_registry(config.registry)
    return create_app(store, machine=machine, registry=registry,
                      static_dir=config.static_dir,
                      token_ttl_minutes=config.token_ttl_minutes)
