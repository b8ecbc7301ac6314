"""Persistence: the four tables, TSV ingestion, assignment, export.

Backed by a single-file SQLite database. Every public operation takes the
store-wide lock and runs its statements in one transaction, which makes
next_instance and commit_bundle linearizable and commits atomic: after a
crash a record is either fully present or fully absent.

The clock is injectable so lease expiry can be scripted in tests.
"""

from __future__ import annotations

import hashlib
import json
import secrets
import sqlite3
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from .engine import AnnotationBundle, Instance
from .errors import StoreError
from .tsv import TsvEscapeError, escape_field, unescape_field

TSV_HEADER = "content\tcontext\tmeta"

DEFAULT_ANNOTATORS_PER_INSTANCE = 1
DEFAULT_LEASE_MINUTES = 1440

# scrypt cost parameters (n, r, p); tests may lower n to keep suites fast.
DEFAULT_HASH_PARAMS = (2 ** 14, 8, 1)

_SCHEMA = """
CREATE TABLE IF NOT EXISTS data (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    content TEXT NOT NULL,
    context TEXT,
    meta TEXT NOT NULL,
    kind TEXT NOT NULL CHECK (kind IN ('text', 'file'))
);
CREATE TABLE IF NOT EXISTS annotations (
    instance_id INTEGER NOT NULL REFERENCES data(id),
    user_id INTEGER NOT NULL REFERENCES users(id),
    answers TEXT NOT NULL,
    committed_at REAL NOT NULL,
    PRIMARY KEY (instance_id, user_id)
);
CREATE TABLE IF NOT EXISTS users (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    username TEXT NOT NULL UNIQUE,
    email TEXT NOT NULL,
    full_name TEXT NOT NULL,
    password_hash TEXT NOT NULL,
    role TEXT NOT NULL CHECK (role IN ('annotator', 'administrator')),
    active INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS options (
    annotators_per_instance INTEGER NOT NULL,
    assignment_lease_minutes INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS assignments (
    instance_id INTEGER NOT NULL REFERENCES data(id),
    user_id INTEGER NOT NULL REFERENCES users(id),
    expires_at REAL NOT NULL,
    PRIMARY KEY (instance_id, user_id)
);
"""


@dataclass(frozen=True)
class Assignment:
    user_id: int
    expires_at: float


@dataclass(frozen=True)
class InstanceRecord:
    id: int
    kind: str
    content: str | tuple[str, ...]
    context: str | None
    meta: str
    completed_by: frozenset[int] = frozenset()
    assigned_to: tuple[Assignment, ...] = ()

    def to_engine_instance(self) -> Instance:
        return Instance(id=self.id, kind=self.kind, content=self.content,
                        context=self.context, meta=self.meta)


@dataclass(frozen=True)
class AnnotationRecord:
    instance_id: int
    user_id: int
    answers: tuple[dict, ...]
    committed_at: float


@dataclass(frozen=True)
class UserRecord:
    id: int
    username: str
    email: str
    full_name: str
    password_hash: str = field(repr=False)
    role: str = "annotator"
    active: bool = False


@dataclass(frozen=True)
class OptionsRecord:
    annotators_per_instance: int = DEFAULT_ANNOTATORS_PER_INSTANCE
    assignment_lease_minutes: int = DEFAULT_LEASE_MINUTES


@dataclass(frozen=True)
class RejectedLine:
    line: int
    reason: str


@dataclass(frozen=True)
class ImportReport:
    inserted: int
    rejected: tuple[RejectedLine, ...]

    def to_dict(self) -> dict[str, Any]:
        return {"inserted": self.inserted,
                "rejected": [{"line": r.line, "reason": r.reason} for r in self.rejected]}


def hash_password(password: str, params: tuple[int, int, int] = DEFAULT_HASH_PARAMS) -> str:
    n, r, p = params
    salt = secrets.token_bytes(16)
    digest = hashlib.scrypt(password.encode(), salt=salt, n=n, r=r, p=p,
                            maxmem=128 * 1024 * 1024)
    return f"scrypt${n}${r}${p}${salt.hex()}${digest.hex()}"


def verify_password(password: str, stored: str) -> bool:
    try:
        scheme, n, r, p, salt_hex, digest_hex = stored.split("$")
        if scheme != "scrypt":
            return False
        digest = hashlib.scrypt(password.encode(), salt=bytes.fromhex(salt_hex),
                                n=int(n), r=int(r), p=int(p),
                                maxmem=128 * 1024 * 1024)
        return secrets.compare_digest(digest.hex(), digest_hex)
    except (ValueError, TypeError):
        return False


def _detect_kind(content: str) -> str:
    """File instances carry their page references as a JSON array of strings."""
    if content.lstrip().startswith("["):
        try:
            pages = json.loads(content)
        except json.JSONDecodeError:
            return "text"
        if isinstance(pages, list) and all(isinstance(p, str) for p in pages):
            return "file"
    return "text"


class Datastore:
    def __init__(self, path: str | Path = ":memory:", *,
                 clock: Callable[[], float] = time.time,
                 hash_params: tuple[int, int, int] = DEFAULT_HASH_PARAMS):
        self._lock = threading.RLock()
        self._clock = clock
        self._hash_params = hash_params
        self._conn = sqlite3.connect(str(path), check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        with self._lock, self._conn:
            self._conn.executescript(_SCHEMA)
            row = self._conn.execute("SELECT COUNT(*) AS c FROM options").fetchone()
            if row["c"] == 0:
                self._conn.execute(
                    "INSERT INTO options (annotators_per_instance, assignment_lease_minutes)"
                    " VALUES (?, ?)",
                    (DEFAULT_ANNOTATORS_PER_INSTANCE, DEFAULT_LEASE_MINUTES))

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    # -- data ---------------------------------------------------------------

    def import_tsv(self, stream: str | Iterable[str]) -> ImportReport:
        """Ingest rows; bad rows are reported per line, good rows still land."""
        text = stream if isinstance(stream, str) else "".join(stream)
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines or lines[0] != TSV_HEADER:
            return ImportReport(inserted=0, rejected=(RejectedLine(1, "bad-header"),))

        inserted = 0
        rejected: list[RejectedLine] = []
        with self._lock, self._conn:
            for offset, line in enumerate(lines[1:]):
                line_no = offset + 2
                reason = self._insert_row(line)
                if reason is None:
                    inserted += 1
                else:
                    rejected.append(RejectedLine(line_no, reason))
        return ImportReport(inserted=inserted, rejected=tuple(rejected))

    def _insert_row(self, line: str) -> str | None:
        fields = line.split("\t")
        if len(fields) != 3:
            return "column-count"
        try:
            content, context, meta = (unescape_field(f) for f in fields)
        except TsvEscapeError:
            return "bad-escape"
        if content == "":
            return "empty-content"
        try:
            json.loads(meta)
        except json.JSONDecodeError:
            return "invalid-meta"
        self._conn.execute(
            "INSERT INTO data (content, context, meta, kind) VALUES (?, ?, ?, ?)",
            (content, context if context != "" else None, meta, _detect_kind(content)))
        return None

    def get_instance(self, instance_id: int) -> InstanceRecord | None:
        with self._lock:
            row = self._conn.execute("SELECT * FROM data WHERE id = ?",
                                     (instance_id,)).fetchone()
            if row is None:
                return None
            return self._instance_record(row)

    def list_instances(self) -> list[InstanceRecord]:
        with self._lock:
            rows = self._conn.execute("SELECT * FROM data ORDER BY id").fetchall()
            return [self._instance_record(row) for row in rows]

    def _instance_record(self, row: sqlite3.Row) -> InstanceRecord:
        completed = frozenset(
            r["user_id"] for r in self._conn.execute(
                "SELECT user_id FROM annotations WHERE instance_id = ?", (row["id"],)))
        now = self._clock()
        leases = tuple(
            Assignment(r["user_id"], r["expires_at"]) for r in self._conn.execute(
                "SELECT user_id, expires_at FROM assignments"
                " WHERE instance_id = ? AND expires_at > ? ORDER BY user_id",
                (row["id"], now)))
        content: str | tuple[str, ...] = row["content"]
        if row["kind"] == "file":
            content = tuple(json.loads(row["content"]))
        return InstanceRecord(id=row["id"], kind=row["kind"], content=content,
                              context=row["context"], meta=row["meta"],
                              completed_by=completed, assigned_to=leases)

    # -- assignment ---------------------------------------------------------

    def next_instance(self, user_id: int) -> InstanceRecord | None:
        """Deterministically hand out the lowest-id eligible instance.

        Eligible: the user has neither completed nor currently holds it, and
        completions plus unexpired leases stay below the K option.
        """
        with self._lock, self._conn:
            user = self._require_user(user_id)
            if not user.active:
                raise StoreError("user-inactive", f"user {user.username!r} is inactive")
            now = self._clock()
            self._conn.execute("DELETE FROM assignments WHERE expires_at <= ?", (now,))
            k = self.get_options().annotators_per_instance
            row = self._conn.execute(
                """
                SELECT d.id FROM data d
                WHERE NOT EXISTS (SELECT 1 FROM annotations a
                                  WHERE a.instance_id = d.id AND a.user_id = :user)
                  AND NOT EXISTS (SELECT 1 FROM assignments s
                                  WHERE s.instance_id = d.id AND s.user_id = :user)
                  AND ((SELECT COUNT(*) FROM annotations a WHERE a.instance_id = d.id)
                     + (SELECT COUNT(*) FROM assignments s WHERE s.instance_id = d.id)) < :k
                ORDER BY d.id LIMIT 1
                """,
                {"user": user_id, "k": k}).fetchone()
            if row is None:
                return None
            lease_minutes = self.get_options().assignment_lease_minutes
            self._conn.execute(
                "INSERT INTO assignments (instance_id, user_id, expires_at)"
                " VALUES (?, ?, ?)",
                (row["id"], user_id, now + lease_minutes * 60))
            return self.get_instance(row["id"])

    def lease_expiry(self, user_id: int, instance_id: int) -> float | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT expires_at FROM assignments"
                " WHERE instance_id = ? AND user_id = ? AND expires_at > ?",
                (instance_id, user_id, self._clock())).fetchone()
            return row["expires_at"] if row else None

    # -- annotations ----------------------------------------------------------

    def commit_bundle(self, user_id: int, bundle: AnnotationBundle | dict) -> AnnotationRecord:
        data = bundle.to_dict() if isinstance(bundle, AnnotationBundle) else dict(bundle)
        instance_id = data["instance_id"]
        answers = list(data["answers"])
        with self._lock, self._conn:
            self._require_user(user_id)
            if self._conn.execute("SELECT 1 FROM data WHERE id = ?",
                                  (instance_id,)).fetchone() is None:
                raise StoreError("unknown-instance", f"no instance {instance_id}")
            if self._conn.execute(
                    "SELECT 1 FROM annotations WHERE instance_id = ? AND user_id = ?",
                    (instance_id, user_id)).fetchone() is not None:
                raise StoreError("duplicate-commit",
                                 f"user {user_id} already annotated instance {instance_id}")
            now = self._clock()
            lease = self._conn.execute(
                "SELECT 1 FROM assignments WHERE instance_id = ? AND user_id = ?"
                " AND expires_at > ?", (instance_id, user_id, now)).fetchone()
            if lease is None:
                raise StoreError("not-assigned",
                                 f"user {user_id} holds no live assignment for"
                                 f" instance {instance_id}")
            self._conn.execute(
                "INSERT INTO annotations (instance_id, user_id, answers, committed_at)"
                " VALUES (?, ?, ?, ?)",
                (instance_id, user_id, json.dumps(answers, ensure_ascii=False,
                                                  separators=(",", ":")), now))
            self._release_assignment(instance_id, user_id)
            return AnnotationRecord(instance_id=instance_id, user_id=user_id,
                                    answers=tuple(answers), committed_at=now)

    def _release_assignment(self, instance_id: int, user_id: int) -> None:
        self._conn.execute(
            "DELETE FROM assignments WHERE instance_id = ? AND user_id = ?",
            (instance_id, user_id))

    def get_annotation(self, instance_id: int, user_id: int) -> AnnotationRecord | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT * FROM annotations WHERE instance_id = ? AND user_id = ?",
                (instance_id, user_id)).fetchone()
            return self._annotation_record(row) if row else None

    def list_annotations(self) -> list[AnnotationRecord]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT * FROM annotations ORDER BY instance_id, user_id").fetchall()
            return [self._annotation_record(row) for row in rows]

    @staticmethod
    def _annotation_record(row: sqlite3.Row) -> AnnotationRecord:
        return AnnotationRecord(instance_id=row["instance_id"], user_id=row["user_id"],
                                answers=tuple(json.loads(row["answers"])),
                                committed_at=row["committed_at"])

    # -- users ----------------------------------------------------------------

    def create_user(self, username: str, email: str, full_name: str, password: str,
                    role: str = "annotator", active: bool = False) -> UserRecord:
        """New accounts default to inactive until an administrator activates them."""
        if not username:
            raise StoreError("invalid-user", "username must not be empty")
        if role not in ("annotator", "administrator"):
            raise StoreError("invalid-user", f"unknown role {role!r}")
        password_hash = hash_password(password, self._hash_params)
        with self._lock, self._conn:
            try:
                cursor = self._conn.execute(
                    "INSERT INTO users (username, email, full_name, password_hash,"
                    " role, active) VALUES (?, ?, ?, ?, ?, ?)",
                    (username, email, full_name, password_hash, role, int(active)))
            except sqlite3.IntegrityError:
                raise StoreError("duplicate-username",
                                 f"username {username!r} is taken") from None
            return UserRecord(id=cursor.lastrowid, username=username, email=email,
                              full_name=full_name, password_hash=password_hash,
                              role=role, active=active)

    def get_user(self, user_id: int) -> UserRecord | None:
        with self._lock:
            row = self._conn.execute("SELECT * FROM users WHERE id = ?",
                                     (user_id,)).fetchone()
            return self._user_record(row) if row else None

    def get_user_by_name(self, username: str) -> UserRecord | None:
        with self._lock:
            row = self._conn.execute("SELECT * FROM users WHERE username = ?",
                                     (username,)).fetchone()
            return self._user_record(row) if row else None

    def list_users(self) -> list[UserRecord]:
        with self._lock:
            rows = self._conn.execute("SELECT * FROM users ORDER BY id").fetchall()
            return [self._user_record(row) for row in rows]

    @staticmethod
    def _user_record(row: sqlite3.Row) -> UserRecord:
        return UserRecord(id=row["id"], username=row["username"], email=row["email"],
                          full_name=row["full_name"], password_hash=row["password_hash"],
                          role=row["role"], active=bool(row["active"]))

    def _require_user(self, user_id: int) -> UserRecord:
        user = self.get_user(user_id)
        if user is None:
            raise StoreError("unknown-user", f"no user {user_id}")
        return user

    def set_active(self, user_id: int, active: bool) -> UserRecord:
        with self._lock, self._conn:
            self._require_user(user_id)
            self._conn.execute("UPDATE users SET active = ? WHERE id = ?",
                               (int(active), user_id))
            return self.get_user(user_id)

    def set_password(self, user_id: int, new_password: str) -> UserRecord:
        password_hash = hash_password(new_password, self._hash_params)
        with self._lock, self._conn:
            self._require_user(user_id)
            self._conn.execute("UPDATE users SET password_hash = ? WHERE id = ?",
                               (password_hash, user_id))
            return self.get_user(user_id)

    def authenticate(self, username: str, password: str) -> UserRecord:
        """Check credentials; inactive accounts are refused even with the right password."""
        user = self.get_user_by_name(username)
        if user is None or not verify_password(password, user.password_hash):
            raise StoreError("invalid-credentials", "unknown username or wrong password")
        if not user.active:
            raise StoreError("inactive", "account is not activated")
        return user

    def count_annotations(self, user_id: int) -> int:
        with self._lock:
            self._require_user(user_id)
            row = self._conn.execute(
                "SELECT COUNT(*) AS c FROM annotations WHERE user_id = ?",
                (user_id,)).fetchone()
            return row["c"]

    # -- options ----------------------------------------------------------------

    def get_options(self) -> OptionsRecord:
        with self._lock:
            row = self._conn.execute("SELECT * FROM options").fetchone()
            return OptionsRecord(annotators_per_instance=row["annotators_per_instance"],
                                 assignment_lease_minutes=row["assignment_lease_minutes"])

    def set_options(self, annotators_per_instance: int | None = None,
                    assignment_lease_minutes: int | None = None) -> OptionsRecord:
        current = self.get_options()
        k = current.annotators_per_instance if annotators_per_instance is None \
            else annotators_per_instance
        lease = current.assignment_lease_minutes if assignment_lease_minutes is None \
            else assignment_lease_minutes
        if not isinstance(k, int) or k < 1:
            raise StoreError("invalid-options", "annotators_per_instance must be >= 1")
        if not isinstance(lease, int) or lease < 1:
            raise StoreError("invalid-options", "assignment_lease_minutes must be >= 1")
        with self._lock, self._conn:
            self._conn.execute(
                "UPDATE options SET annotators_per_instance = ?,"
                " assignment_lease_minutes = ?", (k, lease))
        return OptionsRecord(k, lease)

    # -- stats / export -----------------------------------------------------------

    def stats(self) -> dict[str, Any]:
        with self._lock:
            users = [
                {"user_id": row["id"], "username": row["username"],
                 "annotations": row["c"]}
                for row in self._conn.execute(
                    "SELECT u.id, u.username,"
                    " (SELECT COUNT(*) FROM annotations a WHERE a.user_id = u.id) AS c"
                    " FROM users u ORDER BY u.id")]
            instances = [
                {"instance_id": row["id"], "completions": row["c"]}
                for row in self._conn.execute(
                    "SELECT d.id,"
                    " (SELECT COUNT(*) FROM annotations a WHERE a.instance_id = d.id) AS c"
                    " FROM data d ORDER BY d.id")]
        return {"users": users, "instances": instances}

    def export_annotations(self, state_order: Sequence[str] | None = None) -> str:
        """One row per annotation record, one column per (state, visit) pair.

        Visit 1 keeps the bare state name; visit k >= 2 becomes ``state#k``.
        Column order follows ``state_order`` (the protocol's definition
        order), visits ascending; states missing from the order sort last.
        """
        records = self.list_annotations()
        order = list(state_order or ())
        pairs: set[tuple[str, int]] = set()
        for record in records:
            for answer in record.answers:
                pairs.add((answer["state"], answer["visit"]))

        def rank(pair: tuple[str, int]):
            state, visit = pair
            idx = order.index(state) if state in order else len(order)
            return (idx, state, visit)

        columns = sorted(pairs, key=rank)
        header = ["instance_id", "user_id"] + [
            state if visit == 1 else f"{state}#{visit}" for state, visit in columns]
        lines = ["\t".join(header)]
        for record in records:
            cells = {(a["state"], a["visit"]): render_answer_cell(a["answer"])
                     for a in record.answers}
            row = [str(record.instance_id), str(record.user_id)]
            row.extend(cells.get(pair, "") for pair in columns)
            lines.append("\t".join(escape_field(cell) for cell in row))
        return "\n".join(lines) + "\n"

    def export_tables(self) -> dict[str, str]:
        """Lossless TSV dump of the four tables.

        The data dump reuses the import header, so importing it into a fresh
        store reproduces the records, ids included.
        """
        with self._lock:
            data_lines = [TSV_HEADER]
            for row in self._conn.execute("SELECT * FROM data ORDER BY id"):
                data_lines.append("\t".join(
                    escape_field(f) for f in (row["content"], row["context"] or "",
                                              row["meta"])))

            ann_lines = ["instance_id\tuser_id\tcommitted_at\tanswers"]
            for row in self._conn.execute(
                    "SELECT * FROM annotations ORDER BY instance_id, user_id"):
                ann_lines.append("\t".join(
                    escape_field(f) for f in (str(row["instance_id"]),
                                              str(row["user_id"]),
                                              repr(row["committed_at"]),
                                              row["answers"])))

            user_lines = ["id\tusername\temail\tfull_name\tpassword_hash\trole\tactive"]
            for row in self._conn.execute("SELECT * FROM users ORDER BY id"):
                user_lines.append("\t".join(
                    escape_field(f) for f in (str(row["id"]), row["username"],
                                              row["email"], row["full_name"],
                                              row["password_hash"], row["role"],
                                              "true" if row["active"] else "false")))

            options = self.get_options()
            option_lines = ["annotators_per_instance\tassignment_lease_minutes",
                            f"{options.annotators_per_instance}"
                            f"\t{options.assignment_lease_minutes}"]

        return {
            "data": "\n".join(data_lines) + "\n",
            "annotations": "\n".join(ann_lines) + "\n",
            "users": "\n".join(user_lines) + "\n",
            "options": "\n".join(option_lines) + "\n",
        }


def render_answer_cell(answer: dict) -> str:
    """Spreadsheet-friendly cell for one saved answer."""
    kind = answer.get("type")
    if kind == "ack":
        return "ack"
    if kind == "selection":
        return answer["value"]
    if kind == "selections":
        return "|".join(sorted(answer["values"]))
    if kind == "bool":
        return answer["value"]
    if kind == "page":
        return str(answer["index"])
    if kind == "spans":
        return json.dumps(answer["spans"], ensure_ascii=False, separators=(",", ":"))
    if kind == "boxes":
        return json.dumps(answer["boxes"], ensure_ascii=False, separators=(",", ":"))
    raise StoreError("bad-answer", f"cannot render answer of type {kind!r}")
