import json
import random
import threading

import pytest

from annoflow.engine import AnnotationBundle, SavedAnswer, Selection, Selections
from annoflow.errors import StoreError
from annoflow.store import Datastore, hash_password, verify_password

from support import check_tsv_line, random_tsv_document

FAST_HASH = (2 ** 4, 8, 1)

TSV = ("content\tcontext\tmeta\n"
       "first comment\tthread A\t{}\n"
       "second comment\t\t{\"k\": 1}\n"
       "third with tab \\t inside\tthread B\t{}\n")


class FakeClock:
    def __init__(self, now=1_000_000.0):
        self.now = now

    def __call__(self):
        return self.now

    def advance(self, seconds):
        self.now += seconds


@pytest.fixture()
def store(tmp_path):
    return Datastore(tmp_path / "test.db", clock=FakeClock(), hash_params=FAST_HASH)


def make_user(store, name="alice", role="annotator", active=True):
    return store.create_user(name, f"{name}@example.org", name.title(), "pw-" + name,
                             role=role, active=active)


def bundle_for(instance_id, *answers):
    return AnnotationBundle(instance_id=instance_id, answers=tuple(answers))


def test_import_valid_rows(store):
    report = store.import_tsv(TSV)
    assert report.inserted == 3
    assert report.rejected == ()
    records = store.list_instances()
    assert [r.id for r in records] == [1, 2, 3]
    assert records[1].context is None
    assert "tab \t inside" in records[2].content


def test_import_rejects_bad_rows_but_keeps_good_ones(store):
    text = ("content\tcontext\tmeta\n"
            "ok\tctx\t{}\n"
            "two\tfields\n"
            "also ok\t\t{}\n"
            "\tctx\t{}\n"
            "meta broken\tctx\t{nope\n")
    report = store.import_tsv(text)
    assert report.inserted == 2
    assert [(r.line, r.reason) for r in report.rejected] == [
        (3, "column-count"), (5, "empty-content"), (6, "invalid-meta")]


def test_import_requires_exact_header(store):
    report = store.import_tsv("content\tmeta\nrow\t{}\n")
    assert report.inserted == 0
    assert [(r.line, r.reason) for r in report.rejected] == [(1, "bad-header")]


def test_file_instances_detected_from_json_array(store):
    store.import_tsv("content\tcontext\tmeta\n"
                     '["p1.png", "p2.png"]\t\t{}\n'
                     "plain text\t\t{}\n")
    first, second = store.list_instances()
    assert first.kind == "file"
    assert first.content == ("p1.png", "p2.png")
    assert second.kind == "text"


def test_import_counts_match_independent_checker(store):
    rng = random.Random(20260810)
    text, want_inserted, want_rejects = random_tsv_document(rng, rows=1000)
    report = store.import_tsv(text)
    assert report.inserted == want_inserted
    assert [(r.line, r.reason) for r in report.rejected] == want_rejects
    # Re-derive from scratch with the line checker.
    lines = text.strip("\n").split("\n")[1:]
    derived = [check_tsv_line(line) for line in lines]
    assert sum(1 for r in derived if r is None) == report.inserted
    assert [r for r in derived if r is not None] == [r.reason for r in report.rejected]


def test_assignment_is_lowest_id_first(store):
    store.import_tsv(TSV)
    a = make_user(store, "alice")
    b = make_user(store, "bob")
    assert store.next_instance(a.id).id == 1
    assert store.next_instance(b.id).id == 2


def test_same_user_never_holds_instance_twice(store):
    store.import_tsv("content\tcontext\tmeta\nonly one\t\t{}\n")
    store.set_options(annotators_per_instance=2)
    user = make_user(store)
    assert store.next_instance(user.id).id == 1
    assert store.next_instance(user.id) is None


def test_inactive_user_cannot_draw(store):
    store.import_tsv(TSV)
    user = make_user(store, active=False)
    with pytest.raises(StoreError) as exc:
        store.next_instance(user.id)
    assert exc.value.code == "user-inactive"


def test_k_limits_concurrent_holders(store):
    store.import_tsv("content\tcontext\tmeta\nonly one\t\t{}\n")
    users = [make_user(store, f"u{i}") for i in range(3)]
    assert store.next_instance(users[0].id).id == 1
    assert store.next_instance(users[1].id) is None  # K=1, one lease out


def test_lease_expiry_frees_the_slot(store):
    store.import_tsv("content\tcontext\tmeta\nonly one\t\t{}\n")
    a, b = make_user(store, "a"), make_user(store, "b")
    store.set_options(assignment_lease_minutes=10)
    assert store.next_instance(a.id).id == 1
    assert store.next_instance(b.id) is None
    store._clock.advance(11 * 60)
    assert store.next_instance(b.id).id == 1


def test_commit_and_release(store):
    store.import_tsv(TSV)
    user = make_user(store)
    instance = store.next_instance(user.id)
    record = store.commit_bundle(user.id, bundle_for(
        instance.id, SavedAnswer("s2", 1, Selection("positive"))))
    assert record.answers[0]["state"] == "s2"
    assert store.lease_expiry(user.id, instance.id) is None
    assert store.get_instance(instance.id).completed_by == {user.id}
    assert store.count_annotations(user.id) == 1


def test_duplicate_commit_rejected(store):
    store.import_tsv(TSV)
    user = make_user(store)
    instance = store.next_instance(user.id)
    store.commit_bundle(user.id, bundle_for(instance.id))
    before = store.export_tables()
    with pytest.raises(StoreError) as exc:
        store.commit_bundle(user.id, bundle_for(instance.id))
    assert exc.value.code == "duplicate-commit"
    assert store.export_tables() == before


def test_commit_after_expiry_and_reassignment_is_refused(store):
    store.import_tsv("content\tcontext\tmeta\nonly one\t\t{}\n")
    store.set_options(assignment_lease_minutes=10)
    slow, fast = make_user(store, "slow"), make_user(store, "fast")
    instance = store.next_instance(slow.id)
    store._clock.advance(11 * 60)
    assert store.next_instance(fast.id).id == instance.id
    store.commit_bundle(fast.id, bundle_for(instance.id))
    with pytest.raises(StoreError) as exc:
        store.commit_bundle(slow.id, bundle_for(instance.id))
    assert exc.value.code == "not-assigned"


def test_commit_unknown_instance(store):
    user = make_user(store)
    with pytest.raises(StoreError) as exc:
        store.commit_bundle(user.id, bundle_for(99))
    assert exc.value.code == "unknown-instance"


def test_commit_is_atomic_when_release_crashes(store, monkeypatch, tmp_path):
    store.import_tsv(TSV)
    user = make_user(store)
    instance = store.next_instance(user.id)

    def crash(instance_id, user_id):
        raise RuntimeError("simulated crash between persist and release")

    monkeypatch.setattr(store, "_release_assignment", crash)
    with pytest.raises(RuntimeError):
        store.commit_bundle(user.id, bundle_for(instance.id))
    monkeypatch.undo()
    assert store.get_annotation(instance.id, user.id) is None
    assert store.lease_expiry(user.id, instance.id) is not None
    # The record is absent from a fresh handle on the same file too.
    reopened = Datastore(tmp_path / "test.db", hash_params=FAST_HASH)
    assert reopened.get_annotation(instance.id, user.id) is None
    reopened.close()


def test_committed_data_survives_reopen(store, tmp_path):
    store.import_tsv(TSV)
    user = make_user(store)
    instance = store.next_instance(user.id)
    store.commit_bundle(user.id, bundle_for(
        instance.id, SavedAnswer("s2", 1, Selection("neutral"))))
    reopened = Datastore(tmp_path / "test.db", hash_params=FAST_HASH)
    assert reopened.get_annotation(instance.id, user.id).answers[0]["state"] == "s2"
    reopened.close()


def test_export_single_record(store):
    store.import_tsv(TSV)
    user = make_user(store)
    instance = store.next_instance(user.id)
    store.commit_bundle(user.id, bundle_for(
        instance.id, SavedAnswer("s2", 1, Selection("positive"))))
    text = store.export_annotations(state_order=["start", "s2", "s3"])
    lines = text.splitlines()
    assert lines[0] == "instance_id\tuser_id\ts2"
    assert lines[1] == f"{instance.id}\t{user.id}\tpositive"


def test_export_empty_store_is_header_only(store):
    assert store.export_annotations() == "instance_id\tuser_id\n"


def test_export_checkmark_sorted_and_joined(store):
    store.import_tsv(TSV)
    user = make_user(store)
    instance = store.next_instance(user.id)
    store.commit_bundle(user.id, bundle_for(
        instance.id, SavedAnswer("tags", 1, Selections({"zebra", "ant", "mole"}))))
    lines = store.export_annotations().splitlines()
    assert lines[1].split("\t")[2] == "ant|mole|zebra"


def test_export_tables_round_trip(store):
    store.import_tsv(TSV)
    tables = store.export_tables()
    assert set(tables) == {"data", "annotations", "users", "options"}
    fresh = Datastore(hash_params=FAST_HASH)
    report = fresh.import_tsv(tables["data"])
    assert report.inserted == 3
    assert report.rejected == ()
    original = [(r.id, r.kind, r.content, r.context, r.meta)
                for r in store.list_instances()]
    reimported = [(r.id, r.kind, r.content, r.context, r.meta)
                  for r in fresh.list_instances()]
    assert original == reimported
    assert fresh.export_tables()["data"] == tables["data"]
    fresh.close()


def test_options_defaults_and_validation(store):
    options = store.get_options()
    assert options.annotators_per_instance == 1
    assert options.assignment_lease_minutes == 1440
    tables = store.export_tables()
    assert tables["options"].splitlines()[1] == "1\t1440"
    with pytest.raises(StoreError):
        store.set_options(annotators_per_instance=0)
    with pytest.raises(StoreError):
        store.set_options(assignment_lease_minutes=0)


def test_user_lifecycle(store):
    user = store.create_user("carol", "c@example.org", "Carol", "secret",
                             active=False)
    assert user.active is False
    with pytest.raises(StoreError) as exc:
        store.authenticate("carol", "secret")
    assert exc.value.code == "inactive"
    store.set_active(user.id, True)
    assert store.authenticate("carol", "secret").id == user.id
    with pytest.raises(StoreError) as exc:
        store.authenticate("carol", "wrong")
    assert exc.value.code == "invalid-credentials"
    store.set_active(user.id, False)
    with pytest.raises(StoreError):
        store.authenticate("carol", "secret")
    store.set_active(user.id, True)
    store.set_password(user.id, "next")
    with pytest.raises(StoreError):
        store.authenticate("carol", "secret")
    assert store.authenticate("carol", "next").id == user.id


def test_duplicate_username_rejected(store):
    make_user(store, "dave")
    with pytest.raises(StoreError) as exc:
        make_user(store, "dave")
    assert exc.value.code == "duplicate-username"


def test_password_hashes_are_salted_slow_hashes(store):
    first = hash_password("same", FAST_HASH)
    second = hash_password("same", FAST_HASH)
    assert first != second          # fresh salt every time
    assert first.startswith("scrypt$")
    assert verify_password("same", first)
    assert not verify_password("other", first)
    user = make_user(store, "erin")
    assert "pw-erin" not in json.dumps(store.export_tables())


def test_count_annotations_accumulates(store):
    store.import_tsv(TSV)
    user = make_user(store)
    for _ in range(3):
        instance = store.next_instance(user.id)
        store.commit_bundle(user.id, bundle_for(instance.id))
    assert store.count_annotations(user.id) == 3
    assert store.stats()["users"][0]["annotations"] == 3


def test_export_cells_match_engine_replay(store, loop_machine):
    """Every exported cell equals a fresh engine replay of the stored trace."""
    import random

    from annoflow.engine import finish_bundle, replay_trace
    from annoflow.store import render_answer_cell
    from support import random_trace

    store.import_tsv("content\tcontext\tmeta\n" +
                     "".join(f"comment {i}\t\t{{}}\n" for i in range(6)))
    user = make_user(store)
    rng = random.Random(5)
    traces = {}
    while True:
        record = store.next_instance(user.id)
        if record is None:
            break
        instance = record.to_engine_instance()
        trace = random_trace(rng, loop_machine, instance)
        traces[record.id] = (instance, trace)
        session = replay_trace(loop_machine, instance, trace)
        store.commit_bundle(user.id, finish_bundle(session))

    lines = store.export_annotations(loop_machine.state_order()).splitlines()
    header = lines[0].split("\t")
    for line in lines[1:]:
        cells = dict(zip(header, line.split("\t")))
        instance, trace = traces[int(cells["instance_id"])]
        bundle = finish_bundle(replay_trace(loop_machine, instance, trace))
        rederived = {}
        for answer in bundle.to_dict()["answers"]:
            name = answer["state"] if answer["visit"] == 1 else \
                f"{answer['state']}#{answer['visit']}"
            rederived[name] = render_answer_cell(answer["answer"])
        for column in header[2:]:
            assert cells[column] == rederived.get(column, "")


def test_concurrent_draws_never_over_assign(store):
    store.import_tsv("content\tcontext\tmeta\n" +
                     "".join(f"row {i}\t\t{{}}\n" for i in range(10)))
    store.set_options(annotators_per_instance=2)
    users = [make_user(store, f"w{i}") for i in range(5)]
    grants = []
    grants_lock = threading.Lock()

    def worker(user):
        while True:
            instance = store.next_instance(user.id)
            if instance is None:
                return
            with grants_lock:
                grants.append((user.id, instance.id))
            store.commit_bundle(user.id, bundle_for(instance.id))

    threads = [threading.Thread(target=worker, args=(u,)) for u in users]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    per_instance = {}
    for user_id, instance_id in grants:
        per_instance.setdefault(instance_id, []).append(user_id)
    for instance_id, holders in per_instance.items():
        assert len(holders) == 2
        assert len(set(holders)) == 2
