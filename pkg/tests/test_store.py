"""Store contract suite (runs on both backends) plus file-backend durability tests."""

from __future__ import annotations

import threading

import pytest

from e112core.errors import Conflict, NotFound, SimulatedCrash, UnknownMediaRef
from e112core.geo import Coordinate
from e112core.model import (
    Role,
    SosRequest,
    SosStatus,
    UserAccount,
    from_canon,
    to_canon,
)
from e112core.store import FileStore, MemoryStore, WriteOp, open_store

SHA256_EMPTY = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


@pytest.fixture(params=["memory", "file"])
def store(request, tmp_path):
    if request.param == "memory":
        s = MemoryStore()
    else:
        s = FileStore(tmp_path / "data")
    yield s
    s.close()


def doc(id="x1", status="open", created_at=1.0, **extra):
    d = {"id": id, "status": status, "created_at": created_at}
    d.update(extra)
    return d


class TestContract:
    def test_put_then_get_round_trips(self, store):
        store.put("case", "c1", doc("c1"), expected_version=0)
        got, version = store.get("case", "c1")
        assert got == doc("c1")
        assert version == 1

    def test_get_unknown_raises_not_found(self, store):
        with pytest.raises(NotFound):
            store.get("case", "nope")

    def test_returned_doc_is_a_copy(self, store):
        store.put("case", "c1", doc("c1"), 0)
        got, _ = store.get("case", "c1")
        got["status"] = "mutated"
        assert store.get("case", "c1")[0]["status"] == "open"

    def test_version_increments_and_stale_write_conflicts(self, store):
        v1 = store.put("case", "c1", doc("c1"), 0)
        v2 = store.put("case", "c1", doc("c1", status="closed"), v1)
        assert (v1, v2) == (1, 2)
        with pytest.raises(Conflict):
            store.put("case", "c1", doc("c1", status="reopened"), v1)

    def test_create_over_existing_conflicts(self, store):
        store.put("case", "c1", doc("c1"), 0)
        with pytest.raises(Conflict):
            store.put("case", "c1", doc("c1"), 0)

    def test_concurrent_writes_same_base_version_one_conflict(self, store):
        base = store.put("case", "c1", doc("c1"), 0)
        outcomes = []
        barrier = threading.Barrier(2)

        def writer(status):
            barrier.wait()
            try:
                store.put("case", "c1", doc("c1", status=status), base)
                outcomes.append("ok")
            except Conflict:
                outcomes.append("conflict")

        threads = [threading.Thread(target=writer, args=(s,)) for s in ("a", "b")]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(outcomes) == ["conflict", "ok"]

    def test_list_filters_and_stable_order(self, store):
        store.put("case", "b", doc("b", status="open", created_at=2.0, reporter="u1"), 0)
        store.put("case", "a", doc("a", status="open", created_at=2.0, reporter="u2"), 0)
        store.put("case", "c", doc("c", status="closed", created_at=1.0, reporter="u1"), 0)
        ids = [d["id"] for d, _ in store.list("case")]
        assert ids == ["c", "a", "b"]  # (created_at, id)
        assert [d["id"] for d, _ in store.list("case", where={"status": "open"})] == ["a", "b"]
        assert [d["id"] for d, _ in store.list("case", where={"reporter": "u1"})] == ["c", "b"]
        assert [d["id"] for d, _ in store.list("case", created_from=2.0)] == ["a", "b"]
        assert [d["id"] for d, _ in store.list("case", created_to=2.0)] == ["c"]
        assert [d["id"] for d, _ in store.list("case", limit=1, offset=1)] == ["a"]

    def test_list_does_not_mix_kinds(self, store):
        store.put("case", "c1", doc("c1"), 0)
        store.put("note", "n1", doc("n1"), 0)
        assert len(store.list("case")) == 1

    def test_atomic_group_all_applied(self, store):
        store.put("alert", "a1", doc("a1", status="draft"), 0)
        ops = [WriteOp("alert", "a1", doc("a1", status="active"), 1)]
        ops += [WriteOp("delivery", f"a1:u{i}", doc(f"a1:u{i}"), 0) for i in range(5)]
        store.atomically(ops)
        assert store.get("alert", "a1")[0]["status"] == "active"
        assert store.count("delivery") == 5

    def test_atomic_group_conflict_applies_nothing(self, store):
        store.put("alert", "a1", doc("a1", status="draft"), 0)
        ops = [
            WriteOp("delivery", "a1:u1", doc("a1:u1"), 0),
            WriteOp("alert", "a1", doc("a1", status="active"), 99),  # stale
        ]
        with pytest.raises(Conflict):
            store.atomically(ops)
        assert store.get("alert", "a1")[0]["status"] == "draft"
        assert store.count("delivery") == 0

    def test_empty_group_is_noop(self, store):
        assert store.atomically([]) == []

    def test_with_snapshot_sees_consistent_counts(self, store):
        store.put("case", "c1", doc("c1"), 0)
        store.put("case", "c2", doc("c2", status="closed"), 0)

        def agg(s):
            return (s.count("case"), s.count("case", {"status": "open"}))

        assert store.with_snapshot(agg) == (2, 1)

    def test_entity_canon_round_trip_through_store(self, store):
        entities = [
            UserAccount(id="u1", phone="+306912345678", verified=True,
                        display_name="Niki", role=Role.citizen, created_at=1.0,
                        push_token=None, last_location=(Coordinate(38.0, 23.7), 5.0)),
            SosRequest(id="s1", user_id="u1", location=Coordinate(1.25, -2.5),
                       created_at=2.0, status=SosStatus.open, note=None),
        ]
        for e in entities:
            kind = to_canon(e)["kind"]
            store.put(kind, e.id, to_canon(e), 0)
            got, _ = store.get(kind, e.id)
            assert from_canon(got) == e

    def test_media_round_trip_exact_bytes(self, store):
        data = bytes(range(256)) * 100
        digest = store.media_put(data)
        assert store.media_get(digest) == data

    def test_media_content_addressed_and_idempotent(self, store):
        d1 = store.media_put(b"same bytes")
        d2 = store.media_put(b"same bytes")
        assert d1 == d2
        assert store.media_has(d1)

    def test_empty_media_hash_is_wellknown_digest(self, store):
        assert store.media_put(b"") == SHA256_EMPTY

    def test_media_get_unknown_ref(self, store):
        with pytest.raises(UnknownMediaRef):
            store.media_get("f" * 64)


class TestFileDurability:
    def test_reopen_preserves_entities_and_media(self, tmp_path):
        root = tmp_path / "data"
        s = FileStore(root)
        s.put("case", "c1", doc("c1"), 0)
        s.put("case", "c1", doc("c1", status="closed"), 1)
        digest = s.media_put(b"photo bytes")
        s.close()

        s2 = FileStore(root)
        got, version = s2.get("case", "c1")
        assert got["status"] == "closed" and version == 2
        assert s2.media_get(digest) == b"photo bytes"
        s2.close()

    def test_crash_mid_commit_recovers_to_pre_commit_state(self, tmp_path):
        root = tmp_path / "data"
        s = FileStore(root)
        s.put("alert", "a1", doc("a1", status="draft"), 0)
        s.inject_crash_after(10)  # dies inside the frame header/payload
        group = [WriteOp("alert", "a1", doc("a1", status="active"), 1)]
        group += [WriteOp("delivery", f"a1:u{i}", doc(f"a1:u{i}"), 0) for i in range(3)]
        with pytest.raises(SimulatedCrash):
            s.atomically(group)
        s.close()

        recovered = FileStore(root)
        assert recovered.get("alert", "a1")[0]["status"] == "draft"
        assert recovered.count("delivery") == 0
        recovered.close()

    def test_crash_preserves_all_earlier_commits(self, tmp_path):
        root = tmp_path / "data"
        s = FileStore(root)
        for i in range(10):
            s.put("case", f"c{i}", doc(f"c{i}", created_at=float(i)), 0)
        s.inject_crash_after(3)
        with pytest.raises(SimulatedCrash):
            s.put("case", "c_last", doc("c_last"), 0)
        s.close()

        recovered = FileStore(root)
        assert recovered.count("case") == 10
        assert not recovered.exists("case", "c_last")
        # The torn tail is gone: appending works again after recovery.
        recovered.put("case", "c_new", doc("c_new"), 0)
        recovered.close()
        third = FileStore(root)
        assert third.count("case") == 11
        third.close()

    def test_garbage_tail_is_discarded(self, tmp_path):
        root = tmp_path / "data"
        s = FileStore(root)
        s.put("case", "c1", doc("c1"), 0)
        s.close()
        with open(root / "log.bin", "ab") as f:
            f.write(b"\xde\xad\xbe\xef garbage")
        s2 = FileStore(root)
        assert s2.get("case", "c1")[0] == doc("c1")
        s2.close()

    def test_snapshot_compaction_preserves_state(self, tmp_path):
        root = tmp_path / "data"
        s = FileStore(root, snapshot_every=5)
        for i in range(12):
            s.put("case", f"c{i}", doc(f"c{i}", created_at=float(i)), 0)
        s.put("case", "c0", doc("c0", status="closed", created_at=0.0), 1)
        s.close()

        s2 = FileStore(root, snapshot_every=5)
        assert s2.count("case") == 12
        assert s2.get("case", "c0")[0]["status"] == "closed"
        assert s2.get("case", "c11")[1] == 1
        s2.close()

    def test_open_store_specs(self, tmp_path):
        assert isinstance(open_store("memory"), MemoryStore)
        fs = open_store(f"file:{tmp_path / 'd'}")
        assert isinstance(fs, FileStore)
        fs.close()
        with pytest.raises(ValueError):
            open_store("redis://nope")
