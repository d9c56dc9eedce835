import json
import threading

import pytest

from agrotelem.platform_api import (
    BadBatch,
    PlatformStore,
    SeriesPoint,
    ServiceUnavailable,
    UnknownSeries,
    create_app,
)


def _point(station=1, kind="GardenAirHumidity", timestamp=1_690_070_400, value=55.25, seq=17):
    return {"station": station, "kind": kind, "timestamp": timestamp, "value": value, "seq": seq}


def _batch(n, start_ts=1_690_070_400):
    return [_point(timestamp=start_ts + i * 60, seq=i % 65536) for i in range(n)]


@pytest.fixture
def store():
    return PlatformStore(clock_ms=lambda: 0)


# --- ingestion ---

def test_fresh_batch_fully_accepted(store):
    assert store.ingest(_batch(100)) == (100, 0)
    assert store.total_points() == 100


def test_replayed_batch_fully_absorbed(store):
    batch = _batch(100)
    store.ingest(batch)
    assert store.ingest(batch) == (0, 100)
    assert store.total_points() == 100


def test_idempotency_key_includes_seq(store):
    store.ingest([_point(seq=1)])
    accepted, duplicates = store.ingest([_point(seq=2)])
    assert (accepted, duplicates) == (1, 0)


def test_invalid_value_rejects_whole_batch_atomically(store):
    store.ingest(_batch(5))
    before = store.snapshot()
    bad = _batch(10, start_ts=2_000_000_000)
    bad[6]["value"] = 250.0  # humidity cannot exceed 100
    with pytest.raises(BadBatch):
        store.ingest(bad)
    assert store.snapshot() == before


@pytest.mark.parametrize(
    "mutation",
    [
        lambda p: p.pop("seq"),
        lambda p: p.update(kind="NoSuchKind"),
        lambda p: p.update(station=0),
        lambda p: p.update(station="1"),
        lambda p: p.update(timestamp=-5),
        lambda p: p.update(value=float("nan")),
        lambda p: p.update(seq=70000),
    ],
)
def test_malformed_items_rejected(store, mutation):
    p = _point()
    mutation(p)
    with pytest.raises(BadBatch):
        store.ingest([p])
    assert store.total_points() == 0


def test_oversized_batch_rejected(store):
    with pytest.raises(BadBatch):
        store.ingest(_batch(1001))


# --- queries ---

def test_query_empty_store(store):
    assert store.query(1, "GardenAirHumidity", 0, 2**62) == []


def test_query_boundaries_inclusive(store):
    for ts in (10, 20, 30):
        store.ingest([_point(timestamp=ts, seq=ts)])
    points = store.query(1, "GardenAirHumidity", 15, 30)
    assert [p.timestamp for p in points] == [20, 30]


def test_query_orders_by_timestamp_then_seq(store):
    store.ingest([_point(timestamp=20, seq=2), _point(timestamp=10, seq=9), _point(timestamp=20, seq=1)])
    points = store.query(1, "GardenAirHumidity", 0, 100)
    assert [(p.timestamp, p.seq) for p in points] == [(10, 9), (20, 1), (20, 2)]


def test_query_unknown_kind_raises(store):
    with pytest.raises(UnknownSeries):
        store.query(1, "NoSuchKind", 0, 10)
    with pytest.raises(UnknownSeries):
        store.query(-3, "GardenAirHumidity", 0, 10)


def test_full_range_count_matches_ingested(store):
    store.ingest(_batch(250))
    assert len(store.query(1, "GardenAirHumidity", 0, 2**62)) == 250


# --- export ---

def test_export_empty_range_is_header_only(store):
    assert store.export_csv(1, "GardenAirHumidity", 0, 10) == "timestamp,value\n"


def test_export_round_trips_to_query(store):
    store.ingest([_point(timestamp=100 + i, value=50.0 + i * 0.25, seq=i) for i in range(8)])
    csv_text = store.export_csv(1, "GardenAirHumidity", 0, 2**62)
    lines = csv_text.strip().splitlines()
    assert lines[0] == "timestamp,value"
    parsed = [(int(ts), float(v)) for ts, v in (line.split(",") for line in lines[1:])]
    assert parsed == [(p.timestamp, p.value) for p in store.query(1, "GardenAirHumidity", 0, 2**62)]


def test_export_uses_canonical_decimals(store):
    store.ingest([_point(kind="GardenLuminosity", value=100000.0)])
    csv_text = store.export_csv(1, "GardenLuminosity", 0, 2**62)
    assert csv_text.splitlines()[1].endswith(",100000.0")


# --- outage switch ---

def test_outage_blocks_then_releases():
    now = {"ms": 0}
    store = PlatformStore(clock_ms=lambda: now["ms"])
    store.set_outage(5_000)
    with pytest.raises(ServiceUnavailable):
        store.ingest(_batch(1))
    now["ms"] = 5_000
    assert store.ingest(_batch(1)) == (1, 0)


# --- persistence ---

def test_snapshot_save_load_round_trip(tmp_path, store):
    store.ingest(_batch(25))
    store.ingest([_point(kind="CompostTemp", value=45.5)])
    path = tmp_path / "snap.json"
    store.save(path)
    restored = PlatformStore(clock_ms=lambda: 0)
    restored.load(path)
    assert restored.snapshot() == store.snapshot()
    assert json.loads(path.read_text())["series"]


def test_concurrent_ingest_is_serialized(store):
    def worker(base):
        store.ingest(_batch(200, start_ts=base))

    threads = [threading.Thread(target=worker, args=(i * 1_000_000,)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert store.total_points() == 800


# --- HTTP surface ---

@pytest.fixture
def client():
    fastapi_testclient = pytest.importorskip("fastapi.testclient")
    now = {"ms": 0}
    store = PlatformStore(clock_ms=lambda: now["ms"])
    with fastapi_testclient.TestClient(create_app(store)) as c:
        c.now = now
        c.store = store
        yield c


def test_http_healthz(client):
    resp = client.get("/healthz")
    assert resp.status_code == 200 and resp.json() == {"status": "ok"}


def test_http_ingest_and_replay(client):
    body = {"points": _batch(10)}
    first = client.post("/api/v1/ingest", json=body)
    assert first.status_code == 200 and first.json() == {"accepted": 10, "duplicates": 0}
    again = client.post("/api/v1/ingest", json=body)
    assert again.json() == {"accepted": 0, "duplicates": 10}


def test_http_ingest_rejects_bad_batch(client):
    bad = {"points": [_point(value=250.0)]}
    resp = client.post("/api/v1/ingest", json=bad)
    assert resp.status_code == 400
    assert "value" in resp.json()["detail"]


def test_http_ingest_rejects_non_json(client):
    resp = client.post("/api/v1/ingest", content=b"not json")
    assert resp.status_code == 400


def test_http_series_query_with_range(client):
    client.post("/api/v1/ingest", json={"points": [_point(timestamp=t, seq=t) for t in (10, 20, 30)]})
    resp = client.get("/api/v1/series/1/GardenAirHumidity", params={"from": 15, "to": 30})
    assert resp.status_code == 200
    assert [p["timestamp"] for p in resp.json()["points"]] == [20, 30]


def test_http_series_unknown_kind_404(client):
    resp = client.get("/api/v1/series/1/NoSuchKind")
    assert resp.status_code == 404


def test_http_export_csv(client):
    client.post("/api/v1/ingest", json={"points": [_point()]})
    resp = client.get("/api/v1/series/1/GardenAirHumidity/export.csv")
    assert resp.status_code == 200
    assert resp.headers["content-type"].startswith("text/csv")
    assert resp.text.splitlines()[0] == "timestamp,value"


def test_http_outage_injection(client):
    resp = client.post("/admin/outage", json={"until_ms": 99_000})
    assert resp.status_code == 200 and resp.json()["until_ms"] == 99_000
    blocked = client.post("/api/v1/ingest", json={"points": _batch(1)})
    assert blocked.status_code == 503
    client.now["ms"] = 99_000
    ok = client.post("/api/v1/ingest", json={"points": _batch(1)})
    assert ok.status_code == 200


def test_http_outage_bad_body(client):
    assert client.post("/admin/outage", json={"wrong": 1}).status_code == 400


def test_series_point_is_plain_value():
    p = SeriesPoint(10, 1.5, 3)
    assert (p.timestamp, p.value, p.seq) == (10, 1.5, 3)


def test_snapshot_saved_on_app_shutdown(tmp_path):
    fastapi_testclient = pytest.importorskip("fastapi.testclient")
    store = PlatformStore(clock_ms=lambda: 0)
    snap = tmp_path / "shutdown_snap.json"
    with fastapi_testclient.TestClient(create_app(store, snapshot_path=snap)) as c:
        c.post("/api/v1/ingest", json={"points": _batch(3)})
        assert not snap.exists()
    # leaving the context runs the lifespan shutdown hook
    assert json.loads(snap.read_text())["series"]
