import json

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collabatlas.openalex_client import (
    AUTHOR_KEY,
    ApiQuery,
    FetchError,
    FixtureStore,
    MalformedResponseError,
    OpenAlexClient,
    ReplayMissError,
    TokenBucket,
    author_countries_in_work,
    author_works_query,
    count_query,
    parse_groups,
    top_authors_query,
)

from fake_openalex import FakeOpenAlex, Work, World, synthetic_world

US_CN = [["US"], ["CN"]]


def client(tmp_path, handler, mode="record", **kw):
    store = FixtureStore(tmp_path / "fx", mode)
    return OpenAlexClient(store, mailto="t@example.org", transport=httpx.MockTransport(handler),
                          sleep=lambda s: None, rate=1e6, **kw)


def refuse(request):
    raise AssertionError(f"network touched: {request.url}")


# -- canonical keys -----------------------------------------------------------

def test_key_ignores_order_and_mailto():
    a = ApiQuery("works", (("concepts.id", "C2|C1"), ("publication_year", "2010")), mailto="x@y")
    b = ApiQuery("works", (("publication_year", "2010"), ("concepts.id", "C1|C2")))
    assert a == b and a.cache_key() == b.cache_key()
    assert "mailto" not in a.canonical() and "mailto=x%40y" in a.url()


def test_rejects_unknown_keys_and_values():
    with pytest.raises(ValueError):
        ApiQuery("works", (("title.search", "x"),))
    with pytest.raises(ValueError):
        ApiQuery("works", (("concepts.id", "C1,C2"),))
    with pytest.raises(ValueError):
        ApiQuery("works", group_by=AUTHOR_KEY, cursor="*")


token = st.text("ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789", min_size=1, max_size=6)
filters = st.lists(
    st.tuples(st.sampled_from(["concepts.id", "publication_year",
                               "authorships.institutions.country_code"]),
              st.lists(token, min_size=1, max_size=3).map(lambda v: "|".join(sorted(set(v))))),
    max_size=4,
).map(lambda fs: tuple(sorted(set(fs))))


@settings(max_examples=300, deadline=None)
@given(filters, filters, st.booleans(), st.booleans())
def test_cache_key_injective(f1, f2, g1, g2):
    q1 = ApiQuery("works", f1, group_by=AUTHOR_KEY if g1 else None)
    q2 = ApiQuery("works", f2, group_by=AUTHOR_KEY if g2 else None)
    if q1.canonical() != q2.canonical():
        assert q1.cache_key() != q2.cache_key()
    assert (q1 == q2) == (q1.cache_key() == q2.cache_key())


# -- store modes -------------------------------------------------------------

def test_record_then_replay_never_touches_network(tmp_path):
    fake = FakeOpenAlex(synthetic_world())
    q = count_query(["C33923547"], (2010, 2010), US_CN)
    with client(tmp_path, fake) as c:
        n = c.fetch_work_count(q)
    assert len(fake.calls) == 1
    assert (tmp_path / "fx" / f"{q.cache_key()}.json").exists()
    meta = json.loads((tmp_path / "fx" / f"{q.cache_key()}.meta").read_text())
    assert meta["query"] == q.canonical() and meta["retrieved_at"].endswith("Z")
    with client(tmp_path, refuse, mode="replay") as c:
        assert c.fetch_work_count(q) == n
        assert c.network_calls == 0


def test_replay_miss_raises(tmp_path):
    with client(tmp_path, refuse, mode="replay") as c:
        with pytest.raises(ReplayMissError):
            c.fetch_work_count(count_query([], (2010, 2010), US_CN))


def test_retry_on_server_errors(tmp_path):
    fake = FakeOpenAlex(synthetic_world(), fail_first=2, status=503)
    sleeps = []
    store = FixtureStore(tmp_path / "fx", "record")
    c = OpenAlexClient(store, transport=fake.transport(), sleep=sleeps.append, rate=1e6)
    c.fetch_work_count(count_query([], (2010, 2010), US_CN))
    assert len(fake.calls) == 3 and sleeps == [1.0, 2.0]


def test_gives_up_after_three_attempts(tmp_path):
    fake = FakeOpenAlex(synthetic_world(), fail_first=10, status=429)
    with client(tmp_path, fake) as c:
        with pytest.raises(FetchError):
            c.fetch_work_count(count_query([], (2010, 2010), US_CN))
    assert len(fake.calls) == 3
    assert not list((tmp_path / "fx").glob("*.json")) if (tmp_path / "fx").exists() else True


def test_transport_errors_retry(tmp_path):
    state = {"n": 0}

    def flaky(request):
        state["n"] += 1
        if state["n"] == 1:
            raise httpx.ConnectError("down", request=request)
        return httpx.Response(200, json={"meta": {"count": 4}, "results": []})

    with client(tmp_path, flaky) as c:
        assert c.fetch_work_count(count_query([], (2010, 2010), US_CN)) == 4


def test_client_error_is_not_retried(tmp_path):
    calls = []

    def bad(request):
        calls.append(1)
        return httpx.Response(400, text="nope")

    with client(tmp_path, bad) as c:
        with pytest.raises(FetchError):
            c.fetch_work_count(count_query([], (2010, 2010), US_CN))
    assert len(calls) == 1


@pytest.mark.parametrize("body", [b"not json", b"[]", b'{"meta": {}}', b'{"meta": {"count": -1}}'])
def test_malformed_count(tmp_path, body):
    with client(tmp_path, lambda r: httpx.Response(200, content=body)) as c:
        with pytest.raises(MalformedResponseError):
            c.fetch_work_count(count_query([], (2010, 2010), US_CN))


# -- operations against the fake corpus --------------------------------------

def test_joint_and_single_counts_match_brute_force(tmp_path):
    world = synthetic_world()
    fake = FakeOpenAlex(world)
    with client(tmp_path, fake) as c:
        us = c.fetch_work_count(count_query([], (2010, 2011), [["US"]]))
        joint = c.fetch_work_count(count_query([], (2010, 2011), US_CN))
    in_range = [w for w in world.works if 2010 <= w.year <= 2011]
    assert us == sum(1 for w in in_range if "US" in w.countries)
    assert joint == sum(1 for w in in_range if {"US", "CN"} <= w.countries)
    us_only = sum(1 for w in in_range if "US" in w.countries and "CN" not in w.countries)
    assert us - joint == us_only


def test_top_authors_drops_unknown_and_caps():
    groups = [{"key": f"https://openalex.org/A{i}", "count": 500 - i} for i in range(199)]
    groups.append({"key": "unknown", "count": 10**6})
    got = parse_groups({"group_by": groups})
    assert len(got) == 199 and all(g.group_key != "unknown" for g in got)
    assert got[0].group_key == "A0"
    with pytest.raises(MalformedResponseError):
        parse_groups({"group_by": groups + [{"key": "A9999", "count": 1}]})


def test_top_authors_tie_order():
    doc = {"group_by": [{"key": "A3", "count": 5}, {"key": "A1", "count": 5},
                        {"key": "A2", "count": 9}]}
    assert [g.group_key for g in parse_groups(doc)] == ["A2", "A1", "A3"]


def test_top_authors_requires_year(tmp_path):
    with client(tmp_path, refuse) as c:
        with pytest.raises(ValueError):
            c.fetch_top_authors(ApiQuery("works", (("concepts.id", "C1"),), group_by=AUTHOR_KEY))


def test_author_country_set_against_stored_bodies(tmp_path):
    world = synthetic_world()
    # A prolific author with more than one page of works.
    pool = ["US", "CN", "DE", "JP", None]
    world.works += [
        Work(f"W9{i}", 2010, frozenset({"C33923547"}),
             [("A7", [pool[i % 5]] if i < 240 else ["BR"]), ("A1001", ["KR"])])
        for i in range(250)
    ]
    fake = FakeOpenAlex(world)
    with client(tmp_path, fake) as c:
        tops = c.fetch_top_authors(top_authors_query(["C33923547"], 2010))
        author = "A7"
        assert author in {g.group_key for g in tops[:2]}
        got = c.fetch_author_country_set(author, 2010)
    # Re-scan every recorded page body for the same author.
    expected = set()
    pages = 0
    for path in (tmp_path / "fx").glob("*.meta"):
        meta = json.loads(path.read_text())
        if f"authorships.author.id%3A{author}" not in meta["query"]:
            continue
        pages += 1
        body = json.loads(path.with_suffix(".json").read_bytes())
        for work in body["results"]:
            for a in work["authorships"]:
                if a["author"]["id"] and a["author"]["id"].endswith("/" + author):
                    expected |= {i["country_code"] for i in a["institutions"] if i["country_code"]}
    assert pages >= 2  # more than 200 works forces cursor paging
    assert got == expected and got
    direct = {c for w in world.works if w.year == 2010
              for a, cs in w.authorships if a == author for c in cs if c}
    assert got == direct and "BR" in got


def test_author_country_set_validation(tmp_path):
    with client(tmp_path, refuse, year_range=(2000, 2021)) as c:
        with pytest.raises(ValueError):
            c.fetch_author_country_set("W123", 2010)
        with pytest.raises(ValueError):
            c.fetch_author_country_set("A1", 1999)


def test_author_with_no_works_has_empty_set(tmp_path):
    with client(tmp_path, FakeOpenAlex(World([]))) as c:
        assert c.fetch_author_country_set("A42", 2010) == set()


def test_countries_only_from_own_authorship():
    w = Work("W1", 2010, frozenset(), [("A1", ["us"]), ("A2", ["CN"]), (None, [None])])
    assert author_countries_in_work(w.to_json(), "A1") == {"US"}


def test_author_works_query_shape():
    q = author_works_query("https://openalex.org/A5", 2012)
    assert ("authorships.author.id", "A5") in q.filters and q.per_page == 200


def test_token_bucket_with_fake_clock():
    now = [0.0]
    slept = []

    def sleep(s):
        slept.append(s)
        now[0] += s

    bucket = TokenBucket(rate=2, capacity=2, clock=lambda: now[0], sleep=sleep)
    for _ in range(6):
        bucket.acquire()
    assert now[0] == pytest.approx(2.0)
    assert all(s == pytest.approx(0.5) for s in slept)
