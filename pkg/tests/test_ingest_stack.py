import logging
from pathlib import Path

import numpy as np
import pytest

from pkdcrowd import ingest_stack as ing
from pkdcrowd.workload import load_workers

DATA = Path(__file__).parent / "data" / "stack"
POSTS, VOTES, TAGS = DATA / "Posts.xml", DATA / "Votes.xml", DATA / "Tags.xml"


def test_parse_tags_both_formats():
    assert ing.parse_tags("<python><numpy>") == {"python", "numpy"}
    assert ing.parse_tags("|c|python|") == {"c", "python"}
    assert ing.parse_tags("") == frozenset() and ing.parse_tags(None) == frozenset()


def test_vote_tally_ignores_other_types():
    votes = ing.tally_votes(VOTES)
    assert votes[1] == (3, 1)
    assert votes[2] == (1, 1)
    assert 3 not in votes


def test_answers_inherit_question_tags():
    posts = {p.post_id: p for p in ing.parse_dumps(POSTS, VOTES, TAGS)}
    assert posts[2].tags == {"python", "numpy"}
    assert posts[4].tags == {"c", "python"}


def test_popularity_ratio():
    assert ing.popularity_ratio(3, 1) == 0.75
    assert ing.popularity_ratio(0, 2) == 0.0
    assert ing.popularity_ratio(0, 0) is None


def test_golden_profiles(tmp_path):
    out = tmp_path / "profiles.tsv"
    table = ing.ingest(POSTS, VOTES, TAGS, out)
    assert 30 not in table
    assert out.read_bytes() == (DATA / "expected_profiles.tsv").read_bytes()
    manifest = out.with_name(out.name + ".tags.json")
    assert manifest.read_bytes() == (DATA / "expected_profiles.tsv.tags.json").read_bytes()
    assert ing.load_tag_manifest(manifest) == ["c", "numpy", "python"]


def test_ingest_is_idempotent(tmp_path):
    a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
    ing.ingest(POSTS, VOTES, TAGS, a)
    ing.ingest(POSTS, VOTES, TAGS, b)
    ing.ingest(POSTS, VOTES, TAGS, a)
    assert a.read_bytes() == b.read_bytes()


def test_profiles_load_as_workers(tmp_path):
    out = tmp_path / "p.tsv"
    ing.ingest(POSTS, VOTES, TAGS, out)
    w = load_workers(out)
    assert np.array_equal(w, [[1.0, 0.75, 0.875], [0.0, 0.5, 0.5]])


def test_whitelist_restricts_columns(tmp_path):
    out = tmp_path / "p.tsv"
    table = ing.ingest(POSTS, VOTES, TAGS, out, tag_whitelist=["python", "ruby"])
    assert out.read_text().splitlines()[0] == "# pkdcrowd workers v1 dims=2"
    assert table == {10: {"python": 0.875}, 20: {"python": 0.5}}


def test_malformed_rows_are_skipped(tmp_path, caplog):
    bad = tmp_path / "Posts.xml"
    bad.write_text(POSTS.read_text().replace("</posts>", '  <row Id="9" PostTypeId="1" Tags=\n</posts>'))
    with caplog.at_level(logging.WARNING):
        posts = ing.parse_dumps(bad, VOTES)
    assert len(posts) == 5
    assert "malformed" in caplog.text


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        ing.parse_dumps(DATA / "nope.xml", VOTES)


def test_sampler_draws_existing_rows():
    table = ing.build_profiles(ing.parse_dumps(POSTS, VOTES))
    tags = ing.table_tags(table)
    w = ing.sample_stack_workers(table, tags, 500, np.random.default_rng(0))
    rows = {tuple(r) for r in ing.profile_matrix(table, tags)[1]}
    assert w.shape == (500, 3) and {tuple(r) for r in w} == rows
    with pytest.raises(ValueError):
        ing.sample_stack_workers({}, tags, 5, np.random.default_rng(0))


def test_tag_frequency():
    table = ing.build_profiles(ing.parse_dumps(POSTS, VOTES))
    assert ing.tag_frequency(table) == {"numpy": 2, "python": 2, "c": 1}
