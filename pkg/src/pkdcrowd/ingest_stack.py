"""Worker profiles from StackExchange XML row dumps.

A user's skill on a tag is the mean popularity ratio ``up / (up + down)`` of
their posts carrying that tag.  Answers have no tags of their own in the dump
and inherit those of their question.
"""
from __future__ import annotations

import json
import logging
import re
import xml.etree.ElementTree as ET
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

log = logging.getLogger(__name__)

UPVOTE, DOWNVOTE = 2, 3
QUESTION, ANSWER = 1, 2
# the ten common skills of the STACK experiments
COMMON_TAGS = (".net", "html", "javascript", "css", "php", "c", "c#", "c++", "ruby", "lisp")

_TAG_RE = re.compile(r"<([^<>]+)>|\|([^|]+)")

SkillProfileTable = dict[int, dict[str, float]]


@dataclass(frozen=True)
class PostRecord:
    post_id: int
    owner_user_id: int
    tags: frozenset[str]
    upvotes: int = 0
    downvotes: int = 0

    def __post_init__(self):
        if self.upvotes < 0 or self.downvotes < 0:
            raise ValueError("vote counts must be nonnegative")


def parse_tags(text: str | None) -> frozenset[str]:
    """Accepts both ``<a><b>`` and ``|a|b|`` encodings."""
    if not text:
        return frozenset()
    return frozenset(a or b for a, b in _TAG_RE.findall(text))


def iter_rows(path) -> Iterator[dict[str, str]]:
    """Attribute dicts of the ``<row .../>`` lines of a dump, one per line."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dump file not found: {path}")
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line.startswith("<row"):
                continue
            try:
                yield ET.fromstring(line).attrib
            except ET.ParseError as exc:
                log.warning("%s:%d: skipping malformed row (%s)", path.name, lineno, exc)


def _int(row: dict, key: str) -> int | None:
    v = row.get(key)
    try:
        return int(v) if v is not None else None
    except ValueError:
        return None


def tally_votes(votes_path) -> dict[int, tuple[int, int]]:
    tally: dict[int, list[int]] = defaultdict(lambda: [0, 0])
    for row in iter_rows(votes_path):
        post, kind = _int(row, "PostId"), _int(row, "VoteTypeId")
        if post is None or kind is None:
            log.warning("skipping vote row without PostId/VoteTypeId: %r", row)
            continue
        if kind == UPVOTE:
            tally[post][0] += 1
        elif kind == DOWNVOTE:
            tally[post][1] += 1
    return {k: (v[0], v[1]) for k, v in tally.items()}


def read_tag_names(tags_path) -> list[str]:
    return [row["TagName"] for row in iter_rows(tags_path) if "TagName" in row]


def parse_dumps(posts_path, votes_path, tags_path=None) -> list[PostRecord]:
    """Join posts with vote tallies; answers take their question's tags.

    Posts without an owner (deleted or community accounts) are dropped.
    """
    if tags_path is not None:
        read_tag_names(tags_path)
    votes = tally_votes(votes_path)
    question_tags: dict[int, frozenset[str]] = {}
    pending = []
    for row in iter_rows(posts_path):
        pid, kind, owner = _int(row, "Id"), _int(row, "PostTypeId"), _int(row, "OwnerUserId")
        if pid is None:
            log.warning("skipping post row without Id: %r", row)
            continue
        tags = parse_tags(row.get("Tags"))
        if kind == QUESTION:
            question_tags[pid] = tags
        parent = _int(row, "ParentId") if kind == ANSWER and not tags else None
        if owner is not None:
            pending.append((pid, owner, tags, parent))
    posts = []
    for pid, owner, tags, parent in pending:
        if parent is not None:
            tags = question_tags.get(parent, frozenset())
        up, down = votes.get(pid, (0, 0))
        posts.append(PostRecord(pid, owner, tags, up, down))
    return posts


def popularity_ratio(up: int, down: int) -> float | None:
    total = up + down
    return up / total if total > 0 else None


def build_profiles(posts: Iterable[PostRecord], tag_whitelist: Iterable[str] | None = None) -> SkillProfileTable:
    allowed = set(tag_whitelist) if tag_whitelist is not None else None
    acc: dict[int, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for post in posts:
        ratio = popularity_ratio(post.upvotes, post.downvotes)
        if ratio is None:
            continue
        for tag in post.tags:
            if allowed is None or tag in allowed:
                acc[post.owner_user_id][tag].append(ratio)
    table: SkillProfileTable = {}
    for user in sorted(acc):
        skills = {tag: float(np.mean(vals)) for tag, vals in sorted(acc[user].items())}
        if any(v > 0 for v in skills.values()):
            table[user] = skills
    return table


def table_tags(table: SkillProfileTable) -> list[str]:
    return sorted({tag for skills in table.values() for tag in skills})


def profile_matrix(table: SkillProfileTable, tags: Sequence[str]) -> tuple[list[int], np.ndarray]:
    """Users in ascending id order projected on ``tags``; absent tags are 0."""
    users = sorted(table)
    mat = np.array([[table[u].get(t, 0.0) for t in tags] for u in users], dtype=float)
    return users, mat.reshape(len(users), len(tags))


def sample_stack_workers(table: SkillProfileTable, tags: Sequence[str], count: int, rng) -> np.ndarray:
    """STACK generator: uniform draws (with replacement) from the profile table."""
    _, mat = profile_matrix(table, tags)
    if len(mat) == 0:
        raise ValueError("empty profile table")
    return mat[rng.integers(len(mat), size=count)]


def tag_frequency(table: SkillProfileTable) -> dict[str, int]:
    freq: dict[str, int] = defaultdict(int)
    for skills in table.values():
        for tag, v in skills.items():
            freq[tag] += v > 0
    return dict(sorted(freq.items()))


# -- files -------------------------------------------------------------------


def dumps_profiles(table: SkillProfileTable, tags: Sequence[str]) -> str:
    """Workload columnar format with the StackExchange user id in the id column."""
    users, mat = profile_matrix(table, tags)
    lines = [f"# pkdcrowd workers v1 dims={len(tags)}"]
    lines += ["\t".join([str(u)] + [repr(float(x)) for x in row]) for u, row in zip(users, mat)]
    return "\n".join(lines) + "\n"


def save_profiles(path, table: SkillProfileTable, tags: Sequence[str]) -> Path:
    """Write the profile file and ``<path>.tags.json``; returns the manifest path."""
    path = Path(path)
    path.write_text(dumps_profiles(table, tags))
    manifest = path.with_name(path.name + ".tags.json")
    manifest.write_text(json.dumps({"tags": list(tags), "n_users": len(table)}, indent=1) + "\n")
    return manifest


def load_tag_manifest(path) -> list[str]:
    return list(json.loads(Path(path).read_text())["tags"])


def save_tag_frequency(path, table: SkillProfileTable) -> None:
    rows = ["tag,users"] + [f"{t},{n}" for t, n in tag_frequency(table).items()]
    Path(path).write_text("\n".join(rows) + "\n")


def ingest(posts_path, votes_path, tags_path, out_path, tag_whitelist=None) -> SkillProfileTable:
    table = build_profiles(parse_dumps(posts_path, votes_path, tags_path), tag_whitelist)
    tags = list(tag_whitelist) if tag_whitelist is not None else table_tags(table)
    save_profiles(out_path, table, tags)
    return table
