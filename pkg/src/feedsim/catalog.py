"""Item catalog, dataset ingestion, and engagement-history compression.

File formats (CSV or JSONL, same field names in both):

    items:        item_id,title,description,category,content_type,duration_s,
                  publish_ts,creator_id,likes,shares,comments,tags
    interactions: user_id,item_id,action,watch_s,ts

In CSV, `tags` is a single cell with tags joined by "|"; in JSONL it is a
list of strings. Missing optional fields default to empty strings / zero
counts. A catalog is immutable after load and safe to share across
concurrent sessions.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DataFormatError, DuplicateItemError, UnknownItemError

DEFAULT_RECENT_CAP = 50

ITEM_FIELDS = [
    "item_id", "title", "description", "category", "content_type", "duration_s",
    "publish_ts", "creator_id", "likes", "shares", "comments", "tags",
]
INTERACTION_FIELDS = ["user_id", "item_id", "action", "watch_s", "ts"]


class FileFormat(str, Enum):
    CSV = "csv"
    JSONL = "jsonl"


class ContentType(str, Enum):
    SHORT_VIDEO = "short_video"
    TEXT_POST = "text_post"
    MIXED_MEDIA = "mixed_media"
    FRIEND_SUGGESTION = "friend_suggestion"


# Content kinds that carry a play duration; the rest must have duration_s = 0.
TIMED_CONTENT = frozenset({ContentType.SHORT_VIDEO, ContentType.MIXED_MEDIA})


class ActionKind(str, Enum):
    CLICK = "click"
    COMMENT = "comment"
    SHARE = "share"
    LIKE = "like"
    WATCH = "watch"
    SKIP = "skip"
    LEAVE = "leave"


@dataclass(frozen=True)
class Item:
    item_id: str
    title: str = ""
    description: str = ""
    category: str = ""
    content_type: ContentType = ContentType.TEXT_POST
    duration_s: int = 0

    def __post_init__(self):
        if self.duration_s < 0:
            raise ValueError(f"item {self.item_id}: duration_s must be >= 0")
        timed = self.content_type in TIMED_CONTENT
        if timed and self.duration_s == 0:
            raise ValueError(
                f"item {self.item_id}: {self.content_type.value} requires duration_s > 0")
        if not timed and self.duration_s != 0:
            raise ValueError(
                f"item {self.item_id}: {self.content_type.value} requires duration_s = 0")


@dataclass(frozen=True)
class ItemMetadata:
    publish_ts: int = 0
    creator_id: str = ""
    likes: int = 0
    shares: int = 0
    comments: int = 0
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.publish_ts < 0:
            raise ValueError("publish_ts must be >= 0")
        for name in ("likes", "shares", "comments"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class InteractionRecord:
    user_id: str
    item_id: str
    action: ActionKind
    ts: int
    watch_s: int | None = None

    def __post_init__(self):
        if (self.action == ActionKind.WATCH) != (self.watch_s is not None):
            raise ValueError("watch_s must be present iff action is watch")


@dataclass
class HistorySummary:
    """Statistical compression of a user's recent interactions."""

    window_days: int = 7
    per_category_counts: dict[str, int] = field(default_factory=dict)
    per_action_counts: dict[ActionKind, int] = field(default_factory=dict)
    recent_items: list[tuple[str, ActionKind]] = field(default_factory=list)

    def total(self) -> int:
        return sum(self.per_category_counts.values())

    def is_empty(self) -> bool:
        return self.total() == 0 and not self.recent_items


class Catalog:
    """Read-only view over a set of items and their metadata."""

    def __init__(self, items: Iterable[Item], metadata: dict[str, ItemMetadata] | None = None):
        self._items: dict[str, Item] = {}
        dupes: list[str] = []
        for item in items:
            if item.item_id in self._items:
                dupes.append(item.item_id)
            else:
                self._items[item.item_id] = item
        if dupes:
            raise DuplicateItemError(sorted(set(dupes)))
        self._metadata = dict(metadata or {})
        self._category_tags: dict[str, frozenset[str]] | None = None

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._items

    def __iter__(self) -> Iterator[Item]:
        return iter(self._items.values())

    def ids(self) -> list[str]:
        return list(self._items)

    def get(self, item_id: str) -> Item:
        try:
            return self._items[item_id]
        except KeyError:
            raise UnknownItemError(item_id) from None

    def metadata_for(self, item_id: str) -> ItemMetadata:
        if item_id not in self._items:
            raise UnknownItemError(item_id)
        return self._metadata.get(item_id, ItemMetadata())

    def categories(self) -> list[str]:
        seen: dict[str, None] = {}
        for item in self._items.values():
            seen.setdefault(item.category)
        return list(seen)

    def category_tags(self) -> dict[str, frozenset[str]]:
        """Union of metadata tags per category (cached; catalog is immutable)."""
        if self._category_tags is None:
            acc: dict[str, set[str]] = {}
            for item in self._items.values():
                acc.setdefault(item.category, set()).update(
                    self.metadata_for(item.item_id).tags)
            self._category_tags = {c: frozenset(t) for c, t in acc.items()}
        return self._category_tags


def _parse_int(value, *, row: int, field_name: str, default: int | None = None) -> int:
    if value is None or value == "":
        if default is None:
            raise DataFormatError("missing required value", row=row, field=field_name)
        return default
    try:
        return int(value)
    except (TypeError, ValueError):
        raise DataFormatError(f"not an integer: {value!r}", row=row, field=field_name) from None


def _parse_tags(value, *, row: int) -> tuple[str, ...]:
    if value is None or value == "":
        return ()
    if isinstance(value, str):
        return tuple(t for t in value.split("|") if t)
    if isinstance(value, (list, tuple)):
        return tuple(str(t) for t in value)
    raise DataFormatError(f"bad tags value: {value!r}", row=row, field="tags")


def _item_from_row(raw: dict, row: int) -> tuple[Item, ItemMetadata]:
    item_id = raw.get("item_id")
    if not item_id:
        raise DataFormatError("missing required value", row=row, field="item_id")
    category = raw.get("category")
    if category is None or category == "":
        raise DataFormatError("missing required value", row=row, field="category")

    duration_s = _parse_int(raw.get("duration_s"), row=row, field_name="duration_s", default=0)
    ct_raw = raw.get("content_type")
    if ct_raw is None or ct_raw == "":
        content_type = ContentType.SHORT_VIDEO if duration_s > 0 else ContentType.TEXT_POST
    else:
        try:
            content_type = ContentType(str(ct_raw))
        except ValueError:
            raise DataFormatError(
                f"unknown content_type: {ct_raw!r}", row=row, field="content_type") from None
    try:
        item = Item(
            item_id=str(item_id),
            title=str(raw.get("title") or ""),
            description=str(raw.get("description") or ""),
            category=str(category),
            content_type=content_type,
            duration_s=duration_s,
        )
        meta = ItemMetadata(
            publish_ts=_parse_int(raw.get("publish_ts"), row=row, field_name="publish_ts", default=0),
            creator_id=str(raw.get("creator_id") or ""),
            likes=_parse_int(raw.get("likes"), row=row, field_name="likes", default=0),
            shares=_parse_int(raw.get("shares"), row=row, field_name="shares", default=0),
            comments=_parse_int(raw.get("comments"), row=row, field_name="comments", default=0),
            tags=_parse_tags(raw.get("tags"), row=row),
        )
    except ValueError as e:
        raise DataFormatError(str(e), row=row, field=None) from None
    return item, meta


def _iter_rows(path: str | Path, fmt: FileFormat) -> Iterator[tuple[int, dict]]:
    """Yield (1-based row number, raw dict) for either format.

    For CSV the header line is row 1, so data rows start at 2; for JSONL the
    row number is the line number.
    """
    path = Path(path)
    if fmt == FileFormat.CSV:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            for i, raw in enumerate(reader, start=2):
                if raw.get(None):
                    raise DataFormatError("too many columns", row=i)
                yield i, raw
    else:
        with path.open(encoding="utf-8") as fh:
            for i, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    raw = json.loads(line)
                except json.JSONDecodeError as e:
                    raise DataFormatError(f"invalid JSON: {e.msg}", row=i) from None
                if not isinstance(raw, dict):
                    raise DataFormatError("JSONL line is not an object", row=i)
                yield i, raw


def load_items(path: str | Path, fmt: FileFormat | str = FileFormat.CSV) -> Catalog:
    """Load an item catalog from CSV or JSONL.

    Rows must carry at least item_id and category; remaining fields take the
    documented defaults. Duplicate ids and malformed rows are hard errors.
    """
    fmt = FileFormat(fmt)
    items: list[Item] = []
    metadata: dict[str, ItemMetadata] = {}
    dupes: list[str] = []
    seen: set[str] = set()
    for row, raw in _iter_rows(path, fmt):
        item, meta = _item_from_row(raw, row)
        if item.item_id in seen:
            dupes.append(item.item_id)
            continue
        seen.add(item.item_id)
        items.append(item)
        metadata[item.item_id] = meta
    if dupes:
        raise DuplicateItemError(sorted(set(dupes)))
    return Catalog(items, metadata)


def save_items(catalog: Catalog, path: str | Path, fmt: FileFormat | str = FileFormat.JSONL) -> None:
    """Export a catalog using the same field names the loaders accept."""
    fmt = FileFormat(fmt)
    path = Path(path)
    rows = []
    for item in catalog:
        meta = catalog.metadata_for(item.item_id)
        rows.append({
            "item_id": item.item_id,
            "title": item.title,
            "description": item.description,
            "category": item.category,
            "content_type": item.content_type.value,
            "duration_s": item.duration_s,
            "publish_ts": meta.publish_ts,
            "creator_id": meta.creator_id,
            "likes": meta.likes,
            "shares": meta.shares,
            "comments": meta.comments,
            "tags": list(meta.tags),
        })
    if fmt == FileFormat.JSONL:
        with path.open("w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    else:
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=ITEM_FIELDS)
            writer.writeheader()
            for row in rows:
                row = dict(row)
                row["tags"] = "|".join(row["tags"])
                writer.writerow(row)


def load_interactions(path: str | Path, fmt: FileFormat | str = FileFormat.CSV) -> list[InteractionRecord]:
    """Load interaction logs, sorted by (user_id, ts).

    Watch rows must carry watch_s; watch_s on any other action is rejected,
    as are unknown action strings.
    """
    fmt = FileFormat(fmt)
    records: list[InteractionRecord] = []
    for row, raw in _iter_rows(path, fmt):
        user_id = raw.get("user_id")
        if not user_id:
            raise DataFormatError("missing required value", row=row, field="user_id")
        item_id = raw.get("item_id")
        if not item_id:
            raise DataFormatError("missing required value", row=row, field="item_id")
        action_raw = raw.get("action")
        try:
            action = ActionKind(str(action_raw))
        except ValueError:
            raise DataFormatError(
                f"unknown action: {action_raw!r}", row=row, field="action") from None
        watch_raw = raw.get("watch_s")
        watch_s = None if watch_raw in (None, "") else _parse_int(
            watch_raw, row=row, field_name="watch_s")
        if action == ActionKind.WATCH and watch_s is None:
            raise DataFormatError("watch row without watch_s", row=row, field="watch_s")
        if action != ActionKind.WATCH and watch_s is not None:
            raise DataFormatError(
                f"watch_s given for action {action.value!r}", row=row, field="watch_s")
        ts = _parse_int(raw.get("ts"), row=row, field_name="ts")
        records.append(InteractionRecord(
            user_id=str(user_id), item_id=str(item_id), action=action, ts=ts, watch_s=watch_s))
    records.sort(key=lambda r: (r.user_id, r.ts))
    return records


def summarize_history(
    records: list[InteractionRecord],
    catalog: Catalog,
    window_days: int,
    now_ts: int,
    recent_cap: int = DEFAULT_RECENT_CAP,
) -> HistorySummary:
    """Compress interactions inside [now_ts - window_days*86400, now_ts].

    recent_items holds the newest <= recent_cap in-window interactions,
    newest first. Records referencing items missing from the catalog are
    errors rather than silently dropped.
    """
    if window_days <= 0:
        raise ValueError("window_days must be > 0")
    lo = now_ts - window_days * 86400
    per_category: dict[str, int] = {}
    per_action: dict[ActionKind, int] = {}
    in_window: list[tuple[int, int, InteractionRecord]] = []
    for idx, rec in enumerate(records):
        if not (lo <= rec.ts <= now_ts):
            continue
        item = catalog.get(rec.item_id)
        per_category[item.category] = per_category.get(item.category, 0) + 1
        per_action[rec.action] = per_action.get(rec.action, 0) + 1
        in_window.append((rec.ts, idx, rec))
    # Newest first; ties broken by position in the (already sorted) input.
    in_window.sort(key=lambda t: (-t[0], -t[1]))
    recent = [(rec.item_id, rec.action) for _, _, rec in in_window[:recent_cap]]
    return HistorySummary(
        window_days=window_days,
        per_category_counts=per_category,
        per_action_counts=per_action,
        recent_items=recent,
    )
