"""Shared fixtures: small catalogs and personas used across the suite."""

from __future__ import annotations

import pytest

from feedsim.catalog import Catalog, ContentType, Item, ItemMetadata
from feedsim.users import UserProfile


def make_item(item_id, category, duration_s=30, title="", tags=(), **kwargs):
    ct = kwargs.pop("content_type", None)
    if ct is None:
        ct = ContentType.SHORT_VIDEO if duration_s > 0 else ContentType.TEXT_POST
    item = Item(
        item_id=item_id, title=title or item_id, category=category,
        content_type=ct, duration_s=duration_s, **kwargs)
    meta = ItemMetadata(tags=tuple(tags))
    return item, meta


def make_catalog(*specs):
    """specs: (item_id, category, duration_s[, tags]) tuples."""
    items, metadata = [], {}
    for spec in specs:
        item_id, category, duration_s = spec[0], spec[1], spec[2]
        tags = spec[3] if len(spec) > 3 else ()
        item, meta = make_item(item_id, category, duration_s, tags=tags)
        items.append(item)
        metadata[item.item_id] = meta
    return Catalog(items, metadata)


@pytest.fixture
def feed_catalog():
    return make_catalog(
        ("vid_lobster", "deep-sea fishing", 20, ("ocean", "fishing")),
        ("vid_ufc", "ufc", 60, ("sports", "fighting")),
        ("vid_hair1", "hairstyling", 45, ("beauty", "style")),
        ("vid_hair2", "hairstyling", 30, ("beauty", "style")),
        ("vid_wigs", "wigs", 25, ("beauty", "style", "hair")),
        ("post_recipe", "cooking", 0, ("food",)),
        ("vid_boxing", "boxing", 40, ("sports", "fighting")),
        ("vid_reef", "diving", 35, ("ocean", "reef")),
    )


@pytest.fixture
def angler_profile():
    return UserProfile(
        user_id="angler",
        age=30,
        gender="male",
        location="san francisco",
        interests=(("deep-sea fishing", 0.9), ("ufc", 1.0), ("hairstyling", 0.1)),
        social_groups=("anglers",),
    )
