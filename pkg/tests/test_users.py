import random

import pytest

from feedsim.catalog import ActionKind, HistorySummary, ItemMetadata
from feedsim.errors import ConfigError, PromptBudgetError
from feedsim.users import (
    ActionDecision,
    Instruction,
    InstructionSource,
    ScriptedConfig,
    ScriptedSimulator,
    UserProfile,
    UserState,
    build_prompt,
    infer_implicit_signal,
    relieve_after_instruction,
    update_mindset,
)

from conftest import make_item


META = ItemMetadata()


def decide(profile, state, item, config=None):
    return ScriptedSimulator(config).decide_action(profile, state, item, META)


def test_high_affinity_watch_twenty_seconds(angler_profile, feed_catalog):
    item = feed_catalog.get("vid_lobster")  # deep-sea fishing, 20s
    d = decide(angler_profile, UserState(), item)
    assert d.action == ActionKind.WATCH
    assert d.watch_s == 20


def test_liked_history_watch_thirty_seconds(angler_profile, feed_catalog):
    item = feed_catalog.get("vid_ufc")  # affinity 1.0, duration 60
    d = decide(angler_profile, UserState(), item)
    assert d.action == ActionKind.WATCH
    assert d.watch_s == 30


def test_repeat_category_skip_notes_repetition(angler_profile, feed_catalog):
    state = UserState()
    first = feed_catalog.get("vid_hair1")
    d1 = decide(angler_profile, state, first)
    assert d1.action == ActionKind.SKIP
    state = update_mindset(angler_profile, state, first, d1)
    second = feed_catalog.get("vid_hair2")
    d2 = decide(angler_profile, state, second)
    assert d2.action == ActionKind.SKIP
    assert "too many" in d2.reasoning


def test_scripted_rule_table_enumeration(feed_catalog):
    """Walk the rule table over affinity bands and leave conditions."""
    item, _ = make_item("clip", "topic", 100)
    cases = [
        (0.9, ActionKind.WATCH),   # >= 0.7
        (0.7, ActionKind.WATCH),
        (0.5, ActionKind.CLICK),   # 0.4 - 0.7
        (0.4, ActionKind.CLICK),
        (0.3, ActionKind.SKIP),    # < 0.4
        (0.0, ActionKind.SKIP),
    ]
    for affinity, expected in cases:
        profile = UserProfile(user_id="u", interests=(("topic", affinity),))
        assert decide(profile, UserState(), item).action == expected

    zero = UserProfile(user_id="u", interests=(("other", 0.5),))
    fatigued = UserState(fatigue={"anything": 3})
    assert decide(zero, fatigued, item).action == ActionKind.LEAVE
    sad = UserState(satisfaction=0.2)
    assert decide(zero, sad, item).action == ActionKind.LEAVE


def test_watch_seconds_follow_affinity_and_duration():
    profile = UserProfile(user_id="u", interests=(("topic", 0.8),))
    long_item, _ = make_item("clip", "topic", 600)
    d = decide(profile, UserState(), long_item)
    assert d.watch_s == 28  # 20 + 10 * 0.8
    short_item, _ = make_item("clip2", "topic", 5)
    assert decide(profile, UserState(), short_item).watch_s == 5


def test_high_affinity_untimed_content_likes():
    profile = UserProfile(user_id="u", interests=(("cooking", 0.9),))
    post, _ = make_item("post", "cooking", 0)
    assert decide(profile, UserState(), post).action == ActionKind.LIKE


def test_scripted_requires_interests():
    bare = UserProfile(user_id="u")
    item, _ = make_item("clip", "topic", 10)
    with pytest.raises(ConfigError):
        decide(bare, UserState(), item)


def test_scripted_determinism_bit_exact(angler_profile, feed_catalog):
    state = UserState(fatigue={"hairstyling": 1}, satisfaction=0.7)
    item = feed_catalog.get("vid_hair2")
    a = ScriptedSimulator(seed=1).decide_action(angler_profile, state, item, META)
    b = ScriptedSimulator(seed=1).decide_action(angler_profile, state, item, META)
    assert a == b


def test_action_closure_over_random_states(feed_catalog):
    rng = random.Random(11)
    profile = UserProfile(
        user_id="u",
        interests=tuple((c, round(rng.random(), 2)) for c in feed_catalog.categories()))
    sim = ScriptedSimulator()
    for _ in range(300):
        state = UserState(
            satisfaction=round(rng.random(), 2),
            fatigue={c: rng.randint(0, 4) for c in feed_catalog.categories()
                     if rng.random() < 0.5},
        )
        item = feed_catalog.get(rng.choice(feed_catalog.ids()))
        d = sim.decide_action(profile, state, item, META)
        assert d.action in set(ActionKind)
        assert (d.watch_s is not None) == (d.action == ActionKind.WATCH)
        if d.watch_s is not None:
            assert 1 <= d.watch_s <= item.duration_s
        assert d.reasoning


def test_update_mindset_skip_twice_counts(angler_profile, feed_catalog):
    state = UserState()
    item = feed_catalog.get("vid_hair1")
    skip = ActionDecision(action=ActionKind.SKIP, reasoning="nope")
    state = update_mindset(angler_profile, state, item, skip)
    state = update_mindset(angler_profile, state, feed_catalog.get("vid_hair2"), skip)
    assert state.fatigue["hairstyling"] == 2


def test_update_mindset_watch_increases_satisfaction(angler_profile, feed_catalog):
    state = UserState()
    item = feed_catalog.get("vid_lobster")
    watch = ActionDecision(action=ActionKind.WATCH, watch_s=20, reasoning="yes")
    new = update_mindset(angler_profile, state, item, watch)
    assert new.satisfaction > state.satisfaction
    assert new.satisfaction == pytest.approx(0.5 + 0.1 * 0.9)


def test_update_mindset_counter_always_increments(angler_profile, feed_catalog):
    item = feed_catalog.get("vid_lobster")
    for d in [
        ActionDecision(action=ActionKind.SKIP, reasoning="r"),
        ActionDecision(action=ActionKind.LEAVE, reasoning="r"),
        ActionDecision(action=ActionKind.WATCH, watch_s=5, reasoning="r"),
    ]:
        state = UserState(items_seen_this_session=3)
        assert update_mindset(angler_profile, state, item, d).items_seen_this_session == 4


def test_update_mindset_repeat_exposure_fatigues_even_on_watch(angler_profile, feed_catalog):
    state = UserState()
    item = feed_catalog.get("vid_lobster")
    watch = ActionDecision(action=ActionKind.WATCH, watch_s=10, reasoning="r")
    state = update_mindset(angler_profile, state, item, watch)
    assert state.fatigue.get("deep-sea fishing", 0) == 0
    state = update_mindset(angler_profile, state, item, watch)
    assert state.fatigue["deep-sea fishing"] == 1
    # A category change with positive engagement decays it again.
    state = update_mindset(
        angler_profile, state, feed_catalog.get("vid_ufc"),
        ActionDecision(action=ActionKind.WATCH, watch_s=30, reasoning="r"))
    state = update_mindset(
        angler_profile, state, feed_catalog.get("vid_lobster"),
        ActionDecision(action=ActionKind.WATCH, watch_s=10, reasoning="r"))
    assert state.fatigue["deep-sea fishing"] == 0


def test_update_mindset_satisfaction_clamped(angler_profile, feed_catalog):
    item = feed_catalog.get("vid_hair1")
    skip = ActionDecision(action=ActionKind.SKIP, reasoning="r")
    state = UserState(satisfaction=0.01)
    state = update_mindset(angler_profile, state, item, skip)
    assert state.satisfaction == 0.0


def test_update_mindset_folds_summary(angler_profile, feed_catalog):
    state = UserState()
    item = feed_catalog.get("vid_lobster")
    d = ActionDecision(action=ActionKind.WATCH, watch_s=5, reasoning="r", mindset_update="m")
    state = update_mindset(angler_profile, state, item, d)
    assert state.summary.per_category_counts == {"deep-sea fishing": 1}
    assert state.summary.per_action_counts == {ActionKind.WATCH: 1}
    assert state.summary.recent_items[0] == ("vid_lobster", ActionKind.WATCH)
    assert "m" in state.mindset


def test_update_mindset_bounds_mindset_text(angler_profile, feed_catalog):
    from feedsim.users import MindsetConfig
    item = feed_catalog.get("vid_lobster")
    state = UserState(mindset="x" * 3000)
    d = ActionDecision(action=ActionKind.SKIP, reasoning="r", mindset_update="tail")
    new = update_mindset(angler_profile, state, item, d, MindsetConfig(mindset_max_chars=100))
    assert len(new.mindset) == 100
    assert new.mindset.endswith("tail")


def test_reflect_names_most_fatigued_category(angler_profile):
    sim = ScriptedSimulator()
    state = UserState(satisfaction=0.6, fatigue={"hairstyling": 3, "cooking": 1})
    ins = sim.reflect_and_instruct(angler_profile, state, [])
    assert ins is not None
    assert ins.text == ("There are too many recommendations about hairstyling; "
                        "I wanna see something different but related")
    assert ins.source == InstructionSource.EXPLICIT


def test_reflect_below_floor_exits_quietly(angler_profile):
    sim = ScriptedSimulator()
    state = UserState(satisfaction=0.2, fatigue={"hairstyling": 3})
    assert sim.reflect_and_instruct(angler_profile, state, []) is None


def test_reflect_empty_fatigue_generic_request(angler_profile):
    sim = ScriptedSimulator()
    state = UserState(satisfaction=0.5)
    ins = sim.reflect_and_instruct(angler_profile, state, [])
    assert ins is not None
    assert ins.text == "Show me more interesting content"


def test_relieve_after_instruction_clears_fatigue():
    state = UserState(fatigue={"a": 3, "b": 1}, satisfaction=0.4)
    relieved = relieve_after_instruction(state)
    assert relieved.fatigue == {}
    assert relieved.satisfaction == 0.4
    assert state.fatigue  # original untouched


def long_watch(item):
    return ActionDecision(action=ActionKind.WATCH, watch_s=item.duration_s, reasoning="r")


def test_implicit_long_form_signal():
    items = [make_item(f"v{i}", "docs", 400)[0] for i in range(3)]
    decisions = [long_watch(it) for it in items]
    ins = infer_implicit_signal(decisions, items)
    assert ins is not None
    assert ins.source == InstructionSource.IMPLICIT
    assert "long-form" in ins.text


def test_implicit_no_signal_when_satisfied():
    items = [make_item(f"v{i}", "docs", 60)[0] for i in range(4)]
    decisions = [ActionDecision(action=ActionKind.CLICK, reasoning="r") for _ in items]
    assert infer_implicit_signal(decisions, items) is None


def test_implicit_skip_streak_signal():
    items = [make_item(f"v{i}", "docs", 60)[0] for i in range(6)]
    skip = ActionDecision(action=ActionKind.SKIP, reasoning="r")
    decisions = [ActionDecision(action=ActionKind.CLICK, reasoning="r")] + [skip] * 5
    ins = infer_implicit_signal(decisions, items)
    assert ins is not None and "failed to engage" in ins.text
    # Streak below the threshold yields nothing.
    assert infer_implicit_signal([skip] * 4, items[:4]) is None
    # Partial watches of long items do not count toward the long-form rule.
    partial = [ActionDecision(action=ActionKind.WATCH, watch_s=10, reasoning="r")
               for _ in range(3)]
    long_items = [make_item(f"L{i}", "docs", 400)[0] for i in range(3)]
    assert infer_implicit_signal(partial, long_items) is None


def test_implicit_requires_records():
    with pytest.raises(ValueError):
        infer_implicit_signal([], [])


def test_build_prompt_contains_profile_facts(angler_profile, feed_catalog):
    item = feed_catalog.get("vid_lobster")
    bundle = build_prompt(angler_profile, UserState(), item, META)
    assert "30-year-old" in bundle.system
    assert "deep-sea fishing" in bundle.system
    assert "ufc" in bundle.system
    assert "Lobster" in bundle.user or "vid_lobster" in bundle.user


def test_build_prompt_empty_history_marker(angler_profile, feed_catalog):
    bundle = build_prompt(angler_profile, UserState(), feed_catalog.get("vid_ufc"), META)
    assert "no prior interactions" in bundle.user


def test_build_prompt_truncates_recent_first(angler_profile, feed_catalog):
    summary = HistorySummary(
        per_category_counts={"x": 200},
        per_action_counts={ActionKind.CLICK: 200},
        recent_items=[(f"item_with_long_name_{i}", ActionKind.CLICK) for i in range(200)],
    )
    state = UserState(summary=summary)
    item = feed_catalog.get("vid_ufc")
    full = build_prompt(angler_profile, state, item, META, budget_chars=100000)
    trimmed = build_prompt(angler_profile, state, item, META, budget_chars=2500)
    assert len(trimmed.system) + len(trimmed.user) <= 2500
    # Newest entries survive the cut.
    assert "item_with_long_name_0" in trimmed.user
    assert len(trimmed.user) < len(full.user)


def test_build_prompt_budget_unsatisfiable(angler_profile, feed_catalog):
    with pytest.raises(PromptBudgetError):
        build_prompt(angler_profile, UserState(), feed_catalog.get("vid_ufc"), META,
                     budget_chars=50)


def test_decision_invariants():
    with pytest.raises(ValueError):
        ActionDecision(action=ActionKind.WATCH, reasoning="r")  # missing watch_s
    with pytest.raises(ValueError):
        ActionDecision(action=ActionKind.SKIP, reasoning="r", watch_s=5)
    with pytest.raises(ValueError):
        ActionDecision(action=ActionKind.SKIP, reasoning="")
    with pytest.raises(ValueError):
        Instruction(text="", source=InstructionSource.EXPLICIT)


def test_profile_affinity_bounds():
    with pytest.raises(ValueError):
        UserProfile(user_id="u", interests=(("x", 1.5),))
    with pytest.raises(ValueError):
        UserState(satisfaction=1.2)
