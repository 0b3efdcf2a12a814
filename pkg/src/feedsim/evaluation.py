"""Offline metrics and the dataset-replay protocol.

Replay walks a simulated user down a recorded list. Each time the user
leaves and issues an instruction, the consumed prefix (including the item
where the break happened) stays fixed and the remaining tail is re-permuted
by the replay reranker; the walk then continues on the new order until the
list is exhausted or the user exits without an instruction. The final list
is always a permutation of the recorded one.

Metric conventions (stated because NDCG conventions vary): binary gains,
log2 discount with ranks starting at 1, recall/ndcg defined as 0.0 when the
relevant set is empty.

Dataset split rule (leave-last-N): a user's recorded list is their distinct
interacted items in timestamp order; the held-out relevant set is the items
with positive actions (anything but skip/leave) among their last N
interactions. Profiles can be derived from the remaining (earlier) records:
affinity per category = positive rate among that category's interactions.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .catalog import (
    ActionKind,
    Catalog,
    ContentType,
    InteractionRecord,
    Item,
    ItemMetadata,
)
from .errors import FeedsimError
from .recommender import RecommendationList, ReplayReranker
from .session import Turn
from .users import (
    ActionDecision,
    Instruction,
    ScriptedConfig,
    ScriptedSimulator,
    UserProfile,
    UserSimulator,
    UserState,
    relieve_after_instruction,
    update_mindset,
)

POSITIVE_RECORD_ACTIONS = frozenset({
    ActionKind.CLICK, ActionKind.COMMENT, ActionKind.SHARE,
    ActionKind.LIKE, ActionKind.WATCH,
})


def recall_at_n(ranked: list[str], relevant: set[str], n: int) -> float:
    """|top-n intersect relevant| / |relevant|; 0.0 for an empty relevant set.

    Distinct hits only, so a degenerate ranking with repeats cannot push the
    value past 1.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not relevant:
        return 0.0
    return len(set(ranked[:n]) & set(relevant)) / len(set(relevant))


def ndcg_at_n(ranked: list[str], relevant: set[str], n: int) -> float:
    """Binary-gain NDCG with log2(rank+1) discount; 0.0 for an empty relevant set.

    Each relevant item earns gain at its first occurrence only, keeping the
    value inside [0, 1] even for rankings that repeat an item.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not relevant:
        return 0.0
    dcg = 0.0
    credited: set[str] = set()
    for rank, iid in enumerate(ranked[:n], start=1):
        if iid in relevant and iid not in credited:
            credited.add(iid)
            dcg += 1.0 / math.log2(rank + 1)
    ideal_hits = min(n, len(set(relevant)))
    idcg = sum(1.0 / math.log2(rank + 1) for rank in range(1, ideal_hits + 1))
    return dcg / idcg if idcg else 0.0


@dataclass
class ReplayEvent:
    position: int
    item_id: str
    action: ActionKind
    instruction: str | None = None
    reordered_tail: list[str] | None = None


@dataclass
class ReplayResult:
    final_list: list[str]
    trace: list[ReplayEvent]
    breaks: int


def replay_protocol(
    recorded_list: list[str],
    simulator: UserSimulator,
    reranker: ReplayReranker,
    catalog: Catalog,
    profile: UserProfile,
    initial_state: UserState | None = None,
) -> ReplayResult:
    """Walk a recorded list, reordering the tail at each instruction break."""
    if not recorded_list:
        raise FeedsimError("recorded list must be non-empty")
    order = list(recorded_list)
    state = initial_state or UserState()
    trace: list[ReplayEvent] = []
    turns: list[Turn] = []
    segment: list[tuple[str, ActionDecision]] = []
    breaks = 0
    pos = 0
    while pos < len(order):
        item = catalog.get(order[pos])
        decision = simulator.decide_action(
            profile, state, item, catalog.metadata_for(item.item_id))
        state = update_mindset(profile, state, item, decision)
        segment.append((item.item_id, decision))
        event = ReplayEvent(position=pos, item_id=item.item_id, action=decision.action)
        trace.append(event)
        if decision.action == ActionKind.LEAVE:
            turns.append(Turn(
                turn_index=len(turns),
                shown=RecommendationList(items=tuple(i for i, _ in segment)),
                decisions=list(segment),
            ))
            segment = []
            instruction = simulator.reflect_and_instruct(profile, state, turns)
            if instruction is None:
                break
            turns[-1].instruction_out = instruction
            state = relieve_after_instruction(state)
            breaks += 1
            tail = order[pos + 1:]
            new_tail = reranker.rerank(tail, instruction, catalog)
            if sorted(new_tail) != sorted(tail):
                raise FeedsimError("replay reranker violated the permutation contract")
            order = order[:pos + 1] + new_tail
            event.instruction = instruction.text
            event.reordered_tail = list(new_tail)
        pos += 1
    return ReplayResult(final_list=order, trace=trace, breaks=breaks)


# ── dataset plumbing ─────────────────────────────────────────────────


@dataclass
class ReplayUser:
    user_id: str
    profile: UserProfile
    recorded_list: list[str]
    relevant: set[str]


@dataclass
class ReplayDataset:
    users: list[ReplayUser]
    skipped_users: int = 0  # users dropped at build time (no relevant set)


def derive_profile(user_id: str, records: list[InteractionRecord], catalog: Catalog) -> UserProfile:
    """Affinity per category = positive rate among that category's records."""
    pos: dict[str, int] = {}
    tot: dict[str, int] = {}
    for rec in records:
        cat = catalog.get(rec.item_id).category
        tot[cat] = tot.get(cat, 0) + 1
        if rec.action in POSITIVE_RECORD_ACTIONS:
            pos[cat] = pos.get(cat, 0) + 1
    interests = tuple(
        (cat, pos.get(cat, 0) / tot[cat]) for cat in sorted(tot))
    return UserProfile(user_id=user_id, interests=interests)


def build_replay_dataset(
    records: list[InteractionRecord],
    catalog: Catalog,
    holdout_n: int = 5,
    min_list_len: int = 3,
) -> ReplayDataset:
    """Leave-last-N split over per-user interaction logs (see module docs)."""
    by_user: dict[str, list[InteractionRecord]] = {}
    for rec in records:
        by_user.setdefault(rec.user_id, []).append(rec)
    users: list[ReplayUser] = []
    skipped = 0
    for user_id in sorted(by_user):
        recs = by_user[user_id]
        seen: set[str] = set()
        ordered_items = []
        for rec in recs:
            if rec.item_id not in seen:
                seen.add(rec.item_id)
                ordered_items.append(rec.item_id)
        head, tail = recs[:-holdout_n], recs[-holdout_n:]
        relevant = {r.item_id for r in tail if r.action in POSITIVE_RECORD_ACTIONS}
        relevant &= set(ordered_items)
        if not relevant or len(ordered_items) < min_list_len or not head:
            skipped += 1
            continue
        users.append(ReplayUser(
            user_id=user_id,
            profile=derive_profile(user_id, head, catalog),
            recorded_list=ordered_items,
            relevant=relevant,
        ))
    return ReplayDataset(users=users, skipped_users=skipped)


@dataclass
class PerUserEval:
    user_id: str
    recall_initial: float
    recall_final: float
    ndcg_initial: float
    ndcg_final: float
    turns_used: int


@dataclass
class EvalReport:
    per_user: list[PerUserEval]
    mean_recall_initial: float
    mean_recall_final: float
    mean_ndcg_initial: float
    mean_ndcg_final: float
    users_evaluated: int
    users_skipped: int
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "per_user": [vars(u) for u in self.per_user],
            "aggregates": {
                "mean_recall_initial": self.mean_recall_initial,
                "mean_recall_final": self.mean_recall_final,
                "mean_ndcg_initial": self.mean_ndcg_initial,
                "mean_ndcg_final": self.mean_ndcg_final,
            },
            "users_evaluated": self.users_evaluated,
            "users_skipped": self.users_skipped,
            "config": self.config,
        }


def format_report_table(report: EvalReport) -> str:
    header = f"{'user':<12}{'recall@n init':>14}{'final':>8}{'ndcg@n init':>13}{'final':>8}{'turns':>7}"
    lines = [header, "-" * len(header)]
    for u in report.per_user:
        lines.append(
            f"{u.user_id:<12}{u.recall_initial:>14.4f}{u.recall_final:>8.4f}"
            f"{u.ndcg_initial:>13.4f}{u.ndcg_final:>8.4f}{u.turns_used:>7}")
    lines.append("-" * len(header))
    lines.append(
        f"{'mean':<12}{report.mean_recall_initial:>14.4f}{report.mean_recall_final:>8.4f}"
        f"{report.mean_ndcg_initial:>13.4f}{report.mean_ndcg_final:>8.4f}")
    return "\n".join(lines)


def run_eval(
    dataset: ReplayDataset,
    catalog: Catalog,
    n: int = 10,
    scripted: ScriptedConfig | None = None,
    seed: int = 0,
) -> EvalReport:
    """Replay every dataset user and compare initial vs final list metrics."""
    per_user: list[PerUserEval] = []
    reranker = ReplayReranker()
    for entry in sorted(dataset.users, key=lambda u: u.user_id):
        simulator = ScriptedSimulator(scripted or ScriptedConfig(), seed=seed)
        result = replay_protocol(
            entry.recorded_list, simulator, reranker, catalog, entry.profile)
        per_user.append(PerUserEval(
            user_id=entry.user_id,
            recall_initial=recall_at_n(entry.recorded_list, entry.relevant, n),
            recall_final=recall_at_n(result.final_list, entry.relevant, n),
            ndcg_initial=ndcg_at_n(entry.recorded_list, entry.relevant, n),
            ndcg_final=ndcg_at_n(result.final_list, entry.relevant, n),
            turns_used=result.breaks + 1,
        ))

    def mean(vals: list[float]) -> float:
        return sum(vals) / len(vals) if vals else 0.0

    return EvalReport(
        per_user=per_user,
        mean_recall_initial=mean([u.recall_initial for u in per_user]),
        mean_recall_final=mean([u.recall_final for u in per_user]),
        mean_ndcg_initial=mean([u.ndcg_initial for u in per_user]),
        mean_ndcg_final=mean([u.ndcg_final for u in per_user]),
        users_evaluated=len(per_user),
        users_skipped=dataset.skipped_users,
        config={"n": n, "seed": seed},
    )


def build_tail_relevant_dataset(
    n_users: int = 25, seed: int = 7, head_min: int = 3, head_max: int = 5,
) -> tuple[Catalog, ReplayDataset, ScriptedConfig]:
    """Synthetic construction where replay should help.

    Each user's recorded list front-loads items from a category they barely
    care about and buries high-affinity items in the tail. The two
    categories share a tag, so the scripted persona's break-time
    instruction ("less <head category>, something different but related")
    makes the reranker promote the tail. The held-out relevant set is
    exactly those tail items, so ndcg_final should beat ndcg_initial.
    """
    rng = random.Random(seed)
    items: list[Item] = []
    metadata: dict[str, ItemMetadata] = {}
    users: list[ReplayUser] = []
    for u in range(n_users):
        uid = f"user{u:03d}"
        head_cat = f"filler_{u}"
        tail_cat = f"target_{u}"
        shared = f"theme_{u}"
        n_head = rng.randint(head_min, head_max) + 2
        n_tail = rng.randint(2, 4)
        recorded: list[str] = []
        for i in range(n_head):
            iid = f"{uid}_h{i}"
            items.append(Item(
                item_id=iid, title=f"head clip {i}", category=head_cat,
                content_type=ContentType.SHORT_VIDEO, duration_s=rng.randint(15, 60)))
            metadata[iid] = ItemMetadata(tags=(shared, f"{head_cat}_style"))
            recorded.append(iid)
        tail_ids = []
        for i in range(n_tail):
            iid = f"{uid}_t{i}"
            items.append(Item(
                item_id=iid, title=f"tail clip {i}", category=tail_cat,
                content_type=ContentType.SHORT_VIDEO, duration_s=rng.randint(15, 60)))
            metadata[iid] = ItemMetadata(tags=(shared, f"{tail_cat}_style"))
            recorded.append(iid)
            tail_ids.append(iid)
        profile = UserProfile(
            user_id=uid,
            interests=((head_cat, 0.2), (tail_cat, 0.9)),
        )
        users.append(ReplayUser(
            user_id=uid, profile=profile, recorded_list=recorded,
            relevant=set(tail_ids)))
    catalog = Catalog(items, metadata)
    return catalog, ReplayDataset(users=users), ScriptedConfig()
