"""Recommender-side policies: baseline, instruction-following, dataset replay.

All implementations are pure functions of (request, catalog, k) with a
deterministic tie-break (score descending, then item_id ascending), so runs
replay bit-exactly. Served lists never repeat excluded items.

Instructions are parsed into a closed directive grammar:

    more <category>     boost a category        (x2.0)
    less <category>     demote a category       (x0.2, also "too many ...",
                                                 "fewer", "stop", "tired of")
    different/new/...   novelty: bonus for categories unseen in the history
    related/similar     bonus for categories sharing tags with the demoted
                        ones (Jaccard over category tag sets >= 0.3)

Category mentions are matched against catalog categories with a light
suffix-stripping stem ("political" matches "politics"). Text that yields no
directives falls back to baseline scoring; the fallback is recorded in the
strategy note rather than raised.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol

from .catalog import Catalog, HistorySummary, Item
from .errors import FeedsimError
from .users import Instruction, UserProfile

_WORD_RE = re.compile(r"[a-z0-9_]+")

LESS_WORDS = frozenset({"less", "fewer", "stop", "hate", "tired", "sick", "enough"})
MORE_WORDS = frozenset({"more", "want", "love", "like"})
NOVEL_WORDS = frozenset({
    "different", "new", "else", "interesting", "fresh", "novel", "variety",
    "diverse", "explore",
})
RELATED_WORDS = frozenset({"related", "similar", "adjacent", "alike"})


@dataclass(frozen=True)
class RecommendationRequest:
    profile: UserProfile
    summary: HistorySummary
    turn_index: int = 0
    instruction: Instruction | None = None
    excluded: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.turn_index < 0:
            raise ValueError("turn_index must be >= 0")
        if self.turn_index == 0 and self.instruction is not None:
            raise ValueError("first-turn requests cannot carry an instruction")


@dataclass(frozen=True)
class RecommendationList:
    items: tuple[str, ...]
    strategy_note: str = ""


@dataclass(frozen=True)
class Directives:
    more: tuple[str, ...] = ()
    less: tuple[str, ...] = ()
    novel: bool = False
    related: bool = False

    def is_neutral(self) -> bool:
        return not (self.more or self.less or self.novel or self.related)

    def describe(self) -> str:
        parts = []
        if self.less:
            parts.append("less=" + ",".join(self.less))
        if self.more:
            parts.append("more=" + ",".join(self.more))
        if self.novel:
            parts.append("novel")
        if self.related:
            parts.append("related")
        return "; ".join(parts) if parts else "none"


@dataclass(frozen=True)
class RerankWeights:
    less_mult: float = 0.2
    more_mult: float = 2.0
    novel_bonus: float = 0.5
    related_bonus: float = 0.5
    related_min_jaccard: float = 0.3


def _stems(token: str) -> frozenset[str]:
    out = {token}
    if len(token) > 3 and token.endswith("es"):
        out.add(token[:-2])
    if len(token) > 2 and token.endswith("s"):
        out.add(token[:-1])
    if len(token) > 3 and token.endswith("al"):
        out.add(token[:-2])
    return frozenset(out)


def _find_subsequence(hay: list[frozenset[str]], needle: list[frozenset[str]]) -> int | None:
    n = len(needle)
    for i in range(len(hay) - n + 1):
        if all(hay[i + j] & needle[j] for j in range(n)):
            return i
    return None


def parse_instruction(text: str, categories: list[str]) -> Directives:
    """Map free text onto the closed directive grammar. Never raises."""
    tokens = _WORD_RE.findall(text.lower())
    markers: list[tuple[int, str]] = []
    for i, tok in enumerate(tokens):
        if tok in LESS_WORDS:
            markers.append((i, "less"))
        elif tok == "many" and i > 0 and tokens[i - 1] == "too":
            markers.append((i, "less"))
        elif tok in MORE_WORDS:
            if tok == "like" and i >= 2 and tokens[i - 1] == "t" and tokens[i - 2] == "don":
                markers.append((i, "less"))
            else:
                markers.append((i, "more"))

    novel = any(t in NOVEL_WORDS for t in tokens)
    related = any(t in RELATED_WORDS for t in tokens)

    token_stems = [_stems(t) for t in tokens]
    more: list[str] = []
    less: list[str] = []
    for cat in categories:
        cat_tokens = _WORD_RE.findall(cat.lower())
        if not cat_tokens:
            continue
        pos = _find_subsequence(token_stems, [_stems(t) for t in cat_tokens])
        if pos is None:
            continue
        polarity = "more"  # naming a category with no marker reads as interest
        for i, p in markers:
            if i < pos:
                polarity = p
        (less if polarity == "less" else more).append(cat)
    return Directives(more=tuple(more), less=tuple(less), novel=novel, related=related)


def related_categories(
    catalog: Catalog, bases: tuple[str, ...], min_jaccard: float = 0.3,
) -> frozenset[str]:
    """Categories whose tag sets overlap any base category (Jaccard >= cutoff)."""
    tags = catalog.category_tags()
    base_sets = [tags.get(b, frozenset()) for b in bases]
    out = set()
    for cat, cat_tags in tags.items():
        if cat in bases or not cat_tags:
            continue
        for base_tags in base_sets:
            union = cat_tags | base_tags
            if union and len(cat_tags & base_tags) / len(union) >= min_jaccard:
                out.add(cat)
                break
    return frozenset(out)


def base_score(profile: UserProfile, summary: HistorySummary, item: Item) -> float:
    """Interest affinity scaled by how recently the category was engaged."""
    affinity = profile.affinity_for(item.category)
    total = summary.total()
    recency = 1.0 + (summary.per_category_counts.get(item.category, 0) / total if total else 0.0)
    return affinity * recency


def _ranked(candidates: list[Item], scores: dict[str, float], k: int) -> tuple[str, ...]:
    ordered = sorted(candidates, key=lambda it: (-scores[it.item_id], it.item_id))
    return tuple(it.item_id for it in ordered[:k])


def _candidates(request: RecommendationRequest, catalog: Catalog) -> list[Item]:
    if len(catalog) == 0:
        raise FeedsimError("cannot recommend from an empty catalog")
    return [it for it in catalog if it.item_id not in request.excluded]


def recommend_initial(
    request: RecommendationRequest,
    catalog: Catalog,
    k: int,
    boosts: dict[str, float] | None = None,
) -> RecommendationList:
    """History-only ranking; used for first lists and instruction-blind modes."""
    if request.instruction is not None:
        raise ValueError("recommend_initial takes instruction-free requests")
    candidates = _candidates(request, catalog)
    scores = {it.item_id: base_score(request.profile, request.summary, it) for it in candidates}
    if boosts:
        for iid, extra in boosts.items():
            if iid in scores:
                scores[iid] += extra
    return RecommendationList(
        items=_ranked(candidates, scores, k),
        strategy_note="baseline: affinity x recency over engagement history",
    )


def respond_to_instruction(
    request: RecommendationRequest,
    catalog: Catalog,
    k: int,
    boosts: dict[str, float] | None = None,
    weights: RerankWeights = RerankWeights(),
    parser: Callable[[str, list[str]], Directives] | None = None,
) -> RecommendationList:
    """Re-rank the candidate pool under the parsed instruction directives."""
    if request.instruction is None:
        raise ValueError("respond_to_instruction requires an instruction")
    parse = parser or parse_instruction
    directives = parse(request.instruction.text, catalog.categories())
    candidates = _candidates(request, catalog)
    scores = {it.item_id: base_score(request.profile, request.summary, it) for it in candidates}

    if directives.is_neutral():
        note = "fallback: no directives recognized; baseline ranking"
    else:
        related = (related_categories(catalog, directives.less, weights.related_min_jaccard)
                   if directives.related and directives.less else frozenset())
        seen_cats = set(request.summary.per_category_counts)
        for it in candidates:
            s = scores[it.item_id]
            if it.category in directives.less:
                s *= weights.less_mult
            if it.category in directives.more:
                s *= weights.more_mult
            if directives.novel and it.category not in seen_cats:
                s += weights.novel_bonus
            if it.category in related:
                s += weights.related_bonus
            scores[it.item_id] = s
        note = f"applied directives: {directives.describe()}"

    if boosts:
        for iid, extra in boosts.items():
            if iid in scores:
                scores[iid] += extra
    return RecommendationList(items=_ranked(candidates, scores, k), strategy_note=note)


def replay_rerank(
    remaining: list[str],
    instruction: Instruction | None,
    catalog: Catalog,
    weights: RerankWeights = RerankWeights(),
) -> list[str]:
    """Permute a recorded tail under an instruction; never adds or drops items.

    Scores start at zero per item: +1 for `more` categories, -1 for `less`,
    +related_bonus for tag-related categories. Novelty needs an engagement
    history, which replay lacks, so it is ignored here. Ties keep their
    recorded order (stable sort), so a neutral instruction is the identity.
    """
    if not remaining:
        return []
    directives = (parse_instruction(instruction.text, catalog.categories())
                  if instruction is not None else Directives())
    related = (related_categories(catalog, directives.less, weights.related_min_jaccard)
               if directives.related and directives.less else frozenset())
    scores = []
    for iid in remaining:
        cat = catalog.get(iid).category
        s = 0.0
        if cat in directives.more:
            s += 1.0
        if cat in directives.less:
            s -= 1.0
        if cat in related:
            s += weights.related_bonus
        scores.append(s)
    order = sorted(range(len(remaining)), key=lambda i: -scores[i])
    return [remaining[i] for i in order]


class Recommender(Protocol):
    def recommend(
        self, request: RecommendationRequest, catalog: Catalog, k: int,
        boosts: dict[str, float] | None = None,
    ) -> RecommendationList: ...


class BaselineRecommender:
    """Traditional policy: cannot process instructions, history only."""

    def recommend(self, request, catalog, k, boosts=None):
        return recommend_initial(replace(request, instruction=None), catalog, k, boosts)


@dataclass
class InstructionFollowingRecommender:
    """Dispatches on instruction presence; optional pluggable parser."""

    weights: RerankWeights = field(default_factory=RerankWeights)
    parser: Callable[[str, list[str]], Directives] | None = None

    def recommend(self, request, catalog, k, boosts=None):
        if request.instruction is None:
            return recommend_initial(request, catalog, k, boosts)
        return respond_to_instruction(
            request, catalog, k, boosts, weights=self.weights, parser=self.parser)


@dataclass
class ReplayReranker:
    """Reorders a fixed recorded list; see eval's replay protocol."""

    weights: RerankWeights = field(default_factory=RerankWeights)

    def rerank(self, remaining: list[str], instruction: Instruction | None, catalog: Catalog) -> list[str]:
        return replay_rerank(remaining, instruction, catalog, self.weights)


RECOMMENDER_KINDS = ("baseline", "instruct", "replay", "llm")


def build_recommender(kind: str, params: dict | None = None, llm_client=None) -> Recommender:
    """Resolve a run-config recommender selection to an implementation."""
    params = dict(params or {})
    weights = RerankWeights(**params.get("weights", {}))
    if kind == "baseline":
        return BaselineRecommender()
    if kind == "instruct":
        return InstructionFollowingRecommender(weights=weights)
    if kind == "llm":
        from .llm import LLMDirectiveParser
        if llm_client is None:
            raise FeedsimError("recommender kind 'llm' requires an LLM client")
        return InstructionFollowingRecommender(
            weights=weights, parser=LLMDirectiveParser(llm_client))
    if kind == "replay":
        raise FeedsimError("the replay reranker only runs inside replay evaluation")
    raise FeedsimError(f"unknown recommender kind: {kind!r}")
