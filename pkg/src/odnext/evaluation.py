"""Ranking metrics, the evaluation driver, and cold-start scoring."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Protocol, Sequence

import numpy as np

from .data import Corpus, SplitResult, TrainingExample, Trip, build_test_queries
from .model import EncodedCache, Model, ModelConfig
from .nn import ContractViolation


def rank_descending(probs: np.ndarray) -> np.ndarray:
    """Location indices by descending probability; ties by ascending index."""
    return np.argsort(-probs, kind="stable")


def accuracy_at_k(rankings: Sequence[np.ndarray], targets: Sequence[int], k: int) -> float:
    if len(rankings) != len(targets):
        raise ContractViolation("rankings and targets differ in length")
    if not rankings:
        raise ContractViolation("cannot score an empty query set")
    hits = sum(int(t in r[:k]) for r, t in zip(rankings, targets))
    return hits / len(rankings)


def mean_average_precision(rankings: Sequence[np.ndarray], targets: Sequence[int]) -> float:
    """MAP with a single relevant item per query: the mean of 1/rank."""
    if len(rankings) != len(targets):
        raise ContractViolation("rankings and targets differ in length")
    if not rankings:
        raise ContractViolation("cannot score an empty query set")
    total = 0.0
    for r, t in zip(rankings, targets):
        pos = int(np.nonzero(r == t)[0][0])
        total += 1.0 / (pos + 1)
    return total / len(rankings)


@dataclass
class EvalReport:
    acc1: float
    acc5: float
    acc10: float
    map: float
    n_queries: int
    n_skipped: int = 0

    def as_dict(self) -> dict[str, float]:
        return {
            "acc1": self.acc1,
            "acc5": self.acc5,
            "acc10": self.acc10,
            "map": self.map,
            "n_queries": self.n_queries,
            "n_skipped": self.n_skipped,
        }


class Ranker(Protocol):
    def rank_user(
        self, user: int, queries: list[TrainingExample]
    ) -> list[np.ndarray | None]: ...


class ModelRanker:
    """Adapts a trained Model plus its EncodedCache to the Ranker protocol."""

    def __init__(self, model: Model, cache: EncodedCache):
        self.model = model
        self.cache = cache

    def rank_user(self, user: int, queries) -> list[np.ndarray]:
        if not queries:
            return []
        origins = [q.origin for q in queries]
        dprevs = [q.prev_dest for q in queries]
        probs = self.model.predict_batch(self.cache, user, origins, dprevs)
        return [rank_descending(row) for row in probs]


def evaluate(ranker: Ranker, queries_per_user: list[list[TrainingExample]]) -> EvalReport:
    """Score a ranker over chronological per-user test queries.

    A ranker may return None for a query it cannot answer; those count
    as skipped and do not enter the metrics.
    """
    rankings: list[np.ndarray] = []
    targets: list[int] = []
    skipped = 0
    for user, queries in enumerate(queries_per_user):
        if not queries:
            continue
        results = ranker.rank_user(user, queries)
        if len(results) != len(queries):
            raise ContractViolation("ranker returned the wrong number of rankings")
        for r, q in zip(results, queries):
            if r is None:
                skipped += 1
                continue
            rankings.append(r)
            targets.append(q.target)
    if not rankings:
        raise ContractViolation("no scorable queries")
    return EvalReport(
        acc1=accuracy_at_k(rankings, targets, 1),
        acc5=accuracy_at_k(rankings, targets, 5),
        acc10=accuracy_at_k(rankings, targets, 10),
        map=mean_average_precision(rankings, targets),
        n_queries=len(rankings),
        n_skipped=skipped,
    )


def mean_reports(reports: Sequence[EvalReport]) -> dict[str, float]:
    """Metric-wise mean over runs (for example over seeds)."""
    if not reports:
        raise ContractViolation("no reports to aggregate")
    out: dict[str, float] = {}
    for key in ("acc1", "acc5", "acc10", "map"):
        out[key] = float(np.mean([getattr(r, key) for r in reports]))
    out["n_queries"] = float(np.mean([r.n_queries for r in reports]))
    return out


def remap_user_trips(
    trips: list[Trip], source: Corpus, target_index: dict[str, int]
) -> list[Trip]:
    """Translate trips between corpora via location id strings.

    Trips touching a location absent from `target_index` are dropped.
    """
    out: list[Trip] = []
    for t in trips:
        o_id = source.locations[t.origin_loc].loc_id
        d_id = source.locations[t.dest_loc].loc_id
        if o_id in target_index and d_id in target_index:
            out.append(
                Trip(t.user_id, target_index[o_id], target_index[d_id], t.pickup_ts, t.dropoff_ts)
            )
    return out


def cold_start_eval(
    model: Model,
    top_ranking: np.ndarray,
    cold_trips_by_user: list[list[Trip]],
) -> tuple[float, float, int]:
    """Top-1 accuracy of the model against the global-frequency baseline
    on users the model never trained on.

    Each user's trips must already be expressed in the model's location
    index space.  For trip j the model sees the full prior history as
    encoder context and queries with (origin_j, dest_{j-1}).
    """
    model_hits = 0
    top_hits = 0
    n = 0
    for trips in cold_trips_by_user:
        for j in range(1, len(trips)):
            prefix = trips[:j]
            origin = trips[j].origin_loc
            prev_dest = trips[j - 1].dest_loc
            target = trips[j].dest_loc
            probs = model.predict_cold(prefix, origin, prev_dest)
            model_hits += int(rank_descending(probs)[0] == target)
            top_hits += int(top_ranking[0] == target)
            n += 1
    if n == 0:
        raise ContractViolation("no cold-start queries to score")
    return model_hits / n, top_hits / n, n


SWEEPABLE_FIELDS = ("dim", "hdim", "lr", "epochs")


def sensitivity_sweep(
    base: ModelConfig,
    param: str,
    values: Sequence,
    split: SplitResult,
    vocab,
    tables,
) -> list[tuple[float, EvalReport]]:
    """Retrain with one hyperparameter varied; evaluate each setting."""
    if param not in SWEEPABLE_FIELDS:
        raise ContractViolation(
            f"cannot sweep {param!r}; choose one of {SWEEPABLE_FIELDS}"
        )
    queries = build_test_queries(split)
    results: list[tuple[float, EvalReport]] = []
    for value in values:
        cfg = replace(base, **{param: type(getattr(base, param))(value)})
        model = Model(cfg, vocab, tables)
        model.fit(split.train)
        cache = model.build_cache(split.train)
        report = evaluate(ModelRanker(model, cache), queries)
        results.append((float(value), report))
    return results
