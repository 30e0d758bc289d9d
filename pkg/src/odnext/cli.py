"""Command-line interface.

Subcommands cover the whole pipeline: corpus filtering, training,
evaluation, single-query prediction, ablation comparison, synthetic
corpus generation, and hyperparameter sweeps.  Reports are key=value
lines on stdout; every report includes a sha256 over the effective
configuration so runs can be matched to their settings.

Exit codes: 0 success, 1 contract violation (bad configuration or
arguments), 2 unreadable or malformed input files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, fields, replace

from .baselines import FREQUENCY_KINDS, FrequencyRanker, ODLSTM, ODLSTMConfig
from .checkpoint import CheckpointFormatError, load_checkpoint, save_checkpoint
from .data import (
    Corpus,
    CorpusFormatError,
    TrainingExample,
    build_interval_tables,
    build_test_queries,
    build_vocab,
    chronological_split,
    load_corpus,
    load_trip_rows,
    preprocess,
    save_locations,
    save_trips,
)
from .evaluation import (
    EvalReport,
    ModelRanker,
    evaluate,
    mean_reports,
    rank_descending,
    sensitivity_sweep,
)
from .model import Model, ModelConfig, VARIANTS
from .nn import ContractViolation
from .synth import SynthConfig, generate

_MODEL_FIELD_TYPES = {f.name: f.type for f in fields(ModelConfig)}
_PIPELINE_DEFAULTS = {"train_ratio": 0.7, "min_trips": 10, "min_users": 10}
_INT_MODEL_FIELDS = {
    "dim", "hdim", "epochs", "seed", "geohash_precision", "utc_offset_hours"
}
_STR_MODEL_FIELDS = {"variant", "attention_context"}


@dataclass(frozen=True)
class TrainRunConfig:
    model: ModelConfig
    train_ratio: float = 0.7
    min_trips: int = 10
    min_users: int = 10

    def as_dict(self) -> dict:
        d = self.model.as_dict()
        d.update(
            train_ratio=self.train_ratio,
            min_trips=self.min_trips,
            min_users=self.min_users,
        )
        return d


def config_sha256(d: dict) -> str:
    return hashlib.sha256(
        json.dumps(d, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()


def _load_json(path: str) -> dict:
    with open(path, encoding="utf-8") as f:
        d = json.load(f)
    if not isinstance(d, dict):
        raise ContractViolation(f"{path}: configuration must be a JSON object")
    return d


def parse_train_config(d: dict) -> TrainRunConfig:
    unknown = set(d) - set(_MODEL_FIELD_TYPES) - set(_PIPELINE_DEFAULTS)
    if unknown:
        raise ContractViolation(f"unknown configuration keys: {sorted(unknown)}")
    model_kwargs = {}
    for name in _MODEL_FIELD_TYPES:
        if name not in d:
            continue
        value = d[name]
        if name in _INT_MODEL_FIELDS:
            if not isinstance(value, int) or isinstance(value, bool):
                raise ContractViolation(f"configuration key {name!r} must be an integer")
        elif name in _STR_MODEL_FIELDS:
            if not isinstance(value, str):
                raise ContractViolation(f"configuration key {name!r} must be a string")
        elif not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ContractViolation(f"configuration key {name!r} must be a number")
        model_kwargs[name] = value
    pipeline = {}
    for name, default in _PIPELINE_DEFAULTS.items():
        value = d.get(name, default)
        if name == "train_ratio":
            if not isinstance(value, (int, float)) or not 0.0 < value <= 1.0:
                raise ContractViolation("train_ratio must lie in (0, 1]")
            value = float(value)
        else:
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ContractViolation(f"{name} must be a positive integer")
        pipeline[name] = value
    return TrainRunConfig(model=ModelConfig(**model_kwargs), **pipeline)


def parse_synth_config(d: dict) -> SynthConfig:
    names = {f.name for f in fields(SynthConfig)}
    unknown = set(d) - names
    if unknown:
        raise ContractViolation(f"unknown configuration keys: {sorted(unknown)}")
    for name, value in d.items():
        if name in ("p_noise", "day_half_adherence", "p_stay", "p_next"):
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ContractViolation(f"configuration key {name!r} must be a number")
        elif not isinstance(value, int) or isinstance(value, bool):
            raise ContractViolation(f"configuration key {name!r} must be an integer")
    return SynthConfig(**d)


def _emit(lines: list[str], report_path: str | None) -> None:
    text = "\n".join(lines)
    print(text)
    if report_path:
        with open(report_path, "w", encoding="utf-8") as f:
            f.write(text + "\n")


def _report_lines(report: EvalReport, prefix: str = "") -> list[str]:
    return [
        f"{prefix}{key}={value:.6f}" if isinstance(value, float) else f"{prefix}{key}={value}"
        for key, value in report.as_dict().items()
    ]


# -- subcommands ----------------------------------------------------------


def cmd_preprocess(args) -> int:
    corpus = load_corpus(args.trips, args.locations)
    result = preprocess(corpus, args.min_trips, args.min_users)
    save_trips(result, args.out_trips)
    save_locations(result, args.out_locations)
    _emit(
        [
            f"users_before={corpus.n_users}",
            f"users_after={result.n_users}",
            f"locations_before={corpus.n_locations}",
            f"locations_after={result.n_locations}",
            f"trips_before={corpus.n_trips}",
            f"trips_after={result.n_trips}",
        ],
        args.report,
    )
    return 0


def _train_pipeline(cfg: TrainRunConfig, corpus: Corpus):
    """Split, build vocabulary and tables, train, cache."""
    split = chronological_split(corpus, cfg.train_ratio)
    vocab = build_vocab(
        corpus, cfg.model.geohash_precision, cfg.model.utc_offset_hours
    )
    tables = build_interval_tables(split.train)
    model = Model(cfg.model, vocab, tables)
    model.fit(split.train)
    cache = model.build_cache(split.train)
    return split, vocab, tables, model, cache


def cmd_train(args) -> int:
    cfg = parse_train_config(_load_json(args.config))
    corpus = load_corpus(args.trips, args.locations)
    if corpus.is_empty:
        raise ContractViolation("training corpus has no users")
    split, _, _, model, cache = _train_pipeline(cfg, corpus)
    save_checkpoint(
        args.out, model, cache, [rec.loc_id for rec in corpus.locations], corpus.users
    )
    if args.out_test:
        save_trips(split.test, args.out_test)
    _emit(
        [
            f"config_sha256={config_sha256(cfg.as_dict())}",
            f"variant={cfg.model.variant}",
            f"n_users={corpus.n_users}",
            f"n_locations={corpus.n_locations}",
            f"n_train_trips={split.train.n_trips}",
            f"n_test_trips={split.test.n_trips}",
            f"flagged_users={len(split.flagged_users)}",
            f"epochs={cfg.model.epochs}",
            f"final_loss={model.loss_curve[-1]:.6f}" if model.loss_curve else "final_loss=nan",
        ],
        args.report,
    )
    return 0


def _test_queries_from_rows(bundle, rows) -> tuple[list[list[TrainingExample]], int]:
    """Group raw test rows per known user and chain rolling queries."""
    user_index = {uid: i for i, uid in enumerate(bundle.user_ids)}
    loc_index = {lid: i for i, lid in enumerate(bundle.location_ids)}
    per_user: dict[int, list[tuple[int, int, int, int]]] = {}
    skipped = 0
    for user_id, origin_id, dest_id, pickup, dropoff in rows:
        if user_id not in user_index or origin_id not in loc_index or dest_id not in loc_index:
            skipped += 1
            continue
        per_user.setdefault(user_index[user_id], []).append(
            (pickup, dropoff, loc_index[origin_id], loc_index[dest_id])
        )
    queries: list[list[TrainingExample]] = [[] for _ in bundle.user_ids]
    cache = bundle.cache
    for u, items in per_user.items():
        items.sort()
        prev = int(cache.last_dest[u])
        if prev < 0:
            skipped += len(items)
            continue
        for _, _, origin, dest in items:
            queries[u].append(TrainingExample(u, origin, prev, dest))
            prev = dest
    return queries, skipped


def cmd_eval(args) -> int:
    bundle = load_checkpoint(args.checkpoint)
    rows = load_trip_rows(args.test)
    queries, skipped = _test_queries_from_rows(bundle, rows)
    report = evaluate(ModelRanker(bundle.model, bundle.cache), queries)
    report.n_skipped += skipped
    lines = [
        f"config_sha256={config_sha256(bundle.model.config.as_dict())}",
        f"variant={bundle.model.config.variant}",
    ] + _report_lines(report)
    _emit(lines, args.report)
    return 0


def cmd_predict(args) -> int:
    bundle = load_checkpoint(args.checkpoint)
    model, cache = bundle.model, bundle.cache
    user_index = {uid: i for i, uid in enumerate(bundle.user_ids)}
    loc_index = {lid: i for i, lid in enumerate(bundle.location_ids)}
    if args.user not in user_index:
        raise ContractViolation(f"unknown user id {args.user!r}")
    for loc in (args.origin, args.prev_dest):
        if loc not in loc_index:
            raise ContractViolation(f"unknown location id {loc!r}")
    user = user_index[args.user]
    origin = loc_index[args.origin]
    prev_dest = loc_index[args.prev_dest]
    probs = model.predict_batch(cache, user, [origin], [prev_dest])[0]
    ranking = rank_descending(probs)
    lines = []
    for pos in range(min(args.top, len(ranking))):
        loc = int(ranking[pos])
        lines.append(f"{pos + 1} {bundle.location_ids[loc]} {probs[loc]:.6f}")
    if args.explain:
        _, w_origin, w_dest = model.attention(cache, user, origin, prev_dest)
        for k, (loc, w) in enumerate(zip(cache.oseq[user], w_origin)):
            lines.append(f"attn o[{k}]={bundle.location_ids[int(loc)]} {100.0 * w:.2f}%")
        for k, (loc, w) in enumerate(zip(cache.dseq[user], w_dest)):
            lines.append(f"attn d[{k}]={bundle.location_ids[int(loc)]} {100.0 * w:.2f}%")
    _emit(lines, args.report)
    return 0


def cmd_synth(args) -> int:
    cfg = parse_synth_config(_load_json(args.config))
    corpus, manifest = generate(cfg)
    save_trips(corpus, args.out_trips)
    save_locations(corpus, args.out_locations)
    if args.manifest:
        with open(args.manifest, "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
            f.write("\n")
    _emit(
        [
            f"config_sha256={config_sha256(cfg.as_dict())}",
            f"n_users={corpus.n_users}",
            f"n_locations={corpus.n_locations}",
            f"n_trips={corpus.n_trips}",
            f"oracle_accuracy={manifest['oracle_accuracy']:.6f}",
        ],
        args.report,
    )
    return 0


def cmd_ablate(args) -> int:
    cfg = parse_train_config(_load_json(args.config))
    corpus = load_corpus(args.trips, args.locations)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    seeds = [int(s) for s in args.seeds.split(",")]
    for v in variants:
        if v not in VARIANTS and v not in FREQUENCY_KINDS and v != "od-lstm":
            raise ContractViolation(f"unknown ablation target {v!r}")

    split = chronological_split(corpus, cfg.train_ratio)
    queries = build_test_queries(split)
    vocab = build_vocab(corpus, cfg.model.geohash_precision, cfg.model.utc_offset_hours)
    tables = build_interval_tables(split.train)
    lines = [f"config_sha256={config_sha256(cfg.as_dict())}"]
    for v in variants:
        reports = []
        if v in FREQUENCY_KINDS:
            ranker = FrequencyRanker(v).fit(split.train)
            reports.append(evaluate(ranker, queries))
        else:
            for seed in seeds:
                if v == "od-lstm":
                    od_cfg = ODLSTMConfig(
                        dim=cfg.model.dim,
                        hdim=cfg.model.hdim,
                        lr=cfg.model.lr,
                        epochs=cfg.model.epochs,
                        seed=seed,
                    )
                    ranker = ODLSTM(od_cfg, corpus.n_locations)
                    ranker.fit(split.train)
                else:
                    model = Model(replace(cfg.model, variant=v, seed=seed), vocab, tables)
                    model.fit(split.train)
                    ranker = ModelRanker(model, model.build_cache(split.train))
                reports.append(evaluate(ranker, queries))
        mean = mean_reports(reports)
        for key in ("acc1", "acc5", "acc10", "map"):
            lines.append(f"{v}.{key}={mean[key]:.6f}")
    _emit(lines, args.report)
    return 0


def cmd_sweep(args) -> int:
    cfg = parse_train_config(_load_json(args.config))
    corpus = load_corpus(args.trips, args.locations)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ContractViolation("no sweep values given")
    try:
        parsed = [float(v) for v in values]
    except ValueError:
        raise ContractViolation(f"sweep values must be numeric: {values}") from None
    split = chronological_split(corpus, cfg.train_ratio)
    vocab = build_vocab(corpus, cfg.model.geohash_precision, cfg.model.utc_offset_hours)
    tables = build_interval_tables(split.train)
    results = sensitivity_sweep(cfg.model, args.param, parsed, split, vocab, tables)
    lines = [f"config_sha256={config_sha256(cfg.as_dict())}", f"param={args.param}"]
    for value, report in results:
        for key, metric in report.as_dict().items():
            if key in ("acc1", "acc5", "acc10", "map"):
                lines.append(f"{args.param}[{value:g}].{key}={metric:.6f}")
    _emit(lines, args.report)
    return 0


# -- argument wiring ------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odnext",
        description="Origin-aware next-destination recommendation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="drop sparse users and locations")
    p.add_argument("--trips", required=True)
    p.add_argument("--locations", required=True)
    p.add_argument("--out-trips", required=True)
    p.add_argument("--out-locations", required=True)
    p.add_argument("--min-trips", type=int, default=10)
    p.add_argument("--min-users", type=int, default=10)
    p.add_argument("--report")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a model and save a checkpoint")
    p.add_argument("--config", required=True, help="JSON hyperparameter file")
    p.add_argument("--trips", required=True)
    p.add_argument("--locations", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--out-test", help="write the held-out test trips here")
    p.add_argument("--report")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on held-out trips")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True, help="test trip CSV")
    p.add_argument("--report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="rank destinations for one query")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--origin", required=True)
    p.add_argument("--prev-dest", required=True)
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--explain", action="store_true", help="print attention weights")
    p.add_argument("--report")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--config", required=True)
    p.add_argument("--out-trips", required=True)
    p.add_argument("--out-locations", required=True)
    p.add_argument("--manifest", help="write the planted-rule manifest here")
    p.add_argument("--report")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ablate", help="compare variants and baselines")
    p.add_argument("--config", required=True)
    p.add_argument("--trips", required=True)
    p.add_argument("--locations", required=True)
    p.add_argument(
        "--variants",
        default="stod-ppa,od-ppa,od-lstm,u-top,top",
        help="comma list of model variants / baselines",
    )
    p.add_argument("--seeds", default="0", help="comma list of training seeds")
    p.add_argument("--report")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="vary one hyperparameter and re-train")
    p.add_argument("--config", required=True)
    p.add_argument("--trips", required=True)
    p.add_argument("--locations", required=True)
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma list of values")
    p.add_argument("--report")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CorpusFormatError, CheckpointFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ContractViolation as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
