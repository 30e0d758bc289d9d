"""Trip corpus ingestion, filtering, chronological splitting, and the
per-location global interval tables.

File formats (UTF-8 CSV with headers):
  trips:     user_id,origin_id,dest_id,pickup_ts,dropoff_ts
  locations: loc_id,lat,lon
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .geo import GeoPoint, geohash_encode, haversine_km, timeslot_of, N_TIMESLOTS

log = logging.getLogger(__name__)

TRIPS_HEADER = ["user_id", "origin_id", "dest_id", "pickup_ts", "dropoff_ts"]
LOCATIONS_HEADER = ["loc_id", "lat", "lon"]


class CorpusFormatError(ValueError):
    """Malformed input file; message carries file and line context."""


@dataclass(frozen=True)
class Trip:
    """One origin->destination taxi record (location fields are indices)."""

    user_id: str
    origin_loc: int
    dest_loc: int
    pickup_ts: int
    dropoff_ts: int


@dataclass(frozen=True)
class LocationRecord:
    loc_id: str
    point: GeoPoint


@dataclass
class Corpus:
    """Location/user tables plus per-user time-ordered trip sequences."""

    locations: list[LocationRecord]
    users: list[str]
    trips_by_user: list[list[Trip]]

    @property
    def n_locations(self) -> int:
        return len(self.locations)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_trips(self) -> int:
        return sum(len(t) for t in self.trips_by_user)

    @property
    def is_empty(self) -> bool:
        return self.n_users == 0

    def all_trips(self) -> list[Trip]:
        return [t for trips in self.trips_by_user for t in trips]


def _sort_trips(trips: list[Trip]) -> list[Trip]:
    # ties: dropoff, then input order (stable sort)
    return sorted(trips, key=lambda t: (t.pickup_ts, t.dropoff_ts))


def load_locations(locations_path: str) -> list[LocationRecord]:
    """Parse the location CSV; ids must be unique, coordinates valid."""
    locations: list[LocationRecord] = []
    seen: set[str] = set()
    with open(locations_path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != LOCATIONS_HEADER:
            raise CorpusFormatError(
                f"{locations_path}:1: expected header {','.join(LOCATIONS_HEADER)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise CorpusFormatError(f"{locations_path}:{lineno}: expected 3 fields")
            loc_id, lat_s, lon_s = row
            if loc_id in seen:
                raise CorpusFormatError(f"{locations_path}:{lineno}: duplicate loc_id {loc_id}")
            try:
                point = GeoPoint(float(lat_s), float(lon_s))
            except ValueError as e:
                raise CorpusFormatError(f"{locations_path}:{lineno}: {e}") from None
            seen.add(loc_id)
            locations.append(LocationRecord(loc_id, point))
    return locations


def load_trip_rows(trips_path: str) -> list[tuple[str, str, str, int, int]]:
    """Parse the trip CSV into raw (user, origin, dest, pickup, dropoff)
    rows without resolving location ids."""
    rows: list[tuple[str, str, str, int, int]] = []
    with open(trips_path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != TRIPS_HEADER:
            raise CorpusFormatError(f"{trips_path}:1: expected header {','.join(TRIPS_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise CorpusFormatError(f"{trips_path}:{lineno}: expected 5 fields")
            user_id, origin_id, dest_id, pu_s, do_s = row
            try:
                pickup, dropoff = int(pu_s), int(do_s)
            except ValueError:
                raise CorpusFormatError(
                    f"{trips_path}:{lineno}: timestamps must be integer epoch seconds"
                ) from None
            if dropoff < pickup:
                raise CorpusFormatError(f"{trips_path}:{lineno}: dropoff before pickup")
            rows.append((user_id, origin_id, dest_id, pickup, dropoff))
    return rows


def load_corpus(trips_path: str, locations_path: str) -> Corpus:
    """Parse the two CSV files into an index-based Corpus."""
    locations = load_locations(locations_path)
    loc_index = {rec.loc_id: i for i, rec in enumerate(locations)}

    users: list[str] = []
    user_index: dict[str, int] = {}
    trips_by_user: dict[int, list[Trip]] = {}
    for user_id, origin_id, dest_id, pickup, dropoff in load_trip_rows(trips_path):
        for loc_id in (origin_id, dest_id):
            if loc_id not in loc_index:
                raise CorpusFormatError(f"{trips_path}: unknown loc_id {loc_id!r}")
        if user_id not in user_index:
            user_index[user_id] = len(users)
            users.append(user_id)
            trips_by_user[user_index[user_id]] = []
        trips_by_user[user_index[user_id]].append(
            Trip(user_id, loc_index[origin_id], loc_index[dest_id], pickup, dropoff)
        )

    return Corpus(
        locations=locations,
        users=users,
        trips_by_user=[_sort_trips(trips_by_user[i]) for i in range(len(users))],
    )


def save_locations(corpus: Corpus, locations_path: str) -> None:
    with open(locations_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(LOCATIONS_HEADER)
        for rec in corpus.locations:
            w.writerow([rec.loc_id, repr(rec.point.lat), repr(rec.point.lon)])


def save_trips(corpus: Corpus, trips_path: str) -> None:
    with open(trips_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(TRIPS_HEADER)
        for uidx, trips in enumerate(corpus.trips_by_user):
            for t in trips:
                w.writerow(
                    [
                        corpus.users[uidx],
                        corpus.locations[t.origin_loc].loc_id,
                        corpus.locations[t.dest_loc].loc_id,
                        t.pickup_ts,
                        t.dropoff_ts,
                    ]
                )


def save_corpus(corpus: Corpus, trips_path: str, locations_path: str) -> None:
    save_locations(corpus, locations_path)
    save_trips(corpus, trips_path)


def preprocess(corpus: Corpus, min_trips: int = 10, min_users: int = 10) -> Corpus:
    """Iteratively drop sparse users and locations until a fixpoint.

    A surviving user has >= min_trips trips; a surviving location is
    visited (as origin or destination) by >= min_users distinct users.
    Dropping a location drops the trips that touch it, which can drop a
    user, and so on.  Index spaces are re-compacted in the result.
    """
    user_trips = {u: list(trips) for u, trips in enumerate(corpus.trips_by_user)}
    alive_locs = set(range(corpus.n_locations))

    changed = True
    while changed:
        changed = False
        for u in list(user_trips):
            if len(user_trips[u]) < min_trips:
                del user_trips[u]
                changed = True
        visitors: dict[int, set[int]] = {}
        for u, trips in user_trips.items():
            for t in trips:
                visitors.setdefault(t.origin_loc, set()).add(u)
                visitors.setdefault(t.dest_loc, set()).add(u)
        dead = {
            loc
            for loc in alive_locs
            if len(visitors.get(loc, ())) < min_users
        }
        if dead:
            changed = True
            alive_locs -= dead
            for u in list(user_trips):
                kept = [
                    t
                    for t in user_trips[u]
                    if t.origin_loc in alive_locs and t.dest_loc in alive_locs
                ]
                if len(kept) != len(user_trips[u]):
                    user_trips[u] = kept

    loc_map = {old: new for new, old in enumerate(sorted(alive_locs))}
    kept_users = sorted(user_trips)
    result = Corpus(
        locations=[corpus.locations[old] for old in sorted(alive_locs)],
        users=[corpus.users[u] for u in kept_users],
        trips_by_user=[
            [
                Trip(t.user_id, loc_map[t.origin_loc], loc_map[t.dest_loc], t.pickup_ts, t.dropoff_ts)
                for t in user_trips[u]
            ]
            for u in kept_users
        ],
    )
    if result.is_empty:
        log.warning(
            "preprocess removed every user (min_trips=%d, min_users=%d)", min_trips, min_users
        )
    return result


@dataclass
class SplitResult:
    """Chronological per-user partition; both corpora share index spaces."""

    train: Corpus
    test: Corpus
    flagged_users: list[int] = field(default_factory=list)  # users with no test trips


def chronological_split(corpus: Corpus, train_ratio: float = 0.7) -> SplitResult:
    """First ceil(train_ratio * n) trips per user go to train, rest to test."""
    train_trips: list[list[Trip]] = []
    test_trips: list[list[Trip]] = []
    flagged: list[int] = []
    for u, trips in enumerate(corpus.trips_by_user):
        n_train = math.ceil(train_ratio * len(trips))
        train_trips.append(trips[:n_train])
        test_trips.append(trips[n_train:])
        if n_train == len(trips):
            flagged.append(u)
    train = Corpus(corpus.locations, corpus.users, train_trips)
    test = Corpus(corpus.locations, corpus.users, test_trips)
    return SplitResult(train, test, flagged)


def build_encoder_sequences(trips: list[Trip]) -> tuple[list[int], list[int]]:
    """Origin sequence o_2..o_n and destination sequence d_1..d_(n-1).

    The first origin and last destination are dropped so that both
    sequences align one-to-one with the prediction targets.
    """
    if len(trips) < 2:
        return [], []
    origins = [t.origin_loc for t in trips[1:]]
    dests = [t.dest_loc for t in trips[:-1]]
    return origins, dests


@dataclass(frozen=True)
class TrainingExample:
    """Predict `target` from (user, current origin, previous destination)."""

    user: int
    origin: int
    prev_dest: int
    target: int


def build_training_examples(user: int, trips: list[Trip]) -> list[TrainingExample]:
    return [
        TrainingExample(user, trips[j].origin_loc, trips[j - 1].dest_loc, trips[j].dest_loc)
        for j in range(1, len(trips))
    ]


@dataclass
class Vocab:
    """Index maps shared by the model: locations, users, geohash cells, slots."""

    n_locations: int
    n_users: int
    n_timeslots: int
    geohash_codes: list[str]  # distinct codes, index = geohash id
    loc_geohash: np.ndarray  # |L| -> geohash id
    geohash_precision: int
    utc_offset_hours: int

    @property
    def n_geohashes(self) -> int:
        return len(self.geohash_codes)

    def visit_timeslot(self, trip: Trip, role: str) -> int:
        """Pickup timestamp for the origin visit, dropoff for the destination."""
        if role == "origin":
            return timeslot_of(trip.pickup_ts, self.utc_offset_hours)
        if role == "dest":
            return timeslot_of(trip.dropoff_ts, self.utc_offset_hours)
        raise ValueError(f"unknown visit role {role!r}")


def build_vocab(
    corpus: Corpus, geohash_precision: int = 5, utc_offset_hours: int = 0
) -> Vocab:
    codes: list[str] = []
    code_index: dict[str, int] = {}
    loc_geohash = np.zeros(corpus.n_locations, dtype=np.int64)
    for i, rec in enumerate(corpus.locations):
        code = geohash_encode(rec.point, geohash_precision)
        if code not in code_index:
            code_index[code] = len(codes)
            codes.append(code)
        loc_geohash[i] = code_index[code]
    return Vocab(
        n_locations=corpus.n_locations,
        n_users=corpus.n_users,
        n_timeslots=N_TIMESLOTS,
        geohash_codes=codes,
        loc_geohash=loc_geohash,
        geohash_precision=geohash_precision,
        utc_offset_hours=utc_offset_hours,
    )


@dataclass
class IntervalTables:
    """Global-view pairwise tables, max-scaled into [0, 1].

    spatial[i, j]  = haversine(loc_i, loc_j) / d_max_km
    temporal[i, j] = mean trip duration (hours) over training trips between
                     i and j in either direction, / t_max_hours; 0 if none.
    """

    spatial: np.ndarray
    temporal: np.ndarray
    d_max_km: float
    t_max_hours: float


def build_interval_tables(train: Corpus) -> IntervalTables:
    n = train.n_locations
    if n == 0:
        raise ValueError("cannot build interval tables for an empty corpus")
    points = [rec.point for rec in train.locations]
    spatial = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = haversine_km(points[i], points[j])
            spatial[i, j] = d
            spatial[j, i] = d
    d_max = float(spatial.max()) if n > 1 and spatial.max() > 0 else 1.0
    spatial /= d_max

    dur_sum = np.zeros((n, n))
    dur_count = np.zeros((n, n))
    for trips in train.trips_by_user:
        for t in trips:
            hours = (t.dropoff_ts - t.pickup_ts) / 3600.0
            i, j = t.origin_loc, t.dest_loc
            dur_sum[i, j] += hours
            dur_count[i, j] += 1
            if i != j:
                dur_sum[j, i] += hours
                dur_count[j, i] += 1
    temporal = np.divide(dur_sum, dur_count, out=np.zeros_like(dur_sum), where=dur_count > 0)
    t_max = float(temporal.max()) if temporal.max() > 0 else 1.0
    temporal /= t_max
    return IntervalTables(spatial, temporal, d_max, t_max)


def build_test_queries(split: SplitResult) -> list[list[TrainingExample]]:
    """Per-user evaluation queries over the test partition.

    The previous destination rolls through the true sequence: the first
    test query uses the last training destination.
    """
    queries: list[list[TrainingExample]] = []
    for u in range(split.train.n_users):
        train_trips = split.train.trips_by_user[u]
        test_trips = split.test.trips_by_user[u]
        user_queries: list[TrainingExample] = []
        if test_trips and train_trips:
            chain = [train_trips[-1]] + list(test_trips)
            for j in range(1, len(chain)):
                user_queries.append(
                    TrainingExample(
                        u, chain[j].origin_loc, chain[j - 1].dest_loc, chain[j].dest_loc
                    )
                )
        queries.append(user_queries)
    return queries
