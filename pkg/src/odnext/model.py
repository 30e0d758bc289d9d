"""Next-destination recommendation model.

The full model runs two spatio-temporal LSTM encoders over a user's
trip history (one over origins o_2..o_n, one over destinations
d_1..d_(n-1)) and decodes with an attention layer whose query is the
user embedding, the current origin, and the previous destination.
Attention weights are normalized per hidden dimension, so each output
coordinate mixes the encoder states with its own set of weights.  The
attended summary maps through a linear layer and a softmax into a
distribution over candidate locations.

Training treats one user as a minibatch: the mean cross-entropy over
the user's examples backpropagates through decoder and encoders, and
the optimizer takes one step per user.  After training the encoder
states are frozen into an EncodedCache; prediction only re-runs the
decoder against the cached states.

Ablation variants share the training protocol but remove or replace
pieces; see VARIANTS.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .data import Corpus, IntervalTables, Trip, Vocab
from .nn import ContractViolation, embedding_init, glorot_uniform, Adam
from .stlstm import (
    LSTMWeights,
    STLSTMInput,
    STLSTMWeights,
    init_lstm,
    init_st_lstm,
    lstm_encode,
    st_lstm_encode,
)

VARIANTS = (
    "stod-ppa",  # full model
    "od-ppa",  # plain LSTM encoders, no spatio-temporal cell states
    "encoder-only",  # aligned encoder state pair straight into the output layer
    "decoder-only",  # attention over raw location embeddings, no encoders
    "user-add",  # unpersonalized attention, user vector added to the summary
    "user-concat",  # unpersonalized attention, user vector concatenated
)

ATTENTION_CONTEXTS = ("all", "causal")

_MASK_OFF = -1e30  # additive mask value; exp underflows to exactly zero


class ColdStartError(ContractViolation):
    """Raised when a prediction needs history that does not exist."""


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters; defaults follow the reference training profile."""

    dim: int = 256  # embedding size
    hdim: int = 256  # encoder hidden size
    lr: float = 1e-4
    epochs: int = 15
    seed: int = 0
    variant: str = "stod-ppa"
    attention_context: str = "all"  # "causal" restricts training attention
    geohash_precision: int = 5
    utc_offset_hours: int = 0
    leaky_slope: float = 0.01

    def __post_init__(self):
        if self.dim < 1 or self.hdim < 1:
            raise ContractViolation("dim and hdim must be positive")
        if self.lr <= 0:
            raise ContractViolation("lr must be positive")
        if self.epochs < 0:
            raise ContractViolation("epochs must be non-negative")
        if self.variant not in VARIANTS:
            raise ContractViolation(f"unknown variant {self.variant!r}")
        if self.attention_context not in ATTENTION_CONTEXTS:
            raise ContractViolation(
                f"unknown attention context {self.attention_context!r}"
            )
        if not 1 <= self.geohash_precision <= 12:
            raise ContractViolation("geohash_precision outside [1, 12]")
        if self.leaky_slope < 0:
            raise ContractViolation("leaky_slope must be non-negative")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class EncodedCache:
    """Frozen per-user encoder states plus the metadata prediction needs.

    states[u] has one row per encoder state: the origin block (length
    n_train - 1) followed by the destination block.  last_dest / n_train
    let evaluation chain test queries onto the training history.
    """

    states: list[np.ndarray]
    oseq: list[np.ndarray]
    dseq: list[np.ndarray]
    last_dest: np.ndarray
    n_train: np.ndarray


@dataclass
class _UserData:
    """Precomputed per-user training arrays (index space of the vocab)."""

    oseq: np.ndarray
    dseq: np.ndarray
    o_slots: np.ndarray
    d_slots: np.ndarray
    targets: np.ndarray
    mask: np.ndarray | None


def _causal_mask(n_examples: int) -> np.ndarray:
    """Additive (E, 2E, 1) mask: example e sees the first e+1 states of
    each encoder block."""
    lower = np.tril(np.ones((n_examples, n_examples), dtype=bool))
    allowed = np.concatenate([lower, lower], axis=1)
    return np.where(allowed, 0.0, _MASK_OFF)[:, :, None]


class Model:
    """A trainable recommender over a fixed vocabulary and interval tables."""

    def __init__(self, config: ModelConfig, vocab: Vocab, tables: IntervalTables):
        if vocab.n_locations < 1:
            raise ContractViolation("vocabulary has no locations")
        if tables.spatial.shape != (vocab.n_locations, vocab.n_locations):
            raise ContractViolation("interval table shape does not match vocabulary")
        if tables.temporal.shape != tables.spatial.shape:
            raise ContractViolation("interval tables disagree in shape")
        self.config = config
        self.vocab = vocab
        self.tables = tables
        self.enc_o: STLSTMWeights | LSTMWeights | None = None
        self.enc_d: STLSTMWeights | LSTMWeights | None = None
        self.params: dict[str, Tensor] = {}
        self.loss_curve: list[float] = []
        self._build_params(np.random.default_rng(config.seed))

    # -- variant geometry -------------------------------------------------

    @property
    def _has_st_encoders(self) -> bool:
        return self.config.variant in ("stod-ppa", "encoder-only", "user-add", "user-concat")

    @property
    def _has_user(self) -> bool:
        return self.config.variant != "encoder-only"

    @property
    def _has_attention(self) -> bool:
        return self.config.variant != "encoder-only"

    @property
    def _state_dim(self) -> int:
        return self.config.dim if self.config.variant == "decoder-only" else self.config.hdim

    @property
    def _user_dim(self) -> int:
        # user-add sums the user vector into the H-sized summary, so its
        # embedding rows live in the hidden space instead of dim
        return self.config.hdim if self.config.variant == "user-add" else self.config.dim

    @property
    def _query_width(self) -> int:
        if self.config.variant in ("user-add", "user-concat"):
            return 2 * self.config.dim
        return 3 * self.config.dim

    @property
    def _out_rows(self) -> int:
        v = self.config.variant
        if v == "encoder-only":
            return 2 * self.config.hdim
        if v == "decoder-only":
            return self.config.dim
        if v == "user-concat":
            return self.config.hdim + self.config.dim
        return self.config.hdim

    def _build_params(self, rng: np.random.Generator) -> None:
        c, v = self.config, self.vocab
        p: dict[str, Tensor] = {}
        p["emb/loc"] = ag.parameter(embedding_init(rng, v.n_locations, c.dim))
        if self._has_st_encoders:
            p["emb/geo"] = ag.parameter(embedding_init(rng, v.n_geohashes, c.dim))
            p["emb/slot"] = ag.parameter(embedding_init(rng, v.n_timeslots, c.dim))
        if self._has_user:
            p["emb/user"] = ag.parameter(embedding_init(rng, v.n_users, self._user_dim))
        if self._has_st_encoders:
            self.enc_o = init_st_lstm(rng, c.dim, c.hdim, v.n_locations)
            self.enc_d = init_st_lstm(rng, c.dim, c.hdim, v.n_locations)
        elif c.variant == "od-ppa":
            self.enc_o = init_lstm(rng, c.dim, c.hdim)
            self.enc_d = init_lstm(rng, c.dim, c.hdim)
        if self.enc_o is not None:
            p.update(self.enc_o.params("enc_o"))
            p.update(self.enc_d.params("enc_d"))
        if self._has_attention:
            p["attn/W_A"] = ag.parameter(
                glorot_uniform(rng, self._query_width + self._state_dim, self._state_dim)
            )
        p["out/W_loc"] = ag.parameter(glorot_uniform(rng, self._out_rows, v.n_locations))
        self.params = p

    # -- forward pieces ---------------------------------------------------

    def _user_data(self, trips: list[Trip]) -> _UserData:
        off = self.config.utc_offset_hours
        oseq = np.array([t.origin_loc for t in trips[1:]], dtype=np.int64)
        dseq = np.array([t.dest_loc for t in trips[:-1]], dtype=np.int64)
        o_slots = np.array(
            [(t.pickup_ts // 3600 + off) % 24 // 3 for t in trips[1:]], dtype=np.int64
        )
        d_slots = np.array(
            [(t.dropoff_ts // 3600 + off) % 24 // 3 for t in trips[:-1]], dtype=np.int64
        )
        targets = np.array([t.dest_loc for t in trips[1:]], dtype=np.int64)
        mask = None
        if self.config.attention_context == "causal" and self._has_attention:
            mask = _causal_mask(len(oseq))
        return _UserData(oseq, dseq, o_slots, d_slots, targets, mask)

    def _st_input(self, seq: np.ndarray, slots: np.ndarray, loc_emb: Tensor) -> STLSTMInput:
        return STLSTMInput(
            loc=loc_emb,
            geo=ag.take_rows(self.params["emb/geo"], self.vocab.loc_geohash[seq]),
            slot=ag.take_rows(self.params["emb/slot"], slots),
            dspace=ag.constant(self.tables.spatial[seq]),
            dtime=ag.constant(self.tables.temporal[seq]),
        )

    def _encode(self, ud: _UserData) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        """Return (states_o, states_d, o_emb, d_emb) for one user history."""
        o_emb = ag.take_rows(self.params["emb/loc"], ud.oseq)
        d_emb = ag.take_rows(self.params["emb/loc"], ud.dseq)
        v = self.config.variant
        if v == "decoder-only":
            return o_emb, d_emb, o_emb, d_emb
        if v == "od-ppa":
            states_o, _, _ = lstm_encode(self.enc_o, o_emb)
            states_d, _, _ = lstm_encode(self.enc_d, d_emb)
            return states_o, states_d, o_emb, d_emb
        states_o = st_lstm_encode(self.enc_o, self._st_input(ud.oseq, ud.o_slots, o_emb))
        states_d = st_lstm_encode(self.enc_d, self._st_input(ud.dseq, ud.d_slots, d_emb))
        return states_o, states_d, o_emb, d_emb

    def _attend(
        self, queries: Tensor, states: Tensor, mask: np.ndarray | None
    ) -> tuple[Tensor, Tensor]:
        """Per-dimension attention: queries (E, qw) x states (S, sd) ->
        summary (E, sd) and weights (E, S, sd) summing to one over S."""
        n_ex = queries.value.shape[0]
        n_states, sd = states.value.shape
        w_a = self.params["attn/W_A"]
        qw = queries.value.shape[1]
        q_proj = ag.matmul(queries, ag.index(w_a, (slice(0, qw), slice(None))))
        h_proj = ag.matmul(states, ag.index(w_a, (slice(qw, None), slice(None))))
        scores = ag.leaky_relu(
            ag.add(ag.reshape(q_proj, (n_ex, 1, sd)), ag.reshape(h_proj, (1, n_states, sd))),
            self.config.leaky_slope,
        )
        if mask is not None:
            scores = ag.add(scores, ag.constant(mask))
        alpha = ag.softmax(scores, axis=1)
        summary = ag.sum_axis(ag.mul(alpha, ag.reshape(states, (1, n_states, sd))), 1)
        return summary, alpha

    def _forward(
        self, ud: _UserData, user: int | None, user_vec_value: np.ndarray | None = None
    ) -> tuple[Tensor, Tensor | None]:
        """Logits (E, |L|) for every example of one user history.

        `user` indexes the embedding table; alternatively a raw user
        vector can be supplied (cold start).  Returns (logits, alpha).
        """
        states_o, states_d, o_emb, d_emb = self._encode(ud)
        n_ex = len(ud.oseq)
        if self.config.variant == "encoder-only":
            pair = ag.concat([states_o, states_d], axis=1)
            return ag.matmul(pair, self.params["out/W_loc"]), None

        if user_vec_value is not None:
            user_vec = ag.constant(user_vec_value)
        else:
            user_vec = ag.take_rows(self.params["emb/user"], int(user))

        cols = []
        if self.config.variant not in ("user-add", "user-concat"):
            cols.append(
                ag.take_rows(self.params["emb/user"], np.full(n_ex, user, dtype=np.int64))
                if user_vec_value is None
                else ag.constant(np.tile(user_vec_value, (n_ex, 1)))
            )
        cols.extend([o_emb, d_emb])
        queries = ag.concat(cols, axis=1)

        states = ag.concat([states_o, states_d], axis=0)
        summary, alpha = self._attend(queries, states, ud.mask)
        combined = self._combine_vec(summary, user, user_vec)
        return ag.matmul(combined, self.params["out/W_loc"]), alpha

    def _combine_vec(self, summary: Tensor, user: int | None, user_vec: Tensor) -> Tensor:
        v = self.config.variant
        if v == "user-add":
            return ag.add(summary, user_vec)
        if v == "user-concat":
            n_ex = summary.value.shape[0]
            tiled = (
                ag.take_rows(self.params["emb/user"], np.full(n_ex, user, dtype=np.int64))
                if user is not None
                else ag.constant(np.tile(user_vec.value, (n_ex, 1)))
            )
            return ag.concat([summary, tiled], axis=1)
        return summary

    def user_loss(self, user: int, trips: list[Trip]) -> Tensor:
        """Mean cross-entropy over one user's |trips|-1 training examples."""
        if len(trips) < 2:
            raise ContractViolation("a user needs at least two trips to train on")
        ud = self._user_data(trips)
        logits, _ = self._forward(ud, user)
        log_probs = ag.log_softmax(logits, axis=1)
        picked = ag.take_per_row(log_probs, ud.targets)
        return ag.scale(ag.mean_all(picked), -1.0)

    # -- training ---------------------------------------------------------

    def fit(self, train: Corpus) -> list[float]:
        """Train in place; returns the per-epoch mean user loss curve."""
        if train.n_users != self.vocab.n_users:
            raise ContractViolation("training corpus does not match the vocabulary")
        data = [
            (u, self._user_data(trips)) if len(trips) >= 2 else None
            for u, trips in enumerate(train.trips_by_user)
        ]
        usable = [d for d in data if d is not None]
        if not usable:
            raise ContractViolation("no user has enough trips to train on")
        opt = Adam(self.params, lr=self.config.lr)
        order_rng = np.random.default_rng([self.config.seed, 1])
        self.loss_curve = []
        for _ in range(self.config.epochs):
            total = 0.0
            for pos in order_rng.permutation(len(usable)):
                user, ud = usable[pos]
                logits, _ = self._forward(ud, user)
                log_probs = ag.log_softmax(logits, axis=1)
                picked = ag.take_per_row(log_probs, ud.targets)
                loss = ag.scale(ag.mean_all(picked), -1.0)
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += loss.item()
            self.loss_curve.append(total / len(usable))
        return self.loss_curve

    def mean_loss(self, corpus: Corpus) -> float:
        """Mean per-user loss without touching gradients."""
        with ag.no_grad():
            losses = [
                self.user_loss(u, trips).item()
                for u, trips in enumerate(corpus.trips_by_user)
                if len(trips) >= 2
            ]
        if not losses:
            raise ContractViolation("no user has enough trips to evaluate")
        return float(np.mean(losses))

    # -- cached prediction ------------------------------------------------

    def build_cache(self, train: Corpus) -> EncodedCache:
        """Freeze encoder states for every user of the training corpus."""
        states: list[np.ndarray] = []
        oseqs: list[np.ndarray] = []
        dseqs: list[np.ndarray] = []
        last_dest = np.full(train.n_users, -1, dtype=np.int64)
        n_train = np.zeros(train.n_users, dtype=np.int64)
        with ag.no_grad():
            for u, trips in enumerate(train.trips_by_user):
                n_train[u] = len(trips)
                if trips:
                    last_dest[u] = trips[-1].dest_loc
                if len(trips) < 2:
                    states.append(np.zeros((0, self._state_dim)))
                    oseqs.append(np.zeros(0, dtype=np.int64))
                    dseqs.append(np.zeros(0, dtype=np.int64))
                    continue
                ud = self._user_data(trips)
                states_o, states_d, _, _ = self._encode(ud)
                states.append(
                    np.concatenate([states_o.value, states_d.value], axis=0)
                )
                oseqs.append(ud.oseq)
                dseqs.append(ud.dseq)
        return EncodedCache(states, oseqs, dseqs, last_dest, n_train)

    def _predict_states(
        self,
        states_np: np.ndarray,
        origins: np.ndarray,
        dprevs: np.ndarray,
        user: int | None,
        user_vec_value: np.ndarray | None,
        want_alpha: bool = False,
    ) -> tuple[np.ndarray, np.ndarray | None]:
        """Decoder-only forward over frozen states; returns (probs, alpha)."""
        if states_np.shape[0] == 0:
            raise ColdStartError("no encoder states available for this history")
        with ag.no_grad():
            o_emb = ag.take_rows(self.params["emb/loc"], origins)
            d_emb = ag.take_rows(self.params["emb/loc"], dprevs)
            n_q = len(origins)
            if self.config.variant == "encoder-only":
                half = states_np.shape[0] // 2
                pair = np.concatenate([states_np[half - 1], states_np[-1]])
                logits = ag.matmul(
                    ag.constant(np.tile(pair, (n_q, 1))), self.params["out/W_loc"]
                )
                probs = ag.softmax(logits, axis=1)
                return probs.value, None

            if user_vec_value is not None:
                user_vec = ag.constant(user_vec_value)
            else:
                user_vec = ag.take_rows(self.params["emb/user"], int(user))
            cols = []
            if self.config.variant not in ("user-add", "user-concat"):
                cols.append(ag.constant(np.tile(user_vec.value, (n_q, 1))))
            cols.extend([o_emb, d_emb])
            queries = ag.concat(cols, axis=1)
            summary, alpha = self._attend(queries, ag.constant(states_np), None)
            combined = self._combine_vec(
                summary, user if user_vec_value is None else None, user_vec
            )
            logits = ag.matmul(combined, self.params["out/W_loc"])
            probs = ag.softmax(logits, axis=1)
            return probs.value, (alpha.value if want_alpha else None)

    def predict_batch(
        self, cache: EncodedCache, user: int, origins, dprevs
    ) -> np.ndarray:
        """(Q, |L|) next-destination distributions for one user's queries."""
        if not 0 <= user < self.vocab.n_users:
            raise ContractViolation(f"user index {user} out of range")
        origins = np.asarray(origins, dtype=np.int64)
        dprevs = np.asarray(dprevs, dtype=np.int64)
        self._check_locs(origins)
        self._check_locs(dprevs)
        probs, _ = self._predict_states(cache.states[user], origins, dprevs, user, None)
        return probs

    def _check_locs(self, idx: np.ndarray) -> None:
        if idx.size and (idx.min() < 0 or idx.max() >= self.vocab.n_locations):
            raise ContractViolation("location index out of range")

    def attention(
        self, cache: EncodedCache, user: int, origin: int, dprev: int
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(probs, origin_weights, dest_weights) for one query.

        Weights are attention fractions averaged over hidden dimensions,
        split into the origin-state block and the destination-state block.
        """
        if not self._has_attention:
            raise ContractViolation(
                f"variant {self.config.variant!r} has no attention weights"
            )
        probs, alpha = self._predict_states(
            cache.states[user],
            np.array([origin], dtype=np.int64),
            np.array([dprev], dtype=np.int64),
            user,
            None,
            want_alpha=True,
        )
        mean_w = alpha[0].mean(axis=1)
        half = len(cache.oseq[user])
        return probs[0], mean_w[:half], mean_w[half:]

    # -- cold start -------------------------------------------------------

    def cold_user_vector(self) -> np.ndarray:
        """Stand-in embedding for unseen users: the mean over known users."""
        if not self._has_user:
            return np.zeros(0)
        return self.params["emb/user"].value.mean(axis=0)

    def predict_cold(
        self, prefix: list[Trip], origin: int, prev_dest: int
    ) -> np.ndarray:
        """Distribution for a user outside the training population.

        `prefix` is the user's full earlier history (every origin and
        destination is encoded; nothing is trimmed, so one prior trip is
        enough context).  The query uses the supplied origin and
        previous destination with the mean user embedding.
        """
        if not prefix:
            raise ColdStartError("cold-start prediction needs at least one prior trip")
        off = self.config.utc_offset_hours
        oseq = np.array([t.origin_loc for t in prefix], dtype=np.int64)
        dseq = np.array([t.dest_loc for t in prefix], dtype=np.int64)
        self._check_locs(oseq)
        self._check_locs(dseq)
        self._check_locs(np.array([origin, prev_dest], dtype=np.int64))
        o_slots = np.array([(t.pickup_ts // 3600 + off) % 24 // 3 for t in prefix])
        d_slots = np.array([(t.dropoff_ts // 3600 + off) % 24 // 3 for t in prefix])
        with ag.no_grad():
            ud = _UserData(oseq, dseq, o_slots, d_slots, dseq, None)
            states_o, states_d, _, _ = self._encode(ud)
            states_np = np.concatenate([states_o.value, states_d.value], axis=0)
        probs, _ = self._predict_states(
            states_np,
            np.array([origin], dtype=np.int64),
            np.array([prev_dest], dtype=np.int64),
            None,
            self.cold_user_vector(),
        )
        return probs[0]
