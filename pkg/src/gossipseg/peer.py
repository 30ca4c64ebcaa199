"""Peer state machine: train, privatize, publish, pull, combine, reconstruct.

Updates travel as parameter deltas relative to the publisher's last global
sync point.  A peer's wire bytes carry a small header (round, sender,
cluster, claimed loss) followed by the canonical tensor encoding; the header
loss is advisory only, incentive decisions always use the receiver's own
evaluation.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import trainer
from .aggregation import is_trim_feasible, plain_mean, trimmed_mean
from .cas import BlockStore, Cid
from .config import RunConfig
from .errors import (
    IntegrityError,
    LedgerError,
    NotFoundError,
    SerializationError,
)
from .ledger import Ledger
from .model import (
    ModelParams,
    SegmentSpec,
    assemble_global,
    canonical_bytes,
    flatten,
    mask_to_segment,
    params_add,
    params_from_bytes,
    params_sub,
    segment_coordinate_mask,
    unflatten,
)
from .privacy import clip_and_noise, sigma_at

_UPDATE_MAGIC = b"GSU1"
_UPDATE_VERSION = 1

REWARD = "reward"
PENALTY = "penalty"
NEUTRAL = "neutral"


def round_tag(round_index: int) -> str:
    return f"r{round_index}"


def global_tag(round_index: int) -> str:
    return f"g{round_index}"


@dataclass(frozen=True)
class GossipMessage:
    """One available update as seen by a consumer."""

    sender: int
    cid: Cid
    round_tag: str
    claimed_loss: float


@dataclass(frozen=True)
class UpdatePayload:
    """Decoded wire update."""

    delta: ModelParams
    round_index: int
    sender: int
    cluster_id: int
    claimed_loss: float


def encode_update(
    delta: ModelParams,
    round_index: int,
    sender: int,
    cluster_id: int,
    claimed_loss: float,
) -> bytes:
    header = _UPDATE_MAGIC + struct.pack(
        "<HIIHd", _UPDATE_VERSION, round_index, sender, cluster_id, claimed_loss
    )
    return header + canonical_bytes(delta)


def decode_update(buf: bytes) -> UpdatePayload:
    if len(buf) < 24 or buf[:4] != _UPDATE_MAGIC:
        raise SerializationError("bad update magic")
    version, round_index, sender, cluster_id, claimed_loss = struct.unpack_from(
        "<HIIHd", buf, 4
    )
    if version != _UPDATE_VERSION:
        raise SerializationError(f"unsupported update version {version}")
    delta = params_from_bytes(buf[24:])
    return UpdatePayload(
        delta=delta,
        round_index=round_index,
        sender=sender,
        cluster_id=cluster_id,
        claimed_loss=claimed_loss,
    )


def incentive_check(loss_before: float, loss_after: float, tolerance: float) -> str:
    """Judge a received update by the receiver's own loss change."""
    if loss_after < loss_before:
        return REWARD
    if loss_after - loss_before > tolerance:
        return PENALTY
    return NEUTRAL


@dataclass
class RunContext:
    """Shared services and run-wide state for one simulation."""

    cfg: RunConfig
    ledger: Ledger
    store: BlockStore
    segment_specs: dict[int, SegmentSpec]
    peers: dict[int, "Peer"]
    test_features: np.ndarray
    test_labels: np.ndarray
    global_params: ModelParams | None = None
    global_cid: Cid | None = None
    global_round: int = 0
    quarantined: set[str] = field(default_factory=set)
    consumed_log: list[tuple[int, int, str]] = field(default_factory=list)
    segment_violations: int = 0
    integrity_alarms: int = 0
    segment_carryovers: int = 0
    aborted_iterations: int = 0
    fault_hook: Callable[[int, Cid, int], None] | None = None

    def flag_bad_update(self, consumer_id: int, sender: int, cid: Cid) -> None:
        """Quarantine a cid; the first detection carries the penalty."""
        if cid.hex in self.quarantined:
            return
        self.quarantined.add(cid.hex)
        self.integrity_alarms += 1
        self.ledger.penalize(sender, self.cfg.penalty_amount, reason="integrity")


def _robust_combine(flats: list[np.ndarray], trim_ratio: float) -> np.ndarray:
    """Trimmed mean when feasible for this count, otherwise plain mean."""
    if trim_ratio > 0 and is_trim_feasible(len(flats), trim_ratio):
        return trimmed_mean(flats, trim_ratio)
    return plain_mean(flats)


@dataclass
class Peer:
    peer_id: int
    cluster_id: int
    segment: SegmentSpec
    params: ModelParams
    baseline: ModelParams
    features: np.ndarray
    labels: np.ndarray
    rng: np.random.Generator
    byzantine: bool = False
    batch_size: int = 32
    synced_round: int = -1
    iteration: int = 0
    last_published: Cid | None = None

    def __post_init__(self) -> None:
        eval_count = min(64, len(self.labels))
        self.eval_features = self.features[:eval_count]
        self.eval_labels = self.labels[:eval_count]

    # -- sync ---------------------------------------------------------------

    def maybe_sync(self, ctx: RunContext) -> bool:
        if ctx.global_cid is None or ctx.global_round <= self.synced_round:
            return False
        return self.sync_global(ctx)

    def sync_global(self, ctx: RunContext) -> bool:
        """Fetch the current global model; keep local state if it fails."""
        try:
            content = ctx.store.get(ctx.global_cid)
            fresh = params_from_bytes(content)
        except (IntegrityError, NotFoundError, SerializationError):
            ctx.integrity_alarms += 1
            return False
        self.params = fresh
        self.baseline = fresh.copy()
        self.synced_round = ctx.global_round
        return True

    # -- local work ----------------------------------------------------------

    def _batch(self) -> tuple[np.ndarray, np.ndarray]:
        size = min(self.batch_size, len(self.labels))
        idx = self.rng.choice(len(self.labels), size=size, replace=False)
        return self.features[idx], self.labels[idx]

    def _local_steps(self, cfg: RunConfig) -> None:
        for _ in range(cfg.train.local_steps):
            x, y = self._batch()
            grad = trainer.gradient(self.params, x, y)
            grad = mask_to_segment(grad, self.segment)
            self.params = trainer.sgd_step(self.params, grad, cfg.train.learning_rate)

    def _privatize(self, ctx: RunContext, delta: ModelParams) -> ModelParams:
        cfg = ctx.cfg
        schedule_round = min(self.iteration, cfg.dp.total_rounds - 1)
        sigma = sigma_at(schedule_round, cfg.dp)
        mask = segment_coordinate_mask(delta, self.segment)
        flat = flatten(delta)
        owned = clip_and_noise(flat[mask], cfg.dp.clip_norm, sigma, self.rng)
        private = np.zeros_like(flat)
        private[mask] = owned
        return unflatten(private, delta)

    def _hostile_delta(self, ctx: RunContext, template: ModelParams) -> ModelParams:
        mask = segment_coordinate_mask(template, self.segment)
        flat = np.zeros(mask.shape, dtype=np.float64)
        signs = self.rng.choice(np.array([-1.0, 1.0]), size=int(mask.sum()))
        flat[mask] = ctx.cfg.byzantine_scale * signs
        return unflatten(flat, template)

    def _publish(self, ctx: RunContext, payload: bytes) -> Cid | None:
        try:
            cid = ctx.store.put(payload)
        except OSError:
            try:
                cid = ctx.store.put(payload)
            except OSError:
                return None
        if not ctx.ledger.has_hash_record(self.peer_id, cid):
            ctx.ledger.save_hash(self.peer_id, cid, round_tag(ctx.global_round))
        if ctx.fault_hook is not None:
            ctx.fault_hook(self.peer_id, cid, self.iteration)
        self.last_published = cid
        return cid

    def _fetch_validated(self, ctx: RunContext, sender: int, cid: Cid) -> bytes | None:
        if cid.hex in ctx.quarantined:
            return None
        try:
            content = ctx.store.get(cid)
        except IntegrityError:
            ctx.flag_bad_update(self.peer_id, sender, cid)
            return None
        except NotFoundError:
            return None
        ok = ctx.ledger.validate_update(
            cid, ctx.store.compute_cid(content), caller=str(self.peer_id)
        )
        if not ok:
            ctx.flag_bad_update(self.peer_id, sender, cid)
            return None
        return content

    def _collect(self, ctx: RunContext) -> list[UpdatePayload]:
        cfg = ctx.cfg
        mates = sorted(
            p
            for p, peer in ctx.peers.items()
            if peer.cluster_id == self.cluster_id and p != self.peer_id
        )
        if not mates or cfg.fanout == 0:
            return []
        k = min(cfg.fanout, len(mates))
        chosen = set(
            int(p) for p in self.rng.choice(np.array(mates), size=k, replace=False)
        )
        latest: dict[int, dict] = {}
        for rec in ctx.ledger.hash_records(
            round_tag=round_tag(ctx.global_round), peers=chosen
        ):
            latest[rec["peer"]] = rec
        out = []
        for sender in sorted(latest):
            cid = Cid(bytes.fromhex(latest[sender]["cid"]))
            content = self._fetch_validated(ctx, sender, cid)
            if content is None:
                continue
            try:
                update = decode_update(content)
            except SerializationError:
                ctx.flag_bad_update(self.peer_id, sender, cid)
                continue
            if update.sender != sender or update.round_index != ctx.global_round:
                continue
            masked = mask_to_segment(update.delta, self.segment)
            ctx.consumed_log.append((self.peer_id, sender, cid.hex))
            out.append(replace(update, delta=masked))
        return out

    # -- one gossip iteration -------------------------------------------------

    def peer_iteration(self, ctx: RunContext, tick: int) -> bool:
        """Train, publish a privatized delta, pull neighbors, combine, apply.

        Returns False when a ledger rejection aborted the iteration; peer
        state is then left exactly as before the call.
        """
        cfg = ctx.cfg
        snapshot = (self.params.copy(), self.iteration, self.last_published)
        try:
            self._local_steps(cfg)
            delta = mask_to_segment(params_sub(self.params, self.baseline), self.segment)
            delta_priv = (
                self._hostile_delta(ctx, delta)
                if self.byzantine
                else self._privatize(ctx, delta)
            )
            _, own_loss = trainer.evaluate(
                self.params, self.eval_features, self.eval_labels
            )
            claimed = 0.0 if self.byzantine else own_loss
            payload = encode_update(
                delta_priv, ctx.global_round, self.peer_id, self.cluster_id, claimed
            )
            self._publish(ctx, payload)

            vectors = [flatten(delta_priv)]
            for update in self._collect(ctx):
                candidate = params_add(self.baseline, update.delta)
                _, loss_after = trainer.evaluate(
                    candidate, self.eval_features, self.eval_labels
                )
                verdict = incentive_check(own_loss, loss_after, cfg.penalty_loss_delta)
                if verdict == REWARD:
                    ctx.ledger.reward(
                        update.sender, cfg.reward_amount, reason="loss-improved"
                    )
                elif verdict == PENALTY:
                    ctx.ledger.penalize(
                        update.sender, cfg.penalty_amount, reason="loss-deviation"
                    )
                vectors.append(flatten(update.delta))

            if len(vectors) == 1 or (
                cfg.trim.trim_ratio > 0
                and not is_trim_feasible(len(vectors), cfg.trim.trim_ratio)
            ):
                # too few updates for a feasible trim: pure local progress
                combined = vectors[0]
            else:
                combined = _robust_combine(vectors, cfg.trim.trim_ratio)
            self.params = params_add(self.baseline, unflatten(combined, self.baseline))
            self.iteration += 1
        except LedgerError:
            self.params, self.iteration, self.last_published = snapshot
            ctx.aborted_iterations += 1
            return False
        if cfg.audit:
            self._audit_segment(ctx)
        return True

    def _audit_segment(self, ctx: RunContext) -> None:
        rows = np.ones(self.params.num_output_units, dtype=bool)
        rows[self.segment.rows()] = False
        same_w = (
            self.params.last_layer_weights[rows].tobytes()
            == self.baseline.last_layer_weights[rows].tobytes()
        )
        same_b = (
            self.params.last_layer_bias[rows].tobytes()
            == self.baseline.last_layer_bias[rows].tobytes()
        )
        if not (same_w and same_b):
            ctx.segment_violations += 1


def leader_duty(leader: Peer, ctx: RunContext, tick: int) -> Cid | None:
    """Reconstruct the global model from the latest validated round updates.

    Per segment, member deltas are combined coordinate-wise; lower layers
    are combined across every accepted update.  Segments with no updates
    carry the previous global values.  The result is stored in the block
    store and its CID recorded on the ledger.
    """
    cfg = ctx.cfg
    base = ctx.global_params
    if base is None:
        return None
    latest: dict[int, dict] = {}
    for rec in ctx.ledger.hash_records(round_tag=round_tag(ctx.global_round)):
        if rec["peer"] in ctx.peers:
            latest[rec["peer"]] = rec
    by_cluster: dict[int, list[np.ndarray]] = {}
    all_flats: list[np.ndarray] = []
    for sender in sorted(latest):
        cid = Cid(bytes.fromhex(latest[sender]["cid"]))
        content = leader._fetch_validated(ctx, sender, cid)
        if content is None:
            continue
        try:
            update = decode_update(content)
        except SerializationError:
            ctx.flag_bad_update(leader.peer_id, sender, cid)
            continue
        if update.sender != sender or update.round_index != ctx.global_round:
            continue
        sender_cluster = ctx.peers[sender].cluster_id
        masked = mask_to_segment(update.delta, ctx.segment_specs[sender_cluster])
        ctx.consumed_log.append((leader.peer_id, sender, cid.hex))
        flat = flatten(masked)
        by_cluster.setdefault(sender_cluster, []).append(flat)
        all_flats.append(flat)

    per_segment: dict[int, ModelParams] = {}
    for cluster_id, spec in ctx.segment_specs.items():
        flats = by_cluster.get(cluster_id, [])
        if not flats:
            ctx.segment_carryovers += 1
            continue
        combined = unflatten(_robust_combine(flats, cfg.trim.trim_ratio), base)
        per_segment[cluster_id] = mask_to_segment(combined, spec)
    lower_delta = (
        unflatten(_robust_combine(all_flats, cfg.trim.trim_ratio), base)
        if all_flats
        else None
    )
    theta = assemble_global(
        base, per_segment, list(ctx.segment_specs.values()), lower_delta
    )
    content = canonical_bytes(theta)
    cid = ctx.store.put(content)
    if not ctx.ledger.has_hash_record(leader.peer_id, cid):
        ctx.ledger.save_hash(leader.peer_id, cid, global_tag(ctx.global_round + 1))
    ctx.global_params = theta
    ctx.global_cid = cid
    ctx.global_round += 1
    return cid
