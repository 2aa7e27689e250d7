"""Iterative successive interference subtraction over a received frame.

Four interchangeable algorithms share one sweep loop:

* ``SNB``  (squared-norm based): on a decode, subtract only the main
  interfering term from the combining statistics of the user's pilot --
  ``f -= ||h||^2 x`` and ``g -= ||h||^2`` -- leaving the received matrices
  untouched.  The squared channel norm is taken as the measured combining
  gain in the generator slot and as the antenna count in replica slots
  (the normalized norm concentrates at 1 for large arrays).
* ``PAB``  (payload aided): subtract the user's full contribution from the
  residual matrices.  The generator slot uses the matched-filter channel
  estimate captured at decode time; replica slots re-estimate the channel
  by correlating the residual payload phase against the known payload.
* ``PRCE`` (perfect replica channel estimation): as PAB but with the
  ground-truth channels, bounding what any subtraction scheme can achieve.
* ``LOGICAL``: graph peeling on the user/(slot, pilot) bipartite graph;
  any resource holding exactly one undecoded user decodes it and removal
  is perfect.  Needs no signals at all.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .frame import FrameInstance
from .receiver import estimate_all_pilot_channels
from .signals import build_hadamard_pilots, qpsk_hard_demodulate

# Combining gains at or below m * RELATIVE_GAIN_FLOOR are treated as unused
# pilots; a lone user's expected gain is m, so this only rejects noise.
RELATIVE_GAIN_FLOOR = 1e-6


class Algorithm(str, enum.Enum):
    SNB = "snb"
    PAB = "pab"
    PRCE = "prce"
    LOGICAL = "logical"


@dataclass
class DecodeReport:
    """Outcome of running a receiver over one frame."""

    decoded_count: int
    lost_count: int
    decoded: np.ndarray     # (k_a,) bool, per-user outcome
    sweep_count: int
    n_up: int               # subtractions applied in generator slots
    n_pa: int               # subtractions applied in replica slots

    def __post_init__(self):
        assert self.decoded_count + self.lost_count == self.decoded.size


class ReceiverState:
    """Mutable per-frame receiver state owned by a single worker.

    Holds the residual received matrices, the per-slot pilot statistics
    (channel estimates ``phi``, combining numerators ``f`` and gains ``g``),
    the decoded set, and the subtraction counters.  ``stats_version`` tracks
    which (slot, pilot) statistics changed so sweeps can skip attempts whose
    outcome cannot have changed.
    """

    def __init__(self, frame: FrameInstance, copy_signals: bool):
        if frame.slots is None:
            raise ValueError("frame was generated without signals")
        cfg = frame.config
        self.config = cfg
        self.frame = frame
        self.pilots = build_hadamard_pilots(cfg.n_p)
        self.owns_signals = copy_signals
        self.p_res = [s.p.copy() if copy_signals else s.p for s in frame.slots]
        self.y_res = [s.y.copy() if copy_signals else s.y for s in frame.slots]
        self.phi = []
        self.f = []
        self.g = []
        for slot in range(cfg.n_slots):
            phi = estimate_all_pilot_channels(self.p_res[slot], self.pilots)
            self.phi.append(phi)
            self.f.append(phi.conj().T @ self.y_res[slot])
            self.g.append(self._gains(phi))
        self.decoded = np.zeros(cfg.k_a, dtype=bool)
        self.n_up = 0
        self.n_pa = 0
        self.sweep_count = 0
        self.min_gain = cfg.m * RELATIVE_GAIN_FLOOR
        self.stats_version = np.zeros((cfg.n_slots, cfg.n_p), dtype=np.int64)
        self._applied: set[tuple[int, int]] = set()

    @staticmethod
    def _gains(phi: np.ndarray) -> np.ndarray:
        return np.einsum("ij,ij->j", phi.real, phi.real) + np.einsum(
            "ij,ij->j", phi.imag, phi.imag
        )

    def refresh_slot(self, slot: int) -> None:
        """Recompute all pilot statistics of one slot from its residuals."""
        phi = estimate_all_pilot_channels(self.p_res[slot], self.pilots)
        self.phi[slot] = phi
        self.f[slot] = phi.conj().T @ self.y_res[slot]
        self.g[slot] = self._gains(phi)
        self.stats_version[slot, :] += 1

    def _guard(self, user: int, slot: int) -> None:
        key = (user, slot)
        if key in self._applied:
            raise RuntimeError(f"user {user} already subtracted in slot {slot}")
        self._applied.add(key)


def pab_channel_estimate(y_residual: np.ndarray, payload: np.ndarray) -> np.ndarray:
    """Estimate a user's channel from the residual payload phase.

    ``h_hat = y @ x^H / ||x||^2`` for the known payload ``x``.  Accuracy
    improves as other users' contributions are subtracted from the residual
    before the estimate is taken.
    """
    energy = float(np.real(payload.conj() @ payload))
    if energy <= 0:
        raise ValueError("payload has zero energy")
    return (y_residual @ payload.conj()) / energy


def snb_subtract(state: ReceiverState, user: int, slot: int, mode: str = "replica") -> None:
    """Remove a decoded user's main term from its pilot statistics in ``slot``.

    Replica mode uses the antenna count for the unknown squared channel
    norm; generator mode uses the combining gain measured at decode time.
    Only the statistics of the user's pilot change, and the residual
    matrices are never modified.
    """
    state._guard(user, slot)
    plan = state.frame.plans[user]
    j = plan.pilot_in_slot(slot)
    if mode == "generator":
        norm_sq = float(state.g[slot][j])
        state.n_up += 1
    elif mode == "replica":
        norm_sq = float(state.config.m)
        state.n_pa += 1
    else:
        raise ValueError(f"unknown mode {mode!r}")
    state.f[slot][j] -= norm_sq * plan.payload
    state.g[slot][j] -= norm_sq
    state.stats_version[slot, j] += 1


def _signal_subtract(state: ReceiverState, user: int, slot: int, h_est: np.ndarray) -> None:
    if not state.owns_signals:
        raise RuntimeError("state was initialized without signal copies")
    plan = state.frame.plans[user]
    j = plan.pilot_in_slot(slot)
    s_row = state.pilots.sequences[j].astype(float)
    state.p_res[slot] -= np.outer(h_est, s_row)
    state.y_res[slot] -= np.outer(h_est, plan.payload)
    state.refresh_slot(slot)


def pab_subtract(state: ReceiverState, user: int, slot: int, mode: str) -> None:
    """Subtract a decoded user's full contribution from one slot's residuals.

    Generator mode uses the matched-filter estimate of the user's pilot as
    captured right now (valid because the user was just decoded there, so
    its pilot carries no other undecoded signal); replica mode estimates the
    channel from the current residual payload phase.  All pilot statistics
    of the slot are then recomputed.
    """
    state._guard(user, slot)
    plan = state.frame.plans[user]
    if mode == "generator":
        h_est = state.phi[slot][:, plan.pilot_in_slot(slot)].copy()
        state.n_up += 1
    elif mode == "replica":
        h_est = pab_channel_estimate(state.y_res[slot], plan.payload)
        state.n_pa += 1
    else:
        raise ValueError(f"unknown mode {mode!r}")
    _signal_subtract(state, user, slot, h_est)


def prce_subtract(state: ReceiverState, user: int, slot: int, mode: str) -> None:
    """Subtract using the ground-truth channel of the (user, slot) replica."""
    state._guard(user, slot)
    if mode == "generator":
        state.n_up += 1
    elif mode == "replica":
        state.n_pa += 1
    else:
        raise ValueError(f"unknown mode {mode!r}")
    h_true = state.frame.true_channels[(user, slot)]
    _signal_subtract(state, user, slot, h_true)


def _apply_decode(
    state: ReceiverState,
    user: int,
    gen_slot: int,
    algorithm: Algorithm,
    snb_generator_update: bool,
) -> None:
    """Mark ``user`` decoded and subtract it everywhere, generator slot first."""
    state.decoded[user] = True
    plan = state.frame.plans[user]
    replicas = sorted(int(s) for s in plan.slot_indices if int(s) != gen_slot)
    if algorithm is Algorithm.SNB:
        if snb_generator_update:
            snb_subtract(state, user, gen_slot, mode="generator")
        for s in replicas:
            snb_subtract(state, user, s, mode="replica")
    elif algorithm is Algorithm.PAB:
        pab_subtract(state, user, gen_slot, mode="generator")
        for s in replicas:
            pab_subtract(state, user, s, mode="replica")
    elif algorithm is Algorithm.PRCE:
        prce_subtract(state, user, gen_slot, mode="generator")
        for s in replicas:
            prce_subtract(state, user, s, mode="replica")
    else:  # pragma: no cover - LOGICAL never reaches the signal path
        raise ValueError(f"unexpected algorithm {algorithm}")


def _build_report(decoded: np.ndarray, sweeps: int, n_up: int, n_pa: int) -> DecodeReport:
    dec = int(decoded.sum())
    return DecodeReport(
        decoded_count=dec,
        lost_count=decoded.size - dec,
        decoded=decoded,
        sweep_count=sweeps,
        n_up=n_up,
        n_pa=n_pa,
    )


def run_receiver(
    frame: FrameInstance,
    algorithm: Algorithm | str,
    *,
    decode_criterion: str = "bit",
    snb_generator_update: bool = True,
) -> DecodeReport:
    """Run the full sweep-until-fixed-point receiver over one frame.

    Sweeps visit (slot, pilot) resources in ascending order; every pilot
    whose combining gain clears the floor gets a decode attempt against the
    undecoded users transmitting on it, and each fresh success is subtracted
    immediately in the generator slot and all replica slots.  The loop ends
    when a sweep produces no new decode.  Identical (frame, algorithm)
    inputs always produce the identical report.
    """
    algorithm = Algorithm(algorithm)
    if algorithm is Algorithm.LOGICAL:
        return logical_peel(frame)

    cfg = frame.config
    if cfg.k_a == 0:
        return _build_report(np.zeros(0, dtype=bool), 0, 0, 0)

    state = ReceiverState(frame, copy_signals=algorithm is not Algorithm.SNB)
    t = cfg.t

    users_by_resource: dict[tuple[int, int], list[int]] = {}
    for plan in frame.plans:
        for s, j in zip(plan.slot_indices, plan.pilot_choices):
            users_by_resource.setdefault((int(s), int(j)), []).append(plan.user_id)
    resources = sorted(users_by_resource)
    last_attempt = {res: -1 for res in resources}

    while True:
        state.sweep_count += 1
        new_decodes = 0
        for res in resources:
            slot, j = res
            version = state.stats_version[slot, j]
            if version <= last_attempt[res]:
                continue
            candidates = [u for u in users_by_resource[res] if not state.decoded[u]]
            if not candidates:
                continue
            last_attempt[res] = version
            g = state.g[slot][j]
            if g <= state.min_gain:
                continue
            x_hat = state.f[slot][j] / g
            bits_hat = qpsk_hard_demodulate(x_hat)
            for user in candidates:
                wrong = bits_hat != frame.plans[user].payload_bits
                if decode_criterion == "bit":
                    errors = int(np.count_nonzero(wrong))
                else:
                    errors = int(np.count_nonzero(wrong[0::2] | wrong[1::2]))
                if errors <= t:
                    _apply_decode(state, user, slot, algorithm, snb_generator_update)
                    new_decodes += 1
                    break
        if state.decoded.all() or new_decodes == 0:
            break

    return _build_report(state.decoded, state.sweep_count, state.n_up, state.n_pa)


def logical_peel(frame: FrameInstance) -> DecodeReport:
    """Peel the user/(slot, pilot) bipartite graph to its fixed point.

    Any resource containing exactly one undecoded user decodes that user
    with certainty; the user's replicas are then removed from all its
    resources.  Only the collision structure is consulted.
    """
    cfg = frame.config
    decoded = np.zeros(cfg.k_a, dtype=bool)
    if cfg.k_a == 0:
        return _build_report(decoded, 0, 0, 0)

    users_by_resource: dict[tuple[int, int], set[int]] = {}
    resources_by_user: list[list[tuple[int, int]]] = [[] for _ in range(cfg.k_a)]
    for plan in frame.plans:
        for s, j in zip(plan.slot_indices, plan.pilot_choices):
            res = (int(s), int(j))
            users_by_resource.setdefault(res, set()).add(plan.user_id)
            resources_by_user[plan.user_id].append(res)
    resources = sorted(users_by_resource)

    n_up = 0
    n_pa = 0
    sweeps = 0
    while True:
        sweeps += 1
        new_decodes = 0
        for res in resources:
            occupants = users_by_resource[res]
            if len(occupants) != 1:
                continue
            user = next(iter(occupants))
            decoded[user] = True
            n_up += 1
            for other in resources_by_user[user]:
                users_by_resource[other].discard(user)
                if other != res:
                    n_pa += 1
            new_decodes += 1
        if decoded.all() or new_decodes == 0:
            break

    return _build_report(decoded, sweeps, n_up, n_pa)
