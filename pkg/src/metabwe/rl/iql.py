"""Implicit Q-Learning for a discrete estimator-selection policy.

Three nets are fit from a fixed dataset, with no out-of-dataset action queries:

* V(s) by expectile regression toward the target critic, Q_target(s, a);
* Q(s, a) by TD regression toward r + gamma * (1 - done) * V(s');
* the actor by advantage-weighted log-likelihood of dataset actions,
  weights min(exp(beta * (Q_target(s, a) - V(s))), w_max).

The target critic tracks Q by Polyak averaging after every step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..meta import STATE_DIM, Metapolicy
from .mlp import (AdamState, MlpParams, adam_init, adam_step, init_mlp, log_softmax, mlp_backward,
                  mlp_forward, polyak_update, sgd_step, softmax)

OPTIMIZERS = ("adam", "sgd")
TRAINED = ("actor", "q", "v")

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """A loss or gradient went non-finite during training."""


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    tau: float = 0.7  # expectile
    beta: float = 3.0  # advantage temperature
    adv_clip: float = 100.0  # max advantage weight
    lr: float = 3e-4
    batch: int = 128
    epochs: int = 200
    polyak: float = 0.005
    seed: int = 0
    hidden: int = 128
    optimizer: str = "adam"
    # call ends are time limits, not terminal states: bootstrap through them
    timeout_bootstrap: bool = True
    # subtract the dataset's mean reward; a constant shift leaves advantages unchanged
    center_rewards: bool = True

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {', '.join(OPTIMIZERS)}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must be in (0, 1)")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")


@dataclass
class Nets:
    actor: MlpParams
    q: MlpParams
    v: MlpParams
    q_target: MlpParams
    opt: dict = field(default_factory=dict)  # net name -> AdamState (empty for sgd)

    def copy(self) -> "Nets":
        return Nets(self.actor.copy(), self.q.copy(), self.v.copy(), self.q_target.copy(),
                    {k: st.copy() for k, st in self.opt.items()})


@dataclass
class Checkpoint:
    nets: Nets
    config: TrainConfig
    pool_names: tuple
    epochs_done: int = 0
    version: int = 1
    loss_trace: list = field(default_factory=list)  # per-epoch (loss_v, loss_q, loss_pi)

    @property
    def pool_size(self) -> int:
        return self.nets.actor.sizes[-1]


def init_nets(pool_size: int, config: TrainConfig, state_dim: int = STATE_DIM) -> Nets:
    rng = np.random.default_rng([config.seed, 0xC0FFEE])
    h = config.hidden
    actor = init_mlp((state_dim, h, h, pool_size), rng)
    q = init_mlp((state_dim, h, h, pool_size), rng)
    v = init_mlp((state_dim, h, h, 1), rng)
    opt = {}
    if config.optimizer == "adam":
        opt = {"actor": adam_init(actor), "q": adam_init(q), "v": adam_init(v)}
    return Nets(actor, q, v, q.copy(), opt)


def expectile_loss(u, tau: float):
    """|tau - 1(u < 0)| * u**2, elementwise."""
    u = np.asarray(u)
    return np.abs(tau - (u < 0)) * u * u


@dataclass
class Losses:
    loss_v: float
    loss_q: float
    loss_pi: float
    grads: dict  # net name -> MlpParams of gradients
    weights: np.ndarray  # advantage weights
    advantages: np.ndarray


def iql_losses(batch, nets: Nets, config: TrainConfig) -> Losses:
    """Losses and gradients for one batch ``(s, a, r, s2, done)`` of arrays.

    V's regression target, Q's bootstrap target and the actor's weights are
    treated as constants.
    """
    s, a, r, s2, d = batch
    n = len(a)
    if n == 0:
        raise ValueError("empty batch")
    pool = nets.q.sizes[-1]
    if np.any(a < 0) or np.any(a >= pool):
        raise ValueError("batch contains actions outside the pool")
    dt = nets.q.weights[0].dtype
    rows = np.arange(n)

    qt_all, _ = mlp_forward(nets.q_target, s)
    qt = qt_all[rows, a]
    v_s, v_cache = mlp_forward(nets.v, s)
    v_s = v_s[:, 0]
    v_next, _ = mlp_forward(nets.v, s2)
    v_next = v_next[:, 0]
    q_all, q_cache = mlp_forward(nets.q, s)
    q_sa = q_all[rows, a]
    logits, pi_cache = mlp_forward(nets.actor, s)

    # value: expectile regression toward the target critic
    u = qt - v_s
    wexp = np.abs(config.tau - (u < 0)).astype(dt)
    loss_v = float(np.mean(wexp * u * u))
    dv = (-2.0 * wexp * u / n).astype(dt)[:, None]

    # critic: TD regression toward r + gamma * V(s')
    target = r + config.gamma * (1.0 - d) * v_next
    err = target - q_sa
    loss_q = float(np.mean(err * err))
    dq = np.zeros_like(q_all)
    dq[rows, a] = -2.0 * err / n

    # actor: advantage-weighted regression
    adv = qt - v_s
    w = np.minimum(np.exp(np.minimum(config.beta * adv.astype(np.float64), 700.0)),
                   config.adv_clip).astype(dt)
    logp = log_softmax(logits)
    loss_pi = float(np.mean(w * -logp[rows, a]))
    dlogits = softmax(logits)
    dlogits[rows, a] -= 1.0
    dlogits *= (w / n)[:, None]

    for name, val in (("loss_v", loss_v), ("loss_q", loss_q), ("loss_pi", loss_pi)):
        if not np.isfinite(val):
            raise NumericalError(f"{name} is not finite ({val})")

    grads = {
        "v": mlp_backward(nets.v, v_cache, dv),
        "q": mlp_backward(nets.q, q_cache, dq),
        "actor": mlp_backward(nets.actor, pi_cache, dlogits),
    }
    for name, g in grads.items():
        for t in g.tensors():
            if not np.all(np.isfinite(t)):
                raise NumericalError(f"non-finite gradient in {name} net")
    return Losses(loss_v, loss_q, loss_pi, grads, w, adv)


def apply_step(nets: Nets, losses: Losses, config: TrainConfig) -> None:
    for name in TRAINED:
        params = getattr(nets, name)
        if config.optimizer == "adam":
            if name not in nets.opt:
                nets.opt[name] = adam_init(params)
            adam_step(params, losses.grads[name], nets.opt[name], config.lr)
        else:
            sgd_step(params, losses.grads[name], config.lr)
    polyak_update(nets.q_target, nets.q, config.polyak)


def epoch_order(call_ids, seed: int, epoch: int) -> np.ndarray:
    """Transition indices for one epoch: calls shuffled, each call's transitions kept together."""
    groups: dict = {}
    for i, c in enumerate(call_ids):
        groups.setdefault(c, []).append(i)
    keys = sorted(groups)
    rng = np.random.default_rng([seed, epoch])
    perm = rng.permutation(len(keys))
    return np.array([i for k in perm for i in groups[keys[k]]], dtype=np.int64)


def train(dataset, config: TrainConfig = TrainConfig(), resume: Checkpoint | None = None,
          progress=None) -> Checkpoint:
    """Fit the actor, critic and value nets for ``config.epochs`` epochs.

    With ``resume`` the nets and epoch counter continue from that checkpoint,
    so k + k epochs reproduce 2k straight epochs exactly.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    s, a, r, s2, d, calls = dataset.arrays()
    if config.timeout_bootstrap:
        d = np.zeros_like(d)
    if config.center_rewards:
        r = (r - math.fsum(r.tolist()) / len(r)).astype(r.dtype)
    if s.shape[1] != STATE_DIM or s2.shape[1] != STATE_DIM:
        raise ValueError(f"states must have {STATE_DIM} features, got {s.shape[1]}")
    pool = dataset.pool_size
    if resume is not None:
        if resume.pool_size != pool:
            raise ValueError("checkpoint pool size does not match dataset")
        nets = resume.nets.copy()
        start = resume.epochs_done
        trace = list(resume.loss_trace)
    else:
        nets = init_nets(pool, config)
        start = 0
        trace = []
    n = len(a)
    for epoch in range(start, start + config.epochs):
        order = epoch_order(calls, config.seed, epoch)
        sums = np.zeros(3)
        steps = 0
        for lo in range(0, n, config.batch):
            idx = order[lo:lo + config.batch]
            losses = iql_losses((s[idx], a[idx], r[idx], s2[idx], d[idx]), nets, config)
            apply_step(nets, losses, config)
            sums += (losses.loss_v, losses.loss_q, losses.loss_pi)
            steps += 1
        trace.append(tuple(float(x) for x in sums / steps))
        if progress is not None:
            progress(epoch, trace[-1])
        log.debug("epoch %d: loss_v=%.4f loss_q=%.4f loss_pi=%.4f", epoch, *trace[-1])
    names = tuple(dataset.pool_names) or tuple(f"est{i}" for i in range(pool))
    cfg = config if resume is None else replace(config, epochs=start + config.epochs)
    return Checkpoint(nets=nets, config=cfg, pool_names=names, epochs_done=start + config.epochs,
                      loss_trace=trace)


def action_probs(checkpoint: Checkpoint, state) -> np.ndarray:
    logits, _ = mlp_forward(checkpoint.nets.actor, np.asarray(state, dtype=np.float32))
    return softmax(logits.astype(np.float64))


def act(checkpoint: Checkpoint, state) -> int:
    """Greedy action; ties go to the lowest index."""
    state = np.asarray(state)
    if state.shape != (STATE_DIM,):
        raise ValueError(f"state must have {STATE_DIM} entries, got shape {state.shape}")
    return int(np.argmax(action_probs(checkpoint, state)))


def q_values(checkpoint: Checkpoint, states) -> np.ndarray:
    out, _ = mlp_forward(checkpoint.nets.q, np.asarray(states, dtype=np.float32))
    return out


class LearnedPolicy(Metapolicy):
    """Metapolicy backed by a trained actor."""

    def __init__(self, checkpoint: Checkpoint, name: str = "ivy"):
        self.checkpoint = checkpoint
        self.name = name

    def reset(self, pool_names, call_seed):
        super().reset(pool_names, call_seed)
        if tuple(pool_names) != tuple(self.checkpoint.pool_names):
            raise ValueError(f"checkpoint was trained on pool {self.checkpoint.pool_names}, "
                             f"call uses {tuple(pool_names)}")

    def decide(self, ctx):
        return act(self.checkpoint, ctx.state)


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
