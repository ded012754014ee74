"""Adam optimization of the multi-delay network on the CCC objective.

One training sample is one full recording: per epoch the recordings are
shuffled, and every recording contributes one loss evaluation (1 - ccc
plus the l2 term) followed by one Adam step over all parameters including
the delays. Validation mean CCC is tracked per epoch, the best epoch's
model is snapshotted, and the best of several independently seeded
restarts wins.

Restart RNG streams are disjoint children of the configured seed, so
rerunning restart k alone reproduces its record bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, Recording
from .metrics import ccc
from .model import MdsConfig, MdsModel, backward, forward, init_model

__all__ = [
    "TrainConfig",
    "AdamState",
    "RunRecord",
    "adam_step",
    "train",
    "select_best_epoch",
]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 300
    restarts: int = 3
    l2: float | None = None  # overrides the model config's l2 when set
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.lr >= 0:
            raise ValueError("lr must be non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.epochs < 1 or self.restarts < 1:
            raise ValueError("epochs and restarts must be >= 1")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    t: int,
    cfg: TrainConfig,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update, elementwise over every parameter.

    t is the 1-based step index. Inputs are not mutated; fresh arrays come
    back.
    """
    if t < 1:
        raise ValueError("step index t must be >= 1")
    if set(params) != set(grads):
        raise ValueError("params and grads hold different parameter names")
    new_p, new_m, new_v = {}, {}, {}
    c1 = 1.0 - cfg.beta1**t
    c2 = 1.0 - cfg.beta2**t
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"{k}: gradient shape {g.shape} != param shape {p.shape}")
        m = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g
        new_p[k] = p - cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
        new_m[k], new_v[k] = m, v
    return new_p, AdamState(new_m, new_v)


@dataclass
class RunRecord:
    """History of one restart: per-epoch train loss and validation CCC,
    the winning epoch and its model snapshot."""

    restart: int
    train_loss: list[float]
    val_ccc: list[float]
    best_epoch: int
    best_model: MdsModel | None
    diverged: bool = False

    @property
    def best_val_ccc(self) -> float:
        if not self.val_ccc:
            return float("-inf")
        return self.val_ccc[self.best_epoch]

    def to_json_dict(self) -> dict:
        return {
            "restart": self.restart,
            "train_loss": list(self.train_loss),
            "val_ccc": list(self.val_ccc),
            "best_epoch": self.best_epoch,
            "best_val_ccc": self.best_val_ccc if self.val_ccc else None,
            "diverged": self.diverged,
            "final_taus": self.best_model.taus.tolist() if self.best_model else None,
        }


def select_best_epoch(record: RunRecord) -> int:
    """Index of the highest validation CCC; ties go to the earliest epoch."""
    if not record.val_ccc:
        raise ValueError("record holds no epochs")
    return int(np.argmax(record.val_ccc))


def _mean_val_ccc(model: MdsModel, recs: list[Recording]) -> float:
    return float(np.mean([ccc(r.labels.values, forward(model, r.features).y) for r in recs]))


def _sum_sq_weights(model: MdsModel) -> float:
    total = sum(float((w * w).sum()) for w in model.trunk_w)
    return total + float((model.head_w * model.head_w).sum())


def _run_restart(
    restart: int,
    train_recs: list[Recording],
    val_recs: list[Recording],
    mds_config: MdsConfig,
    cfg: TrainConfig,
) -> RunRecord:
    ss = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(restart,))
    init_ss, shuffle_ss = ss.spawn(2)
    rng = np.random.default_rng(shuffle_ss)
    model = init_model(mds_config, init_ss)
    params = model.params()
    state = AdamState.zeros_like(params)
    fs = train_recs[0].features.fs
    tau_bound = (mds_config.sinc_half_len - 1) / fs
    l2 = mds_config.l2

    record = RunRecord(restart, [], [], 0, None)
    best_ccc = float("-inf")
    t = 0
    for _ in range(cfg.epochs):
        losses = []
        for i in rng.permutation(len(train_recs)):
            rec = train_recs[i]
            trace = forward(model, rec.features)
            loss = 1.0 - ccc(rec.labels.values, trace.y) + l2 * _sum_sq_weights(model)
            if not np.isfinite(loss):
                record.diverged = True
                return record
            losses.append(loss)
            grads = backward(model, rec.features, rec.labels, trace)
            t += 1
            params, state = adam_step(params, grads, state, t, cfg)
            np.clip(params["taus"], -tau_bound, tau_bound, out=params["taus"])
            model = model.with_params(params)
        record.train_loss.append(float(np.mean(losses)))
        record.val_ccc.append(_mean_val_ccc(model, val_recs))
        if record.val_ccc[-1] > best_ccc:
            best_ccc = record.val_ccc[-1]
            record.best_epoch = len(record.val_ccc) - 1
            record.best_model = model.copy()
    return record


def train(dataset: Dataset, mds_config: MdsConfig, train_config: TrainConfig) -> RunRecord:
    """Train with restarts and return the record of the best one.

    The best restart maximizes its best validation CCC; a restart whose
    loss goes non-finite is abandoned and the others continue. Raises if
    the train or dev partition is empty, or if every restart diverges.
    """
    train_recs = dataset.partition("train")
    val_recs = dataset.partition("dev")
    if not train_recs or not val_recs:
        raise ValueError("dataset needs non-empty train and dev partitions")
    for r in train_recs + val_recs:
        r.check_aligned()
    fs = train_recs[0].features.fs
    if any(r.features.fs != fs for r in train_recs + val_recs):
        raise ValueError("all recordings must share one sampling frequency")
    mds_config.check_rate(fs)
    if train_config.l2 is not None:
        mds_config = replace(mds_config, l2=train_config.l2)
    tau_bound = (mds_config.sinc_half_len - 1) / fs
    if max(abs(mds_config.tau_init_lo), abs(mds_config.tau_init_hi)) > tau_bound:
        raise ValueError("delay init range exceeds the clamping bound of the window")

    records = []
    for k in range(train_config.restarts):
        records.append(_run_restart(k, train_recs, val_recs, mds_config, train_config))
    alive = [r for r in records if not r.diverged]
    if not alive:
        raise RuntimeError("every restart diverged (non-finite loss)")
    return max(alive, key=lambda r: (r.best_val_ccc, -r.restart))
