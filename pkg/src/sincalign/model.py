"""Multi-delay sinc network.

A shared convolutional trunk (same-padded 1-D convolutions with tanh after
every layer) feeds one linear head convolution that emits 2M channels: M
label signals and M weight signals, one pair per cluster. Each pair is
convolved with that cluster's windowed-sinc kernel, whose delay is the
cluster's single trainable alignment parameter. A softmax across clusters
at every time step turns the delayed weights into a probability
distribution, and the prediction is the per-step weighted average of the
delayed label signals.

No nonlinearity follows the head or the sinc convolutions; the sinc
kernels are shaped to reproduce the band of the target signal and a
nonlinearity would distort their frequency response.

Gradients are hand-derived for this fixed graph; there is no general
autodiff here. Delays are stored in seconds so one model definition works
at any sampling rate.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import FeatureSequence
from .dsp import SampledSignal, SincKernel, _convolve_same_arr, make_sinc_kernel, sinc_kernel_grad_tau
from .metrics import ccc_grad

__all__ = [
    "MdsConfig",
    "MdsModel",
    "ForwardTrace",
    "init_model",
    "forward",
    "backward",
    "predict",
    "hard_select",
    "model_to_json",
    "model_from_json",
]


@dataclass(frozen=True)
class MdsConfig:
    """Architecture hyperparameters.

    clusters: number of parallel delay branches (M).
    trunk_layers / trunk_filters / trunk_kernel_len: shared conv stack shape.
    fc: cutoff of the delay kernels in Hz; must be at least the bandwidth of
        the target signal.
    sinc_half_len: half length of the delay kernels in samples; bounds the
        representable delay to just under sinc_half_len / fs seconds.
    tau_init_lo / tau_init_hi: uniform initialization range for the delays,
        in seconds.
    l2: weight of the squared-conv-weight regularizer added to the loss.
    """

    input_dim: int
    clusters: int = 8
    trunk_layers: int = 3
    trunk_filters: int = 16
    trunk_kernel_len: int = 8
    fc: float = 12.5
    sinc_half_len: int = 550
    tau_init_lo: float = 0.0
    tau_init_hi: float = 20.0
    l2: float = 0.0

    def __post_init__(self) -> None:
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.clusters < 1:
            raise ValueError("clusters must be >= 1")
        if self.trunk_layers < 1 or self.trunk_filters < 1 or self.trunk_kernel_len < 1:
            raise ValueError("trunk shape fields must all be >= 1")
        if not self.fc > 0:
            raise ValueError("fc must be positive")
        if self.sinc_half_len < 1:
            raise ValueError("sinc_half_len must be >= 1")
        if self.tau_init_lo > self.tau_init_hi:
            raise ValueError("tau_init_lo must not exceed tau_init_hi")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")

    def check_rate(self, fs: float) -> None:
        """Validate the rate-dependent invariants against a sampling frequency."""
        if not 0 < self.fc <= fs / 2:
            raise ValueError(f"fc={self.fc} outside (0, fs/2] at fs={fs}")
        bound = self.sinc_half_len / fs
        if max(abs(self.tau_init_lo), abs(self.tau_init_hi)) >= bound:
            raise ValueError(
                f"delay init range exceeds the {bound}s kernel half window at fs={fs}"
            )


@dataclass
class MdsModel:
    """Trainable parameters plus the architecture they instantiate.

    trunk_w[i] has shape (filters_out, filters_in, trunk_kernel_len);
    trunk_b[i] has shape (filters_out,). head_w maps the last trunk layer to
    2M channels: channels [0, M) are cluster label signals, channels
    [M, 2M) are cluster weight signals. taus holds the M delays in seconds.
    """

    config: MdsConfig
    trunk_w: list[np.ndarray]
    trunk_b: list[np.ndarray]
    head_w: np.ndarray
    head_b: np.ndarray
    taus: np.ndarray

    def params(self) -> dict[str, np.ndarray]:
        """Flat name -> array view of every trainable parameter."""
        p = {}
        for i, (w, b) in enumerate(zip(self.trunk_w, self.trunk_b)):
            p[f"trunk.{i}.w"] = w
            p[f"trunk.{i}.b"] = b
        p["head.w"] = self.head_w
        p["head.b"] = self.head_b
        p["taus"] = self.taus
        return p

    def with_params(self, p: dict[str, np.ndarray]) -> "MdsModel":
        n = len(self.trunk_w)
        return MdsModel(
            config=self.config,
            trunk_w=[p[f"trunk.{i}.w"] for i in range(n)],
            trunk_b=[p[f"trunk.{i}.b"] for i in range(n)],
            head_w=p["head.w"],
            head_b=p["head.b"],
            taus=p["taus"],
        )

    def copy(self) -> "MdsModel":
        return self.with_params({k: v.copy() for k, v in self.params().items()})


@dataclass
class ForwardTrace:
    """Everything the backward pass needs, kept from one forward pass."""

    x: np.ndarray  # (T, D) input frames
    fs: float
    activations: list[np.ndarray]  # tanh output of each trunk layer, (T, F)
    labels_raw: np.ndarray  # (T, M) pre-delay label heads
    weights_raw: np.ndarray  # (T, M) pre-delay weight heads
    labels_delayed: np.ndarray  # (T, M)
    weights_delayed: np.ndarray  # (T, M)
    softmax_w: np.ndarray  # (T, M) rows sum to 1
    y: np.ndarray  # (T,) prediction


def init_model(config: MdsConfig, seed) -> MdsModel:
    """Draw a fresh model; bit-reproducible for a fixed seed.

    Conv weights are uniform in [-s, s] with s = sqrt(6 / (fan_in +
    fan_out)), biases start at zero, and delays are uniform in
    [tau_init_lo, tau_init_hi]. Draw order is fixed: trunk layers in order,
    then the head, then the delays.
    """
    rng = np.random.default_rng(seed)
    trunk_w, trunk_b = [], []
    c_in = config.input_dim
    k = config.trunk_kernel_len
    for _ in range(config.trunk_layers):
        c_out = config.trunk_filters
        s = np.sqrt(6.0 / (c_in * k + c_out * k))
        trunk_w.append(rng.uniform(-s, s, size=(c_out, c_in, k)))
        trunk_b.append(np.zeros(c_out))
        c_in = c_out
    m2 = 2 * config.clusters
    s = np.sqrt(6.0 / (c_in * k + m2 * k))
    head_w = rng.uniform(-s, s, size=(m2, c_in, k))
    head_b = np.zeros(m2)
    taus = rng.uniform(config.tau_init_lo, config.tau_init_hi, size=config.clusters)
    return MdsModel(config, trunk_w, trunk_b, head_w, head_b, taus)


def _conv_channels(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Same-padded channel conv: x (T, Cin), w (Cout, Cin, K) -> (T, Cout).
    # The window is centered on tap (K-1)//2.
    k = w.shape[2]
    c = (k - 1) // 2
    pad = np.pad(x, ((c, k - 1 - c), (0, 0)))
    win = sliding_window_view(pad, k, axis=0)  # (T, Cin, K)
    return np.einsum("tck,ock->to", win, w, optimize=True) + b


def _conv_channels_back(
    x: np.ndarray, w: np.ndarray, dout: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Gradients of _conv_channels: returns (dw, db, dx).
    k = w.shape[2]
    c = (k - 1) // 2
    pad = np.pad(x, ((c, k - 1 - c), (0, 0)))
    win = sliding_window_view(pad, k, axis=0)
    dw = np.einsum("to,tck->ock", dout, win, optimize=True)
    db = dout.sum(axis=0)
    padg = np.pad(dout, ((k - 1 - c, c), (0, 0)))
    wing = sliding_window_view(padg, k, axis=0)  # (T, Cout, K)
    dx = np.einsum("tok,ock->tc", wing, w[:, :, ::-1], optimize=True)
    return dw, db, dx


def _cluster_kernels(model: MdsModel, fs: float) -> list[SincKernel]:
    cfg = model.config
    return [
        SincKernel(tau=float(t), fc=cfg.fc, fs=fs, half_len=cfg.sinc_half_len)
        for t in model.taus
    ]


def forward(model: MdsModel, x: FeatureSequence) -> ForwardTrace:
    """Run the network on one framed sequence.

    Output length equals input length; softmax rows sum to one at every
    step. Raises on a feature-dimension mismatch or a delay that has left
    its kernel window.
    """
    cfg = model.config
    frames = x.frames
    if frames.ndim != 2 or frames.shape[1] != cfg.input_dim:
        raise ValueError(
            f"expected (T, {cfg.input_dim}) features, got {frames.shape}"
        )
    cfg.check_rate(x.fs)

    a = frames
    acts = []
    for w, b in zip(model.trunk_w, model.trunk_b):
        a = np.tanh(_conv_channels(a, w, b))
        acts.append(a)
    head = _conv_channels(a, model.head_w, model.head_b)  # (T, 2M)
    m = cfg.clusters
    labels_raw = head[:, :m]
    weights_raw = head[:, m:]

    kernels = _cluster_kernels(model, x.fs)
    labels_delayed = np.empty_like(labels_raw)
    weights_delayed = np.empty_like(weights_raw)
    for j, k in enumerate(kernels):
        h = make_sinc_kernel(k)
        labels_delayed[:, j] = _convolve_same_arr(labels_raw[:, j], h, k.half_len)
        weights_delayed[:, j] = _convolve_same_arr(weights_raw[:, j], h, k.half_len)

    z = weights_delayed - weights_delayed.max(axis=1, keepdims=True)
    e = np.exp(z)
    soft = e / e.sum(axis=1, keepdims=True)
    y = (soft * labels_delayed).sum(axis=1)

    return ForwardTrace(
        x=frames,
        fs=x.fs,
        activations=acts,
        labels_raw=labels_raw,
        weights_raw=weights_raw,
        labels_delayed=labels_delayed,
        weights_delayed=weights_delayed,
        softmax_w=soft,
        y=y,
    )


def backward(
    model: MdsModel, x: FeatureSequence, y_true, trace: ForwardTrace
) -> dict[str, np.ndarray]:
    """Exact reverse-mode gradients of the training loss.

    loss = 1 - ccc(y_true, y) + l2 * sum of squared conv weights. The delay
    gradients flow through the analytic kernel derivative on both the label
    and the weight paths. Biases and delays are exempt from the l2 term.
    """
    cfg = model.config
    frames = x.frames
    if trace.x.shape != frames.shape or trace.y.shape[0] != frames.shape[0]:
        raise ValueError("trace does not match the given input (stale trace?)")
    y_ref = y_true.values if isinstance(y_true, SampledSignal) else np.asarray(y_true)
    if y_ref.shape != trace.y.shape:
        raise ValueError(f"label length {y_ref.shape} does not match prediction")

    m = cfg.clusters
    hl = cfg.sinc_half_len
    g = -ccc_grad(y_ref, trace.y)  # dloss/dy

    soft = trace.softmax_w
    d_lab_del = g[:, None] * soft
    d_soft = g[:, None] * trace.labels_delayed
    inner = (d_soft * soft).sum(axis=1, keepdims=True)
    d_wgt_del = soft * (d_soft - inner)

    kernels = _cluster_kernels(model, trace.fs)
    d_lab_raw = np.empty_like(d_lab_del)
    d_wgt_raw = np.empty_like(d_wgt_del)
    d_taus = np.empty(m)
    for j, k in enumerate(kernels):
        h = make_sinc_kernel(k)
        dh = sinc_kernel_grad_tau(k)
        # Adjoint of the centered convolution: correlate with the kernel,
        # i.e. convolve with the reversed kernel centered at half_len - 1.
        d_lab_raw[:, j] = _convolve_same_arr(d_lab_del[:, j], h[::-1], hl - 1)
        d_wgt_raw[:, j] = _convolve_same_arr(d_wgt_del[:, j], h[::-1], hl - 1)
        d_taus[j] = d_lab_del[:, j] @ _convolve_same_arr(
            trace.labels_raw[:, j], dh, hl
        ) + d_wgt_del[:, j] @ _convolve_same_arr(trace.weights_raw[:, j], dh, hl)

    d_head = np.concatenate([d_lab_raw, d_wgt_raw], axis=1)
    trunk_in = [frames] + trace.activations[:-1]
    d_head_w, d_head_b, d_act = _conv_channels_back(
        trace.activations[-1], model.head_w, d_head
    )

    grads: dict[str, np.ndarray] = {
        "head.w": d_head_w + 2.0 * cfg.l2 * model.head_w,
        "head.b": d_head_b,
        "taus": d_taus,
    }
    for i in range(len(model.trunk_w) - 1, -1, -1):
        d_pre = d_act * (1.0 - trace.activations[i] ** 2)
        dw, db, d_act = _conv_channels_back(trunk_in[i], model.trunk_w[i], d_pre)
        grads[f"trunk.{i}.w"] = dw + 2.0 * cfg.l2 * model.trunk_w[i]
        grads[f"trunk.{i}.b"] = db
    return grads


def predict(model: MdsModel, x: FeatureSequence) -> SampledSignal:
    """Forward pass returning only the prediction."""
    return SampledSignal(forward(model, x).y, x.fs)


def hard_select(trace: ForwardTrace) -> SampledSignal:
    """Diagnostic prediction taking, at each step, the label of the cluster
    with the largest delayed weight instead of the softmax average. Ties go
    to the lowest cluster index. Never used in training."""
    idx = np.argmax(trace.weights_delayed, axis=1)
    y = trace.labels_delayed[np.arange(trace.y.size), idx]
    return SampledSignal(y, trace.fs)


# Serialization: one JSON document holding the config, every parameter
# array flattened row-major (C order), and the delays in seconds. Float
# formatting is the shortest round-trip decimal, so load(dump(m)) is
# bit-exact. Array order: trunk layer 0 w, b, trunk layer 1 w, b, ...,
# head w, b, taus.


def model_to_json(model: MdsModel) -> str:
    doc = {
        "config": asdict(model.config),
        "trunk": [
            {"w": w.ravel().tolist(), "b": b.ravel().tolist()}
            for w, b in zip(model.trunk_w, model.trunk_b)
        ],
        "head": {
            "w": model.head_w.ravel().tolist(),
            "b": model.head_b.ravel().tolist(),
        },
        "taus": model.taus.tolist(),
    }
    return json.dumps(doc, sort_keys=True)


def model_from_json(text: str) -> MdsModel:
    doc = json.loads(text)
    cfg = MdsConfig(**doc["config"])
    k = cfg.trunk_kernel_len
    trunk_w, trunk_b = [], []
    c_in = cfg.input_dim
    for layer in doc["trunk"]:
        w = np.asarray(layer["w"], dtype=np.float64).reshape(
            cfg.trunk_filters, c_in, k
        )
        trunk_w.append(w)
        trunk_b.append(np.asarray(layer["b"], dtype=np.float64))
        c_in = cfg.trunk_filters
    head_w = np.asarray(doc["head"]["w"], dtype=np.float64).reshape(
        2 * cfg.clusters, c_in, k
    )
    head_b = np.asarray(doc["head"]["b"], dtype=np.float64)
    taus = np.asarray(doc["taus"], dtype=np.float64)
    if taus.size != cfg.clusters:
        raise ValueError("delay count does not match cluster count")
    return MdsModel(cfg, trunk_w, trunk_b, head_w, head_b, taus)


def permute_clusters(model: MdsModel, perm) -> MdsModel:
    """Reorder clusters: label channels, weight channels and delays move
    together. Predictions are invariant under any such permutation."""
    perm = np.asarray(perm, dtype=int)
    m = model.config.clusters
    if sorted(perm.tolist()) != list(range(m)):
        raise ValueError("perm must be a permutation of range(clusters)")
    idx = np.concatenate([perm, perm + m])
    return replace(
        model.copy(),
        head_w=model.head_w[idx],
        head_b=model.head_b[idx],
        taus=model.taus[perm],
    )
