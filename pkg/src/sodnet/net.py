"""Forward pass of the trainable spiking network.

Every spiking layer runs the same discrete-time cell,

    I[n] = (linear map of the layer input at step n)
    R[n] = reset from the previous step's own spikes
    U[n] = beta * (U[n-1] - R[n]) + (1 - beta) * I[n]
    s[n] = Theta(U[n] / (||W_i||^2 + eps) - b_i)

where the linear map is a dense matmul (fc) or a dilated 2-D convolution
over (time, frequency) (conv). With lateral connections the reset couples
all neurons sharing a receptive field through the Gram matrix of their
weight rows, R[n] = W W^T s[n-1]; without them each neuron still subtracts
its own squared norm when it fired. Resets always consume the *previous*
step's spikes, which keeps the recurrence causal.

The normalizer ||W_i||^2 + eps is recomputed from the current weights on
every forward pass, so the trainable threshold b_i always compares against
the live weight scale.

Conv layers pad causally along time (zeros in the past) and symmetrically
along frequency, preserving spatial dims; stride is fixed to 1. The
readout is non-spiking: logits are the time average of a linear map of the
last spike train.

In "relaxed" mode the hard threshold is replaced by sig(sigma * a), making
the whole forward differentiable; learn.py checks its BPTT against finite
differences in that mode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dynamics import beta_from_tau
from .errors import DataError, ParameterError

EPSILON = 1e-8

HARD = "hard"
RELAXED = "relaxed"

# array conventions: a SpikeTrain is a {0,1}-valued float64 ndarray indexed
# [time, ...spatial..., channel]; an AnalogSignal is the same layout with
# real values (first-layer inputs). Batched internals prepend a batch axis.
SpikeTrain = np.ndarray
AnalogSignal = np.ndarray


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _spike(a: np.ndarray, mode: str, sigma: float) -> np.ndarray:
    if mode == HARD:
        return (a >= 0.0).astype(np.float64)
    if mode == RELAXED:
        return _sigmoid(sigma * a)
    raise ParameterError(f"unknown forward mode {mode!r}")


def _check_input(x: np.ndarray, ndim: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != ndim:
        raise ParameterError(f"{what} must have {ndim} axes, got shape {x.shape}")
    if np.isnan(x).any():
        raise DataError(f"NaN in {what}")
    return x


def _scalar_beta(beta) -> np.ndarray:
    b = np.asarray(beta, dtype=np.float64).reshape(())
    if not 0.0 <= float(b) <= 1.0:
        raise ParameterError(f"beta must lie in [0, 1], got {float(b)}")
    return b


# ---------------------------------------------------------------------------
# parameters


@dataclass
class FcLayerParams:
    """Dense spiking layer: W (out, in), scalar beta, per-neuron threshold b."""

    W: np.ndarray
    beta: np.ndarray
    b: np.ndarray
    lateral_enabled: bool = True
    epsilon: float = EPSILON

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.beta = _scalar_beta(self.beta)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2:
            raise ParameterError(f"W must be 2-D, got shape {self.W.shape}")
        if self.b.shape != (self.W.shape[0],):
            raise ParameterError(f"b must have shape ({self.W.shape[0]},), got {self.b.shape}")
        if np.any(self.b < 0):
            raise ParameterError("thresholds b must be non-negative")


@dataclass
class ConvLayerParams:
    """Dilated conv spiking layer: kernels (C_out, C_in, H, W_k), one b per channel."""

    kernels: np.ndarray
    beta: np.ndarray
    b: np.ndarray
    dilation: tuple[int, int] = (1, 1)
    lateral_enabled: bool = True
    epsilon: float = EPSILON

    def __post_init__(self):
        self.kernels = np.asarray(self.kernels, dtype=np.float64)
        self.beta = _scalar_beta(self.beta)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.kernels.ndim != 4:
            raise ParameterError(f"kernels must be 4-D, got shape {self.kernels.shape}")
        if self.b.shape != (self.kernels.shape[0],):
            raise ParameterError(
                f"b must have shape ({self.kernels.shape[0]},), got {self.b.shape}")
        if np.any(self.b < 0):
            raise ParameterError("thresholds b must be non-negative")
        self.dilation = (int(self.dilation[0]), int(self.dilation[1]))
        if self.dilation[0] < 1 or self.dilation[1] < 1:
            raise ParameterError(f"dilations must be >= 1, got {self.dilation}")


@dataclass
class ReadoutParams:
    """Non-spiking readout: logits = mean over time of W s[n] + bias."""

    W: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.W.ndim != 2 or self.bias.shape != (self.W.shape[0],):
            raise ParameterError("readout W must be (n_classes, in) with matching bias")
        if not (np.isfinite(self.W).all() and np.isfinite(self.bias).all()):
            raise ParameterError("readout parameters must be finite")


@dataclass
class LayerTrace:
    """Per-step records a backward pass needs: inputs, currents, potentials, spikes.

    Arrays carry a leading batch axis; U/I/spikes are indexed [batch, time, ...].
    """

    inputs: np.ndarray
    I: np.ndarray
    U: np.ndarray
    spikes: np.ndarray


# ---------------------------------------------------------------------------
# batched layer forwards (time loop shared by training and inference)


def fc_forward_batch(params: FcLayerParams, x: np.ndarray, mode: str = HARD,
                     sigma: float = 10.0) -> tuple[np.ndarray, LayerTrace]:
    """x: (B, T, in) spikes or analog; returns spikes (B, T, out) and trace."""
    x = _check_input(x, 3, "fc input")
    W, b = params.W, params.b
    n_out, n_in = W.shape
    if x.shape[2] != n_in:
        raise ParameterError(f"fc input has {x.shape[2]} features, W expects {n_in}")
    beta = float(params.beta)

    sq = np.einsum("ij,ij->i", W, W)
    norm = sq + params.epsilon
    gram = W @ W.T if params.lateral_enabled else None

    B, T = x.shape[0], x.shape[1]
    I = x @ W.T
    U_seq = np.empty((B, T, n_out))
    s_seq = np.empty((B, T, n_out))
    U = np.zeros((B, n_out))
    s_prev = np.zeros((B, n_out))
    for n in range(T):
        if params.lateral_enabled:
            R = s_prev @ gram.T
        else:
            R = s_prev * sq
        U = beta * (U - R) + (1.0 - beta) * I[:, n]
        a = U / norm - b
        s = _spike(a, mode, sigma)
        U_seq[:, n] = U
        s_seq[:, n] = s
        s_prev = s
    return s_seq, LayerTrace(inputs=x, I=I, U=U_seq, spikes=s_seq)


def conv_forward_batch(params: ConvLayerParams, x: np.ndarray, mode: str = HARD,
                       sigma: float = 10.0) -> tuple[np.ndarray, LayerTrace]:
    """x: (B, T, F, C_in); returns spikes (B, T, F, C_out) and trace."""
    x = _check_input(x, 4, "conv input")
    K = params.kernels
    c_out, c_in, k_t, k_f = K.shape
    B, T, F, c = x.shape
    if c != c_in:
        raise ParameterError(f"conv input has {c} channels, kernels expect {c_in}")
    if T < 1 or F < 1:
        raise ParameterError(f"conv input needs T >= 1 and F >= 1, got shape {x.shape}")
    d_t, d_f = params.dilation
    beta = float(params.beta)

    k_flat = K.reshape(c_out, -1)
    sq = np.einsum("ij,ij->i", k_flat, k_flat)
    norm = sq + params.epsilon
    gram = k_flat @ k_flat.T if params.lateral_enabled else None

    pad_t = (k_t - 1) * d_t
    pad_f = (k_f - 1) * d_f
    pad_l = pad_f // 2
    x_pad = np.zeros((B, T + pad_t, F + pad_f, c_in))
    x_pad[:, pad_t:, pad_l:pad_l + F] = x

    I = np.zeros((B, T, F, c_out))
    for i in range(k_t):
        for j in range(k_f):
            sl = x_pad[:, i * d_t:i * d_t + T, j * d_f:j * d_f + F]
            I += sl @ K[:, :, i, j].T

    U_seq = np.empty((B, T, F, c_out))
    s_seq = np.empty((B, T, F, c_out))
    U = np.zeros((B, F, c_out))
    s_prev = np.zeros((B, F, c_out))
    for n in range(T):
        if params.lateral_enabled:
            R = s_prev @ gram.T
        else:
            R = s_prev * sq
        U = beta * (U - R) + (1.0 - beta) * I[:, n]
        a = U / norm - params.b
        s = _spike(a, mode, sigma)
        U_seq[:, n] = U
        s_seq[:, n] = s
        s_prev = s
    return s_seq, LayerTrace(inputs=x, I=I, U=U_seq, spikes=s_seq)


def readout_forward_batch(params: ReadoutParams, spikes: np.ndarray) -> np.ndarray:
    """spikes: (B, T, ...) flattened per step; returns logits (B, n_classes)."""
    s = np.asarray(spikes, dtype=np.float64)
    if s.ndim < 3:
        raise ParameterError(f"readout input must be (B, T, ...), got shape {s.shape}")
    B, T = s.shape[0], s.shape[1]
    if T < 1:
        raise ParameterError("readout needs at least one time step")
    flat = s.reshape(B, T, -1)
    if flat.shape[2] != params.W.shape[1]:
        raise ParameterError(
            f"readout input has {flat.shape[2]} features, W expects {params.W.shape[1]}")
    return flat.mean(axis=1) @ params.W.T + params.bias


# ---------------------------------------------------------------------------
# public single-example surfaces


def _squeeze_trace(trace: LayerTrace) -> LayerTrace:
    return LayerTrace(inputs=trace.inputs[0], I=trace.I[0], U=trace.U[0],
                      spikes=trace.spikes[0])


def fc_spiking_forward(params: FcLayerParams, x, mode: str = HARD, sigma: float = 10.0):
    """Single example [T x in] -> (spikes [T x out], trace with U/I per step)."""
    spikes, trace = fc_forward_batch(params, np.asarray(x, dtype=np.float64)[None], mode, sigma)
    return spikes[0], _squeeze_trace(trace)


def conv_spiking_forward(params: ConvLayerParams, x, mode: str = HARD, sigma: float = 10.0):
    """Single example [T x F x C_in] -> (spikes [T x F x C_out], trace)."""
    spikes, trace = conv_forward_batch(params, np.asarray(x, dtype=np.float64)[None], mode, sigma)
    return spikes[0], _squeeze_trace(trace)


def readout_forward(params: ReadoutParams, spikes) -> np.ndarray:
    """Single example [T x ...] -> logits (n_classes,)."""
    return readout_forward_batch(params, np.asarray(spikes, dtype=np.float64)[None])[0]


# ---------------------------------------------------------------------------
# network container


@dataclass
class LayerSpec:
    kind: str                       # "fc" | "conv"
    size: int                       # out features (fc) or channels (conv)
    kernel: tuple[int, int] = (4, 3)
    dilation: tuple[int, int] = (1, 1)
    lateral: bool = True

    def __post_init__(self):
        if self.kind not in ("fc", "conv"):
            raise ParameterError(f"unknown layer kind {self.kind!r}")
        self.kernel = (int(self.kernel[0]), int(self.kernel[1]))
        self.dilation = (int(self.dilation[0]), int(self.dilation[1]))


@dataclass
class ModelConfig:
    """Architecture plus the shared simulation constants."""

    input_shape: tuple              # (F, C) for conv stacks, (d,) for fc stacks
    layers: list[LayerSpec] = field(default_factory=list)
    n_classes: int = 12
    sigma: float = 10.0
    tau_mem_s: float = 0.020
    dt_s: float = 0.010

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)

    def to_json(self) -> str:
        d = {
            "input_shape": list(self.input_shape),
            "layers": [
                {"kind": l.kind, "size": l.size, "kernel": list(l.kernel),
                 "dilation": list(l.dilation), "lateral": l.lateral}
                for l in self.layers
            ],
            "n_classes": self.n_classes,
            "sigma": self.sigma,
            "tau_mem_s": self.tau_mem_s,
            "dt_s": self.dt_s,
        }
        return json.dumps(d)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        d = json.loads(text)
        layers = [LayerSpec(kind=l["kind"], size=l["size"], kernel=tuple(l["kernel"]),
                            dilation=tuple(l["dilation"]), lateral=l["lateral"])
                  for l in d["layers"]]
        return cls(input_shape=tuple(d["input_shape"]), layers=layers,
                   n_classes=d["n_classes"], sigma=d["sigma"],
                   tau_mem_s=d["tau_mem_s"], dt_s=d["dt_s"])


class Network:
    """A stack of spiking layers plus the readout, with named parameters."""

    def __init__(self, config: ModelConfig, layer_params: list, readout: ReadoutParams):
        self.config = config
        self.layer_params = layer_params
        self.readout = readout

    @property
    def layer_names(self) -> list[str]:
        return [f"layer{i + 1}" for i in range(len(self.layer_params))]

    def params(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for name, lp in zip(self.layer_names, self.layer_params):
            out[f"{name}.W"] = lp.kernels if isinstance(lp, ConvLayerParams) else lp.W
            out[f"{name}.beta"] = lp.beta
            out[f"{name}.b"] = lp.b
        out["readout.W"] = self.readout.W
        out["readout.bias"] = self.readout.bias
        return out

    def set_params(self, values: dict[str, np.ndarray]):
        for name, lp in zip(self.layer_names, self.layer_params):
            if isinstance(lp, ConvLayerParams):
                lp.kernels = np.asarray(values[f"{name}.W"], dtype=np.float64)
            else:
                lp.W = np.asarray(values[f"{name}.W"], dtype=np.float64)
            lp.beta = np.asarray(values[f"{name}.beta"], dtype=np.float64).reshape(())
            lp.b = np.asarray(values[f"{name}.b"], dtype=np.float64)
        self.readout.W = np.asarray(values["readout.W"], dtype=np.float64)
        self.readout.bias = np.asarray(values["readout.bias"], dtype=np.float64)

    def forward_batch(self, x: np.ndarray, mode: str = HARD):
        """x: (B, T, F, C) or (B, T, d); returns (logits, list of LayerTrace)."""
        h = np.asarray(x, dtype=np.float64)
        sigma = self.config.sigma
        traces: list[LayerTrace] = []
        for lp in self.layer_params:
            if isinstance(lp, ConvLayerParams):
                h, trace = conv_forward_batch(lp, h, mode, sigma)
            else:
                if h.ndim > 3:
                    h = h.reshape(h.shape[0], h.shape[1], -1)
                h, trace = fc_forward_batch(lp, h, mode, sigma)
            traces.append(trace)
        logits = readout_forward_batch(self.readout, h)
        return logits, traces

    def spike_stats(self, traces: list[LayerTrace]) -> dict:
        """Spike counts and mean firing rates (Hz at the configured dt)."""
        dt = self.config.dt_s
        counts: dict[str, float] = {}
        rates: dict[str, float] = {}
        total_spikes = 0.0
        total_cells = 0.0
        for name, trace in zip(self.layer_names, traces):
            spikes = float(trace.spikes.sum())
            cells = float(np.prod(trace.spikes.shape))     # B * T * neurons
            counts[name] = spikes
            rates[name] = spikes / (cells * dt) if cells else 0.0
            total_spikes += spikes
            total_cells += cells
        mean_rate = total_spikes / (total_cells * dt) if total_cells else 0.0
        return {"spike_counts": counts, "firing_rate_hz": rates,
                "mean_firing_rate_hz": mean_rate}


def network_forward(network: Network, x, mode: str = HARD):
    """Single example [T x ...] -> (logits, traces, spike/rate stats)."""
    logits, traces = network.forward_batch(np.asarray(x, dtype=np.float64)[None], mode)
    stats = network.spike_stats(traces)
    return logits[0], [_squeeze_trace(t) for t in traces], stats


def build_network(config: ModelConfig, seed: int = 0) -> Network:
    """Initialize a network: W ~ U(+-1/sqrt(fan_in)), b = 1, beta from tau_mem."""
    rng = np.random.default_rng(seed)
    beta0 = beta_from_tau(config.tau_mem_s, config.dt_s)
    shape = config.input_shape
    layer_params: list = []
    for spec in config.layers:
        if spec.kind == "conv":
            if len(shape) != 2:
                raise ParameterError(
                    f"conv layer needs (F, C) input, current shape is {shape}")
            f_dim, c_in = shape
            fan_in = c_in * spec.kernel[0] * spec.kernel[1]
            scale = 1.0 / np.sqrt(fan_in)
            kernels = rng.uniform(-scale, scale,
                                  size=(spec.size, c_in, spec.kernel[0], spec.kernel[1]))
            layer_params.append(ConvLayerParams(
                kernels=kernels, beta=np.float64(beta0), b=np.ones(spec.size),
                dilation=spec.dilation, lateral_enabled=spec.lateral))
            shape = (f_dim, spec.size)
        else:
            fan_in = int(np.prod(shape))
            scale = 1.0 / np.sqrt(fan_in)
            W = rng.uniform(-scale, scale, size=(spec.size, fan_in))
            layer_params.append(FcLayerParams(
                W=W, beta=np.float64(beta0), b=np.ones(spec.size),
                lateral_enabled=spec.lateral))
            shape = (spec.size,)
    fan_in = int(np.prod(shape))
    scale = 1.0 / np.sqrt(fan_in)
    readout = ReadoutParams(W=rng.uniform(-scale, scale, size=(config.n_classes, fan_in)),
                            bias=np.zeros(config.n_classes))
    return Network(config, layer_params, readout)


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_VERSION = 1


def save_checkpoint(path, network: Network, extra: dict | None = None):
    """Write a versioned npz container: every parameter in float64 plus config."""
    payload = dict(network.params())
    meta = {"version": CHECKPOINT_VERSION, "config": network.config.to_json()}
    if extra:
        meta["extra"] = extra
    payload["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path) -> Network:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ParameterError(f"unsupported checkpoint version {meta.get('version')}")
        config = ModelConfig.from_json(meta["config"])
        values = {k: data[k] for k in data.files if k != "__meta__"}
    network = build_network(config, seed=0)
    network.set_params(values)
    return network
