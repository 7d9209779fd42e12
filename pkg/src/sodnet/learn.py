"""Surrogate-gradient BPTT, losses, optimizer, and the training loop.

The backward pass is hand-written reverse-mode differentiation through the
time-unrolled cell of net.py. Gradients flow through the input current,
the membrane recurrence, the reset path (including the W W^T dependence on
the weights), the ||W_i||^2 threshold normalizer, beta, and b. At every
threshold crossing the derivative of the Heaviside step is replaced by

    surrogate_grad(a) = sigma * sig(sigma a) * (1 - sig(sigma a)),

evaluated on the normalized potential a = U / (||W||^2 + eps) - b. In
"relaxed" mode the forward itself uses sig(sigma a), so the computation is
exactly differentiable and the same backward code can be validated against
central finite differences (run_gradcheck).

The spike-count regularizer penalizes sum(s^2) / (2 K N); since
d(s^2)/dU = 2 s * sig', silent neurons receive exactly zero gradient from
it in hard mode.

The optimizer is rectified Adam with per-component gradient clipping to
[-grad_clip, +grad_clip], decoupled weight decay, a linear learning-rate
warmup over the first warmup_epochs, and post-update clamps (beta to
[0, 1], thresholds b to [0, inf)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DivergenceError, ParameterError
from .net import (
    HARD,
    RELAXED,
    ConvLayerParams,
    FcLayerParams,
    LayerTrace,
    ModelConfig,
    Network,
    build_network,
)


@dataclass
class SurrogateConfig:
    """Scale of the sigmoid standing in for the Heaviside derivative."""

    sigma: float = 10.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ParameterError(f"sigma must be positive, got {self.sigma}")


@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 30
    warmup_epochs: float = 1.0
    weight_decay: float = 1e-5
    grad_clip: float = 5.0
    reg_coeff_base: float = 0.1
    forward_mode: str = HARD
    batch_size: int = 32
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    steps_per_epoch: int = 1        # filled in by train_loop, used for the warmup ramp


@dataclass
class LossSpec:
    """Total loss = cross-entropy + sum_l (base * l / L) * spike-count loss."""

    reg_coeff_base: float = 0.1


def _sig_deriv(z: np.ndarray) -> np.ndarray:
    """s(1-s) for s = sig(z), via exp(-|z|): exactly even, no cancellation."""
    e = np.exp(-np.abs(z))
    return e / (1.0 + e) ** 2


def surrogate_grad(u, cfg: SurrogateConfig = SurrogateConfig()):
    """sigma * s * (1 - s) with s = sig(sigma * u); peaks at sigma / 4."""
    z = np.atleast_1d(np.asarray(u, dtype=np.float64)) * cfg.sigma
    out = cfg.sigma * _sig_deriv(z)
    return float(out[0]) if np.ndim(u) == 0 else out.reshape(np.shape(u))


def spike_count_loss(spikes) -> float:
    """(1 / 2KN) * sum s^2 over a single [T x neurons...] train."""
    s = np.asarray(spikes, dtype=np.float64)
    if s.size == 0:
        return 0.0
    return float(np.sum(s * s) / (2.0 * s.size))


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def classification_loss(logits, label) -> float:
    """Cross-entropy of softmax(logits) against integer labels (mean over a batch)."""
    z = np.asarray(logits, dtype=np.float64)
    single = z.ndim == 1
    if single:
        z = z[None]
        labels = np.array([label], dtype=np.int64)
    else:
        labels = np.asarray(label, dtype=np.int64)
    if not np.isfinite(z).all():
        raise ParameterError("logits must be finite")
    if labels.min() < 0 or labels.max() >= z.shape[1]:
        raise ParameterError(f"label outside [0, {z.shape[1]})")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    ce = log_norm - shifted[np.arange(z.shape[0]), labels]
    return float(ce.mean())


# ---------------------------------------------------------------------------
# layer backwards


def _fc_backward_batch(params: FcLayerParams, trace: LayerTrace, g_spikes: np.ndarray,
                       sigma: float):
    """Returns ({"W","beta","b"} grads, grad w.r.t. the layer input)."""
    W, b = params.W, params.b
    beta = float(params.beta)
    x, I, U, S = trace.inputs, trace.I, trace.U, trace.spikes
    B, T, n_out = U.shape

    sq = np.einsum("ij,ij->i", W, W)
    norm = sq + params.epsilon
    gram = W @ W.T if params.lateral_enabled else None

    g_I = np.empty_like(I)
    g_b = np.zeros_like(b)
    g_norm = np.zeros_like(norm)
    g_beta = 0.0
    g_gram = np.zeros((n_out, n_out)) if params.lateral_enabled else None
    g_sq_reset = None if params.lateral_enabled else np.zeros(n_out)

    g_U_carry = np.zeros((B, n_out))
    g_s_reset = np.zeros((B, n_out))
    for n in reversed(range(T)):
        a = U[:, n] / norm - b
        psi = sigma * _sig_deriv(sigma * a)
        g_a = (g_spikes[:, n] + g_s_reset) * psi
        g_U = g_U_carry + g_a / norm
        if n > 0:
            U_prev = U[:, n - 1]
            s_prev = S[:, n - 1]
            R = s_prev @ gram.T if params.lateral_enabled else s_prev * sq
        else:
            U_prev = 0.0
            s_prev = None
            R = 0.0
        g_beta += float(np.sum(g_U * (U_prev - R - I[:, n])))
        g_I[:, n] = (1.0 - beta) * g_U
        g_R = -beta * g_U
        if n > 0:
            if params.lateral_enabled:
                g_s_reset = g_R @ gram
                g_gram += g_R.T @ s_prev
            else:
                g_s_reset = g_R * sq
                g_sq_reset += np.sum(g_R * s_prev, axis=0)
        g_b -= g_a.sum(axis=0)
        g_norm -= np.sum(g_a * U[:, n], axis=0) / (norm * norm)
        g_U_carry = beta * g_U

    g_W = g_I.reshape(-1, n_out).T @ x.reshape(-1, x.shape[2])
    g_x = g_I @ W
    if params.lateral_enabled:
        g_W += (g_gram + g_gram.T) @ W
    else:
        g_W += 2.0 * W * g_sq_reset[:, None]
    g_W += 2.0 * W * g_norm[:, None]
    return {"W": g_W, "beta": np.float64(g_beta), "b": g_b}, g_x


def _conv_backward_batch(params: ConvLayerParams, trace: LayerTrace, g_spikes: np.ndarray,
                         sigma: float):
    K, b = params.kernels, params.b
    beta = float(params.beta)
    c_out, c_in, k_t, k_f = K.shape
    d_t, d_f = params.dilation
    x, I, U, S = trace.inputs, trace.I, trace.U, trace.spikes
    B, T, F, _ = U.shape

    k_flat = K.reshape(c_out, -1)
    sq = np.einsum("ij,ij->i", k_flat, k_flat)
    norm = sq + params.epsilon
    gram = k_flat @ k_flat.T if params.lateral_enabled else None

    g_I = np.empty_like(I)
    g_b = np.zeros_like(b)
    g_norm = np.zeros_like(norm)
    g_beta = 0.0
    g_gram = np.zeros((c_out, c_out)) if params.lateral_enabled else None
    g_sq_reset = None if params.lateral_enabled else np.zeros(c_out)

    g_U_carry = np.zeros((B, F, c_out))
    g_s_reset = np.zeros((B, F, c_out))
    for n in reversed(range(T)):
        a = U[:, n] / norm - b
        psi = sigma * _sig_deriv(sigma * a)
        g_a = (g_spikes[:, n] + g_s_reset) * psi
        g_U = g_U_carry + g_a / norm
        if n > 0:
            U_prev = U[:, n - 1]
            s_prev = S[:, n - 1]
            R = s_prev @ gram.T if params.lateral_enabled else s_prev * sq
        else:
            U_prev = 0.0
            s_prev = None
            R = 0.0
        g_beta += float(np.sum(g_U * (U_prev - R - I[:, n])))
        g_I[:, n] = (1.0 - beta) * g_U
        g_R = -beta * g_U
        if n > 0:
            if params.lateral_enabled:
                g_s_reset = g_R @ gram
                g_gram += g_R.reshape(-1, c_out).T @ s_prev.reshape(-1, c_out)
            else:
                g_s_reset = g_R * sq
                g_sq_reset += np.sum(g_R * s_prev, axis=(0, 1))
        g_b -= g_a.sum(axis=(0, 1))
        g_norm -= np.sum(g_a * U[:, n], axis=(0, 1)) / (norm * norm)
        g_U_carry = beta * g_U

    pad_t = (k_t - 1) * d_t
    pad_f = (k_f - 1) * d_f
    pad_l = pad_f // 2
    x_pad = np.zeros((B, T + pad_t, F + pad_f, c_in))
    x_pad[:, pad_t:, pad_l:pad_l + F] = x
    g_x_pad = np.zeros_like(x_pad)
    g_K = np.zeros_like(K)
    g_I_2d = g_I.reshape(-1, c_out)
    for i in range(k_t):
        for j in range(k_f):
            sl = x_pad[:, i * d_t:i * d_t + T, j * d_f:j * d_f + F]
            g_K[:, :, i, j] = g_I_2d.T @ sl.reshape(-1, c_in)
            g_x_pad[:, i * d_t:i * d_t + T, j * d_f:j * d_f + F] += g_I @ K[:, :, i, j]
    g_x = g_x_pad[:, pad_t:, pad_l:pad_l + F]

    g_k_flat = g_K.reshape(c_out, -1)
    if params.lateral_enabled:
        g_k_flat += (g_gram + g_gram.T) @ k_flat
    else:
        g_k_flat += 2.0 * k_flat * g_sq_reset[:, None]
    g_k_flat += 2.0 * k_flat * g_norm[:, None]
    return {"W": g_k_flat.reshape(K.shape), "beta": np.float64(g_beta), "b": g_b}, g_x


# ---------------------------------------------------------------------------
# whole-network loss and gradients


def _reg_coefficients(n_layers: int, base: float) -> list[float]:
    if n_layers == 0:
        return []
    return [base * l / n_layers for l in range(1, n_layers + 1)]


def loss_and_gradients(network: Network, x: np.ndarray, labels: np.ndarray,
                       loss_spec: LossSpec, mode: str = HARD):
    """Forward + full BPTT over a batch.

    Returns (loss, grads keyed like network.params(), info) where info
    carries the loss split, logits, and the forward traces.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    B = x.shape[0]
    logits, traces = network.forward_batch(x, mode)
    sigma = network.config.sigma

    if not np.isfinite(logits).all() or any(not np.isfinite(t.U).all() for t in traces):
        raise DivergenceError("non-finite membrane potentials or logits")
    probs = _softmax_rows(logits)
    ce = classification_loss(logits, labels)
    coeffs = _reg_coefficients(len(traces), loss_spec.reg_coeff_base)
    reg = 0.0
    for coeff, trace in zip(coeffs, traces):
        if coeff:
            s = trace.spikes
            reg += coeff * float(np.sum(s * s)) / (2.0 * s[0].size * B)
    loss = ce + reg
    if not math.isfinite(loss):
        raise DivergenceError(f"non-finite loss {loss}")

    grads: dict[str, np.ndarray] = {}
    g_logits = (probs - np.eye(logits.shape[1])[labels]) / B

    last = traces[-1].spikes
    T = last.shape[1]
    flat = last.reshape(B, T, -1)
    grads["readout.W"] = g_logits.T @ flat.mean(axis=1)
    grads["readout.bias"] = g_logits.sum(axis=0)
    g_flat = np.empty_like(flat)
    g_flat[:] = (g_logits @ network.readout.W)[:, None, :] / T
    g_out = g_flat.reshape(last.shape)

    for idx in reversed(range(len(traces))):
        trace = traces[idx]
        lp = network.layer_params[idx]
        name = network.layer_names[idx]
        g_spk = g_out
        if coeffs[idx]:
            g_spk = g_spk + coeffs[idx] * trace.spikes / (trace.spikes[0].size * B)
        if isinstance(lp, ConvLayerParams):
            layer_grads, g_in = _conv_backward_batch(lp, trace, g_spk, sigma)
        else:
            layer_grads, g_in = _fc_backward_batch(lp, trace, g_spk, sigma)
        grads[f"{name}.W"] = layer_grads["W"]
        grads[f"{name}.beta"] = layer_grads["beta"]
        grads[f"{name}.b"] = layer_grads["b"]
        if idx > 0:
            g_out = g_in.reshape(traces[idx - 1].spikes.shape)

    info = {"ce": ce, "reg": reg, "logits": logits, "traces": traces}
    return loss, grads, info


def bptt_gradients(network: Network, batch, loss_spec: LossSpec = LossSpec(),
                   mode: str = HARD) -> dict[str, np.ndarray]:
    """Gradients for every parameter (W, beta, b, readout) on one batch."""
    x, labels = batch
    _, grads, _ = loss_and_gradients(network, x, labels, loss_spec, mode)
    return grads


def loss_value(network: Network, x, labels, loss_spec: LossSpec, mode: str = HARD) -> float:
    """Forward-only loss, used by the finite-difference oracle."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    logits, traces = network.forward_batch(x, mode)
    loss = classification_loss(logits, labels)
    coeffs = _reg_coefficients(len(traces), loss_spec.reg_coeff_base)
    for coeff, trace in zip(coeffs, traces):
        if coeff:
            s = trace.spikes
            loss += coeff * float(np.sum(s * s)) / (2.0 * s[0].size * x.shape[0])
    return loss


# ---------------------------------------------------------------------------
# finite-difference verification


def finite_difference_grads(network: Network, x, labels, loss_spec: LossSpec,
                            mode: str = RELAXED, step: float = 1e-5) -> dict[str, np.ndarray]:
    """Central differences on every parameter component (mutates and restores)."""
    params = network.params()
    out: dict[str, np.ndarray] = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + step
            lp = loss_value(network, x, labels, loss_spec, mode)
            arr[idx] = orig - step
            lm = loss_value(network, x, labels, loss_spec, mode)
            arr[idx] = orig
            g[idx] = (lp - lm) / (2.0 * step)
            it.iternext()
        out[name] = g
    return out


def _param_class(name: str) -> str:
    if name.startswith("readout."):
        return name
    return name.split(".", 1)[1]


@dataclass
class GradCheckReport:
    passed: bool
    worst: float
    per_class: dict[str, float]
    tolerance: float
    n_instances: int

    def lines(self) -> list[str]:
        out = [f"gradcheck: {'PASS' if self.passed else 'FAIL'} "
               f"(worst rel. error {self.worst:.3e}, tolerance {self.tolerance:.1e}, "
               f"{self.n_instances} instances)"]
        for cls in sorted(self.per_class):
            out.append(f"  {cls:>14s}: worst rel. error {self.per_class[cls]:.3e}")
        return out


def _random_check_network(rng: np.random.Generator, max_neurons: int, n_in: int,
                          n_classes: int) -> Network:
    h1 = int(rng.integers(4, max_neurons + 1))
    h2 = int(rng.integers(4, max_neurons + 1))
    from .net import LayerSpec  # local import to avoid cycle at module load

    config = ModelConfig(
        input_shape=(n_in,),
        layers=[LayerSpec(kind="fc", size=h1, lateral=bool(rng.integers(0, 2))),
                LayerSpec(kind="fc", size=h2, lateral=True)],
        n_classes=n_classes,
    )
    network = build_network(config, seed=int(rng.integers(0, 2**31)))
    # keep thresholds in the sensitive range so surrogate terms stay live
    for lp in network.layer_params:
        lp.b = rng.uniform(0.2, 0.8, size=lp.b.shape)
    return network


def run_gradcheck(seed: int = 0, n_instances: int = 20, n_steps: int = 12,
                  max_neurons: int = 16, batch: int = 2, tolerance: float = 1e-4,
                  fd_step: float = 1e-5, reg_coeff_base: float = 0.1,
                  corrupt: bool = False) -> GradCheckReport:
    """Relaxed-mode BPTT vs central finite differences on random instances.

    Relative error uses max(|fd|, |bp|, 1e-6) in the denominator so the
    comparison stays meaningful at the finite-difference noise floor.
    ``corrupt`` is a negative-control hook that perturbs one gradient.
    """
    rng = np.random.default_rng(seed)
    loss_spec = LossSpec(reg_coeff_base=reg_coeff_base)
    worst = 0.0
    per_class: dict[str, float] = {}
    for k in range(n_instances):
        n_in = int(rng.integers(3, 7))
        n_classes = int(rng.integers(2, 5))
        T = int(rng.integers(6, n_steps + 1))
        network = _random_check_network(rng, max_neurons, n_in, n_classes)
        x = rng.normal(0.0, 1.0, size=(batch, T, n_in))
        labels = rng.integers(0, n_classes, size=batch)
        _, grads, _ = loss_and_gradients(network, x, labels, loss_spec, RELAXED)
        fd = finite_difference_grads(network, x, labels, loss_spec, RELAXED, fd_step)
        if corrupt and k == 0:
            grads["layer1.W"] = grads["layer1.W"] + 1.0
        for name in grads:
            a = np.asarray(grads[name], dtype=np.float64)
            bb = np.asarray(fd[name], dtype=np.float64)
            denom = np.maximum(np.maximum(np.abs(a), np.abs(bb)), 1e-6)
            rel = float(np.max(np.abs(a - bb) / denom)) if a.size else 0.0
            cls = _param_class(name)
            per_class[cls] = max(per_class.get(cls, 0.0), rel)
            worst = max(worst, rel)
    return GradCheckReport(passed=worst < tolerance, worst=worst, per_class=per_class,
                           tolerance=tolerance, n_instances=n_instances)


# ---------------------------------------------------------------------------
# optimizer


def init_optimizer_state(params: dict[str, np.ndarray]) -> dict:
    return {
        "m": {k: np.zeros_like(v) for k, v in params.items()},
        "v": {k: np.zeros_like(v) for k, v in params.items()},
    }


def optimizer_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
                   cfg: TrainConfig, step_index: int, state: dict | None = None):
    """One rectified-Adam step; returns (updated params, state).

    Per component: clip the gradient to [-grad_clip, +grad_clip], apply the
    rectified update with decoupled weight decay and the warmup-ramped
    learning rate, then clamp beta to [0, 1] and thresholds b to [0, inf).
    step_index is 0-based.
    """
    if state is None:
        state = init_optimizer_state(params)
    t = step_index + 1
    warmup_steps = cfg.warmup_epochs * max(1, cfg.steps_per_epoch)
    lr_t = cfg.lr * min(1.0, t / warmup_steps) if warmup_steps > 0 else cfg.lr

    b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
    rho_inf = 2.0 / (1.0 - b2) - 1.0
    b1t = b1 ** t
    b2t = b2 ** t
    rho_t = rho_inf - 2.0 * t * b2t / (1.0 - b2t)

    new_params: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = np.clip(np.asarray(grads[name], dtype=np.float64), -cfg.grad_clip, cfg.grad_clip)
        m = state["m"][name] = b1 * state["m"][name] + (1.0 - b1) * g
        v = state["v"][name] = b2 * state["v"][name] + (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1t)
        if rho_t > 4.0:
            r_t = math.sqrt(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf)
                            / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
            update = lr_t * r_t * m_hat / (np.sqrt(v / (1.0 - b2t)) + eps)
        else:
            update = lr_t * m_hat
        p_new = p - update - lr_t * cfg.weight_decay * p
        if name.endswith(".beta"):
            p_new = np.clip(p_new, 0.0, 1.0)
        elif name.endswith(".b"):
            p_new = np.maximum(p_new, 0.0)
        new_params[name] = p_new.reshape(p.shape) if p.shape == () else p_new
    return new_params, state


# ---------------------------------------------------------------------------
# training loop


def _stack_examples(examples):
    x = np.stack([np.asarray(ex.features, dtype=np.float64) for ex in examples])
    y = np.array([ex.label for ex in examples], dtype=np.int64)
    return x, y


def evaluate(network: Network, examples, batch_size: int = 64, mode: str = HARD):
    """Hard-mode accuracy, mean CE loss, and per-layer firing rates (Hz)."""
    x, y = _stack_examples(examples)
    n = x.shape[0]
    correct = 0
    ce_sum = 0.0
    spike_sums = {name: 0.0 for name in network.layer_names}
    cell_sums = {name: 0.0 for name in network.layer_names}
    for start in range(0, n, batch_size):
        xb = x[start:start + batch_size]
        yb = y[start:start + batch_size]
        logits, traces = network.forward_batch(xb, mode)
        ce_sum += classification_loss(logits, yb) * xb.shape[0]
        correct += int(np.sum(np.argmax(logits, axis=1) == yb))
        for name, trace in zip(network.layer_names, traces):
            spike_sums[name] += float(trace.spikes.sum())
            cell_sums[name] += float(np.prod(trace.spikes.shape))
    dt = network.config.dt_s
    rates = {name: (spike_sums[name] / (cell_sums[name] * dt) if cell_sums[name] else 0.0)
             for name in network.layer_names}
    total_cells = sum(cell_sums.values())
    mean_rate = (sum(spike_sums.values()) / (total_cells * dt)) if total_cells else 0.0
    return {"loss": ce_sum / n, "accuracy": correct / n,
            "firing_rate_hz": rates, "mean_firing_rate_hz": mean_rate}


def train_loop(dataset, model_config: ModelConfig, train_config: TrainConfig, seed: int,
               on_epoch=None):
    """Train on dataset.train, validate on dataset.val; deterministic per seed.

    Returns (network, history) where history is one record per (epoch,
    split). on_epoch, when given, is called with (epoch, network, records)
    after each epoch so the CLI can write checkpoints and logs as it goes.
    """
    x_train, y_train = _stack_examples(dataset.train)
    n = x_train.shape[0]
    if n == 0:
        raise ParameterError("training split is empty")
    steps_per_epoch = max(1, math.ceil(n / train_config.batch_size))
    cfg = replace(train_config, steps_per_epoch=steps_per_epoch)
    loss_spec = LossSpec(reg_coeff_base=cfg.reg_coeff_base)

    rng = np.random.default_rng(seed)
    network = build_network(model_config, seed)
    state = init_optimizer_state(network.params())
    history: list[dict] = []
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        ep_loss = 0.0
        ep_correct = 0
        spike_sums = {name: 0.0 for name in network.layer_names}
        cell_sums = {name: 0.0 for name in network.layer_names}
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            try:
                loss, grads, info = loss_and_gradients(network, xb, yb, loss_spec,
                                                       cfg.forward_mode)
            except DivergenceError as exc:
                raise DivergenceError(
                    f"training diverged at epoch {epoch}, step {step}: {exc}") from exc
            params, state = optimizer_step(network.params(), grads, cfg, step, state)
            network.set_params(params)
            step += 1
            ep_loss += loss * xb.shape[0]
            ep_correct += int(np.sum(np.argmax(info["logits"], axis=1) == yb))
            for name, trace in zip(network.layer_names, info["traces"]):
                spike_sums[name] += float(trace.spikes.sum())
                cell_sums[name] += float(np.prod(trace.spikes.shape))
        dt = network.config.dt_s
        train_rates = {name: spike_sums[name] / (cell_sums[name] * dt)
                       for name in network.layer_names}
        total_cells = sum(cell_sums.values())
        train_record = {
            "epoch": epoch, "split": "train",
            "loss": ep_loss / n, "accuracy": ep_correct / n,
            "firing_rate_hz": train_rates,
            "mean_firing_rate_hz": sum(spike_sums.values()) / (total_cells * dt),
            "lr": cfg.lr * min(1.0, (step) / (cfg.warmup_epochs * steps_per_epoch))
            if cfg.warmup_epochs > 0 else cfg.lr,
        }
        history.append(train_record)
        records = [train_record]
        if dataset.val:
            val_stats = evaluate(network, dataset.val, batch_size=cfg.batch_size)
            val_record = {"epoch": epoch, "split": "val", **val_stats}
            history.append(val_record)
            records.append(val_record)
        if on_epoch is not None:
            on_epoch(epoch, network, records)
    return network, history
