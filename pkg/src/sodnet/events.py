"""Send-on-delta event coding and its integrate-and-fire realization.

A send-on-delta sampler emits an event whenever the signal has moved by at
least ``delta`` from a reference value, then updates the reference. Two
conventions are supported:

* ``value-reference``: the reference jumps to the sampled value itself.
* ``delta-reference``: the reference moves by exactly +/- delta, carrying
  any overshoot as residual. This is the canonical mode here because it is
  what two no-leak integrate-and-fire neurons with lateral connections
  compute exactly: with input increments w * (x[n] - x[n-1]), thresholds
  w_on^2 / w_off^2, and a mutual reset of weight -w_on * w_off, the ON/OFF
  potentials stay equal to w_k * (x[n] - ref[n]) step for step.

The multi-dimensional generalization tracks projections <w_i, x - x_hat>
onto a bank of directions. Neuron i fires when its projection reaches
||w_i||^2, and every fired direction is added to the shared reference
x_hat before the next step. When several projections cross at the same
step they all fire and their reset contributions sum (the discrete-time
tie rule; continuous time never has exact ties).

All encoders apply resets one step after the spike, so a fire at step n
changes potentials and the reference from step n+1 on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

ON = 0
OFF = 1

VALUE_REFERENCE = "value-reference"
DELTA_REFERENCE = "delta-reference"
_MODE_ALIASES = {
    "value": VALUE_REFERENCE,
    "delta": DELTA_REFERENCE,
    VALUE_REFERENCE: VALUE_REFERENCE,
    DELTA_REFERENCE: DELTA_REFERENCE,
}


@dataclass
class EventStream:
    """Ordered (step, neuron) sampling events over a fixed-step grid."""

    events: list[tuple[int, int]]
    n_neurons: int
    n_steps: int

    def __post_init__(self):
        self.events = [(int(s), int(k)) for s, k in self.events]
        self.validate()

    def validate(self):
        last = -1
        seen_at_step: set[int] = set()
        for step, neuron in self.events:
            if step < last:
                raise ParameterError("event steps must be non-decreasing")
            if step != last:
                seen_at_step = set()
            if neuron in seen_at_step:
                raise ParameterError(f"duplicate event for (step={step}, neuron={neuron})")
            if not 0 <= step < self.n_steps:
                raise ParameterError(f"event step {step} outside [0, {self.n_steps})")
            if not 0 <= neuron < self.n_neurons:
                raise ParameterError(f"event neuron {neuron} outside [0, {self.n_neurons})")
            seen_at_step.add(neuron)
            last = step

    def __len__(self):
        return len(self.events)

    def __eq__(self, other):
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.events == other.events
            and self.n_neurons == other.n_neurons
            and self.n_steps == other.n_steps
        )

    def counts(self) -> np.ndarray:
        """Events per neuron."""
        c = np.zeros(self.n_neurons, dtype=np.int64)
        for _, neuron in self.events:
            c[neuron] += 1
        return c

    def to_dense(self) -> np.ndarray:
        """Binary (n_steps, n_neurons) spike matrix."""
        s = np.zeros((self.n_steps, self.n_neurons), dtype=np.float64)
        for step, neuron in self.events:
            s[step, neuron] = 1.0
        return s

    def to_text(self) -> str:
        """Serialize: header line 'n_steps,n_neurons', then one 'step,neuron' per event."""
        lines = [f"{self.n_steps},{self.n_neurons}"]
        lines.extend(f"{step},{neuron}" for step, neuron in self.events)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "EventStream":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ParameterError("empty event-stream text")
        try:
            n_steps, n_neurons = (int(v) for v in lines[0].split(","))
            events = [tuple(int(v) for v in ln.split(",")) for ln in lines[1:]]
        except ValueError as exc:
            raise ParameterError(f"malformed event-stream text: {exc}") from exc
        return cls(events=events, n_neurons=n_neurons, n_steps=n_steps)


@dataclass
class DirectionBank:
    """Sampling directions with derived thresholds and lateral weights.

    Row i of W is the direction w_i. The firing threshold of neuron i is
    ||w_i||^2 and the lateral weight between neurons i and j is -<w_i, w_j>
    (so lateral[i][i] = -threshold[i]).
    """

    W: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        if self.W.ndim != 2:
            raise ParameterError(f"bank W must be 2-D, got shape {self.W.shape}")
        if np.any(np.all(self.W == 0.0, axis=1)):
            raise ParameterError("zero direction rows are rejected (threshold would be 0)")

    @property
    def n_neurons(self) -> int:
        return self.W.shape[0]

    @property
    def signal_dim(self) -> int:
        return self.W.shape[1]

    @property
    def thresholds(self) -> np.ndarray:
        return np.sum(self.W * self.W, axis=1)

    @property
    def lateral(self) -> np.ndarray:
        return -(self.W @ self.W.T)


@dataclass
class CodecState:
    """Reference value and neuron potentials during an encode run."""

    x_hat: np.ndarray
    U: np.ndarray
    U_history: list[np.ndarray] = field(default_factory=list)


def _as_signal_1d(signal) -> np.ndarray:
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise ParameterError("signal must be a non-empty 1-D sequence")
    return x


def sod_sample(signal, delta: float, mode: str = DELTA_REFERENCE) -> EventStream:
    """Sample a 1-D signal with send-on-delta; neuron 0 is ON, 1 is OFF.

    An event fires at the first step where |x[n] - ref| >= delta. In
    value-reference mode the reference becomes x[n]; in delta-reference
    mode it moves by +/- delta and the overshoot stays pending, so the
    same polarity may fire again at the very next step.
    """
    if delta <= 0:
        raise ParameterError(f"delta must be positive, got {delta}")
    if mode not in _MODE_ALIASES:
        raise ParameterError(f"unknown mode {mode!r}")
    mode = _MODE_ALIASES[mode]
    x = _as_signal_1d(signal)

    events: list[tuple[int, int]] = []
    ref = x[0]
    for n in range(x.size):
        diff = x[n] - ref
        if diff >= delta:
            events.append((n, ON))
            ref = x[n] if mode == VALUE_REFERENCE else ref + delta
        elif -diff >= delta:
            events.append((n, OFF))
            ref = x[n] if mode == VALUE_REFERENCE else ref - delta
    return EventStream(events=events, n_neurons=2, n_steps=x.size)


def sod_reconstruct(stream: EventStream, x0: float, delta: float, n_steps: int | None = None) -> np.ndarray:
    """Decode a delta-reference stream into a piecewise-constant estimate.

    The estimate starts at x0 and moves by +/- delta at each event step
    (the decoder learns of the change at the step it happens).
    """
    if delta <= 0:
        raise ParameterError(f"delta must be positive, got {delta}")
    if stream.n_neurons != 2:
        raise ParameterError(f"expected a 2-neuron ON/OFF stream, got {stream.n_neurons}")
    if n_steps is None:
        n_steps = stream.n_steps
    elif n_steps != stream.n_steps:
        raise ParameterError(f"n_steps mismatch: stream has {stream.n_steps}, requested {n_steps}")

    y = np.full(n_steps, float(x0), dtype=np.float64)
    level = float(x0)
    idx = 0
    ev = stream.events
    for n in range(n_steps):
        while idx < len(ev) and ev[idx][0] == n:
            level += delta if ev[idx][1] == ON else -delta
            idx += 1
        y[n] = level
    return y


def if_sod_encode(signal, w_on: float, w_off: float) -> EventStream:
    """Encode with two no-leak IF neurons driven by the signal's increments.

    Neuron potentials follow U_k[n] = U_k[n-1] - R_k[n] + w_k*(x[n]-x[n-1])
    with thresholds w_on^2 / w_off^2; R applies the previous step's spikes
    through the reset matrix [[w_on^2, w_on*w_off], [w_off*w_on, w_off^2]]
    (self-reset on the diagonal, lateral weight -w_on*w_off off it).
    """
    if not (w_on > 0 > w_off):
        raise ParameterError(f"need w_on > 0 > w_off, got w_on={w_on}, w_off={w_off}")
    bank = DirectionBank(W=np.array([[w_on], [w_off]], dtype=np.float64))
    x = _as_signal_1d(signal)
    return multidim_sod_encode(x[:, None], bank)


def multidim_sod_encode(signal, bank: DirectionBank, leak_beta: float = 1.0,
                        state_out: CodecState | None = None) -> EventStream:
    """Encode a [T x m] signal with a direction bank.

    Per step: U[n] = leak_beta * (U[n-1] - G @ S[n-1]) + W @ (x[n]-x[n-1]),
    with G = W W^T; neuron i fires when U_i[n] >= ||w_i||^2. leak_beta = 1
    is the no-leak codec, for which U_i[n] = <w_i, x[n] - x_hat[n]> holds
    exactly; leak_beta < 1 adds membrane leak so only fast changes sample.

    Pass ``state_out`` to retrieve the final reference/potentials and the
    per-step potential history (used by consistency checks and reports).
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ParameterError(f"signal must be [T x m] with T >= 1, got shape {x.shape}")
    if not 0.0 <= leak_beta <= 1.0:
        raise ParameterError(f"leak_beta must lie in [0, 1], got {leak_beta}")
    T, m = x.shape
    if bank.signal_dim != m:
        raise ParameterError(f"bank expects signal_dim={bank.signal_dim}, signal has {m}")

    W = bank.W
    gram = W @ W.T
    thresholds = bank.thresholds

    U = np.zeros(bank.n_neurons, dtype=np.float64)
    fired_prev = np.zeros(bank.n_neurons, dtype=np.float64)
    x_hat = x[0].copy()
    events: list[tuple[int, int]] = []
    history: list[np.ndarray] = []

    x_prev = x[0]
    for n in range(T):
        U = leak_beta * (U - gram @ fired_prev) + W @ (x[n] - x_prev)
        x_hat = x_hat + fired_prev @ W
        fired = (U >= thresholds).astype(np.float64)
        for i in np.flatnonzero(fired):
            events.append((n, int(i)))
        history.append(U.copy())
        fired_prev = fired
        x_prev = x[n]

    if state_out is not None:
        state_out.x_hat = x_hat
        state_out.U = U
        state_out.U_history = history
    return EventStream(events=events, n_neurons=bank.n_neurons, n_steps=T)


def reference_trajectory(stream: EventStream, bank: DirectionBank, x0) -> np.ndarray:
    """Replay a stream into the reference trajectory x_hat[0..T-1].

    x_hat[0] = x0 and every fire of neuron i at step n adds w_i from step
    n+1 on, mirroring the encoder's internal reference update.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (bank.signal_dim,):
        raise ParameterError(f"x0 must have shape ({bank.signal_dim},), got {x0.shape}")
    if stream.n_neurons != bank.n_neurons:
        raise ParameterError(
            f"stream has {stream.n_neurons} neurons, bank has {bank.n_neurons}")

    x_hat = np.empty((stream.n_steps, bank.signal_dim), dtype=np.float64)
    level = x0.copy()
    idx = 0
    ev = stream.events
    for n in range(stream.n_steps):
        x_hat[n] = level
        while idx < len(ev) and ev[idx][0] == n:
            level = level + bank.W[ev[idx][1]]
            idx += 1
    return x_hat
