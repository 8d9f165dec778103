"""Discrete-time spiking network with hand-rolled backprop through time.

Forward dynamics per spiking layer (reset-to-zero):

    u[t] = beta * u[t-1] * (1 - s[t-1]) + W @ x[t]
    s[t] = H(u[t] - threshold)

with beta = exp(-dt/tau). The Heaviside step has a useless derivative, so
the backward pass substitutes the smooth kernel 1 / (alpha*|v| + 1)^2 at
every spike while keeping the rest of the unrolled graph exact: gradients
flow through the multiplicative reset, through beta into a shared
per-layer time constant, and through optional per-neuron axonal delays
applied to a layer's output train.

Three spike backends exist so that gradients can be validated end to end:

* ``surrogate`` -- binary forward, smooth-kernel backward (the real model);
* ``sigmoid``   -- steep-sigmoid forward with its true derivative, making
  the whole network differentiable; BPTT on this graph is checked against
  central finite differences;
* layers built with ``spiking=False`` output their membrane trace with no
  reset (leaky integrators), which is also exactly differentiable.

The readout is a non-spiking leaky integrator when classifying on final
membrane potentials, and a spiking layer when classifying on output spike
counts (softmax over temperature-scaled counts).
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np

from .core import TrainingError


def surrogate_grad(v, alpha: float = 100.0):
    """Smooth stand-in for the step function's derivative: 1/(alpha*|v|+1)^2."""
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return 1.0 / (alpha * np.abs(v) + 1.0) ** 2


@dataclass
class LayerSpec:
    size: int
    spiking: bool = True
    tau_init: float = 20.0
    learn_tau: bool = True
    delay: bool = False
    # multiplies the +-fan_in^-1/2 uniform init; sparse-input stacks need
    # gain > 1 for the first spikes to appear at all
    init_gain: float = 1.0


class LifLayer:
    """One weight matrix plus a leaky membrane per output neuron.

    Holds parameters (W, tau, optional delay vector d) and, after a
    forward pass, the traces needed by the backward pass.
    """

    def __init__(self, n_in: int, n_out: int, spec: LayerSpec, dt_ms: float,
                 threshold: float, rng: np.random.Generator):
        k = spec.init_gain * n_in ** -0.5
        self.W = rng.uniform(-k, k, size=(n_out, n_in))
        self.tau = np.array(float(spec.tau_init))
        self.d = np.zeros(n_out) if spec.delay else None
        self.spec = spec
        self.n_in = n_in
        self.n_out = n_out
        self.dt = float(dt_ms)
        self.threshold = float(threshold)
        # filled by forward/backward
        self.x = None
        self.u = None
        self.s = None
        self._delay_cache = None
        self.gW = None
        self.gtau = None
        self.gd = None

    @property
    def beta(self) -> float:
        return float(np.exp(-self.dt / float(self.tau)))

    def parameters(self) -> list:
        ps = [self.W]
        if self.spec.learn_tau:
            ps.append(self.tau)
        if self.d is not None:
            ps.append(self.d)
        return ps

    def grads(self) -> list:
        gs = [self.gW]
        if self.spec.learn_tau:
            gs.append(self.gtau)
        if self.d is not None:
            gs.append(self.gd)
        return gs

    # ------------------------------------------------------------------
    def forward(self, x: np.ndarray, spike_fn) -> np.ndarray:
        """x: (B, T, n_in) float64. Returns the layer output (B, T, n_out)."""
        B, T, _ = x.shape
        a = (x.reshape(-1, self.n_in) @ self.W.T).reshape(B, T, self.n_out)
        beta = self.beta
        u = np.empty((B, T, self.n_out))
        if self.spec.spiking:
            s = np.empty((B, T, self.n_out), dtype=np.float64 if spike_fn else np.uint8)
            u_prev = np.zeros((B, self.n_out))
            s_prev = np.zeros((B, self.n_out))
            for t in range(T):
                u_t = beta * (u_prev * (1.0 - s_prev)) + a[:, t]
                v = u_t - self.threshold
                s_t = spike_fn(v) if spike_fn else (v >= 0.0).astype(np.uint8)
                u[:, t] = u_t
                s[:, t] = s_t
                u_prev, s_prev = u_t, s_t
            out = s
        else:
            u_prev = np.zeros((B, self.n_out))
            for t in range(T):
                u_prev = beta * u_prev + a[:, t]
                u[:, t] = u_prev
            s = None
            out = u
        self.x, self.u, self.s = x, u, s
        if self.d is not None:
            out, self._delay_cache = _delay_forward(np.asarray(out, dtype=np.float64), self.d, self.dt)
        return out

    def backward(self, g_out: np.ndarray, spike_grad_fn) -> np.ndarray:
        """g_out: dL/d(layer output), shape (B, T, n_out). Returns dL/dx."""
        B, T, _ = self.u.shape
        beta = self.beta
        tau = float(self.tau)
        if self.d is not None:
            g_out, self.gd = _delay_backward(g_out, self._delay_cache, self.dt)
        dU = np.empty_like(self.u)
        du_next = np.zeros((B, self.n_out))
        g_beta = 0.0
        if self.spec.spiking:
            s = self.s
            for t in range(T - 1, -1, -1):
                u_t = self.u[:, t]
                s_t = s[:, t]
                gs_tot = g_out[:, t] - beta * du_next * u_t
                g = spike_grad_fn(u_t - self.threshold)
                du_t = gs_tot * g + beta * du_next * (1.0 - s_t)
                if t > 0:
                    g_beta += np.sum(du_t * self.u[:, t - 1] * (1.0 - s[:, t - 1]))
                dU[:, t] = du_t
                du_next = du_t
        else:
            for t in range(T - 1, -1, -1):
                du_t = g_out[:, t] + beta * du_next
                if t > 0:
                    g_beta += np.sum(du_t * self.u[:, t - 1])
                dU[:, t] = du_t
                du_next = du_t
        flatU = dU.reshape(-1, self.n_out)
        flatX = self.x.reshape(-1, self.n_in)
        self.gW = flatU.T @ flatX
        self.gtau = np.array(g_beta * beta * self.dt / tau ** 2)
        gx = (flatU @ self.W).reshape(B, T, self.n_in)
        return gx


# --------------------------------------------------------------------------
# axonal delays
# --------------------------------------------------------------------------

def _delay_forward(sig: np.ndarray, d: np.ndarray, dt: float):
    """Fractional per-neuron shift of a (B, T, n) signal along time.

    With k = floor(d/dt) and phi the fractional remainder,
    out[t] = (1-phi)*sig[t-k] + phi*sig[t-k-1], zero before the signal
    starts. Delays are clipped to [0, (T-1)*dt] at application.
    """
    B, T, n = sig.shape
    dc = np.clip(d, 0.0, (T - 1) * dt)
    k = np.floor(dc / dt).astype(np.int64)
    phi = dc / dt - k
    rows0 = np.arange(T)[:, None] - k[None, :]          # (T, n)
    rows1 = rows0 - 1
    cols = np.arange(n)[None, :]
    s0 = sig[:, np.clip(rows0, 0, T - 1), cols] * (rows0 >= 0)
    s1 = sig[:, np.clip(rows1, 0, T - 1), cols] * (rows1 >= 0)
    out = (1.0 - phi) * s0 + phi * s1
    return out, (k, phi, s0, s1)


def _delay_backward(g_out: np.ndarray, cache, dt: float):
    """Adjoint of _delay_forward: routes gradients back in time and yields
    the delay gradient (s[t-k-1] - s[t-k]) / dt summed against g_out.

    The delay gradient is evaluated at the clipped application point, so a
    parameter that has wandered outside the valid range still receives a
    boundary signal and can recover.
    """
    B, T, n = g_out.shape
    k, phi, s0, s1 = cache
    rows0 = np.arange(T)[:, None] + k[None, :]
    rows1 = rows0 + 1
    cols = np.arange(n)[None, :]
    g0 = g_out[:, np.clip(rows0, 0, T - 1), cols] * (rows0 <= T - 1)
    g1 = g_out[:, np.clip(rows1, 0, T - 1), cols] * (rows1 <= T - 1)
    g_sig = (1.0 - phi) * g0 + phi * g1
    g_d = np.sum(g_out * (s1 - s0), axis=(0, 1)) / dt
    return g_sig, g_d


def apply_delay(spike_trains: np.ndarray, d: np.ndarray, dt_ms: float) -> np.ndarray:
    """Delay per-neuron spike trains (B, T, n) by d ms (differentiable form)."""
    out, _ = _delay_forward(np.asarray(spike_trains, dtype=np.float64), np.asarray(d, dtype=np.float64), dt_ms)
    return out


# --------------------------------------------------------------------------
# losses
# --------------------------------------------------------------------------

def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_final_potential_ce(final_potentials: np.ndarray, labels: np.ndarray):
    """Cross-entropy over softmaxed final-step readout potentials.

    Returns (mean loss, gradient w.r.t. the potentials).
    """
    B = final_potentials.shape[0]
    p = _softmax(final_potentials)
    nll = -np.log(np.maximum(p[np.arange(B), labels], 1e-300))
    grad = p.copy()
    grad[np.arange(B), labels] -= 1.0
    return float(nll.mean()), grad / B


def loss_spikemax(counts: np.ndarray, labels: np.ndarray, temperature: float = 1.0):
    """Cross-entropy over softmaxed, temperature-scaled output spike counts."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    B = counts.shape[0]
    p = _softmax(counts / temperature)
    nll = -np.log(np.maximum(p[np.arange(B), labels], 1e-300))
    grad = p.copy()
    grad[np.arange(B), labels] -= 1.0
    return float(nll.mean()), grad / (temperature * B)


LOSS_KINDS = ("final_potential_ce", "spikemax")
SPIKE_MODES = ("surrogate", "sigmoid")


# --------------------------------------------------------------------------
# model
# --------------------------------------------------------------------------

class SnnModel:
    """Feedforward stack of LifLayers with a classification loss.

    X enters as a (B, N, T) binary grid batch. The model transposes to
    time-major internally. Logits are final readout potentials
    (final_potential_ce) or per-class output spike counts (spikemax).
    """

    def __init__(self, input_size: int, layer_specs, *, loss: str = "final_potential_ce",
                 dt_ms: float = 1.0, threshold: float = 1.0, surrogate_alpha: float = 100.0,
                 spike_mode: str = "surrogate", sigmoid_steepness: float = 4.0,
                 spikemax_temperature: float = 1.0, seed: int = 0, variant_tag: str = ""):
        if loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}, got {loss!r}")
        if spike_mode not in SPIKE_MODES:
            raise ValueError(f"spike_mode must be one of {SPIKE_MODES}, got {spike_mode!r}")
        specs = [s if isinstance(s, LayerSpec) else LayerSpec(**s) for s in layer_specs]
        if not specs:
            raise ValueError("model needs at least one layer")
        if loss == "final_potential_ce" and specs[-1].spiking:
            raise ValueError("final_potential_ce needs a non-spiking readout layer")
        if loss == "spikemax" and not specs[-1].spiking:
            raise ValueError("spikemax needs a spiking readout layer")
        if specs[-1].delay:
            raise ValueError("the readout layer cannot carry an axonal delay")
        for sp in specs:
            if sp.delay and not sp.spiking:
                raise ValueError("axonal delays attach to spiking layers only")

        self.input_size = int(input_size)
        self.loss = loss
        self.dt_ms = float(dt_ms)
        self.threshold = float(threshold)
        self.surrogate_alpha = float(surrogate_alpha)
        self.spike_mode = spike_mode
        self.sigmoid_steepness = float(sigmoid_steepness)
        self.spikemax_temperature = float(spikemax_temperature)
        self.variant_tag = variant_tag
        self.seed = int(seed)

        rng = np.random.default_rng(seed)
        self.layers = []
        n_in = self.input_size
        for sp in specs:
            self.layers.append(LifLayer(n_in, sp.size, sp, self.dt_ms, self.threshold, rng))
            n_in = sp.size

    @property
    def num_classes(self) -> int:
        return self.layers[-1].n_out

    def _spike_fns(self):
        if self.spike_mode == "sigmoid":
            kappa = self.sigmoid_steepness

            def fwd(v):
                return 1.0 / (1.0 + np.exp(-kappa * v))

            def bwd(v):
                s = 1.0 / (1.0 + np.exp(-kappa * v))
                return kappa * s * (1.0 - s)

            return fwd, bwd
        alpha = self.surrogate_alpha
        return None, lambda v: surrogate_grad(v, alpha)

    def forward(self, X: np.ndarray) -> np.ndarray:
        """X: (B, N, T) grid batch. Returns logits (B, C); traces stay cached."""
        if X.ndim != 3 or X.shape[1] != self.input_size:
            raise ValueError(
                f"expected input of shape (B, {self.input_size}, T), got {X.shape}"
            )
        fwd, _ = self._spike_fns()
        h = np.ascontiguousarray(X.transpose(0, 2, 1), dtype=np.float64)
        for layer in self.layers:
            h = layer.forward(np.asarray(h, dtype=np.float64), fwd if layer.spec.spiking else None)
        if self.loss == "spikemax":
            return np.asarray(h, dtype=np.float64).sum(axis=1)
        return h[:, -1, :]

    def backward(self, g_logits: np.ndarray) -> None:
        """Accumulate parameter gradients from dL/dlogits (must follow forward)."""
        last = self.layers[-1]
        B, T = last.u.shape[0], last.u.shape[1]
        g = np.zeros((B, T, last.n_out))
        if self.loss == "spikemax":
            g[:] = g_logits[:, None, :]
        else:
            g[:, -1, :] = g_logits
        _, bwd = self._spike_fns()
        for layer in reversed(self.layers):
            g = layer.backward(g, bwd)

    def loss_and_grad(self, logits: np.ndarray, labels: np.ndarray):
        if self.loss == "spikemax":
            return loss_spikemax(logits, labels, self.spikemax_temperature)
        return loss_final_potential_ce(logits, labels)

    def parameters(self) -> list:
        return [p for layer in self.layers for p in layer.parameters()]

    def grads(self) -> list:
        return [g for layer in self.layers for g in layer.grads()]

    def param_state(self) -> list:
        return [p.copy() for p in self.parameters()]

    def set_param_state(self, state) -> None:
        for p, v in zip(self.parameters(), state):
            p[...] = v

    def clear_caches(self) -> None:
        for layer in self.layers:
            layer.x = layer.u = layer.s = layer._delay_cache = None


def lif_forward(grid_batch: np.ndarray, model: SnnModel):
    """Run the stack on a (B, N, T) batch; returns (per-layer spike trains,
    per-layer membrane traces), each time-major (B, T, n)."""
    model.forward(grid_batch)
    spikes = [np.asarray(l.s) if l.s is not None else None for l in model.layers]
    membranes = [l.u for l in model.layers]
    return spikes, membranes


def backprop_through_time(model: SnnModel, X: np.ndarray, y: np.ndarray):
    """Forward + loss + full reverse sweep. Returns (loss, flat grad list)."""
    logits = model.forward(X)
    loss, g_logits = model.loss_and_grad(logits, np.asarray(y))
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss}")
    model.backward(g_logits)
    return loss, model.grads()


# --------------------------------------------------------------------------
# checkpoints: JSON with base64 tensors
# --------------------------------------------------------------------------

def _encode_array(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": base64.b64encode(a.astype("<f8").tobytes()).decode("ascii")}


def _decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(d["shape"])


def snn_to_dict(model: SnnModel, train_config: dict | None = None) -> dict:
    layers = []
    for layer in model.layers:
        layers.append({
            "size": layer.n_out,
            "spiking": layer.spec.spiking,
            "learn_tau": layer.spec.learn_tau,
            "delay": layer.d is not None,
            "tau_init": layer.spec.tau_init,
            "init_gain": layer.spec.init_gain,
            "tau": float(layer.tau),
            "W": _encode_array(layer.W),
            "d": _encode_array(layer.d) if layer.d is not None else None,
        })
    return {
        "kind": "snn",
        "input_size": model.input_size,
        "dt_ms": model.dt_ms,
        "loss": model.loss,
        "threshold": model.threshold,
        "surrogate_alpha": model.surrogate_alpha,
        "spike_mode": model.spike_mode,
        "sigmoid_steepness": model.sigmoid_steepness,
        "spikemax_temperature": model.spikemax_temperature,
        "variant_tag": model.variant_tag,
        "seed": model.seed,
        "train_config": train_config or {},
        "layers": layers,
    }


def snn_from_dict(d: dict) -> SnnModel:
    specs = [
        LayerSpec(size=l["size"], spiking=l["spiking"], tau_init=l["tau_init"],
                  learn_tau=l["learn_tau"], delay=l["delay"],
                  init_gain=l.get("init_gain", 1.0))
        for l in d["layers"]
    ]
    model = SnnModel(
        d["input_size"], specs, loss=d["loss"], dt_ms=d["dt_ms"], threshold=d["threshold"],
        surrogate_alpha=d["surrogate_alpha"], spike_mode=d["spike_mode"],
        sigmoid_steepness=d["sigmoid_steepness"], spikemax_temperature=d["spikemax_temperature"],
        seed=d.get("seed", 0), variant_tag=d.get("variant_tag", ""),
    )
    for layer, ld in zip(model.layers, d["layers"]):
        layer.W[...] = _decode_array(ld["W"])
        layer.tau[...] = ld["tau"]
        if ld["d"] is not None:
            layer.d[...] = _decode_array(ld["d"])
    return model


def save_checkpoint(model: SnnModel, path, train_config: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(snn_to_dict(model, train_config), fh)


def load_checkpoint(path) -> SnnModel:
    with open(path, "r", encoding="utf-8") as fh:
        d = json.load(fh)
    if d.get("kind") != "snn":
        raise ValueError(f"not an SNN checkpoint: kind={d.get('kind')!r}")
    return snn_from_dict(d)
