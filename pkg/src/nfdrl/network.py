"""Conditional parameter network and hand-derived reverse-mode gradients.

A two-hidden-layer ReLU MLP maps a one-hot state to per-action flow
parameters (mixture weight logits, means, log-scales and a g_max
pre-activation).  The training loss differentiates through the head
activations, the analytic sample densities and the piecewise-linear
interpolation weights onto the shared grid (so sample positions carry
gradient).  The grid locations, the bracketing sample indices, the inside
mask and all target-side values are frozen constants for each step, which
keeps the whole chain rule closed-form.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from . import losses, targets
from .flows import LOG_SQRT_2PI, SCALE_FLOOR, MixtureFlowParams

G_MAX_FLOOR = 0.1
MIXTURE_PDF_FLOOR = 1e-12
CHECKPOINT_FORMAT_VERSION = 1


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(x, axis=-1):
    e = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


@dataclass
class NetworkParams:
    """Fully connected net: one-hot state -> hidden1 -> hidden2 -> heads.

    The head produces, per action, n weight-logits, n means, n log-scales
    and one g_max pre-activation (3n+1 outputs each).
    """

    state_dim: int
    n_actions: int
    n_components: int
    tensors: dict = field(default_factory=dict)

    @property
    def head_size(self) -> int:
        return 3 * self.n_components + 1

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            state_dim=self.state_dim,
            n_actions=self.n_actions,
            n_components=self.n_components,
            tensors={k: v.copy() for k, v in self.tensors.items()},
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([self.tensors[k].ravel() for k in sorted(self.tensors)])

    def load_flat(self, vec: np.ndarray) -> None:
        i = 0
        for k in sorted(self.tensors):
            t = self.tensors[k]
            t[...] = vec[i:i + t.size].reshape(t.shape)
            i += t.size

    def n_params(self) -> int:
        return sum(t.size for t in self.tensors.values())


def init_network(state_dim: int, n_actions: int, n_components: int,
                 hidden1: int, hidden2: int, rng: np.random.Generator) -> NetworkParams:
    """He-uniform hidden layers; zero head weights with mean biases spread
    evenly over [-1, 1] so the initial mixture starts valid and non-degenerate."""
    n = n_components
    head = n_actions * (3 * n + 1)

    def he(fan_in, shape):
        lim = math.sqrt(6.0 / fan_in)
        return rng.uniform(-lim, lim, size=shape)

    b3 = np.zeros(head)
    mean_init = np.linspace(-1.0, 1.0, n) if n > 1 else np.zeros(1)
    for a in range(n_actions):
        b3[a * (3 * n + 1) + n: a * (3 * n + 1) + 2 * n] = mean_init

    net = NetworkParams(state_dim=state_dim, n_actions=n_actions, n_components=n)
    net.tensors = {
        "w1": he(state_dim, (hidden1, state_dim)),
        "b1": np.zeros(hidden1),
        "w2": he(hidden1, (hidden2, hidden1)),
        "b2": np.zeros(hidden2),
        "w3": np.zeros((head, hidden2)),
        "b3": b3,
    }
    return net


def _mlp_forward(net: NetworkParams, x: np.ndarray):
    """Batched forward pass; x is (B, state_dim).  Returns activations cache."""
    t = net.tensors
    a1 = x @ t["w1"].T + t["b1"]
    h1 = np.maximum(a1, 0.0)
    a2 = h1 @ t["w2"].T + t["b2"]
    h2 = np.maximum(a2, 0.0)
    out = h2 @ t["w3"].T + t["b3"]
    return {"x": x, "a1": a1, "h1": h1, "a2": a2, "h2": h2, "out": out}


def _head_slices(net: NetworkParams, out: np.ndarray, actions: np.ndarray):
    """Select the raw head block of the taken action for each batch row."""
    n = net.n_components
    hs = net.head_size
    base = actions * hs
    idx = base[:, None] + np.arange(hs)
    block = np.take_along_axis(out, idx, axis=1)
    return block[:, :n], block[:, n:2 * n], block[:, 2 * n:3 * n], block[:, 3 * n]


def _activate(logits, means, raw_scales, raw_g):
    w = softmax(logits, axis=-1)
    sig = softplus(raw_scales) + SCALE_FLOOR
    g = softplus(raw_g) + G_MAX_FLOOR
    return w, means, sig, g


def state_onehot(state: int, state_dim: int) -> np.ndarray:
    x = np.zeros(state_dim)
    x[state] = 1.0
    return x


def forward_params(net: NetworkParams, state_vec: np.ndarray) -> list[MixtureFlowParams]:
    """Flow parameters for every action of one state."""
    state_vec = np.asarray(state_vec, dtype=float)
    if state_vec.shape != (net.state_dim,):
        raise ValueError(f"state vector must have length {net.state_dim}")
    out = _mlp_forward(net, state_vec[None, :])["out"][0]
    n, hs = net.n_components, net.head_size
    result = []
    for a in range(net.n_actions):
        block = out[a * hs:(a + 1) * hs]
        w, mu, sig, g = _activate(block[:n], block[n:2 * n], block[2 * n:3 * n], block[3 * n])
        # renormalize away accumulated float error so invariants hold exactly
        result.append(MixtureFlowParams(weights=w / w.sum(), means=mu, scales=sig, g_max=float(g)))
    return result


def _flow_quantities(w, mu, sig, g, z):
    """Vectorized flow pass for batched mixture params.

    w, mu, sig: (..., n); g: (...); z: (K,).  Returns y (..., K), the
    mixture pdf D (..., K) and the sample densities p (..., K).
    """
    t = (z[..., :, None] - mu[..., None, :]) / sig[..., None, :]
    phi = np.exp(-0.5 * t * t) / (math.sqrt(2.0 * math.pi) * sig[..., None, :])
    # tiny floor keeps densities finite when components drift fully disjoint
    d = np.einsum("...kn,...n->...k", phi, w) + MIXTURE_PDF_FLOOR
    u = np.einsum("...kn,...n->...k", ndtr(t), w)
    y = np.clip(2.0 * u - 1.0, -1.0, 1.0) * g[..., None]
    base = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    p = base / (2.0 * g[..., None] * d)
    return y, d, p, t, phi, u


@dataclass
class BatchStructure:
    """Frozen scaffolding for one training step.

    The grids, target densities, bracketing sample indices and inside mask
    are constants with respect to the learnable parameters; the
    interpolation weights themselves are recomputed from the live sample
    positions inside the loss so that positions carry gradient. ``lam``
    stores the weights at build time (the recomputation equals it there).
    """

    grids: np.ndarray          # (B, M)
    target_density: np.ndarray  # (B, M)
    lo_idx: np.ndarray         # (B, M) original sample index below each grid point
    hi_idx: np.ndarray         # (B, M)
    lam: np.ndarray            # (B, M) weight on the hi sample at build time
    inside: np.ndarray         # (B, M) grid points inside the predicted hull


def _interp_structure(y: np.ndarray, grids: np.ndarray):
    """Interpolation indices/weights of each grid point between sorted y."""
    b, k = y.shape
    order = np.argsort(y, axis=1)
    ys = np.take_along_axis(y, order, axis=1)
    m = grids.shape[1]
    lo = np.empty((b, m), dtype=np.int64)
    for i in range(b):
        lo[i] = np.searchsorted(ys[i], grids[i], side="right") - 1
    inside = (grids >= ys[:, :1]) & (grids <= ys[:, -1:])
    lo = np.clip(lo, 0, k - 2)
    hi = lo + 1
    y_lo = np.take_along_axis(ys, lo, axis=1)
    y_hi = np.take_along_axis(ys, hi, axis=1)
    dy = y_hi - y_lo
    lam = np.where(dy > 0, (grids - y_lo) / np.where(dy > 0, dy, 1.0), 0.0)
    lam = np.clip(lam, 0.0, 1.0)
    lo_idx = np.take_along_axis(order, lo, axis=1)
    hi_idx = np.take_along_axis(order, hi, axis=1)
    return lo_idx, hi_idx, lam, inside


def build_batch_structure(net: NetworkParams, target_net: NetworkParams,
                          batch, z_batch: np.ndarray, config) -> BatchStructure:
    """Build targets and freeze the alignment scaffolding for one batch."""
    z = np.asarray(z_batch, dtype=float)
    b = len(batch)
    states = np.array([tr.state for tr in batch])
    actions = np.array([tr.action for tr in batch])
    next_states = np.array([tr.next_state for tr in batch])
    rewards = np.array([tr.reward for tr in batch])
    done = np.array([tr.done for tr in batch])

    x = np.eye(net.state_dim)[states]
    cache = _mlp_forward(net, x)
    logits, means, raw_scales, raw_g = _head_slices(net, cache["out"], actions)
    w, mu, sig, g = _activate(logits, means, raw_scales, raw_g)
    y_pred, _, _, _, _, _ = _flow_quantities(w, mu, sig, g, z)

    # target side: greedy action under the frozen target network
    xn = np.eye(net.state_dim)[next_states]
    out_t = _mlp_forward(target_net, xn)["out"]
    n, hs = net.n_components, net.head_size
    blocks = out_t.reshape(b, net.n_actions, hs)
    wt, mut, sigt, gt = _activate(
        blocks[..., :n], blocks[..., n:2 * n], blocks[..., 2 * n:3 * n], blocks[..., 3 * n]
    )
    y_next, _, _, _, _, _ = _flow_quantities(wt, mut, sigt, gt, z)  # (B, A, K)
    q = y_next.mean(axis=2)
    greedy = q.argmax(axis=1)
    y_star = np.take_along_axis(y_next, greedy[:, None, None], axis=1)[:, 0, :]

    y_target = np.where(done[:, None], rewards[:, None] + config.final_reward_std * z,
                        rewards[:, None] + config.gamma * y_star)

    all_abs = np.maximum(np.abs(y_pred).max(axis=1), np.abs(y_target).max(axis=1))
    c = np.maximum(all_abs + 3.0 * config.bandwidth, targets.SUPPORT_FLOOR)
    grids = np.linspace(-c, c, config.grid_size).T  # (B, M)

    t = (grids[:, :, None] - y_target[:, None, :]) / config.bandwidth
    target_density = (np.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)).mean(axis=2) \
        / config.bandwidth

    lo_idx, hi_idx, lam, inside = _interp_structure(y_pred, grids)
    return BatchStructure(grids=grids, target_density=target_density,
                          lo_idx=lo_idx, hi_idx=hi_idx, lam=lam, inside=inside)


def _live_lam(y: np.ndarray, structure: BatchStructure):
    """Interpolation weights from the live sample positions.

    The bracketing indices stay frozen; only the weight of each grid point
    between its two bracketing samples moves with the parameters. Returns
    the clipped weights, the active (differentiable) mask and the bracket
    widths.
    """
    y_lo = np.take_along_axis(y, structure.lo_idx, axis=1)
    y_hi = np.take_along_axis(y, structure.hi_idx, axis=1)
    dy = y_hi - y_lo
    valid = dy > 0
    raw = np.where(valid, (structure.grids - y_lo) / np.where(valid, dy, 1.0), 0.0)
    lam = np.clip(raw, 0.0, 1.0)
    active = valid & (raw > 0.0) & (raw < 1.0)
    return lam, active, dy


def _predicted_on_grid(p: np.ndarray, lam: np.ndarray,
                       structure: BatchStructure) -> np.ndarray:
    p_lo = np.take_along_axis(p, structure.lo_idx, axis=1)
    p_hi = np.take_along_axis(p, structure.hi_idx, axis=1)
    grid_p = (1.0 - lam) * p_lo + lam * p_hi
    return np.where(structure.inside, grid_p, 0.0)


def _loss_and_grid_grad(structure: BatchStructure, grid_p: np.ndarray, loss_kind: str):
    """Per-row loss values and d(mean loss)/d(grid densities)."""
    b, m = grid_p.shape
    loss_rows = np.empty(b)
    dgrid = np.empty_like(grid_p)
    for i in range(b):
        pair = targets.AlignedPair(
            support=structure.grids[i], predicted=grid_p[i],
            target=structure.target_density[i],
        )
        if loss_kind == "surrogate":
            loss_rows[i] = losses.surrogate_cramer(pair).value
            dgrid[i] = losses.surrogate_gradient(pair)
        else:
            loss_rows[i] = losses.exact_cramer(pair).value
            dgrid[i] = losses.exact_cramer_gradient(pair)
    return loss_rows, dgrid / b


def loss_with_structure(net: NetworkParams, structure: BatchStructure,
                        batch, z_batch: np.ndarray, config) -> float:
    """Mean batch loss with the alignment scaffolding held fixed.

    This is the exact function whose gradient :func:`loss_and_grad` returns;
    finite-differencing it is the independent check of the chain rule.
    """
    loss, _ = _loss_and_grad_impl(net, structure, batch, z_batch, config, want_grad=False)
    return loss


def loss_and_grad(net: NetworkParams, target_net: NetworkParams, batch,
                  z_batch: np.ndarray, config):
    """Mean batch loss and its gradient with respect to every net tensor."""
    structure = build_batch_structure(net, target_net, batch, z_batch, config)
    return _loss_and_grad_impl(net, structure, batch, z_batch, config, want_grad=True)


def _loss_and_grad_impl(net: NetworkParams, structure: BatchStructure, batch,
                        z_batch: np.ndarray, config, want_grad: bool):
    z = np.asarray(z_batch, dtype=float)
    b = len(batch)
    states = np.array([tr.state for tr in batch])
    actions = np.array([tr.action for tr in batch])
    x = np.eye(net.state_dim)[states]
    cache = _mlp_forward(net, x)
    logits, means, raw_scales, raw_g = _head_slices(net, cache["out"], actions)
    w, mu, sig, g = _activate(logits, means, raw_scales, raw_g)
    y, d, p, t, phi, u = _flow_quantities(w, mu, sig, g, z)

    lam, lam_active, dy_brack = _live_lam(y, structure)
    grid_p = _predicted_on_grid(p, lam, structure)
    loss_rows, dgrid = _loss_and_grid_grad(structure, grid_p, config.loss_kind)
    loss = float(loss_rows.mean())
    if not want_grad:
        return loss, None

    # grid densities -> sample densities and sample positions
    dgrid = np.where(structure.inside, dgrid, 0.0)
    dp = np.zeros_like(p)
    rows = np.repeat(np.arange(b), structure.lo_idx.shape[1])
    np.add.at(dp, (rows, structure.lo_idx.ravel()),
              ((1.0 - lam) * dgrid).ravel())
    np.add.at(dp, (rows, structure.hi_idx.ravel()),
              (lam * dgrid).ravel())

    # position path: grid_p also moves when the bracketing samples move.
    # lam = (grid - y_lo) / (y_hi - y_lo), so
    #   d lam / d y_lo = (lam - 1) / dy,   d lam / d y_hi = -lam / dy,
    # dead wherever lam sits on a clip boundary or the bracket is degenerate.
    p_lo = np.take_along_axis(p, structure.lo_idx, axis=1)
    p_hi = np.take_along_axis(p, structure.hi_idx, axis=1)
    dlam = np.where(lam_active, dgrid * (p_hi - p_lo), 0.0)
    safe_dy = np.where(lam_active, dy_brack, 1.0)
    dy = np.zeros_like(y)
    np.add.at(dy, (rows, structure.lo_idx.ravel()),
              (dlam * (lam - 1.0) / safe_dy).ravel())
    np.add.at(dy, (rows, structure.hi_idx.ravel()),
              (-dlam * lam / safe_dy).ravel())

    # sample positions -> mixture parameters: y = clip(2u - 1, -1, 1) * g
    uv = 2.0 * u - 1.0
    du = 2.0 * g[:, None] * dy * (np.abs(uv) < 1.0)
    dg = (dy * np.clip(uv, -1.0, 1.0)).sum(axis=1)     # (B,)

    # sample densities -> mixture parameters
    dd = -dp * p / d                                   # (B, K)
    dg += (-dp * p).sum(axis=1) / g                    # (B,)
    # phi here already carries the 1/sigma normalization of the mixture pdf
    dw = np.einsum("bk,bkn->bn", dd, phi) \
        + np.einsum("bk,bkn->bn", du, ndtr(t))
    dmu = (np.einsum("bk,bkn->bn", dd, t * phi / sig[:, None, :])
           - np.einsum("bk,bkn->bn", du, phi)) * w
    dsig = (np.einsum("bk,bkn->bn", dd, (t * t - 1.0) * phi / sig[:, None, :])
            - np.einsum("bk,bkn->bn", du, t * phi)) * w

    # activations -> raw head outputs
    dlogits = w * (dw - (dw * w).sum(axis=1, keepdims=True))
    draw_scales = dsig * sigmoid(raw_scales)
    draw_g = dg * sigmoid(raw_g)
    dmeans = dmu

    n, hs = net.n_components, net.head_size
    dout = np.zeros_like(cache["out"])
    base = actions * hs
    idx = base[:, None] + np.arange(hs)
    block = np.concatenate([dlogits, dmeans, draw_scales, draw_g[:, None]], axis=1)
    np.put_along_axis(dout, idx, block, axis=1)

    # MLP backprop
    tns = net.tensors
    grads = {}
    grads["w3"] = dout.T @ cache["h2"]
    grads["b3"] = dout.sum(axis=0)
    dh2 = dout @ tns["w3"]
    da2 = dh2 * (cache["a2"] > 0)
    grads["w2"] = da2.T @ cache["h1"]
    grads["b2"] = da2.sum(axis=0)
    dh1 = da2 @ tns["w2"]
    da1 = dh1 * (cache["a1"] > 0)
    grads["w1"] = da1.T @ cache["x"]
    grads["b1"] = da1.sum(axis=0)
    return loss, grads


@dataclass
class AdamState:
    """Adam moments with global-norm gradient clipping."""

    m: dict
    v: dict
    step: int = 0

    @staticmethod
    def init(net: NetworkParams) -> "AdamState":
        return AdamState(
            m={k: np.zeros_like(t) for k, t in net.tensors.items()},
            v={k: np.zeros_like(t) for k, t in net.tensors.items()},
        )


def sgd_adam_step(net: NetworkParams, grads: dict, state: AdamState,
                  lr: float, max_norm: float,
                  beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Clip the global gradient norm, then apply one in-place Adam update."""
    for k, gr in grads.items():
        if not np.all(np.isfinite(gr)):
            raise ValueError(f"non-finite gradient in tensor {k!r}")
    total = math.sqrt(sum(float(np.sum(gr * gr)) for gr in grads.values()))
    scale = max_norm / total if total > max_norm else 1.0
    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step
    for k, gr in grads.items():
        gr = gr * scale
        state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * gr
        state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * gr * gr
        m_hat = state.m[k] / bc1
        v_hat = state.v[k] / bc2
        net.tensors[k] -= lr * m_hat / (np.sqrt(v_hat) + eps)


def sync_target(net: NetworkParams) -> NetworkParams:
    """Deep copy of the online network for use as the frozen target."""
    return net.copy()


def save_checkpoint(path, net: NetworkParams, adam: AdamState, config_doc: dict) -> None:
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": config_doc,
        "state_dim": net.state_dim,
        "n_actions": net.n_actions,
        "n_components": net.n_components,
        "params": {k: v.tolist() for k, v in net.tensors.items()},
        "adam_m": {k: v.tolist() for k, v in adam.m.items()},
        "adam_v": {k: v.tolist() for k, v in adam.v.items()},
        "step": adam.step,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError("unsupported checkpoint format version")
    net = NetworkParams(
        state_dim=doc["state_dim"], n_actions=doc["n_actions"],
        n_components=doc["n_components"],
        tensors={k: np.array(v) for k, v in doc["params"].items()},
    )
    adam = AdamState(
        m={k: np.array(v) for k, v in doc["adam_m"].items()},
        v={k: np.array(v) for k, v in doc["adam_v"].items()},
        step=doc["step"],
    )
    return net, adam, doc["config"]
