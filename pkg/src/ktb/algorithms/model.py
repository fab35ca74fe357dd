"""Recurrent policy/value model with handwritten gradients.

The stack is: screen rasterization (fixed, not trained) -> encoder (dense or
strided-conv) -> multi-layer LSTM, optionally fed the one-hot previous
action -> linear heads (policy logits, Q-values, state value, or a K-head
Q ensemble). Forward caches activations; backward consumes head-output
gradients and returns parameter gradients, which the losses assemble and the
finite-difference checker verifies. Everything runs in numpy, float64 by
default, deterministically for fixed parameters and inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..catalog import DEFAULT_ACTION_VOCAB
from ..ttyrender import RenderSpec, render_batch

POLICY, QVALUES, VALUE = "policy", "q", "value"


@dataclass(frozen=True)
class ModelConfig:
    action_dim: int = DEFAULT_ACTION_VOCAB
    render: RenderSpec = field(default_factory=RenderSpec)
    encoder: str = "dense"                       # "dense" | "conv"
    dense_hidden: tuple[int, ...] = ()           # hidden widths before embed
    conv_layers: tuple[tuple[int, int, int], ...] = ((32, 5, 2), (64, 3, 2), (128, 3, 2))
    embed_dim: int = 64
    lstm_hidden: int = 2048
    lstm_layers: int = 2
    lstm_dropout: float = 0.0
    condition_on_prev_action: bool = True
    heads: tuple[str, ...] = (POLICY,)
    rem_heads: int = 0                           # >1 turns "q" into [K, A]
    dtype: str = "float64"

    def __post_init__(self):
        if self.lstm_hidden < 1 or self.lstm_layers < 1:
            raise ValueError("lstm_hidden and lstm_layers must be >= 1")
        if self.encoder not in ("dense", "conv"):
            raise ValueError(f"unknown encoder {self.encoder!r}")
        bad = set(self.heads) - {POLICY, QVALUES, VALUE}
        if bad:
            raise ValueError(f"unknown heads {sorted(bad)}")
        if self.rem_heads and QVALUES not in self.heads:
            raise ValueError("rem_heads requires the q head")
        if not 0.0 <= self.lstm_dropout < 1.0:
            raise ValueError("lstm_dropout must be in [0, 1)")


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _glorot(rng, shape, dtype):
    fan_in = shape[0] if len(shape) == 2 else int(np.prod(shape[1:]))
    fan_out = shape[1] if len(shape) == 2 else shape[0]
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape).astype(dtype)


def _im2col(x, k, s):
    n, c, h, w = x.shape
    ho = (h - k) // s + 1
    wo = (w - k) // s + 1
    cols = np.empty((n, c, k, k, ho, wo), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = x[:, :, i:i + s * ho:s, j:j + s * wo:s]
    return cols.reshape(n, c * k * k, ho * wo), ho, wo


def _col2im(dcols, x_shape, k, s, ho, wo):
    n, c, h, w = x_shape
    dx = np.zeros(x_shape, dtype=dcols.dtype)
    dcols = dcols.reshape(n, c, k, k, ho, wo)
    for i in range(k):
        for j in range(k):
            dx[:, :, i:i + s * ho:s, j:j + s * wo:s] += dcols[:, :, i, j]
    return dx


class Model:
    """See module docstring. Parameters live in an ordered name->array dict;
    the flat-vector view concatenates them in that order."""

    def __init__(self, config: ModelConfig, seed: int = 0,
                 params: dict[str, np.ndarray] | None = None):
        self.config = config
        self.dtype = np.dtype(config.dtype)
        self._rng = np.random.default_rng(seed)
        self.params: dict[str, np.ndarray] = {}
        self._cache = None
        if params is not None:
            self.params = {k: v.copy() for k, v in params.items()}
        else:
            self._init_params(seed)

    # ---- construction -----------------------------------------------------

    def _feature_dim(self) -> tuple[int, ...]:
        return self.config.render.image_shape

    def _init_params(self, seed: int):
        cfg = self.config
        rng = np.random.default_rng(seed)
        p = self.params
        c, h, w = self._feature_dim()

        if cfg.encoder == "dense":
            dims = (c * h * w,) + cfg.dense_hidden + (cfg.embed_dim,)
            for i in range(len(dims) - 1):
                p[f"enc.W{i}"] = _glorot(rng, (dims[i], dims[i + 1]), self.dtype)
                p[f"enc.b{i}"] = np.zeros(dims[i + 1], dtype=self.dtype)
        else:
            in_c, ih, iw = c, h, w
            for i, (out_c, k, s) in enumerate(cfg.conv_layers):
                p[f"conv.W{i}"] = _glorot(rng, (out_c, in_c, k, k), self.dtype)
                p[f"conv.b{i}"] = np.zeros(out_c, dtype=self.dtype)
                ih = (ih - k) // s + 1
                iw = (iw - k) // s + 1
                if ih < 1 or iw < 1:
                    raise ValueError("conv stack shrinks the image below 1x1")
                in_c = out_c
            p["proj.W"] = _glorot(rng, (in_c * ih * iw, cfg.embed_dim), self.dtype)
            p["proj.b"] = np.zeros(cfg.embed_dim, dtype=self.dtype)

        d_in = cfg.embed_dim + (cfg.action_dim if cfg.condition_on_prev_action else 0)
        hid = cfg.lstm_hidden
        for layer in range(cfg.lstm_layers):
            p[f"lstm{layer}.Wx"] = _glorot(rng, (d_in, 4 * hid), self.dtype)
            p[f"lstm{layer}.Wh"] = _glorot(rng, (hid, 4 * hid), self.dtype)
            b = np.zeros(4 * hid, dtype=self.dtype)
            b[hid:2 * hid] = 1.0  # forget-gate bias
            p[f"lstm{layer}.b"] = b
            d_in = hid

        if POLICY in cfg.heads:
            p["head_policy.W"] = _glorot(rng, (hid, cfg.action_dim), self.dtype)
            p["head_policy.b"] = np.zeros(cfg.action_dim, dtype=self.dtype)
        if QVALUES in cfg.heads:
            k = max(cfg.rem_heads, 1)
            p["head_q.W"] = _glorot(rng, (hid, k * cfg.action_dim), self.dtype)
            p["head_q.b"] = np.zeros(k * cfg.action_dim, dtype=self.dtype)
        if VALUE in cfg.heads:
            p["head_value.W"] = _glorot(rng, (hid, 1), self.dtype)
            p["head_value.b"] = np.zeros(1, dtype=self.dtype)

    def clone(self) -> "Model":
        return Model(self.config, params=self.params)

    # ---- parameter vector view ---------------------------------------------

    @property
    def num_params(self) -> int:
        return sum(v.size for v in self.params.values())

    def param_vector(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.params.values()])

    def set_param_vector(self, vec: np.ndarray):
        pos = 0
        for k, v in self.params.items():
            n = v.size
            self.params[k] = vec[pos:pos + n].reshape(v.shape).astype(self.dtype)
            pos += n
        if pos != vec.size:
            raise ValueError(f"vector has {vec.size} entries, model needs {pos}")

    def grad_vector(self, grads: dict[str, np.ndarray]) -> np.ndarray:
        parts = []
        for k, v in self.params.items():
            g = grads.get(k)
            parts.append(g.ravel() if g is not None else np.zeros(v.size, self.dtype))
        return np.concatenate(parts)

    # ---- forward ------------------------------------------------------------

    def zero_state(self, batch: int):
        cfg = self.config
        shape = (cfg.lstm_layers, batch, cfg.lstm_hidden)
        return np.zeros(shape, self.dtype), np.zeros(shape, self.dtype)

    def features(self, obs: dict) -> np.ndarray:
        """Rasterize a [B, T] observation window to float features."""
        img = render_batch(obs["tty_chars"], obs["tty_colors"],
                           obs["tty_cursor"], self.config.render)
        return img.astype(self.dtype)

    def forward(self, obs: dict, prev_actions: np.ndarray | None = None,
                state=None, training: bool = False):
        """Run the stack over a [B, T] window.

        Returns (outputs, final_state): outputs maps head name to [B, T, ...]
        arrays; final_state chains into the next window of the same episodes.
        """
        cfg = self.config
        feats = self.features(obs)                       # [B, T, 3, h, w]
        b, t = feats.shape[:2]
        cache = {"b": b, "t": t}

        if cfg.encoder == "dense":
            x = feats.reshape(b * t, -1)
            cache["enc_in"] = [x]
            n_layers = sum(1 for k in self.params if k.startswith("enc.W"))
            for i in range(n_layers):
                z = x @ self.params[f"enc.W{i}"] + self.params[f"enc.b{i}"]
                if i < n_layers - 1:
                    z = np.maximum(z, 0.0)
                cache["enc_in"].append(z)
                x = z
            embed = x
        else:
            x = feats.reshape(b * t, *feats.shape[2:])
            cache["conv_in"] = [x]
            cache["conv_geom"] = []
            for i, (out_c, k, s) in enumerate(cfg.conv_layers):
                cols, ho, wo = _im2col(x, k, s)
                w_mat = self.params[f"conv.W{i}"].reshape(out_c, -1)
                z = np.einsum("ncl,oc->nol", cols, w_mat) \
                    + self.params[f"conv.b{i}"][None, :, None]
                z = z.reshape(x.shape[0], out_c, ho, wo)
                z = np.maximum(z, 0.0)
                cache["conv_geom"].append((cols, x.shape, k, s, ho, wo))
                cache["conv_in"].append(z)
                x = z
            flat = x.reshape(b * t, -1)
            cache["conv_flat"] = flat
            embed = flat @ self.params["proj.W"] + self.params["proj.b"]
        embed = embed.reshape(b, t, -1)

        if cfg.condition_on_prev_action:
            if prev_actions is None:
                raise ValueError("model conditions on prev_actions, none given")
            onehot = np.zeros((b, t, cfg.action_dim), dtype=self.dtype)
            idx = np.asarray(prev_actions, dtype=np.int64)
            bb, tt = np.meshgrid(np.arange(b), np.arange(t), indexing="ij")
            onehot[bb, tt, idx] = 1.0
            lstm_in = np.concatenate([embed, onehot], axis=2)
        else:
            lstm_in = embed
        cache["embed_dim"] = embed.shape[2]

        if state is None:
            h0, c0 = self.zero_state(b)
        else:
            h0, c0 = state
        hid = cfg.lstm_hidden
        h_fin = np.empty_like(h0)
        c_fin = np.empty_like(c0)
        cache["lstm"] = []
        cache["dropout"] = []
        x_seq = lstm_in
        for layer in range(cfg.lstm_layers):
            wx = self.params[f"lstm{layer}.Wx"]
            wh = self.params[f"lstm{layer}.Wh"]
            bias = self.params[f"lstm{layer}.b"]
            h = h0[layer].copy()
            c = c0[layer].copy()
            steps = []
            outs = np.empty((b, t, hid), dtype=self.dtype)
            for ti in range(t):
                xt = x_seq[:, ti]
                z = xt @ wx + h @ wh + bias
                i_g = _sigmoid(z[:, :hid])
                f_g = _sigmoid(z[:, hid:2 * hid])
                g_g = np.tanh(z[:, 2 * hid:3 * hid])
                o_g = _sigmoid(z[:, 3 * hid:])
                c_new = f_g * c + i_g * g_g
                tc = np.tanh(c_new)
                h_new = o_g * tc
                steps.append((xt, h, c, i_g, f_g, g_g, o_g, c_new, tc))
                h, c = h_new, c_new
                outs[:, ti] = h_new
            h_fin[layer] = h
            c_fin[layer] = c
            cache["lstm"].append({"steps": steps, "in": x_seq, "out": outs})
            x_seq = outs
            if training and cfg.lstm_dropout > 0.0 and layer < cfg.lstm_layers - 1:
                keep = 1.0 - cfg.lstm_dropout
                mask = (self._rng.random(x_seq.shape) < keep) / keep
                mask = mask.astype(self.dtype)
                cache["dropout"].append(mask)
                x_seq = x_seq * mask
                cache["lstm"][-1]["dropped"] = x_seq
            else:
                cache["dropout"].append(None)

        top = x_seq                                     # [B, T, H]
        cache["top"] = top
        outputs = {}
        if POLICY in cfg.heads:
            outputs[POLICY] = top @ self.params["head_policy.W"] + self.params["head_policy.b"]
        if QVALUES in cfg.heads:
            q = top @ self.params["head_q.W"] + self.params["head_q.b"]
            if cfg.rem_heads > 1:
                q = q.reshape(b, t, cfg.rem_heads, cfg.action_dim)
            outputs[QVALUES] = q
        if VALUE in cfg.heads:
            outputs[VALUE] = (top @ self.params["head_value.W"]
                              + self.params["head_value.b"])[..., 0]
        self._cache = cache
        return outputs, (h_fin, c_fin)

    # ---- backward -----------------------------------------------------------

    def backward(self, grad_outputs: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Backpropagate head-output gradients; returns parameter grads.

        Must follow a forward() on this model; gradients w.r.t. the initial
        recurrent state are dropped (windows start from a constant state).
        """
        if self._cache is None:
            raise RuntimeError("backward() without a preceding forward()")
        cfg = self.config
        cache = self._cache
        b, t = cache["b"], cache["t"]
        hid = cfg.lstm_hidden
        top = cache["top"]
        grads: dict[str, np.ndarray] = {}

        d_top = np.zeros_like(top)
        flat_top = top.reshape(b * t, hid)
        if POLICY in grad_outputs:
            g = grad_outputs[POLICY].reshape(b * t, -1)
            grads["head_policy.W"] = flat_top.T @ g
            grads["head_policy.b"] = g.sum(axis=0)
            d_top += (g @ self.params["head_policy.W"].T).reshape(b, t, hid)
        if QVALUES in grad_outputs:
            g = grad_outputs[QVALUES].reshape(b * t, -1)
            grads["head_q.W"] = flat_top.T @ g
            grads["head_q.b"] = g.sum(axis=0)
            d_top += (g @ self.params["head_q.W"].T).reshape(b, t, hid)
        if VALUE in grad_outputs:
            g = grad_outputs[VALUE].reshape(b * t, 1)
            grads["head_value.W"] = flat_top.T @ g
            grads["head_value.b"] = g.sum(axis=0)
            d_top += (g @ self.params["head_value.W"].T).reshape(b, t, hid)

        d_out = d_top
        for layer in range(cfg.lstm_layers - 1, -1, -1):
            mask = cache["dropout"][layer]
            if mask is not None:
                d_out = d_out * mask
            lc = cache["lstm"][layer]
            wx = self.params[f"lstm{layer}.Wx"]
            wh = self.params[f"lstm{layer}.Wh"]
            d_wx = np.zeros_like(wx)
            d_wh = np.zeros_like(wh)
            d_b = np.zeros_like(self.params[f"lstm{layer}.b"])
            d_in = np.empty_like(lc["in"])
            dh_next = np.zeros((b, hid), dtype=self.dtype)
            dc_next = np.zeros((b, hid), dtype=self.dtype)
            for ti in range(t - 1, -1, -1):
                xt, h_prev, c_prev, i_g, f_g, g_g, o_g, c_new, tc = lc["steps"][ti]
                dh = d_out[:, ti] + dh_next
                dc = dc_next + dh * o_g * (1.0 - tc * tc)
                d_o = dh * tc
                d_f = dc * c_prev
                d_i = dc * g_g
                d_g = dc * i_g
                dz = np.concatenate([
                    d_i * i_g * (1.0 - i_g),
                    d_f * f_g * (1.0 - f_g),
                    d_g * (1.0 - g_g * g_g),
                    d_o * o_g * (1.0 - o_g),
                ], axis=1)
                d_wx += xt.T @ dz
                d_wh += h_prev.T @ dz
                d_b += dz.sum(axis=0)
                d_in[:, ti] = dz @ wx.T
                dh_next = dz @ wh.T
                dc_next = dc * f_g
            grads[f"lstm{layer}.Wx"] = d_wx
            grads[f"lstm{layer}.Wh"] = d_wh
            grads[f"lstm{layer}.b"] = d_b
            d_out = d_in

        d_embed = d_out[:, :, :cache["embed_dim"]].reshape(b * t, -1)

        if cfg.encoder == "dense":
            n_layers = sum(1 for k in self.params if k.startswith("enc.W"))
            dz = d_embed
            for i in range(n_layers - 1, -1, -1):
                x_in = cache["enc_in"][i]
                if i < n_layers - 1:
                    dz = dz * (cache["enc_in"][i + 1] > 0)
                grads[f"enc.W{i}"] = x_in.T @ dz
                grads[f"enc.b{i}"] = dz.sum(axis=0)
                dz = dz @ self.params[f"enc.W{i}"].T
        else:
            flat = cache["conv_flat"]
            grads["proj.W"] = flat.T @ d_embed
            grads["proj.b"] = d_embed.sum(axis=0)
            dz = (d_embed @ self.params["proj.W"].T).reshape(cache["conv_in"][-1].shape)
            for i in range(len(cfg.conv_layers) - 1, -1, -1):
                out_c = cfg.conv_layers[i][0]
                cols, x_shape, k, s, ho, wo = cache["conv_geom"][i]
                dz = dz * (cache["conv_in"][i + 1] > 0)
                dflat = dz.reshape(dz.shape[0], out_c, ho * wo)
                w_mat = self.params[f"conv.W{i}"].reshape(out_c, -1)
                grads[f"conv.W{i}"] = np.einsum("nol,ncl->oc", dflat, cols).reshape(
                    self.params[f"conv.W{i}"].shape)
                grads[f"conv.b{i}"] = dflat.sum(axis=(0, 2))
                dcols = np.einsum("nol,oc->ncl", dflat, w_mat)
                dz = _col2im(dcols, x_shape, k, s, ho, wo)
        return grads
