"""Losses for the five offline algorithms, with handwritten gradients.

Every loss runs the online model over the [B, L+1] window, forms analytic
gradients w.r.t. the head outputs at the L training positions, and
backpropagates through the model. Quantities that the optimizer must treat
as constants (TD targets, advantage weights) are collected into an `aux`
dict; passing a report's aux back in re-evaluates the same frozen-constant
objective, which is what the finite-difference gradient checker compares
against.

TD errors use the Huber (smooth-L1) shape everywhere a Q-function is
regressed; targets bootstrap from the extra observation the sampler appends
to each window, with the recurrent state simply continuing through it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..loaders import SequenceBatch
from .model import Model


@dataclass
class LossReport:
    total: float
    components: dict[str, float]
    grad: np.ndarray
    grad_norm: float
    diagnostics: dict[str, float] = field(default_factory=dict)
    aux: dict = field(default_factory=dict)


def _window_obs(batch: SequenceBatch) -> dict:
    return {"tty_chars": batch.tty_chars, "tty_colors": batch.tty_colors,
            "tty_cursor": batch.tty_cursor}


def _mask(batch: SequenceBatch) -> tuple[np.ndarray, float]:
    m = batch.pad_mask.astype(np.float64)
    return m, float(m.sum())


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(logits))


def _logsumexp(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=-1)
    return m + np.log(np.exp(x - m[..., None]).sum(axis=-1))


def huber(u: np.ndarray) -> np.ndarray:
    a = np.abs(u)
    return np.where(a <= 1.0, 0.5 * u * u, a - 0.5)


def huber_grad(u: np.ndarray) -> np.ndarray:
    return np.clip(u, -1.0, 1.0)


def _take_actions(values: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """values [B, L, A], actions [B, L] -> values at the data actions."""
    b, l = actions.shape
    bb, tt = np.meshgrid(np.arange(b), np.arange(l), indexing="ij")
    return values[bb, tt, actions]


def _clip_rewards(batch: SequenceBatch, reward_clip) -> np.ndarray:
    lo, hi = reward_clip
    return np.clip(batch.rewards.astype(np.float64), lo, hi)


def td_targets(batch: SequenceBatch, target: Model, gamma: float,
               reward_clip, bootstrap_rule: str,
               mixture: np.ndarray | None = None) -> np.ndarray:
    """y[b,t] = clip(r) + gamma * (1 - done) * bootstrap(t+1).

    bootstrap_rule: "max_q" (greedy over Q), "value" (V head), or
    "expected_q" (Q under the target policy head). K-head Q ensembles are
    combined with `mixture` weights when given, else their plain mean.
    """
    outputs, _ = target.forward(_window_obs(batch), batch.prev_actions)
    if bootstrap_rule == "value":
        boot = outputs["value"][:, 1:]
    else:
        q = outputs["q"]
        if q.ndim == 4:
            if mixture is None:
                q = q.mean(axis=2)
            else:
                q = np.einsum("btka,k->bta", q, mixture)
        q_next = q[:, 1:]
        if bootstrap_rule == "max_q":
            boot = q_next.max(axis=-1)
        elif bootstrap_rule == "expected_q":
            pi = _softmax(outputs["policy"][:, 1:])
            boot = (pi * q_next).sum(axis=-1)
        else:
            raise ValueError(f"unknown bootstrap_rule {bootstrap_rule!r}")
    r = _clip_rewards(batch, reward_clip)
    done = batch.dones.astype(np.float64)
    return r + gamma * (1.0 - done) * boot


def bc_loss(batch: SequenceBatch, model: Model, cfg=None, aux=None) -> LossReport:
    """Mean negative log-likelihood of the data actions."""
    mask, denom = _mask(batch)
    outputs, _ = model.forward(_window_obs(batch), batch.prev_actions)
    logits = outputs["policy"]
    l = batch.actions.shape[1]
    lp = _log_softmax(logits[:, :l])
    nll = -_take_actions(lp, batch.actions)
    loss = float((nll * mask).sum() / denom)

    dlogits = np.zeros_like(logits)
    probs = np.exp(lp)
    dl = probs.copy()
    b, _, a = dl.shape
    bb, tt = np.meshgrid(np.arange(b), np.arange(l), indexing="ij")
    dl[bb, tt, batch.actions] -= 1.0
    dlogits[:, :l] = dl * (mask / denom)[..., None]
    grads = model.backward({"policy": dlogits})
    gvec = model.grad_vector(grads)

    entropy = float((-(probs * lp).sum(axis=-1) * mask).sum() / denom)
    return LossReport(total=loss, components={"policy": loss}, grad=gvec,
                      grad_norm=float(np.linalg.norm(gvec)),
                      diagnostics={"entropy": entropy}, aux={})


def cql_loss(batch: SequenceBatch, model: Model, target: Model, cfg,
             aux=None) -> LossReport:
    """alpha * Huber TD + conservative penalty (logsumexp Q - Q at data
    action); the alpha coefficient scales the TD term, not the penalty."""
    mask, denom = _mask(batch)
    if aux is None:
        aux = {"y": td_targets(batch, target, cfg.gamma, cfg.reward_clip, "max_q")}
    y = aux["y"]

    outputs, _ = model.forward(_window_obs(batch), batch.prev_actions)
    q = outputs["q"]
    l = batch.actions.shape[1]
    q_t = q[:, :l]
    q_data = _take_actions(q_t, batch.actions)

    u = q_data - y
    td = float((huber(u) * mask).sum() / denom)
    lse = _logsumexp(q_t)
    penalty = float(((lse - q_data) * mask).sum() / denom)
    total = cfg.cql_alpha * td + penalty

    dq = np.zeros_like(q)
    w = mask / denom
    soft = _softmax(q_t)
    dq[:, :l] = soft * w[..., None]
    b = q.shape[0]
    bb, tt = np.meshgrid(np.arange(b), np.arange(l), indexing="ij")
    dq[bb, tt, batch.actions] += (cfg.cql_alpha * huber_grad(u) - 1.0) * w
    grads = model.backward({"q": dq})
    gvec = model.grad_vector(grads)

    return LossReport(
        total=total, components={"td": td, "penalty": penalty}, grad=gvec,
        grad_norm=float(np.linalg.norm(gvec)),
        diagnostics={"q_data_mean": float((q_data * mask).sum() / denom),
                     "q_max_mean": float((q_t.max(axis=-1) * mask).sum() / denom)},
        aux=aux)


def _expectile_weight(u: np.ndarray, expectile: float) -> np.ndarray:
    return np.abs(expectile - (u < 0.0).astype(np.float64))


def _advantage_weight(adv: np.ndarray, temperature: float, clip: float) -> np.ndarray:
    """min(exp(A / temperature), clip); the exponent is capped so huge
    advantages clamp instead of overflowing."""
    return np.minimum(np.exp(np.minimum(adv / temperature, 700.0)), clip)


def iql_losses(batch: SequenceBatch, model: Model, target: Model, cfg,
               aux=None) -> LossReport:
    """Expectile value regression + Huber Q regression against V targets +
    advantage-weighted behavioral cloning."""
    mask, denom = _mask(batch)
    l = batch.actions.shape[1]
    if aux is None:
        tgt_out, _ = target.forward(_window_obs(batch), batch.prev_actions)
        q_tgt_data = _take_actions(tgt_out["q"][:, :l], batch.actions)
        v_next = tgt_out["value"][:, 1:]
        onl_out, _ = model.forward(_window_obs(batch), batch.prev_actions)
        adv = q_tgt_data - onl_out["value"][:, :l]
        w = _advantage_weight(adv, cfg.temperature, cfg.advantage_clip)
        aux = {"q_tgt_data": q_tgt_data, "v_next": v_next, "w": w}
    q_tgt_data, v_next, w_adv = aux["q_tgt_data"], aux["v_next"], aux["w"]

    outputs, _ = model.forward(_window_obs(batch), batch.prev_actions)
    logits, q, v = outputs["policy"], outputs["q"], outputs["value"]
    wm = mask / denom

    # value head: expectile regression toward frozen Q targets
    u_v = q_tgt_data - v[:, :l]
    wt = _expectile_weight(u_v, cfg.iql_expectile)
    value_loss = float((wt * u_v * u_v * mask).sum() / denom)
    dv = np.zeros_like(v)
    dv[:, :l] = -2.0 * wt * u_v * wm

    # q head: one-step Huber TD against the target V
    r = _clip_rewards(batch, cfg.reward_clip)
    done = batch.dones.astype(np.float64)
    y = r + cfg.gamma * (1.0 - done) * v_next
    q_data = _take_actions(q[:, :l], batch.actions)
    u_q = q_data - y
    q_loss = float((huber(u_q) * mask).sum() / denom)
    dq = np.zeros_like(q)
    b = q.shape[0]
    bb, tt = np.meshgrid(np.arange(b), np.arange(l), indexing="ij")
    dq[bb, tt, batch.actions] = huber_grad(u_q) * wm

    # policy head: advantage-weighted NLL with frozen weights
    lp = _log_softmax(logits[:, :l])
    nll = -_take_actions(lp, batch.actions)
    policy_loss = float((w_adv * nll * mask).sum() / denom)
    dlogits = np.zeros_like(logits)
    dl = np.exp(lp)
    dl[bb, tt, batch.actions] -= 1.0
    dlogits[:, :l] = dl * (w_adv * wm)[..., None]

    total = value_loss + q_loss + policy_loss
    grads = model.backward({"policy": dlogits, "q": dq, "value": dv})
    gvec = model.grad_vector(grads)
    return LossReport(
        total=total,
        components={"value": value_loss, "td": q_loss, "policy": policy_loss},
        grad=gvec, grad_norm=float(np.linalg.norm(gvec)),
        diagnostics={"q_data_mean": float((q_data * mask).sum() / denom),
                     "adv_weight_mean": float((w_adv * mask).sum() / denom)},
        aux=aux)


def awac_losses(batch: SequenceBatch, model: Model, target: Model, cfg,
                aux=None) -> LossReport:
    """Huber Q regression bootstrapped with the target policy's expected Q,
    plus advantage-weighted behavioral cloning (advantage from the online
    critic, frozen)."""
    mask, denom = _mask(batch)
    l = batch.actions.shape[1]
    if aux is None:
        y = td_targets(batch, target, cfg.gamma, cfg.reward_clip, "expected_q")
        onl_out, _ = model.forward(_window_obs(batch), batch.prev_actions)
        q0 = onl_out["q"][:, :l]
        pi0 = _softmax(onl_out["policy"][:, :l])
        adv = _take_actions(q0, batch.actions) - (pi0 * q0).sum(axis=-1)
        w = _advantage_weight(adv, cfg.temperature, cfg.advantage_clip)
        aux = {"y": y, "w": w}
    y, w_adv = aux["y"], aux["w"]

    outputs, _ = model.forward(_window_obs(batch), batch.prev_actions)
    logits, q = outputs["policy"], outputs["q"]
    wm = mask / denom
    b = q.shape[0]
    bb, tt = np.meshgrid(np.arange(b), np.arange(l), indexing="ij")

    q_data = _take_actions(q[:, :l], batch.actions)
    u_q = q_data - y
    q_loss = float((huber(u_q) * mask).sum() / denom)
    dq = np.zeros_like(q)
    dq[bb, tt, batch.actions] = huber_grad(u_q) * wm

    lp = _log_softmax(logits[:, :l])
    nll = -_take_actions(lp, batch.actions)
    policy_loss = float((w_adv * nll * mask).sum() / denom)
    dlogits = np.zeros_like(logits)
    dl = np.exp(lp)
    dl[bb, tt, batch.actions] -= 1.0
    dlogits[:, :l] = dl * (w_adv * wm)[..., None]

    total = q_loss + policy_loss
    grads = model.backward({"policy": dlogits, "q": dq})
    gvec = model.grad_vector(grads)
    return LossReport(
        total=total, components={"td": q_loss, "policy": policy_loss},
        grad=gvec, grad_norm=float(np.linalg.norm(gvec)),
        diagnostics={"q_data_mean": float((q_data * mask).sum() / denom),
                     "adv_weight_mean": float((w_adv * mask).sum() / denom)},
        aux=aux)


def rem_loss(batch: SequenceBatch, model: Model, target: Model, cfg,
             rng: np.random.Generator | None = None, aux=None) -> LossReport:
    """Huber TD on a random convex mixture of the Q ensemble; the target
    bootstrap uses the identically mixed target heads."""
    mask, denom = _mask(batch)
    l = batch.actions.shape[1]

    q_shape_heads = max(getattr(model.config, "rem_heads", 0), 1)
    if aux is None:
        if rng is None:
            rng = np.random.default_rng(0)
        draws = rng.random(q_shape_heads)
        alpha = draws / draws.sum()
        y = td_targets(batch, target, cfg.gamma, cfg.reward_clip, "max_q",
                       mixture=alpha)
        aux = {"alpha": alpha, "y": y}
    alpha, y = aux["alpha"], aux["y"]

    outputs, _ = model.forward(_window_obs(batch), batch.prev_actions)
    q = outputs["q"]
    ensemble = q.ndim == 4
    mixed = np.einsum("btka,k->bta", q, alpha) if ensemble else q * alpha[0]
    q_data = _take_actions(mixed[:, :l], batch.actions)

    u = q_data - y
    td = float((huber(u) * mask).sum() / denom)
    wm = mask / denom
    b = q.shape[0]
    bb, tt = np.meshgrid(np.arange(b), np.arange(l), indexing="ij")
    dq = np.zeros_like(q)
    g = huber_grad(u) * wm
    if ensemble:
        dq[bb, tt, :, batch.actions] = g[..., None] * alpha[None, None, :]
    else:
        dq[bb, tt, batch.actions] = g * alpha[0]
    grads = model.backward({"q": dq})
    gvec = model.grad_vector(grads)
    return LossReport(
        total=td, components={"td": td}, grad=gvec,
        grad_norm=float(np.linalg.norm(gvec)),
        diagnostics={"q_data_mean": float((q_data * mask).sum() / denom),
                     "alpha_max": float(alpha.max())},
        aux=aux)


def soft_update(target: Model, online: Model, tau: float):
    """theta_target <- (1 - tau) * theta_target + tau * theta_online."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must be in [0, 1]")
    for k, v in target.params.items():
        v *= (1.0 - tau)
        v += tau * online.params[k]
