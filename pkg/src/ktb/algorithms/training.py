"""Training loop, AdamW, policy evaluation, checkpoints, gradient checking.

One training iteration is: sample a sequence window batch, compute the
algorithm's loss and gradient, take an AdamW step, soft-update the target
network. Everything is seeded and single-threaded, so a (store, config)
pair reproduces the same checkpoint byte for byte.
"""

from __future__ import annotations

import dataclasses
import json
import struct
import zlib
from hashlib import sha256

import numpy as np

from ..envadapter import EnvStep
from ..errors import AdapterFailure, NonFiniteLoss
from ..loaders import DatasetHandle, SamplerConfig
from ..ttyrender import RenderSpec
from .config import ALGORITHMS, TrainConfig
from .losses import (LossReport, awac_losses, bc_loss, cql_loss, iql_losses,
                     rem_loss, soft_update)
from .model import Model, ModelConfig

CKPT_MAGIC = b"KCK1"
CKPT_VERSION = 1


class AdamW:
    """Adam with decoupled weight decay on a flat parameter vector."""

    def __init__(self, size: int, lr: float, weight_decay: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        out = params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        if self.weight_decay:
            out = out - self.lr * self.weight_decay * params
        return out


class JsonlSink:
    """Metric sink writing one {"step", "name", "value"} object per line."""

    def __init__(self, path_or_file):
        if hasattr(path_or_file, "write"):
            self._f = path_or_file
            self._own = False
        else:
            self._f = open(path_or_file, "w")
            self._own = True

    def emit(self, step: int, name: str, value: float):
        self._f.write(json.dumps({"step": step, "name": name,
                                  "value": float(value)}) + "\n")

    def close(self):
        self._f.flush()
        if self._own:
            self._f.close()


def _loss_step(algorithm: str, batch, model: Model, target: Model | None,
               cfg: TrainConfig, rng: np.random.Generator) -> LossReport:
    if algorithm == "bc":
        return bc_loss(batch, model)
    if algorithm == "cql":
        return cql_loss(batch, model, target, cfg)
    if algorithm == "iql":
        return iql_losses(batch, model, target, cfg)
    if algorithm == "awac":
        return awac_losses(batch, model, target, cfg)
    if algorithm == "rem":
        return rem_loss(batch, model, target, cfg, rng=rng)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def train(algorithm: str, handle: DatasetHandle, cfg: TrainConfig,
          model_cfg: ModelConfig, metric_sink: JsonlSink | None = None,
          checkpoint_path: str | None = None) -> Model:
    spec = ALGORITHMS[algorithm]
    model = Model(model_cfg, seed=cfg.seed)
    target = model.clone() if spec.uses_target else None
    opt = AdamW(model.num_params, cfg.learning_rate, cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    sampler = handle.sampler(SamplerConfig(cfg.batch_size, cfg.seq_len,
                                           seed=cfg.seed,
                                           pad_policy=cfg.pad_policy))

    for it in range(1, cfg.iterations + 1):
        batch = sampler.sample()
        report = _loss_step(algorithm, batch, model, target, cfg, rng)
        if not np.isfinite(report.total):
            snapshot = {
                "iteration": it, "algorithm": algorithm,
                "components": report.components,
                "grad_norm": report.grad_norm,
                "diagnostics": report.diagnostics,
            }
            raise NonFiniteLoss(json.dumps(snapshot))
        model.set_param_vector(opt.step(model.param_vector(), report.grad))
        if target is not None:
            soft_update(target, model, cfg.tau)

        if metric_sink is not None and (it % cfg.metric_interval == 0
                                        or it == cfg.iterations):
            metric_sink.emit(it, "total", report.total)
            for name, value in report.components.items():
                metric_sink.emit(it, name, value)
            metric_sink.emit(it, "grad_norm", report.grad_norm)
        if (checkpoint_path and cfg.checkpoint_interval
                and it % cfg.checkpoint_interval == 0):
            save_checkpoint(f"{checkpoint_path}.step{it}", model, algorithm, cfg)

    if checkpoint_path:
        save_checkpoint(checkpoint_path, model, algorithm, cfg)
    return model


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _select_action(outputs: dict, action_rule: str,
                   rng: np.random.Generator) -> int:
    if action_rule == "greedy_q":
        q = outputs["q"][0, 0]
        if q.ndim == 2:          # ensemble: act on the unweighted head mean
            q = q.mean(axis=0)
        return int(np.argmax(q))
    logits = outputs["policy"][0, 0]
    if action_rule == "greedy_policy":
        return int(np.argmax(logits))
    if action_rule == "sample_policy":
        z = logits - logits.max()
        p = np.exp(z)
        p /= p.sum()
        return int(rng.choice(p.size, p=p))
    raise ValueError(f"unknown action_rule {action_rule!r}")


def run_episode(model: Model, env, seed: int, action_rule: str,
                rng: np.random.Generator, probe_policy=None):
    """One evaluation rollout. The recurrent state persists across steps and
    the previous action feeds back in; both reset at the episode boundary.
    Returns (final_score, death_level, steps, action_matches)."""
    try:
        step: EnvStep = env.reset(seed)
    except Exception as e:  # adapter contract: any failure is AdapterFailure
        raise AdapterFailure(str(e)) from e
    state = None
    prev_action = 0
    matches = 0
    n_steps = 0
    while True:
        obs = {
            "tty_chars": step.tty_chars[None, None],
            "tty_colors": step.tty_colors[None, None],
            "tty_cursor": step.tty_cursor[None, None],
        }
        prev = np.asarray([[prev_action]], dtype=np.uint8)
        outputs, state = model.forward(obs, prev, state=state)
        action = _select_action(outputs, action_rule, rng)
        if probe_policy is not None:
            if action == probe_policy(step.observation()):
                matches += 1
        try:
            step = env.step(action)
        except Exception as e:
            raise AdapterFailure(str(e)) from e
        prev_action = action
        n_steps += 1
        if step.done:
            return (step.info.get("score", 0), step.info.get("depth", 1),
                    n_steps, matches)


def evaluate(model: Model, env, n_episodes: int, action_rule: str,
             seed: int = 0, task_id: str | None = None,
             probe_policy=None) -> list[dict]:
    """Evaluation rows: one dict per episode with the final score and the
    deepest level reached, ready for the statistics pipeline."""
    rng = np.random.default_rng(seed)
    rows = []
    for episode in range(n_episodes):
        score, depth, n_steps, matches = run_episode(
            model, env, seed * 100003 + episode, action_rule, rng,
            probe_policy=probe_policy)
        row = {"task": task_id or "unknown", "seed": seed, "episode": episode,
               "score": float(score), "death_level": float(depth)}
        if probe_policy is not None:
            row["action_match"] = matches / max(n_steps, 1)
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

def grad_check(loss_fn, model: Model, eps: float = 1e-5,
               coords: np.ndarray | None = None) -> float:
    """Compare the analytic gradient against central finite differences.

    loss_fn(model, aux) -> LossReport; the first call (aux=None) fixes the
    stop-gradient constants, and every finite-difference evaluation reuses
    them, matching what the analytic gradient differentiates. Relative error
    per coordinate is |g - fd| / max(|g|, |fd|, 1e-4); returns the max.
    """
    report = loss_fn(model, None)
    analytic = report.grad
    theta0 = model.param_vector()
    if coords is None:
        coords = np.arange(theta0.size)
    fd = np.zeros(coords.size)
    try:
        for j, i in enumerate(coords):
            theta = theta0.copy()
            theta[i] = theta0[i] + eps
            model.set_param_vector(theta)
            up = loss_fn(model, report.aux).total
            theta[i] = theta0[i] - eps
            model.set_param_vector(theta)
            down = loss_fn(model, report.aux).total
            fd[j] = (up - down) / (2.0 * eps)
    finally:
        model.set_param_vector(theta0)
    a = analytic[coords]
    denom = np.maximum(np.maximum(np.abs(a), np.abs(fd)), 1e-4)
    return float(np.max(np.abs(a - fd) / denom))


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def _render_to_dict(spec: RenderSpec) -> dict:
    d = dataclasses.asdict(spec)
    d["palette"] = [list(c) for c in spec.palette]
    return d


def _render_from_dict(d: dict) -> RenderSpec:
    d = dict(d)
    d["palette"] = tuple(tuple(c) for c in d["palette"])
    return RenderSpec(**d)


def model_config_to_dict(cfg: ModelConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["render"] = _render_to_dict(cfg.render)
    d["conv_layers"] = [list(t) for t in cfg.conv_layers]
    d["dense_hidden"] = list(cfg.dense_hidden)
    d["heads"] = list(cfg.heads)
    return d


def model_config_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    d["render"] = _render_from_dict(d["render"])
    d["conv_layers"] = tuple(tuple(t) for t in d["conv_layers"])
    d["dense_hidden"] = tuple(d["dense_hidden"])
    d["heads"] = tuple(d["heads"])
    return ModelConfig(**d)


def save_checkpoint(path: str, model: Model, algorithm: str, cfg: TrainConfig):
    """Flat parameter vector plus enough config to rebuild the model; the
    payload carries a CRC like store blocks do."""
    vec = model.param_vector().astype(np.float64)
    train_digest = sha256(json.dumps(dataclasses.asdict(cfg),
                                     sort_keys=True).encode()).hexdigest()
    header = json.dumps({
        "algorithm": algorithm,
        "model_config": model_config_to_dict(model.config),
        "train_config_digest": train_digest,
        "param_count": int(vec.size),
        "dtype": "float64",
    }).encode()
    payload = vec.tobytes()
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<II", CKPT_VERSION, len(header)))
        f.write(header)
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(payload)))


def load_checkpoint(path: str) -> tuple[Model, dict]:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, header_len = struct.unpack_from("<II", blob, 4)
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: checkpoint version {version} unsupported")
    header = json.loads(blob[12:12 + header_len])
    payload = blob[12 + header_len:-4]
    (crc,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(payload) != crc:
        raise ValueError(f"{path}: checkpoint payload corrupted")
    vec = np.frombuffer(payload, dtype=np.float64)
    if vec.size != header["param_count"]:
        raise ValueError(f"{path}: parameter count mismatch")
    model = Model(model_config_from_dict(header["model_config"]))
    model.set_param_vector(vec.copy())
    return model, header
