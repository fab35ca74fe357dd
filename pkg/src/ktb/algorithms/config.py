"""Training configuration, the key=value config-file dialect, and the
algorithm registry (which heads each algorithm needs, which loss it runs,
and how its policy acts at evaluation time)."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .model import POLICY, QVALUES, VALUE, ModelConfig


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 500_000
    batch_size: int = 64
    seq_len: int = 16
    learning_rate: float = 3e-4
    weight_decay: float = 0.0
    gamma: float = 0.999
    tau: float = 5e-3
    reward_clip: tuple[float, float] = (-10.0, 10.0)
    cql_alpha: float = 1e-4
    iql_expectile: float = 0.8
    temperature: float = 1.0
    advantage_clip: float = 100.0
    rem_heads: int = 200
    seed: int = 0
    pad_policy: str = "reject_short"
    metric_interval: int = 100
    checkpoint_interval: int = 0     # 0 = final checkpoint only

    def __post_init__(self):
        if min(self.iterations, self.batch_size, self.seq_len) < 1:
            raise ValueError("iterations, batch_size, seq_len must be >= 1")
        if self.learning_rate <= 0 or self.gamma <= 0 or self.tau < 0:
            raise ValueError("learning_rate/gamma must be > 0, tau >= 0")
        if self.reward_clip[0] >= self.reward_clip[1]:
            raise ValueError("reward_clip low must be < high")
        if not 0.0 < self.iql_expectile < 1.0:
            raise ValueError("expectile must be in (0, 1)")
        if self.rem_heads < 1:
            raise ValueError("rem_heads must be >= 1")


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    heads: tuple[str, ...]
    uses_target: bool
    eval_rule: str              # default action rule at evaluation


ALGORITHMS: dict[str, AlgorithmSpec] = {
    "bc": AlgorithmSpec("bc", (POLICY,), False, "sample_policy"),
    "cql": AlgorithmSpec("cql", (QVALUES,), True, "greedy_q"),
    "iql": AlgorithmSpec("iql", (POLICY, QVALUES, VALUE), True, "sample_policy"),
    "awac": AlgorithmSpec("awac", (POLICY, QVALUES), True, "sample_policy"),
    "rem": AlgorithmSpec("rem", (QVALUES,), True, "greedy_q"),
}


def parse_config_file(path: str) -> dict[str, str]:
    """key = value lines; '#' starts a comment; keys are lowercased."""
    out: dict[str, str] = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            out[key.strip().lower()] = value.strip()
    return out


def _as_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


# config-file key -> (TrainConfig field, parser)
_TRAIN_KEYS = {
    "training_iterations": ("iterations", int),
    "iterations": ("iterations", int),
    "batch_size": ("batch_size", int),
    "sequence_length": ("seq_len", int),
    "seq_len": ("seq_len", int),
    "learning_rate": ("learning_rate", float),
    "weight_decay": ("weight_decay", float),
    "gamma": ("gamma", float),
    "tau": ("tau", float),
    "alpha": ("cql_alpha", float),
    "cql_alpha": ("cql_alpha", float),
    "expectile": ("iql_expectile", float),
    "temperature": ("temperature", float),
    "advantage_clip_max": ("advantage_clip", float),
    "ensemble_heads": ("rem_heads", lambda s: int(float(s))),
    "seed": ("seed", int),
    "pad_policy": ("pad_policy", str),
    "metric_interval": ("metric_interval", int),
}

_MODEL_KEYS = {
    "encoder": ("encoder", str),
    "embed_dim": ("embed_dim", int),
    "lstm_hidden_dim": ("lstm_hidden", int),
    "lstm_hidden": ("lstm_hidden", int),
    "lstm_layers": ("lstm_layers", int),
    "lstm_dropout": ("lstm_dropout", float),
    "use_previous_action": ("condition_on_prev_action", _as_bool),
    "action_dim": ("action_dim", int),
    "crop_rows": (None, int),
    "crop_cols": (None, int),
    "glyph_height": (None, int),
    "glyph_width": (None, int),
}


def build_configs(algorithm: str, options: dict[str, str],
                  base_train: TrainConfig | None = None,
                  base_model: ModelConfig | None = None
                  ) -> tuple[TrainConfig, ModelConfig]:
    """Resolve configs from defaults < options (a parsed config file merged
    with CLI flag overrides, flags last)."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; "
                         f"choose from {sorted(ALGORITHMS)}")
    spec = ALGORITHMS[algorithm]
    train = base_train or TrainConfig()
    model = base_model or ModelConfig()

    train_updates = {}
    model_updates = {}
    render_updates = {}
    for key, value in options.items():
        if key in _TRAIN_KEYS:
            fname, conv = _TRAIN_KEYS[key]
            train_updates[fname] = conv(value)
        elif key == "reward_clip":
            lo, hi = (float(x) for x in value.split(","))
            train_updates["reward_clip"] = (lo, hi)
        elif key in _MODEL_KEYS:
            fname, conv = _MODEL_KEYS[key]
            if fname is None:
                render_updates[key] = conv(value)
            else:
                model_updates[fname] = conv(value)
        elif key in ("optimizer", "state_encoder"):
            pass  # informational; adamw and the built-in encoder are the only options
        else:
            raise ValueError(f"unknown config key {key!r}")

    if render_updates:
        model_updates["render"] = replace(model.render, **render_updates)
    heads = spec.heads
    rem = train_updates.get("rem_heads", train.rem_heads) if algorithm == "rem" else 0
    model = replace(model, heads=heads, rem_heads=rem, **model_updates)
    train = replace(train, **train_updates)
    return train, model
