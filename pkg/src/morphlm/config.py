"""Line-based ``key = value`` pipeline configuration.

Keys are namespaced per module; unknown keys are rejected, values are
type-checked against the defaults and range-validated.  ``#`` starts a
comment.  The empty string stands for "unset" on optional keys.
"""

from __future__ import annotations

from pathlib import Path

from .augment import AugmentationPlan

DEFAULTS = {
    "global.seed": 0,
    "global.out_dir": "out",
    "global.threads": 1,
    "corpus.vocab_size": 50_000,
    "segmenter.corpus_weight": 1.0,
    "segmenter.convergence": 0.001,
    "segmenter.max_epochs": 15,
    "ngram.order": 4,
    "neural.layers": 2,
    "neural.embed_dim": 650,
    "neural.hidden_dim": 650,
    "neural.batch_size": 32,
    "neural.seq_len": 35,
    "neural.dropout_keep": 0.5,
    "neural.momentum": 0.9,
    "neural.lr_init": 1.0,
    "neural.halve_lr_on_increase": True,
    "neural.patience": 3,
    "neural.max_epochs": 50,
    "neural.clip_norm": 5.0,
    "neural.init_scale": 0.05,
    "augment.token_type": "morph",
    "augment.gen_tokens": 5_000_000,
    "augment.size_budget": "",
    "augment.temperature": 1.0,
    "augment.gen_streams": 64,
    "augment.train": "",
    "augment.dev": "",
    "augment.eval": "",
    "augment.reuse_lstm": "",
    "augment.sizes": "",
}

_PATH_KEYS = ("augment.train", "augment.dev", "augment.eval",
              "augment.reuse_lstm", "global.out_dir")

_RANGES = {
    "neural.dropout_keep": (lambda v: 0.0 < v <= 1.0, "must be in (0, 1]"),
    "neural.momentum": (lambda v: 0.0 <= v < 1.0, "must be in [0, 1)"),
    "neural.lr_init": (lambda v: v > 0, "must be positive"),
    "ngram.order": (lambda v: v >= 1, "must be >= 1"),
    "corpus.vocab_size": (lambda v: v >= 1, "must be >= 1"),
    "segmenter.corpus_weight": (lambda v: v > 0, "must be positive"),
    "augment.gen_tokens": (lambda v: v >= 0, "must be >= 0"),
    "augment.temperature": (lambda v: v >= 0, "must be >= 0"),
    "augment.token_type": (lambda v: v in ("word", "morph"),
                           "must be word or morph"),
    "global.threads": (lambda v: v >= 1, "must be >= 1"),
}


class PipelineConfig:
    """Fully resolved configuration: defaults overlaid with file values."""

    def __init__(self, values=None):
        self.values = dict(DEFAULTS)
        if values:
            for key, val in values.items():
                if key not in DEFAULTS:
                    raise ValueError(f"unknown configuration key {key!r}")
                self.values[key] = val
        self._validate()

    def _validate(self):
        for key, (check, msg) in _RANGES.items():
            if not check(self.values[key]):
                raise ValueError(f"configuration key {key} {msg}, "
                                 f"got {self.values[key]!r}")

    def __getitem__(self, key):
        return self.values[key]

    def __eq__(self, other):
        return isinstance(other, PipelineConfig) and self.values == other.values

    def lstm_overrides(self):
        keys = ("layers", "embed_dim", "hidden_dim", "batch_size", "seq_len",
                "dropout_keep", "momentum", "lr_init", "halve_lr_on_increase",
                "patience", "max_epochs", "clip_norm", "init_scale")
        return {k: self.values[f"neural.{k}"] for k in keys}

    def to_plan(self):
        budget = self.values["augment.size_budget"]
        return AugmentationPlan(
            token_type=self.values["augment.token_type"],
            gen_tokens=self.values["augment.gen_tokens"],
            ngram_order=self.values["ngram.order"],
            size_budget=int(budget) if budget != "" else None,
            vocab_size=self.values["corpus.vocab_size"],
            temperature=self.values["augment.temperature"],
            gen_streams=self.values["augment.gen_streams"],
            seed=self.values["global.seed"],
            lstm=self.lstm_overrides(),
            out_dir=self.values["global.out_dir"] or None,
            reuse_lstm=self.values["augment.reuse_lstm"] or None,
        )

    def ablation_sizes(self):
        raw = self.values["augment.sizes"]
        if not raw:
            return []
        try:
            return [int(x) for x in raw.split(",") if x.strip()]
        except ValueError:
            raise ValueError(f"augment.sizes must be comma-separated integers, "
                             f"got {raw!r}") from None

    def dump(self):
        lines = [f"{key} = {_format(self.values[key])}" for key in sorted(self.values)]
        return "\n".join(lines) + "\n"


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _parse_value(key, raw, line_no):
    default = DEFAULTS[key]
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(f"line {line_no}: key {key} expects a boolean, got {raw!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        try:
            return int(raw)
        except ValueError:
            raise ValueError(
                f"line {line_no}: key {key} expects an integer, got {raw!r}"
            ) from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ValueError(
                f"line {line_no}: key {key} expects a number, got {raw!r}"
            ) from None
    return raw


def load_config(path):
    """Parse, type-check and range-validate a config file; relative paths
    resolve against the file's directory."""
    path = Path(path)
    base = path.parent.resolve()
    values = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, raw = line.partition("=")
            if not eq:
                raise ValueError(f"line {line_no}: expected 'key = value'")
            key = key.strip()
            raw = raw.strip()
            if key not in DEFAULTS:
                raise ValueError(f"line {line_no}: unknown configuration key {key!r}")
            values[key] = _parse_value(key, raw, line_no)
    config = PipelineConfig(values)
    for key in _PATH_KEYS:
        val = config.values[key]
        if val:
            config.values[key] = str((base / val).resolve())
    return config


def dump_config(config, path):
    Path(path).write_text(config.dump(), encoding="utf-8")
