"""Flat key=value run configuration: defaults < preset < file < flags."""

from dataclasses import dataclass

__all__ = ["ConfigError", "RunConfig", "DEFAULTS", "PRESETS", "resolve", "parse_config_file"]

CONFIG_FORMAT_VERSION = 1


class ConfigError(ValueError):
    pass


# Every known key with its default (the `desk` preset's values).
DEFAULTS = {
    "preset": "desk",
    "seed": 0,
    # model
    "window": 8,
    "d_in": 32,
    "d_a": 32,
    "heads": 2,
    "blocks": 2,
    "d_r": 8,
    "kernels": "exp5",
    "dropout": 0.2,
    "share_embeddings": True,
    "flat_alpha": False,
    "context_mode": "bidirectional",
    "time_unit": "hours",
    "interval_log1p": False,
    # training
    "loss": "top1",
    "learning_rate": 1e-3,
    "batch_size": 100,
    "negatives": 100,
    "warmup_epochs": 3,
    "patience": 3,
    "max_epochs": 50,
    "adam_beta1": 0.9,
    "adam_beta2": 0.999,
    "adam_eps": 1e-8,
    # data
    "min_item_actions": 1,
    "min_user_actions": 1,
    "max_user_actions": 1000000000,
    "min_dwell_seconds": 0,
    "warm_start": 5,
    "split_train": 0.8,
    "split_valid": 0.1,
    "split_test": 0.1,
}

PRESETS = {
    "desk": {},
    "paper": {"d_in": 500, "d_a": 500, "heads": 2, "blocks": 2, "d_r": 20, "window": 8,
              "learning_rate": 1e-3, "kernels": "exp5"},
    # First-moment decay 0.1, for the low-momentum ablation.
    "paper-momentum": {"d_in": 500, "d_a": 500, "heads": 2, "blocks": 2, "d_r": 20,
                       "window": 8, "learning_rate": 1e-3, "kernels": "exp5",
                       "adam_beta1": 0.1},
}


@dataclass
class RunConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def echo(self):
        """Full resolved configuration for embedding into output artifacts."""
        return {"config_format_version": CONFIG_FORMAT_VERSION, **self.values}


def _coerce(key, raw):
    if key not in DEFAULTS:
        raise ConfigError(f"unknown config key {key!r}")
    default = DEFAULTS[key]
    if isinstance(default, bool):
        if isinstance(raw, bool):
            return raw
        low = str(raw).strip().lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"config key {key!r}: cannot parse boolean from {raw!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        try:
            return int(str(raw).strip())
        except ValueError as e:
            raise ConfigError(f"config key {key!r}: cannot parse int from {raw!r}") from e
    if isinstance(default, float):
        try:
            return float(str(raw).strip())
        except ValueError as e:
            raise ConfigError(f"config key {key!r}: cannot parse float from {raw!r}") from e
    return str(raw).strip()


def parse_config_file(path):
    """Flat `key = value` lines; `[section]` headers and `#` comments allowed."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line or (line.startswith("[") and line.endswith("]")):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
            key, raw = (part.strip() for part in line.split("=", 1))
            values[key] = _coerce(key, raw)
    return values


def resolve(config_path=None, overrides=None):
    """Merge defaults < preset < config file < explicit overrides."""
    file_values = parse_config_file(config_path) if config_path else {}
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

    preset = overrides.get("preset", file_values.get("preset", DEFAULTS["preset"]))
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")

    values = dict(DEFAULTS)
    values.update(PRESETS[preset])
    values["preset"] = preset
    values.update(file_values)
    for key, raw in overrides.items():
        values[key] = _coerce(key, raw)
    return RunConfig(values)
