"""Run configuration shared by all command-line entry points.

One flat RunConfig covers every command; commands ignore fields they
don't use.  Values come from defaults, then an optional key = value
config file, then command-line overrides, and the merged result is
validated before any work starts so a bad setting never leaves partial
outputs behind.
"""

import dataclasses
from dataclasses import dataclass

from .decision import ALLOWED_WINDOW_SIZES
from .errors import ConfigError


@dataclass
class RunConfig:
    # shared geometry and seeding
    seed: int = 0
    step_distance: float = 12.0
    window: int = 64
    n_bins: int = 64
    walk_threshold: float = 0.1
    snap_radius: float = 6.0
    match_radius: float = 6.0

    # world generation
    n_worlds: int = 1
    world_size: int = 512
    density: float = 0.8
    branch_prob: float = 0.12
    curvature: float = 0.35
    road_width: float = 3.0
    noise: float = 0.5

    # dataset assembly
    samples_per_world: int = 0
    off_road_fraction: float = 0.15
    holdout_worlds: int = 2

    # unsupervised pretraining and structure adaptation
    initial_hidden: int = 64
    pretrain_epochs: int = 2
    pretrain_lr: float = 1e-4
    cd_k: int = 1
    wd_gamma: float = 0.9
    gen_threshold: float = 1e9
    ann_threshold: float = 1e-12
    layer_wd_threshold: float = 1e9
    layer_energy_threshold: float = 0.0
    j_max: int = 256
    l_max: int = 2
    pretrain_sample: int = 3000

    # supervised head training
    train_epochs: int = 30
    train_lr: float = 4.0
    momentum: float = 0.9
    batch_size: int = 64
    head_scale: float = 0.01

    # inference
    seed_spacing: float = 48.0
    step_budget: int = 100000

    # rendering
    overlay_width: float = 2.0


def _parse_value(name, text, target):
    if target is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {text!r}")
    try:
        return target(text)
    except ValueError:
        raise ConfigError(
            f"{name}: expected {target.__name__}, got {text!r}") from None


_FIELDS = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def set_field(cfg: RunConfig, name, text) -> None:
    """Assign one field from its text form, with type checking."""
    if name not in _FIELDS:
        known = ", ".join(sorted(_FIELDS))
        raise ConfigError(f"unknown config key {name!r} (known: {known})")
    setattr(cfg, name, _parse_value(name, text, _FIELDS[name]))


def load_config(path, cfg: RunConfig | None = None) -> RunConfig:
    """Read key = value lines over the given (or default) config.

    Blank lines and # comments are ignored.  Unknown keys and type
    mismatches raise ConfigError with the offending location.
    """
    cfg = cfg if cfg is not None else RunConfig()
    try:
        fh = open(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(
                    f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            try:
                set_field(cfg, key.strip(), value.strip())
            except ConfigError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return cfg


def apply_overrides(cfg: RunConfig, pairs) -> RunConfig:
    """Apply repeated key=value override strings in order."""
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override must be key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        set_field(cfg, key.strip(), value.strip())
    return cfg


def save_config(cfg: RunConfig, path) -> None:
    """Write every field as key = value, loadable by load_config."""
    with open(path, "w") as fh:
        for f in dataclasses.fields(cfg):
            fh.write(f"{f.name} = {getattr(cfg, f.name)!r}\n")


def validate_config(cfg: RunConfig) -> RunConfig:
    """Check cross-field invariants.  Returns cfg for chaining."""
    if not 0.0 < cfg.walk_threshold < 1.0:
        raise ConfigError(
            f"walk_threshold must lie in (0, 1), got {cfg.walk_threshold}")
    for name in ("step_distance", "snap_radius", "match_radius",
                 "seed_spacing", "overlay_width"):
        if getattr(cfg, name) <= 0:
            raise ConfigError(f"{name} must be > 0, got {getattr(cfg, name)}")
    if cfg.snap_radius >= cfg.step_distance:
        raise ConfigError(
            f"snap_radius {cfg.snap_radius} must be smaller than the step "
            f"distance {cfg.step_distance}")
    if cfg.window not in ALLOWED_WINDOW_SIZES:
        raise ConfigError(
            f"window must be one of {ALLOWED_WINDOW_SIZES}, got {cfg.window}")
    if cfg.n_bins < 1:
        raise ConfigError(f"n_bins must be >= 1, got {cfg.n_bins}")
    for name in ("initial_hidden", "pretrain_epochs", "cd_k", "j_max",
                 "l_max", "train_epochs", "batch_size", "world_size",
                 "step_budget", "pretrain_sample"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be >= 1, got {getattr(cfg, name)}")
    if cfg.holdout_worlds < 0:
        raise ConfigError(
            f"holdout_worlds must be >= 0, got {cfg.holdout_worlds}")
    if not 0.0 <= cfg.momentum < 1.0:
        raise ConfigError(f"momentum must lie in [0, 1), got {cfg.momentum}")
    return cfg
