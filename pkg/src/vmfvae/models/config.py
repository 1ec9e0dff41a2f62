"""Model, annealing and training configurations."""
import math
from dataclasses import asdict, dataclass, fields

from ..errors import ConfigError

FAMILIES = ("gaussian", "vmf")
SETTINGS = ("standard", "inputless", "standard_bow", "inputless_bow")
SCORES = ("presence", "counts")
ANNEAL_KINDS = ("none", "sigmoid", "constant")


def _positive_int(name, value):
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")


def _positive_real(name, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value) or value <= 0:
        raise ConfigError(f"{name} must be a positive finite number, got {value!r}")


def _check_family(cfg):
    if cfg.family not in FAMILIES:
        raise ConfigError(f"family must be one of {FAMILIES}, got {cfg.family!r}")
    if cfg.family == "vmf":
        if cfg.latent_dim < 2:
            raise ConfigError("vmf needs latent_dim >= 2")
        _positive_real("kappa", cfg.kappa)


@dataclass(frozen=True)
class NvdmConfig:
    vocab_size: int
    hidden: int = 32
    latent_dim: int = 8
    family: str = "vmf"
    kappa: float = 50.0
    score: str = "presence"

    def __post_init__(self):
        for name in ("vocab_size", "hidden", "latent_dim"):
            _positive_int(name, getattr(self, name))
        _check_family(self)
        if self.score not in SCORES:
            raise ConfigError(f"score must be one of {SCORES}, got {self.score!r}")


@dataclass(frozen=True)
class NvrnnConfig:
    vocab_size: int
    embed_dim: int = 16
    hidden: int = 32
    latent_dim: int = 8
    family: str = "vmf"
    kappa: float = 50.0
    setting: str = "standard"
    learn_kappa: bool = False
    kappa_clip: tuple = (5.0, 500.0)

    def __post_init__(self):
        for name in ("vocab_size", "embed_dim", "hidden", "latent_dim"):
            _positive_int(name, getattr(self, name))
        _check_family(self)
        if self.setting not in SETTINGS:
            raise ConfigError(f"setting must be one of {SETTINGS}, got {self.setting!r}")
        clip = tuple(float(c) for c in self.kappa_clip)
        if len(clip) != 2 or not clip[0] < clip[1] or clip[0] < 1e-2 or not math.isfinite(clip[1]):
            raise ConfigError(f"kappa_clip must be [low, high] with 1e-2 <= low < high, got {self.kappa_clip!r}")
        object.__setattr__(self, "kappa_clip", clip)
        if self.learn_kappa and self.family != "vmf":
            raise ConfigError("learn_kappa needs family 'vmf'")

    @property
    def uses_tokens(self):
        return self.setting.startswith("standard")

    @property
    def uses_bow(self):
        return self.setting.endswith("_bow")


@dataclass(frozen=True)
class RnnlmConfig:
    vocab_size: int
    embed_dim: int = 16
    hidden: int = 32

    def __post_init__(self):
        for name in ("vocab_size", "embed_dim", "hidden"):
            _positive_int(name, getattr(self, name))


@dataclass(frozen=True)
class AnnealSchedule:
    kind: str = "none"
    warm_epochs: int = 20
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in ANNEAL_KINDS:
            raise ConfigError(f"anneal kind must be one of {ANNEAL_KINDS}, got {self.kind!r}")
        _positive_int("warm_epochs", self.warm_epochs)
        if not 0.0 < self.weight <= 1.0:
            raise ConfigError(f"anneal weight must be in (0, 1], got {self.weight!r}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    lr: float = 0.5
    lr_decay: float = 0.98
    clip_norm: float = 5.0
    eval_samples: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("epochs", "batch_size", "eval_samples"):
            _positive_int(name, getattr(self, name))
        for name in ("lr", "clip_norm"):
            _positive_real(name, getattr(self, name))
        if not 0.0 < self.lr_decay <= 1.0:
            raise ConfigError(f"lr_decay must be in (0, 1], got {self.lr_decay!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")


def anneal_weight(schedule, epoch):
    """KL weight for a 0-based ``epoch``.

    The sigmoid ramp is ``1 / (1 + exp(-s (epoch - W/2)))`` with ``s = 12 / W``,
    which gives ``e^-6 / (1 + e^-6) ~ 0.0025`` at epoch 0, 0.5 at ``W/2``,
    ``~0.9975`` at ``W`` and exactly 1 after ``W``.
    """
    if isinstance(epoch, bool) or int(epoch) != epoch or epoch < 0:
        raise ValueError(f"epoch must be a non-negative integer, got {epoch!r}")
    if schedule.kind == "none":
        return 1.0
    if schedule.kind == "constant":
        return float(schedule.weight)
    warm = schedule.warm_epochs
    if epoch > warm:
        return 1.0
    steep = 12.0 / warm
    return 1.0 / (1.0 + math.exp(-steep * (epoch - 0.5 * warm)))


CONFIG_TYPES = {"nvdm": NvdmConfig, "nvrnn": NvrnnConfig, "rnnlm": RnnlmConfig}


def config_to_dict(cfg):
    out = asdict(cfg)
    if "kappa_clip" in out:
        out["kappa_clip"] = list(out["kappa_clip"])
    return out


def config_from_dict(kind, data):
    cls = CONFIG_TYPES.get(kind)
    if cls is None:
        raise ConfigError(f"unknown model type {kind!r}")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {kind} config keys: {sorted(unknown)}")
    return cls(**data)
