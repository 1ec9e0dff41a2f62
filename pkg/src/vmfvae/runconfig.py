"""JSON run configurations: schema validation and conversion to typed configs."""
import copy
import json
import os
from dataclasses import asdict, dataclass
from importlib import resources

import jsonschema

from .corpus import RESERVED
from .errors import ConfigError
from .models.config import AnnealSchedule, TrainConfig, config_from_dict, config_to_dict

RUN_CONFIG_SCHEMA = "run_config.schema.json"
REPORT_SCHEMA = "elbo_report.schema.json"
CORPUS_DEFAULTS = {"vocab_size_cap": 200, "max_len": 50}


def load_schema(name):
    return json.loads(resources.files("vmfvae").joinpath("schemas", name).read_text(encoding="utf-8"))


def validate(document, schema_name=RUN_CONFIG_SCHEMA):
    try:
        jsonschema.validate(document, load_schema(schema_name))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None


@dataclass
class RunConfig:
    """A validated run configuration with the corpus path made absolute."""

    raw: dict
    base_dir: str

    @property
    def seed(self):
        return self.raw["seed"]

    @property
    def model_type(self):
        return self.raw["model"]["type"]

    @property
    def corpus_path(self):
        path = self.raw["corpus"]["path"]
        return path if os.path.isabs(path) else os.path.normpath(os.path.join(self.base_dir, path))

    @property
    def corpus_options(self):
        return {**CORPUS_DEFAULTS, **{k: v for k, v in self.raw["corpus"].items() if k != "path"}}

    def model_config(self, vocab_size):
        fields = {k: v for k, v in self.raw["model"].items() if k != "type"}
        return config_from_dict(self.model_type, {"vocab_size": vocab_size, **fields})

    def anneal(self):
        return AnnealSchedule(**self.raw.get("anneal", {"kind": "none"}))

    def train_config(self):
        return TrainConfig(seed=self.seed, **self.raw["train"])

    def with_kappa(self, kappa):
        raw = copy.deepcopy(self.raw)
        if raw["model"]["type"] == "rnnlm" or raw["model"].get("family", "vmf") != "vmf":
            raise ConfigError("a kappa sweep needs a vmf model")
        raw["model"]["kappa"] = float(kappa)
        validate(raw)
        return RunConfig(raw, self.base_dir)

    def with_corpus(self, path):
        """Same run on the corpus prefix ``path`` (resolved against the working directory)."""
        raw = copy.deepcopy(self.raw)
        raw["corpus"]["path"] = os.path.abspath(path)
        return RunConfig(raw, self.base_dir)

    def with_setting(self, setting):
        raw = copy.deepcopy(self.raw)
        if raw["model"]["type"] != "nvrnn":
            raise ConfigError("settings apply to nvrnn models only")
        raw["model"]["setting"] = setting
        validate(raw)
        return RunConfig(raw, self.base_dir)

    def echo(self, vocab_size):
        """Fully resolved configuration, as written next to a run's outputs."""
        train = asdict(self.train_config())
        train.pop("seed")
        return {
            "version": 1,
            "seed": self.seed,
            "corpus": {"path": self.corpus_path, **self.corpus_options},
            "model": {"type": self.model_type,
                      **{k: v for k, v in config_to_dict(self.model_config(vocab_size)).items()
                         if k != "vocab_size"}},
            "anneal": asdict(self.anneal()),
            "train": train,
        }


def parse_run_config(document, base_dir="."):
    validate(document)
    cfg = RunConfig(copy.deepcopy(document), os.path.abspath(base_dir))
    # dataclass-level checks (e.g. kappa_clip ordering) surface as ConfigError too
    cfg.anneal()
    cfg.train_config()
    cfg.model_config(vocab_size=len(RESERVED) + 1)
    return cfg


def load_run_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            document = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return parse_run_config(document, os.path.dirname(os.path.abspath(path)))
