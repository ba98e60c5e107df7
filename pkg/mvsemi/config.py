"""JSON experiment configuration with strict key checking."""
from __future__ import absolute_import, division

from dataclasses import asdict, dataclass, field, fields
import json
import logging

from mvsemi.generators import GeneratorConfig
from mvsemi.model import IMPUTE_MODES, PREDICT_MODES, ModelConfig
from mvsemi.baselines import BaselineKind
from mvsemi.trainer import TrainConfig

logger = logging.getLogger(__name__)


class ConfigError(ValueError):

    def __init__(self, path, message):
        super(ConfigError, self).__init__("{}: {}".format(path or "<root>", message))
        self.path = path


@dataclass
class DataConfig(object):

    """Data source and the missingness/label protocol applied to it.

    Exactly one of ``generator``, ``view_paths`` or ``dataset_dir`` is set.
    """

    generator: GeneratorConfig = None
    view_paths: list = None
    label_path: str = None
    dataset_dir: str = None
    drop_rate: float = 0.0
    keep_fraction: float = 1.0
    standardize: bool = True
    calibrate: bool = True
    calibration_target: float = 0.9
    split_fractions: list = field(default_factory=lambda: [0.64, 0.16, 0.20])
    seed: int = 0

    def validate(self):
        sources = [self.generator is not None, self.view_paths is not None, self.dataset_dir is not None]
        if sum(sources) != 1:
            raise ConfigError("data", "exactly one of generator, view_paths or dataset_dir is required")
        if self.view_paths is None and self.label_path is not None:
            raise ConfigError("data.label_path", "only valid together with view_paths")
        if not 0 <= self.drop_rate < 1:
            raise ConfigError("data.drop_rate", "must lie in [0, 1)")
        if not 0 < self.keep_fraction <= 1:
            raise ConfigError("data.keep_fraction", "must lie in (0, 1]")
        if self.generator is not None:
            try:
                self.generator = self.generator.resolved()
            except (TypeError, ValueError) as e:
                raise ConfigError("data.generator", str(e))


@dataclass
class SweepConfig(object):

    axis: str = "alpha"
    grid: list = None
    fixed_other: float = None


@dataclass
class ExperimentConfig(object):

    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    method: str = "ours"
    seeds: list = field(default_factory=lambda: [0])
    output_dir: str = "runs"
    predict_mode: str = "posterior-mean"
    impute_mode: str = "mean"

    def validate(self):
        if self.data.generator is None and self.data.view_paths is None and self.data.dataset_dir is None:
            self.data.generator = GeneratorConfig()
        self.data.validate()
        for name, record in (("model", self.model), ("train", self.train)):
            try:
                record.validate()
            except (TypeError, ValueError) as e:
                raise ConfigError(name, str(e))
        try:
            BaselineKind(self.method)
        except ValueError:
            raise ConfigError("method", "unknown method {!r}; use one of {}".format(
                self.method, [k.value for k in BaselineKind]))
        if not self.seeds:
            raise ConfigError("seeds", "at least one seed is required")
        if self.predict_mode not in PREDICT_MODES:
            raise ConfigError("predict_mode", "must be one of {}".format(PREDICT_MODES))
        if self.impute_mode not in IMPUTE_MODES:
            raise ConfigError("impute_mode", "must be one of {}".format(IMPUTE_MODES))
        if self.sweep.axis not in ("alpha", "gamma"):
            raise ConfigError("sweep.axis", "must be 'alpha' or 'gamma'")
        return self

    def to_dict(self):
        return asdict(self)


# dataclass-typed fields of each record, for nested parsing
_NESTED = {
    ExperimentConfig: {"data": DataConfig, "model": ModelConfig, "train": TrainConfig,
                       "sweep": SweepConfig},
    DataConfig: {"generator": GeneratorConfig},
}


def _build(cls, payload, path):
    if not isinstance(payload, dict):
        raise ConfigError(path, "expected an object, got {}".format(type(payload).__name__))
    known = {f.name for f in fields(cls)}
    for key in sorted(payload):
        if key not in known:
            raise ConfigError("{}.{}".format(path, key) if path else key, "unknown key")
    kwargs = {}
    nested = _NESTED.get(cls, {})
    for key, value in payload.items():
        sub = "{}.{}".format(path, key) if path else key
        if key in nested and value is not None:
            kwargs[key] = _build(nested[key], value, sub)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(path, str(e))


def config_from_dict(payload):
    return _build(ExperimentConfig, payload, "").validate()


def load_config(path):
    try:
        with open(path, encoding="utf-8") as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError("", "{} is not valid JSON: {}".format(path, e))
    except OSError as e:
        raise ConfigError("", "cannot read {}: {}".format(path, e))
    logger.debug("Loaded config from %s", path)
    return config_from_dict(payload)
