import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import dacite

from .sat_defs import AugKinds, ClassifierTargets, CriterionKinds
from .sat_errors import ConfigurationError


@dataclass
class SATConfig:
    ################ Data config ################
    train_path: str = ""  # labeled pool (JSONL)
    test_path: str = ""
    dev_path: str = ""  # optional; sampled from the pool when empty
    unlabeled_path: str = ""  # optional extra unlabeled texts
    lexicon_path: str = ""  # token<TAB>syn1,syn2,...
    bt_forward_path: str = ""
    bt_backward_path: str = ""
    n_c: int = 10  # labeled examples per class
    n_unlabeled_per_class: int = 5000  # 0 = everything left in the pool
    n_dev_per_class: int = 2000

    ################ Algorithm config ################
    batch_size: int = 32  # B
    mu: int = 3  # unlabeled batch is mu * B
    lambda_u: float = 1.0
    tau: float = 0.95
    beta: float = 1e-4  # choice network rate
    eta: float = 1e-3  # main network rate
    optimizer: str = "sgd"
    criterion: str = CriterionKinds.CLASSIFIER
    classifier_target: str = ClassifierTargets.DISTRIBUTION
    alpha1: str = AugKinds.BT
    alpha2: str = AugKinds.SR

    ################ Augmentation config ################
    sr_rate: float = 0.30
    pd_prob: float = 0.10
    ri_rate: float = 0.10
    ds_drop: float = 0.5

    ################ Model config ################
    d_emb: int = 32
    d_hid: int = 64
    d_proj: int = 32
    temperature: float = 0.5
    init_scale: float = 0.1

    ################ Run config ################
    epochs: int = 50
    patience: int = 10
    seed: int = 0
    progress: bool = False

    def validate(self) -> "SATConfig":
        checks = [
            (0.0 < self.tau <= 1.0, f"tau must be in (0, 1], got {self.tau}"),
            (self.lambda_u >= 0.0, f"lambda_u must be >= 0, got {self.lambda_u}"),
            (self.beta > 0.0, f"beta must be > 0, got {self.beta}"),
            (self.eta > 0.0, f"eta must be > 0, got {self.eta}"),
            (self.mu >= 1, f"mu must be >= 1, got {self.mu}"),
            (self.batch_size >= 1, f"batch_size must be >= 1, got {self.batch_size}"),
            (self.n_c >= 1, f"n_c must be >= 1, got {self.n_c}"),
            (self.epochs >= 1, f"epochs must be >= 1, got {self.epochs}"),
            (self.patience >= 1, f"patience must be >= 1, got {self.patience}"),
            (self.n_unlabeled_per_class >= 0, "n_unlabeled_per_class must be >= 0"),
            (self.n_dev_per_class >= 0, "n_dev_per_class must be >= 0"),
            (self.criterion in CriterionKinds.ALL, f"unknown criterion {self.criterion!r}"),
            (self.classifier_target in ClassifierTargets.ALL, f"unknown classifier_target {self.classifier_target!r}"),
            (self.optimizer in ("sgd", "adagrad"), f"unknown optimizer {self.optimizer!r}"),
            (self.alpha1 in AugKinds.ALL, f"unknown augmenter {self.alpha1!r}"),
            (self.alpha2 in AugKinds.ALL, f"unknown augmenter {self.alpha2!r}"),
            (self.alpha1 != self.alpha2, f"alpha1 and alpha2 must differ, both are {self.alpha1!r}"),
            (0.0 < self.sr_rate < 1.0, f"sr_rate must be in (0, 1), got {self.sr_rate}"),
            (0.0 < self.pd_prob < 1.0, f"pd_prob must be in (0, 1), got {self.pd_prob}"),
            (0.0 < self.ri_rate < 1.0, f"ri_rate must be in (0, 1), got {self.ri_rate}"),
            (0.0 < self.ds_drop < 1.0, f"ds_drop must be in (0, 1), got {self.ds_drop}"),
            (min(self.d_emb, self.d_hid, self.d_proj) >= 1, "model dimensions must be >= 1"),
            (self.temperature > 0.0, f"temperature must be > 0, got {self.temperature}"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigurationError(message)
        return self

    def replace(self, **changes) -> "SATConfig":
        return dataclasses.replace(self, **changes).validate()


def _parse_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


_TYPE_HOOKS = {int: int, float: float, bool: _parse_bool, str: str}


def config_from_dict(data: dict) -> SATConfig:
    try:
        cfg = dacite.from_dict(
            data_class=SATConfig,
            data=data,
            config=dacite.Config(strict=True, type_hooks=_TYPE_HOOKS),
        )
    except dacite.UnexpectedDataError as e:
        raise ConfigurationError(f"unknown config keys: {sorted(e.keys)}") from e
    except (dacite.DaciteError, ValueError, TypeError) as e:
        raise ConfigurationError(f"invalid config value: {e}") from e
    return cfg.validate()


def parse_config_text(text: str, source: str = "<config>") -> dict:
    data = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"{source}:{lineno}: empty key")
        if key in data:
            raise ConfigurationError(f"{source}:{lineno}: duplicate key {key!r}")
        data[key] = value
    return data


def load_config(path: Union[str, Path, None] = None, **overrides) -> SATConfig:
    """Read a flat ``key = value`` file; ``overrides`` (non-None values) win over the file."""
    data = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigurationError(f"cannot read config {path}: {e}") from e
        data = parse_config_text(text, source=str(path))
    data.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(data)


def format_config(cfg: SATConfig) -> str:
    return "".join(f"{key} = {value}\n" for key, value in dataclasses.asdict(cfg).items())


def save_config(cfg: SATConfig, path: Union[str, Path]):
    Path(path).write_text(format_config(cfg), encoding="utf-8")
