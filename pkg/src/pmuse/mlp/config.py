"""Network and training hyperparameters, with shipped presets."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

DTYPES = ("float32", "float64")


@dataclass(frozen=True)
class MlpConfig:
    """Dense ReLU network trained with Adam on standardized MSE.

    ``dtype`` selects the arithmetic used for training and inference;
    float32 is roughly twice as fast on CPU, float64 is used for gradient
    checks.
    """

    hidden_layers: int = 4
    width: int = 500
    dropout_rate: float = 0.3
    batch_norm: bool = True
    learning_rate: float = 0.0207
    batch_size: int = 128
    max_epochs: int = 2000
    early_stop_patience: int = 10
    seed: int = 0
    train_seed: int | None = None  # shuffling and dropout; derived from seed when None
    dtype: str = "float32"
    normalize: bool = True
    bn_momentum: float = 0.99
    bn_epsilon: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-7

    def __post_init__(self):
        if self.hidden_layers < 0:
            raise ValueError("hidden_layers must be >= 0")
        if self.hidden_layers and self.width < 1:
            raise ValueError("width must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if not 0.0 < self.learning_rate < 1.0:
            raise ValueError("learning_rate must lie in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be positive")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")
        if self.dtype not in DTYPES:
            raise ValueError(f"dtype must be one of {DTYPES}")
        if not 0.0 <= self.bn_momentum < 1.0:
            raise ValueError("bn_momentum must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "MlpConfig":
        known = {k: v for k, v in doc.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def with_overrides(self, **kw) -> "MlpConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


PRESETS = {
    # 118-bus network: 4 x 500 ReLU, Adam lr 0.0207, batch 128, patience 10
    "ieee118": MlpConfig(),
    # 2000-bus network
    "texas2000": MlpConfig(batch_size=256, learning_rate=0.001, max_epochs=3000),
    # quick runs for smoke tests and small cases
    "small": MlpConfig(hidden_layers=2, width=64, dropout_rate=0.0, learning_rate=0.003,
                       batch_size=64, max_epochs=300, early_stop_patience=20),
}


def preset(name: str, **overrides) -> MlpConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown MLP preset {name!r}; choose from {sorted(PRESETS)}") from None
    return base.with_overrides(**overrides)
