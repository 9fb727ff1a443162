"""Network and training hyper-parameters, with a flat ``key = value`` text form."""
from __future__ import annotations

import ast
from dataclasses import dataclass, fields, replace

ENCODER_KERNEL = 3
ENCODER_STRIDE = 2
ENCODER_PADDING = 1


@dataclass(frozen=True)
class ModelConfig:
    latent_dim: int = 64
    encoder_channels: tuple[int, ...] = (8, 16, 32, 64, 128)
    initial_features: int = 32
    decoder_features: tuple[int, ...] = (32, 32, 16, 16, 3)
    cheb_order: int = 3
    rings: int = 3
    angular_samples: int = 8
    image_dims: tuple[int, int, int] = (64, 64, 64)
    lambda_r: float = 1.0
    lambda_kl: float = 1e-3
    learning_rate: float = 1e-4
    lr_decay: float = 0.99
    batch_size: int = 4
    epochs: int = 50
    iterations_per_epoch: int = 900
    finetune_epochs: int = 10
    augment: bool = True
    rotation_deg: float = 10.0
    scale_range: tuple[float, float] = (0.9, 1.1)
    seed: int = 0

    def __post_init__(self):
        for name in ("encoder_channels", "decoder_features", "image_dims", "scale_range"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.latent_dim < 1:
            raise ValueError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.cheb_order < 1:
            raise ValueError(f"cheb_order must be >= 1, got {self.cheb_order}")
        if len(self.decoder_features) != 5 or self.decoder_features[-1] != 3:
            raise ValueError(f"decoder needs 5 layer widths ending in 3, got {self.decoder_features}")
        if not self.encoder_channels or min(self.encoder_channels) < 1:
            raise ValueError(f"bad encoder channel schedule {self.encoder_channels}")
        if len(self.image_dims) != 3 or min(self.image_dims) < 8:
            raise ValueError(f"image_dims must be 3 values >= 8, got {self.image_dims}")
        if self.batch_size < 1 or self.epochs < 0 or self.iterations_per_epoch < 1:
            raise ValueError("batch_size and iterations_per_epoch must be >= 1, epochs >= 0")
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ValueError(f"bad scale_range {self.scale_range}")

    def encoder_output_dims(self) -> tuple[int, int, int]:
        dims = self.image_dims
        for _ in self.encoder_channels:
            dims = tuple((n + 2 * ENCODER_PADDING - ENCODER_KERNEL) // ENCODER_STRIDE + 1 for n in dims)
        return dims

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)!r}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        values = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, raw = line.partition("=")
            key = key.strip()
            if key in known:
                values[key] = ast.literal_eval(raw.strip())
        return cls(**values)

    def with_updates(self, **changes) -> "ModelConfig":
        return replace(self, **changes)
