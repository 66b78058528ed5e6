from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from ..encoding.vocab import Vocabulary

# config-file key -> attribute
KEYS = {
    "d": "d",
    "layers": "layers",
    "fusion-layer": "fusion_layer",
    "heads": "heads",
    "conv-channels": "conv_channels",
    "dropout": "dropout",
    "static-address-fusion": "static_address_fusion",
    "max-len": "max_len",
    "sequence-position": "sequence_position",
}


class ConfigError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class ModelConfig:
    d: int = 128
    layers: int = 8
    fusion_layer: int = 1
    heads: int = 8
    conv_channels: tuple = field(default=(16,) * 8)
    vocab_size: int = len(Vocabulary())
    max_len: int = 512
    max_position: int = 16
    dropout: float = 0.0
    static_address_fusion: bool = True
    sequence_position: bool = True

    def __post_init__(self):
        if not 1 <= self.fusion_layer < self.layers:
            raise ConfigError(f"need 1 <= fusion-layer < layers, got {self.fusion_layer}, {self.layers}")
        if self.d % self.heads:
            raise ConfigError(f"d={self.d} is not divisible by heads={self.heads}")
        if len(self.conv_channels) != 8 or min(self.conv_channels) < 1:
            raise ConfigError("conv-channels needs 8 positive widths")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")

    @classmethod
    def from_mapping(cls, mapping: dict, **overrides) -> "ModelConfig":
        """Build from config-file keys (strings); unknown keys are ignored."""
        kw = {}
        for key, attr in KEYS.items():
            if key not in mapping:
                continue
            raw = mapping[key]
            try:
                if attr == "conv_channels":
                    parts = [int(x) for x in str(raw).split(",")]
                    kw[attr] = tuple(parts * 8 if len(parts) == 1 else parts)
                elif attr == "dropout":
                    kw[attr] = float(raw)
                elif attr in ("static_address_fusion", "sequence_position"):
                    kw[attr] = _parse_bool(raw)
                else:
                    kw[attr] = int(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw!r}") from exc
        kw.update(overrides)
        return cls(**kw)

    def to_mapping(self) -> dict:
        values = asdict(self)
        out = {key: values[attr] for key, attr in KEYS.items()}
        out["conv-channels"] = ",".join(str(c) for c in self.conv_channels)
        out["static-address-fusion"] = int(self.static_address_fusion)
        out["sequence-position"] = int(self.sequence_position)
        return out

    def replace(self, **kw) -> "ModelConfig":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(kw)
        return ModelConfig(**values)
