from __future__ import annotations

from dataclasses import dataclass, field

from ..data_io import Vocab
from ..errors import ConfigError

# gate blocks inside the stacked LSTM weights, in this order
GATES = ("u", "i", "o")


@dataclass(frozen=True)
class ModelConfig:
    """Sizes and loss settings of the shared encoder/decoder.

    ``hidden_dim`` is the per-direction encoder width d; the decoder state,
    attention context and encoder summary are 2d wide, so the token and
    domain heads read a 4d feature ``[s_j, c_j]``.
    """

    vocab: Vocab
    domains: tuple[str, ...]
    hidden_dim: int = 200
    embed_dim: int = 100
    max_decode_len: int = 100
    init_range: float = 1.0
    reg_weight: float = 0.5
    decoder_reg: str = "mean"  # or "final"
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "domains", tuple(self.domains))
        if self.hidden_dim <= 0 or self.embed_dim <= 0:
            raise ConfigError("hidden_dim and embed_dim must be positive")
        if not self.domains:
            raise ConfigError("at least one domain is required")
        if len(set(self.domains)) != len(self.domains):
            raise ConfigError("domain names must be distinct")
        if self.max_decode_len < 1:
            raise ConfigError("max_decode_len must be >= 1")
        if self.init_range <= 0:
            raise ConfigError("init_range must be positive")
        if self.decoder_reg not in ("mean", "final"):
            raise ConfigError(f"decoder_reg must be 'mean' or 'final', got {self.decoder_reg!r}")

    @property
    def num_domains(self) -> int:
        return len(self.domains)

    @property
    def vocab_size(self) -> int:
        return self.vocab.size

    def domain_index(self, name: str) -> int:
        try:
            return self.domains.index(name)
        except ValueError:
            raise ConfigError(f"domain {name!r} is not part of the model") from None

    def to_json(self) -> dict:
        return {
            "vocab": self.vocab.to_json(),
            "domains": list(self.domains),
            "hidden_dim": self.hidden_dim,
            "embed_dim": self.embed_dim,
            "max_decode_len": self.max_decode_len,
            "init_range": self.init_range,
            "reg_weight": self.reg_weight,
            "decoder_reg": self.decoder_reg,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ModelConfig":
        data = dict(data)
        data["vocab"] = Vocab.from_json(data["vocab"])
        data["domains"] = tuple(data["domains"])
        return cls(**data)
