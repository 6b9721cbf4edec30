"""Inter-agent communication: a transformer encoder stack over hidden states.

The stack maps the n agents' recurrent states (one row each) to n increment
vectors of the same width.  There are no positional embeddings, so the map
is permutation-equivariant, and the parameter count depends only on the
layer shapes, never on the team size.  The final output projection starts
at exactly zero, so an untrained stack adds nothing: the surrounding
network behaves as if communication were disabled until the projection
learns otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import Dense, EncoderLayer, Module, Tensor, TrainContext
from .rng import stream

# Encoder depth / feedforward width presets per benchmark scenario name.
SCENARIO_SHAPES = {
    "2c_vs_64zg": (2, 512),
    "5m_vs_6m": (1, 128),
    "27m_vs_30m": (1, 128),
    "MMM2": (3, 256),
    "6h_vs_8z": (4, 512),
    "3s5z_vs_3s6z": (3, 512),
}


@dataclass(frozen=True)
class CommConfig:
    num_layers: int = 1
    ffn_dim: int = 128
    model_dim: int = 64
    heads: int = 4
    dropout: float = 0.10

    def __post_init__(self):
        if self.num_layers < 1:
            raise ConfigError(f"num_layers must be >= 1, got {self.num_layers}")
        if self.ffn_dim < 1 or self.model_dim < 1:
            raise ConfigError("ffn_dim and model_dim must be positive")
        if self.model_dim % self.heads != 0:
            raise ConfigError(
                f"model_dim {self.model_dim} not divisible by heads {self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    @classmethod
    def for_scenario(cls, name: str, model_dim: int = 64, heads: int = 4,
                     dropout: float = 0.10) -> "CommConfig":
        layers, ffn = SCENARIO_SHAPES.get(name, (1, 128))
        return cls(num_layers=layers, ffn_dim=ffn, model_dim=model_dim,
                   heads=heads, dropout=dropout)


class CommStack(Module):
    """Stacked encoder layers plus a zero-initialized output projection.

    All parameters carry group="comm" so the learner can hand them to their
    own optimizer.
    """

    def __init__(self, config: CommConfig, seed: int):
        super().__init__()
        self.config = config
        rng = stream(seed, "comm-init")
        self.layers = [
            self._register(EncoderLayer(
                config.model_dim, config.heads, config.ffn_dim, config.dropout,
                rng, f"comm.layer{i}", group="comm"))
            for i in range(config.num_layers)
        ]
        self.out_proj = self._register(Dense(
            config.model_dim, config.model_dim, rng, "comm.out_proj",
            group="comm", zero_init=True))

    def forward(self, hidden: Tensor, mask: Optional[np.ndarray] = None,
                sets: int = 1, ctx: Optional[TrainContext] = None) -> Tensor:
        """Produce one increment row per input row.

        mask, when given, is a boolean reachability matrix: entry (i, j)
        allows agent i to attend agent j.  None means every pair
        communicates.  With sets > 1 the rows hold that many independent
        teams back to back; each team communicates only internally.
        """
        if hidden.cols != self.config.model_dim:
            raise ShapeError(
                f"expected width {self.config.model_dim}, got {hidden.shape}")
        x = hidden
        for layer in self.layers:
            x = layer(x, mask=mask, sets=sets, ctx=ctx)
        return self.out_proj(x)

    __call__ = forward
