"""Encoder + decoder bundle with its parameter set."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from tip.autodiff import Parameter, ParameterSet, Tape, Tensor, xavier_init
from tip.decoder import DistMultDecoder, NnDecoder
from tip.encoder import EncoderConfig, Variant, encode, encoder_shapes, gather_weights


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig
    num_proteins: int
    num_drugs: int
    num_relations: int
    nn_hidden: int = 16

    @property
    def variant(self) -> Variant:
        return self.encoder.variant

    def to_dict(self) -> dict:
        enc = asdict(self.encoder)
        enc["variant"] = self.encoder.variant.value
        enc["ppm_dims"] = list(enc["ppm_dims"])
        enc["ddm_dims"] = list(enc["ddm_dims"])
        return {
            "encoder": enc,
            "num_proteins": self.num_proteins,
            "num_drugs": self.num_drugs,
            "num_relations": self.num_relations,
            "nn_hidden": self.nn_hidden,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        return cls(
            encoder=EncoderConfig(**d["encoder"]),
            num_proteins=d["num_proteins"],
            num_drugs=d["num_drugs"],
            num_relations=d["num_relations"],
            nn_hidden=d.get("nn_hidden", 16),
        )

    def parameter_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        shapes = encoder_shapes(self.encoder, self.num_proteins, self.num_drugs, self.num_relations)
        d_z = self.encoder.embedding_dim
        if self.variant.decoder == "df":
            shapes.append(("df.rel", (self.num_relations, d_z)))
        else:
            shapes.append(("nn.w1", (2 * d_z, self.nn_hidden)))
            shapes.append(("nn.w2", (self.nn_hidden, self.num_relations)))
        return shapes


class TipModel:
    def __init__(self, config: ModelConfig, params: ParameterSet):
        self.config = config
        self.params = params

    @classmethod
    def initialise(cls, config: ModelConfig, seed: int = 0) -> TipModel:
        params = ParameterSet()
        for k, (name, shape) in enumerate(config.parameter_shapes()):
            if 0 in shape:
                value = np.zeros(shape)
            else:
                value = xavier_init(shape, seed=[seed, k])
            params.add(Parameter(name, value))
        return cls(config, params)

    def tensors(self, tape: Tape | None = None) -> dict[str, Tensor]:
        if tape is None:
            return {p.name: Tensor(p.value) for p in self.params}
        return {p.name: tape.watch(p) for p in self.params}

    def forward(self, graph, tape: Tape | None = None):
        """Return ``(Z_d, decoder)`` wired to ``tape`` (or untracked)."""
        t = self.tensors(tape)
        z = encode(graph, self.config.encoder, gather_weights(self.config.encoder, t))
        if self.config.variant.decoder == "df":
            dec = DistMultDecoder(t["df.rel"])
        else:
            dec = NnDecoder(t["nn.w1"], t["nn.w2"])
        return z, dec

    def embed(self, graph) -> np.ndarray:
        return self.forward(graph)[0].numpy()
