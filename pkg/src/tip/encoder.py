"""Protein -> drug -> drug-drug propagation encoder.

Three stages, each a message-passing layer family:

* protein graph module: GCN over P-P edges with a self term,
* graph-to-graph module: mean of target-protein embeddings per drug, fused
  with a reduced drug feature by concatenation or sum,
* drug graph module: relational GCN whose per-relation weights are linear
  combinations of a few shared bases.

Node features are one-hot and never materialised; a weight applied to a
one-hot input is the weight's own rows (or columns).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from tip.autodiff import (
    EdgeIndex,
    Tensor,
    add,
    basis_compose,
    concat_cols,
    matmul,
    mean_aggregate,
    relational_aggregate,
    relu,
    transpose,
)


class ConfigError(ValueError):
    pass


class Variant(str, Enum):
    TIP_CAT = "tip-cat"
    TIP_SUM = "tip-sum"
    DDM_DF = "ddm-df"
    DDM_NN = "ddm-nn"
    PPM_GGM_NN = "ppm-ggm-nn"
    DF = "df"

    @classmethod
    def parse(cls, name) -> Variant:
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            names = ", ".join(v.value for v in cls)
            raise ConfigError(f"unknown variant {name!r}; expected one of {names}") from None

    @property
    def stages(self) -> tuple[str, ...]:
        return {
            Variant.TIP_CAT: ("ppm", "ggm", "ddm"),
            Variant.TIP_SUM: ("ppm", "ggm", "ddm"),
            Variant.DDM_DF: ("ddm",),
            Variant.DDM_NN: ("ddm",),
            Variant.PPM_GGM_NN: ("ppm", "ggm"),
            Variant.DF: ("reduce",),
        }[self]

    @property
    def decoder(self) -> str:
        return "nn" if self.value.endswith("-nn") else "df"


@dataclass(frozen=True)
class EncoderConfig:
    variant: Variant = Variant.TIP_SUM
    ppm_dims: tuple[int, ...] = (32, 16)
    ggm_mode: str = "sum"
    ggm_protein_dim: int = 64
    ggm_drug_dim: int = 64
    ddm_dims: tuple[int, ...] = (32, 16)
    num_bases: int = 16
    # width of the reduced drug feature used alone by the DF baseline
    reduce_dim: int = 16

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        object.__setattr__(self, "ppm_dims", tuple(int(d) for d in self.ppm_dims))
        object.__setattr__(self, "ddm_dims", tuple(int(d) for d in self.ddm_dims))
        self.validate()

    @classmethod
    def for_variant(cls, variant, **overrides) -> EncoderConfig:
        v = Variant.parse(variant)
        if v in (Variant.TIP_CAT, Variant.PPM_GGM_NN):
            base = dict(ggm_mode="cat", ggm_protein_dim=16, ggm_drug_dim=48)
        else:
            base = dict(ggm_mode="sum", ggm_protein_dim=64, ggm_drug_dim=64)
        base.update(overrides)
        return cls(variant=v, **base)

    def validate(self) -> None:
        dims = [*self.ppm_dims, *self.ddm_dims, self.ggm_protein_dim, self.ggm_drug_dim,
                self.num_bases, self.reduce_dim]
        if any(d <= 0 for d in dims):
            raise ConfigError(f"all dimensions must be positive: {self}")
        if self.ggm_mode not in ("cat", "sum"):
            raise ConfigError(f"ggm_mode must be 'cat' or 'sum', got {self.ggm_mode!r}")
        if self.ggm_mode == "sum" and self.ggm_protein_dim != self.ggm_drug_dim:
            raise ConfigError("sum mode needs equal protein and drug widths")
        if "ppm" in self.variant.stages and not self.ppm_dims:
            raise ConfigError(f"{self.variant.value} needs at least one protein layer")
        if "ddm" in self.variant.stages and not self.ddm_dims:
            raise ConfigError(f"{self.variant.value} needs at least one drug-graph layer")

    @property
    def ggm_width(self) -> int:
        if self.ggm_mode == "cat":
            return self.ggm_protein_dim + self.ggm_drug_dim
        return self.ggm_protein_dim

    @property
    def embedding_dim(self) -> int:
        stages = self.variant.stages
        if "ddm" in stages:
            return self.ddm_dims[-1]
        if "ggm" in stages:
            return self.ggm_width
        return self.reduce_dim


@dataclass
class PpmLayer:
    weight: Tensor
    # projection for the self term when widths differ; None means identity
    residual: Tensor | None = None


@dataclass
class GgmUnit:
    w_h: Tensor
    w_d: Tensor


@dataclass
class DdmLayer:
    bases: Tensor  # (B, d_out, d_in)
    coeffs: Tensor  # (R, B)
    self_weight: Tensor  # (d_out, d_in)


def ppm_forward(pp: EdgeIndex, layers: Sequence[PpmLayer], features: Tensor | None = None) -> Tensor:
    """Stack of ``h' = ReLU(mean_j(h_j @ W) + self(h))`` over P-P edges.

    With one-hot input (``features=None``) the first layer has no self
    term: the identity row carries nothing to preserve.
    """
    h = features
    for k, layer in enumerate(layers):
        if h is None:
            h = relu(mean_aggregate(layer.weight, pp))
            continue
        if h.shape[1] != layer.weight.shape[0]:
            raise ConfigError(f"protein layer {k}: input width {h.shape[1]} vs {layer.weight.shape}")
        msg = mean_aggregate(matmul(h, layer.weight), pp)
        if layer.residual is not None:
            self_term = matmul(h, layer.residual)
        elif h.shape[1] == layer.weight.shape[1]:
            self_term = h
        else:
            raise ConfigError(f"protein layer {k} changes width and has no self projection")
        h = relu(add(msg, self_term))
    if h is None:
        raise ConfigError("protein module has no layers")
    return h


def ggm_forward(
    pd: EdgeIndex,
    protein_emb: Tensor,
    unit: GgmUnit,
    mode: str,
    drug_features: Tensor | None = None,
) -> Tensor:
    """Fuse pooled target-protein embeddings with reduced drug features.

    Drugs without targets get a zero protein block.
    """
    if protein_emb.shape[1] != unit.w_h.shape[0]:
        raise ConfigError(f"protein embedding width {protein_emb.shape[1]} vs W_h {unit.w_h.shape}")
    # mean-then-project equals project-then-mean and is cheaper (N^d <= N^p rows)
    h_prot = relu(matmul(mean_aggregate(protein_emb, pd), unit.w_h))
    h_drug = drug_reduce(unit.w_d, drug_features)
    if mode == "cat":
        return concat_cols(h_prot, h_drug)
    if mode == "sum":
        if h_prot.shape != h_drug.shape:
            raise ConfigError(f"sum mode shape mismatch {h_prot.shape} vs {h_drug.shape}")
        return add(h_prot, h_drug)
    raise ConfigError(f"unknown fusion mode {mode!r}")


def drug_reduce(w_d: Tensor, drug_features: Tensor | None = None) -> Tensor:
    """``ReLU(W_d v)``; for one-hot ``v`` this is ReLU of the weight rows."""
    if drug_features is None:
        return relu(w_d)
    return relu(matmul(drug_features, w_d))


def ddm_forward(dd: Sequence[EdgeIndex], h0: Tensor | None, layers: Sequence[DdmLayer]) -> Tensor:
    """Relational GCN with basis-composed relation weights and a weighted self loop.

    ``h0=None`` means one-hot drug input.  Only the edges in ``dd`` (the
    training graph) carry messages.
    """
    h = h0
    for k, layer in enumerate(layers):
        d_in = layer.self_weight.shape[1]
        if h is not None and h.shape[1] != d_in:
            raise ConfigError(f"drug layer {k}: input width {h.shape[1]} vs {d_in}")
        weights = basis_compose(layer.coeffs, layer.bases)
        msg = relational_aggregate(h, dd, weights)
        if h is None:
            self_term = transpose(layer.self_weight)
        else:
            self_term = matmul(h, transpose(layer.self_weight))
        h = relu(add(msg, self_term))
    if h is None:
        raise ConfigError("drug module has no layers")
    return h


@dataclass
class EncoderWeights:
    """Tensors for one forward pass, grouped by stage."""

    ppm: list[PpmLayer] = field(default_factory=list)
    ggm: GgmUnit | None = None
    ddm: list[DdmLayer] = field(default_factory=list)
    reduce: Tensor | None = None


def encode(graph, config: EncoderConfig, weights: EncoderWeights) -> Tensor:
    """Drug embedding matrix ``(N^d, embedding_dim)`` for the configured variant."""
    stages = config.variant.stages
    if stages == ("reduce",):
        return drug_reduce(weights.reduce)
    h0 = None
    if "ppm" in stages:
        protein_emb = ppm_forward(graph.pp_index, weights.ppm)
        h0 = ggm_forward(graph.pd_index, protein_emb, weights.ggm, config.ggm_mode)
    if "ddm" in stages:
        return ddm_forward(graph.dd_index, h0, weights.ddm)
    return h0


def encoder_shapes(config: EncoderConfig, num_proteins: int, num_drugs: int, num_relations: int):
    """Ordered ``(name, shape)`` list of every encoder parameter."""
    shapes: list[tuple[str, tuple[int, ...]]] = []
    stages = config.variant.stages
    if "ppm" in stages:
        d_in = num_proteins
        for k, d_out in enumerate(config.ppm_dims):
            shapes.append((f"ppm.{k}.weight", (d_in, d_out)))
            if k > 0 and d_in != d_out:
                shapes.append((f"ppm.{k}.residual", (d_in, d_out)))
            d_in = d_out
        shapes.append(("ggm.w_h", (d_in, config.ggm_protein_dim)))
        shapes.append(("ggm.w_d", (num_drugs, config.ggm_drug_dim)))
    if "ddm" in stages:
        d_in = config.ggm_width if "ggm" in stages else num_drugs
        for k, d_out in enumerate(config.ddm_dims):
            shapes.append((f"ddm.{k}.bases", (config.num_bases, d_out, d_in)))
            shapes.append((f"ddm.{k}.coeffs", (num_relations, config.num_bases)))
            shapes.append((f"ddm.{k}.self", (d_out, d_in)))
            d_in = d_out
    if stages == ("reduce",):
        shapes.append(("reduce.w_d", (num_drugs, config.reduce_dim)))
    return shapes


def gather_weights(config: EncoderConfig, tensors: dict[str, Tensor]) -> EncoderWeights:
    w = EncoderWeights()
    stages = config.variant.stages
    if "ppm" in stages:
        w.ppm = [
            PpmLayer(tensors[f"ppm.{k}.weight"], tensors.get(f"ppm.{k}.residual"))
            for k in range(len(config.ppm_dims))
        ]
        w.ggm = GgmUnit(tensors["ggm.w_h"], tensors["ggm.w_d"])
    if "ddm" in stages:
        w.ddm = [
            DdmLayer(tensors[f"ddm.{k}.bases"], tensors[f"ddm.{k}.coeffs"], tensors[f"ddm.{k}.self"])
            for k in range(len(config.ddm_dims))
        ]
    if stages == ("reduce",):
        w.reduce = tensors["reduce.w_d"]
    return w
