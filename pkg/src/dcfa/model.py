"""Full model: both encoders, divergence losses, fusion and the pair scorer."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .config import TrainConfig
from .convergence import fuse, init_fusion
from .data import Dataset, SplitPlan
from .divergence import adversarial_loss
from .graphs import KnnGraph, build_hetero_graph, build_knn_graph
from .hetero_encoder import (
    HeteroEncoderState,
    HeteroOptions,
    hetero_forward,
    init_block_params,
    init_node_features,
    split_views,
)
from .init import glorot
from .predictor import init_mlp, score_pairs, total_loss, weighted_bce
from .sim_encoder import gcn_forward, init_gcn_stack


@dataclass
class ModelContext:
    """Everything derived from (dataset, split, config) that is not trained."""

    ds: Dataset
    plan: SplitPlan
    cfg: TrainConfig
    drug_knn: KnnGraph
    microbe_knn: KnnGraph
    hetero: HeteroEncoderState
    train_pairs: np.ndarray
    train_labels: np.ndarray
    pos_weight: float

    @classmethod
    def build(cls, ds: Dataset, plan: SplitPlan, cfg: TrainConfig) -> "ModelContext":
        k_d = min(cfg.knn, ds.n_drugs - 1)
        k_m = min(cfg.knn, ds.n_microbes - 1)
        graph = build_hetero_graph(ds, plan, cfg.sample_size, cfg.seed)
        pos = np.asarray(plan.train_pos, dtype=np.int64).reshape(-1, 2)
        neg = np.asarray(plan.train_neg, dtype=np.int64).reshape(-1, 2)
        pairs = np.concatenate([pos, neg])
        labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
        if cfg.pos_weight > 0:
            w = cfg.pos_weight
        else:
            w = len(neg) / len(pos) if len(pos) else 1.0
        return cls(ds, plan, cfg, build_knn_graph(ds.drug_sim, k_d), build_knn_graph(ds.microbe_sim, k_m),
                   HeteroEncoderState.from_graph(graph, cfg.gcn_swap), pairs, labels, w)

    def hetero_options(self) -> HeteroOptions:
        c = self.cfg
        return HeteroOptions(c.heads, c.residual, c.soft_bias, c.no_trans, c.no_gnn,
                             c.attention_swap, c.gcn_swap)


@dataclass
class ForwardResult:
    z1_drug: nx.Tensor
    z1_microbe: nx.Tensor
    z2_drug: nx.Tensor
    z2_microbe: nx.Tensor
    f_drug: nx.Tensor
    f_microbe: nx.Tensor
    schedule: list
    next_samples: np.ndarray


@dataclass
class Losses:
    rel: nx.Tensor
    adv_drug: nx.Tensor
    adv_microbe: nx.Tensor
    total: nx.Tensor

    def values(self) -> tuple[float, float, float, float]:
        return tuple(float(t.data) for t in (self.rel, self.adv_drug, self.adv_microbe, self.total))


class DcfaModel:
    """Parameters plus forward pass. ``params`` is an ordered name -> tensor map."""

    def __init__(self, ctx: ModelContext, rng: np.random.Generator):
        self.ctx = ctx
        cfg = ctx.cfg
        d = cfg.dim
        ds = ctx.ds
        self.params: dict[str, nx.Tensor] = {}
        self.gcn_drug, named = init_gcn_stack(rng, ds.n_drugs, d, cfg.gcn_layers, cfg.dropout, "sim.drug")
        self.params.update(named)
        self.gcn_microbe, named = init_gcn_stack(rng, ds.n_microbes, d, cfg.gcn_layers, cfg.dropout, "sim.microbe")
        self.params.update(named)
        self.proj_drug = self._add("hetero.proj_drug", glorot(rng, ds.n_drugs, d))
        self.proj_microbe = self._add("hetero.proj_microbe", glorot(rng, ds.n_microbes, d))
        opts = ctx.hetero_options()
        self.blocks = []
        for b in range(cfg.blocks):
            bp, named = init_block_params(rng, d, opts, f"hetero.block{b + 1}")
            self.blocks.append(bp)
            self.params.update(named)
        self.fusion_drug, named = init_fusion(rng, d, cfg.fusion, "fusion.drug")
        self.params.update(named)
        self.fusion_microbe, named = init_fusion(rng, d, cfg.fusion, "fusion.microbe")
        self.params.update(named)
        self.mlp, named = init_mlp(rng, d, "mlp")
        self.params.update(named)
        for name, t in self.params.items():
            t.name = name
        self.samples = ctx.hetero.graph.samples.copy()

    def _add(self, name: str, value) -> nx.Tensor:
        t = nx.parameter(value, name)
        self.params[name] = t
        return t

    def census(self) -> dict[str, tuple[int, ...]]:
        return {k: t.shape for k, t in self.params.items()}

    def forward(self, training: bool = False, rng: np.random.Generator | None = None,
                samples: np.ndarray | None = None, schedule: list | None = None) -> ForwardResult:
        ctx, cfg = self.ctx, self.ctx.cfg
        ds = ctx.ds
        z2d = gcn_forward(ctx.drug_knn, ds.drug_sim, self.gcn_drug, training, rng)
        z2m = gcn_forward(ctx.microbe_knn, ds.microbe_sim, self.gcn_microbe, training, rng)
        h0 = init_node_features(ds.drug_sim, ds.microbe_sim, self.proj_drug, self.proj_microbe)
        out = hetero_forward(h0, ctx.hetero, self.blocks, ctx.hetero_options(),
                             self.samples if samples is None else samples, schedule)
        z1d, z1m = split_views(out.features, ds.n_drugs)
        fd = fuse(z1d, z2d, cfg.fusion, self.fusion_drug)
        fm = fuse(z1m, z2m, cfg.fusion, self.fusion_microbe)
        return ForwardResult(z1d, z1m, z2d, z2m, fd, fm, out.schedule, out.next_samples)

    def losses(self, fr: ForwardResult, pairs=None, labels=None) -> Losses:
        ctx, cfg = self.ctx, self.ctx.cfg
        pairs = ctx.train_pairs if pairs is None else pairs
        labels = ctx.train_labels if labels is None else labels
        logits = score_pairs(fr.f_drug, fr.f_microbe, pairs, self.mlp)
        l_rel = weighted_bce(logits, labels, ctx.pos_weight, "sum" if cfg.sum_reduction else "mean")
        adv_d = adversarial_loss(fr.z1_drug, fr.z2_drug, cfg.gamma, cfg.adv_close)
        adv_m = adversarial_loss(fr.z1_microbe, fr.z2_microbe, cfg.gamma, cfg.adv_close)
        b1 = 0.0 if cfg.no_adv_drug else cfg.beta1
        b2 = 0.0 if cfg.no_adv_microbe else cfg.beta2
        return Losses(l_rel, adv_d, adv_m, total_loss(l_rel, adv_d, adv_m, b1, b2))

    def predict(self, pairs: np.ndarray) -> np.ndarray:
        """Association probabilities in evaluation mode (no dropout, samples kept)."""
        fr = self.forward(training=False)
        return nx.sigmoid(score_pairs(fr.f_drug, fr.f_microbe, pairs, self.mlp)).data

    def score_matrix(self) -> np.ndarray:
        """Probabilities for every drug x microbe pair."""
        nd, nm = self.ctx.ds.n_drugs, self.ctx.ds.n_microbes
        ii, jj = np.meshgrid(np.arange(nd), np.arange(nm), indexing="ij")
        return self.predict(np.stack([ii.ravel(), jj.ravel()], axis=1)).reshape(nd, nm)
