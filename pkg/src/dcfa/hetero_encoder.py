"""Association-view encoder: sampled multi-head attention alternated with a GNN layer.

Node features live in one (n_drugs + n_microbes) x d matrix. Each block runs
the transformer layer over every node's attention-sample set, then one round
of neighbour message passing, then re-selects the sample sets.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .graphs import HeteroGraph, update_samples
from .init import glorot


@dataclass
class TransformerLayerParams:
    # per-head d x (d/m) maps packed column-wise: head h owns columns h*dk:(h+1)*dk
    w_query: nx.Tensor
    w_key: nx.Tensor
    w_value: nx.Tensor
    w_out: nx.Tensor
    heads: int


@dataclass
class GnnLayerParams:
    w_message: nx.Tensor  # d x d
    w_combine: nx.Tensor  # 2d x d


@dataclass
class BlockParams:
    attn: TransformerLayerParams | None = None
    gnn: GnnLayerParams | None = None
    gcn: nx.Tensor | None = None  # replaces the GNN layer under the GCN ablation
    u: nx.Tensor | None = None  # sample-update scoring matrix


@dataclass
class HeteroOptions:
    heads: int = 4
    residual: bool = True
    soft_bias: bool = True
    no_trans: bool = False
    no_gnn: bool = False
    attention_swap: bool = False
    gcn_swap: bool = False


@dataclass
class HeteroEncoderState:
    graph: HeteroGraph
    mean_op: np.ndarray
    gcn_op: np.ndarray | None = None

    @classmethod
    def from_graph(cls, graph: HeteroGraph, gcn_swap: bool = False) -> "HeteroEncoderState":
        return cls(graph, graph.mean_operator(), graph.gcn_operator() if gcn_swap else None)


@dataclass
class HeteroOutput:
    features: nx.Tensor
    schedule: list[np.ndarray] = field(default_factory=list)  # sample sets used by each block
    next_samples: np.ndarray | None = None


def init_block_params(rng: np.random.Generator, dim: int, opts: HeteroOptions,
                      prefix: str) -> tuple[BlockParams, dict[str, nx.Tensor]]:
    named: dict[str, nx.Tensor] = {}

    def p(name, fan_in, fan_out):
        t = nx.parameter(glorot(rng, fan_in, fan_out))
        named[f"{prefix}.{name}"] = t
        return t

    bp = BlockParams()
    if not opts.no_trans and not opts.attention_swap:
        bp.attn = TransformerLayerParams(
            p("attn.W_query", dim, dim), p("attn.W_key", dim, dim),
            p("attn.W_value", dim, dim), p("attn.W_out", dim, dim), opts.heads,
        )
    if not opts.no_gnn:
        if opts.gcn_swap:
            bp.gcn = p("gcn.W", dim, dim)
        else:
            bp.gnn = GnnLayerParams(p("gnn.W_message", dim, dim), p("gnn.W_combine", 2 * dim, dim))
    bp.u = p("U", dim, dim)
    return bp, named


def init_node_features(drug_sim, microbe_sim, proj_drug, proj_microbe) -> nx.Tensor:
    """Drug rows X^d · P_d stacked over microbe rows X^m · P_m."""
    xd, xm = nx.constant(drug_sim), nx.constant(microbe_sim)
    if xd.shape[1] != proj_drug.shape[0] or xm.shape[1] != proj_microbe.shape[0]:
        raise nx.DimensionError(
            f"similarity {xd.shape}/{xm.shape} vs projections {proj_drug.shape}/{proj_microbe.shape}")
    return nx.concat([nx.matmul(xd, proj_drug), nx.matmul(xm, proj_microbe)], axis=0)


def _sample_bias(h: nx.Tensor, samples: np.ndarray, u: nx.Tensor) -> nx.Tensor:
    # <h_i U, h_c> / sqrt(d) for every sample c of node i -> (n, s)
    return nx.scale(nx.sampled_dot(nx.matmul(h, u), h, samples), 1.0 / np.sqrt(h.shape[1]))


def _check_samples(h: nx.Tensor, samples: np.ndarray) -> None:
    if samples.ndim != 2 or samples.shape[0] != h.shape[0] or samples.shape[1] == 0:
        raise ValueError("every node needs a non-empty sample set")


def attend(h: nx.Tensor, samples: np.ndarray, params: TransformerLayerParams,
           u: nx.Tensor | None = None) -> tuple[nx.Tensor, np.ndarray]:
    """Concatenated head outputs before ``w_out`` and the weights (n, m, s)."""
    _check_samples(h, samples)
    if h.shape[1] % params.heads:
        raise nx.DimensionError(f"dim {h.shape[1]} not divisible by {params.heads} heads")
    bias = _sample_bias(h, samples, u) if u is not None else None
    return nx.sampled_attention(nx.matmul(h, params.w_query), nx.matmul(h, params.w_key),
                                nx.matmul(h, params.w_value), samples, params.heads, bias)


def transformer_layer(h: nx.Tensor, samples: np.ndarray, params: TransformerLayerParams,
                      residual: bool = True, u: nx.Tensor | None = None) -> nx.Tensor:
    """Multi-head attention of every node over its sample set.

    Queries come from the node's own row, keys and values from its samples.
    Heads are concatenated and projected by ``w_out``; with ``residual`` the
    input is added back and the sum layer-normalised. ``u`` adds the
    sample-update score as an attention bias.
    """
    heads, _ = attend(h, samples, params, u)
    out = nx.matmul(heads, params.w_out)
    return nx.layer_norm(nx.add(h, out)) if residual else out


def plain_attention_layer(h: nx.Tensor, samples: np.ndarray, residual: bool = True,
                          u: nx.Tensor | None = None) -> nx.Tensor:
    """Single-head attention without query/key/value/output projections."""
    _check_samples(h, samples)
    bias = _sample_bias(h, samples, u) if u is not None else None
    out, _ = nx.sampled_attention(h, h, h, samples, 1, bias)
    return nx.layer_norm(nx.add(h, out)) if residual else out


def gnn_layer(h: nx.Tensor, mean_op: np.ndarray, params: GnnLayerParams) -> nx.Tensor:
    """h_M = ReLU(mean_k h_k W_msg); h' = ReLU([h ‖ h_M] W_comb). Isolated nodes get h_M = 0."""
    hm = nx.relu(nx.matmul(mean_op, nx.matmul(h, params.w_message)))
    return nx.relu(nx.matmul(nx.concat([h, hm], axis=1), params.w_combine))


def gcn_layer(h: nx.Tensor, gcn_op: np.ndarray, w: nx.Tensor) -> nx.Tensor:
    return nx.relu(nx.matmul(gcn_op, nx.matmul(h, w)))


def hetero_forward(h0: nx.Tensor, state: HeteroEncoderState, blocks: list[BlockParams],
                   opts: HeteroOptions, samples: np.ndarray | None = None,
                   schedule: list[np.ndarray] | None = None) -> HeteroOutput:
    """Run all blocks. Sample selection is discrete and carries no gradient.

    With ``schedule`` given, block b uses ``schedule[b]`` instead of the
    freshly updated sets (used to freeze selection during gradient checks).
    """
    cur = state.graph.samples if samples is None else samples
    h = h0
    used = []
    for b, bp in enumerate(blocks):
        if schedule is not None:
            cur = schedule[b]
        used.append(cur)
        bias_u = bp.u if opts.soft_bias else None
        if opts.attention_swap and not opts.no_trans:
            h = plain_attention_layer(h, cur, opts.residual, bias_u)
        elif bp.attn is not None:
            h = transformer_layer(h, cur, bp.attn, opts.residual, bias_u)
        if bp.gnn is not None:
            h = gnn_layer(h, state.mean_op, bp.gnn)
        elif bp.gcn is not None:
            h = gcn_layer(h, state.gcn_op, bp.gcn)
        cur = update_samples(state.graph, h.data, bp.u.data, cur)
    return HeteroOutput(h, used, cur)


def split_views(h: nx.Tensor, n_drugs: int) -> tuple[nx.Tensor, nx.Tensor]:
    n = h.shape[0]
    return nx.slice_axis(h, 0, n_drugs, 0), nx.slice_axis(h, n_drugs, n, 0)
