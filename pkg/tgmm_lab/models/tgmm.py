# tgmm_lab/models/tgmm.py
"""
Temporal Graph MLP-Mixer.

    node_encode -> node_mixer ------------------------------\
               \-> patch_encode (GINE + mean pool) -> patch_mixer -> readout

All tensors carry a leading batch axis: inputs [B, N, W, C_in], output
[B, N, H, C_out]. A single WindowSample is treated as a batch of one.
"""

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ..errors import ContractViolation
from ..numcore import ParameterSet, Tensor, glorot_uniform
from ..numcore import ops
from ..tools.graphpart import PatchPartition
from ..tools.windows import WindowBatch, WindowSample, as_batch
from .layers import add_gine_params, add_mixer_params, add_mlp_params, directed, gine_layer, mix_axis, mlp

ENCODERS = ("gnn",)


@dataclass
class TGMMConfig:
    window: int = 12
    horizon: int = 12
    in_channels: int = 1
    out_channels: int = 1
    node_dim: int = 64
    patch_dim: int = 128
    gnn_layers: int = 2
    node_mixer_layers: int = 3
    patch_mixer_layers: int = 2
    expansion: int = 2
    dropout_gnn: float = 0.1
    dropout_mixer: float = 0.3
    dropout_readout: float = 0.1
    num_patches: Optional[int] = None
    imbalance: float = 0.1
    encoder: str = "gnn"

    def __post_init__(self):
        for name in ("window", "horizon", "in_channels", "out_channels", "node_dim", "patch_dim",
                     "gnn_layers", "node_mixer_layers", "patch_mixer_layers", "expansion"):
            if getattr(self, name) < 1:
                raise ContractViolation(f"model.{name} must be >= 1, got {getattr(self, name)}")
        for name in ("dropout_gnn", "dropout_mixer", "dropout_readout"):
            r = getattr(self, name)
            if not 0.0 <= r < 1.0:
                raise ContractViolation(f"model.{name} must be in [0, 1), got {r}")
        if self.num_patches is not None and self.num_patches < 1:
            raise ContractViolation(f"model.num_patches must be >= 1, got {self.num_patches}")
        if self.imbalance < 0:
            raise ContractViolation(f"model.imbalance must be >= 0, got {self.imbalance}")
        if self.encoder == "mlp":
            raise ContractViolation("model.encoder 'mlp' (pure-MLP patch encoder) is not implemented; use 'gnn'")
        if self.encoder not in ENCODERS:
            raise ContractViolation(f"unknown model.encoder {self.encoder!r}; expected one of {list(ENCODERS)}")


class TemporalGraphMixer:
    kind = "tgmm"

    def __init__(self, config: TGMMConfig, part: PatchPartition, seed: int = 0):
        if not part.halos_filled:
            raise ContractViolation("TemporalGraphMixer needs a partition with halos filled")
        if config.num_patches is not None and config.num_patches != part.num_patches:
            raise ContractViolation(
                f"config asks for {config.num_patches} patches, partition has {part.num_patches}")
        self.config = config
        self.partition = part
        self.num_nodes = part.num_nodes
        self._build_patch_index(part)
        self.params = self._init_params(np.random.default_rng(seed))

    # ------------------------------------------------------
    # setup
    # ------------------------------------------------------
    def _build_patch_index(self, part: PatchPartition) -> None:
        N, P = part.num_nodes, part.num_patches
        counts = np.array([len(m) for m in part.membership], dtype=np.int64)
        if (counts == 0).any():
            raise ContractViolation(f"node(s) {np.flatnonzero(counts == 0).tolist()} belong to no patch")
        sizes = np.array([len(h) for h in part.halo_patches], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        # disjoint union of all halo subgraphs
        self.gather_idx = np.concatenate(part.halo_patches).astype(np.int64)
        self.patch_of = np.repeat(np.arange(P), sizes)
        srcs, dsts, wts = [], [], []
        for p in range(P):
            s, d, w = directed(part.local_edges[p], part.local_weights[p])
            srcs.append(s + offsets[p])
            dsts.append(d + offsets[p])
            wts.append(w)
        self.union_src = np.concatenate(srcs).astype(np.int64)
        self.union_dst = np.concatenate(dsts).astype(np.int64)
        self.union_w = np.concatenate(wts)
        self.inv_halo_size = (1.0 / sizes).reshape(P, 1, 1)
        avg = np.zeros((N, P))
        for i, ps in enumerate(part.membership):
            avg[i, ps] = 1.0 / len(ps)
        self.member_avg = avg

    def _init_params(self, rng: np.random.Generator) -> ParameterSet:
        c = self.config
        d, dp, W, P = c.node_dim, c.patch_dim, c.window, self.partition.num_patches
        ps = ParameterSet()
        add_mlp_params(ps, "encoder", 2 * c.in_channels, 2 * d, d, rng)
        for l in range(c.node_mixer_layers):
            add_mixer_params(ps, f"node_mixer.{l}.token", d, W, c.expansion, rng)
            add_mixer_params(ps, f"node_mixer.{l}.channel", d, d, c.expansion, rng)
        for l in range(c.gnn_layers):
            add_gine_params(ps, f"gine.{l}", d, rng)
        ps.add_linear("patch_proj", d, dp, rng)
        for l in range(c.patch_mixer_layers):
            add_mixer_params(ps, f"patch_mixer.{l}.temporal", dp, W, c.expansion, rng)
            add_mixer_params(ps, f"patch_mixer.{l}.spatial", dp, P, c.expansion, rng)
            add_mixer_params(ps, f"patch_mixer.{l}.feature", dp, dp, c.expansion, rng)
        ps.add_linear("readout.fc", d + dp, d, rng)
        ps.add("readout.temporal.weight", glorot_uniform(rng, W, c.horizon))
        ps.add("readout.temporal.bias", np.zeros(c.horizon))
        ps.add_linear("readout.head", d, c.out_channels, rng)
        return ps

    # ------------------------------------------------------
    # components
    # ------------------------------------------------------
    def node_encode(self, values: np.ndarray, mask: np.ndarray) -> Tensor:
        """[B, N, W, C_in] values and mask -> Z [B, N, W, d]."""
        c = self.config
        expected = (self.num_nodes, c.window, c.in_channels)
        if values.shape[-3:] != expected or mask.shape != values.shape:
            raise ContractViolation(
                f"node_encode: values {list(values.shape)} / mask {list(mask.shape)} do not match [B, {', '.join(map(str, expected))}]")
        u = np.concatenate([values, mask], axis=-1)
        return mlp(Tensor(u), self.params, "encoder")

    def node_mixer(self, z: Tensor, training: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
        """Per-node token mixing over W, then channel mixing over d; nodes never interact."""
        rate = self.config.dropout_mixer
        for l in range(self.config.node_mixer_layers):
            z = mix_axis(z, self.params, f"node_mixer.{l}.token", -2, rate, training, rng)
            z = mix_axis(z, self.params, f"node_mixer.{l}.channel", -1, rate, training, rng)
        return z

    def patch_encode(self, z: Tensor, training: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
        """Z [B, N, W, d] -> patch tokens [B, P, W, d_p]."""
        P = self.partition.num_patches
        h = ops.take(z, self.gather_idx, axis=1)
        for l in range(self.config.gnn_layers):
            h = gine_layer(h, self.union_src, self.union_dst, self.union_w, self.params, f"gine.{l}", node_axis=1)
            h = ops.dropout(h, self.config.dropout_gnn, training, rng)
        pooled = ops.mul(ops.segment_sum(h, self.patch_of, P, axis=1), self.inv_halo_size)
        return ops.linear(pooled, self.params["patch_proj.weight"], self.params["patch_proj.bias"])

    def patch_mixer(self, t: Tensor, training: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
        """Three residual sub-blocks per layer, in order temporal (W), spatial (P), feature (d_p)."""
        rate = self.config.dropout_mixer
        for l in range(self.config.patch_mixer_layers):
            t = mix_axis(t, self.params, f"patch_mixer.{l}.temporal", 2, rate, training, rng)
            t = mix_axis(t, self.params, f"patch_mixer.{l}.spatial", 1, rate, training, rng)
            t = mix_axis(t, self.params, f"patch_mixer.{l}.feature", 3, rate, training, rng)
        return t

    def readout(self, z: Tensor, t: Tensor, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tensor:
        """Average each node's patch rows, concat with its node latents, feature MLP, project W -> H, head."""
        ps = self.params
        # [B, P, W, dp] -> [B, W, P, dp]; member_avg [N, P] @ -> [B, W, N, dp]
        c = ops.matmul(self.member_avg, ops.permute(t, (0, 2, 1, 3)))
        c = ops.permute(c, (0, 2, 1, 3))
        u = ops.concat([z, c], axis=-1)
        r = ops.gelu(ops.linear(u, ps["readout.fc.weight"], ps["readout.fc.bias"]))
        r = ops.dropout(r, self.config.dropout_readout, training, rng)
        r = ops.linear(ops.permute(r, (0, 1, 3, 2)), ps["readout.temporal.weight"], ps["readout.temporal.bias"])
        r = ops.permute(r, (0, 1, 3, 2))
        return ops.linear(r, ps["readout.head.weight"], ps["readout.head.bias"])

    # ------------------------------------------------------
    # full model
    # ------------------------------------------------------
    def forward(self, sample: Union[WindowSample, WindowBatch], training: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tensor:
        """Prediction in normalised units: [B, N, H, C_out], or [N, H, C_out] for a single WindowSample."""
        batch = as_batch(sample)
        z = self.node_encode(batch.inputs, batch.input_mask)
        z_nodes = self.node_mixer(z, training, rng)
        tokens = self.patch_mixer(self.patch_encode(z, training, rng), training, rng)
        y = self.readout(z_nodes, tokens, training, rng)
        if isinstance(sample, WindowSample):
            return ops.reshape(y, y.shape[1:])
        return y
