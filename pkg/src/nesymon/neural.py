"""Learned outcome predicate: embeddings, a recurrent encoder, an MLP head.

The truth value of the outcome predicate on a prefix is produced by a
fixed pipeline: categorical inputs pass through embedding tables, event
numeric measurements through a linear projection, the per-step vectors
through a stack of gated recurrent layers, and the final hidden state,
concatenated with the static block (case attributes, temporal scalars,
and any rule-expansion slots), through a small tanh MLP ending in a
sigmoid.  Outputs are clamped away from exactly 0 and 1 so downstream
log-based aggregation is always finite.

The recurrent scan runs through the fused kernel in ``_kernels`` (compiled
when available) and enters the autodiff graph as a single node.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .autodiff import (
    EPS,
    Parameter,
    Value,
    clamp_eps,
    concat,
    load_checkpoint,
    matmul,
    reshape,
    save_checkpoint,
    sigmoid,
    take_rows,
    tanh,
)
from .features import Batch, FeatureSchema


@dataclass(frozen=True)
class BackboneConfig:
    embed_dim: int = 64
    hidden_dim: int = 128
    layers: int = 2
    head_hidden: tuple[int, ...] = (64,)

    def __post_init__(self):
        dims = (self.embed_dim, self.hidden_dim, self.layers,
                *self.head_hidden)
        if any(int(d) <= 0 for d in dims):
            raise ValueError("all backbone dimensions must be positive")

    def to_dict(self) -> dict:
        return {"embed_dim": self.embed_dim, "hidden_dim": self.hidden_dim,
                "layers": self.layers, "head_hidden": list(self.head_hidden)}

    @classmethod
    def from_dict(cls, d: dict) -> "BackboneConfig":
        return cls(embed_dim=d["embed_dim"], hidden_dim=d["hidden_dim"],
                   layers=d["layers"], head_hidden=tuple(d["head_hidden"]))

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def gru_scan(x: Value, lengths: np.ndarray,
             layer_params: list[tuple[Parameter, ...]]) -> Value:
    """Stacked recurrent scan as one autodiff node.

    x: (n, T, d) Value; lengths: (n,) true prefix lengths.  Each layer is
    (w_ih, w_hh, b_ih, b_hh).  Returns the top layer's final state
    (n, hidden); padding rows beyond a row's length neither change the
    output nor receive gradient.
    """
    weights = [(w_ih.data, w_hh.data, b_ih.data, b_hh.data)
               for (w_ih, w_hh, b_ih, b_hh) in layer_params]
    h_last, caches = _kernels.stacked_forward(x.data, lengths, weights)
    parents = (x, *[p for layer in layer_params for p in layer])
    out = Value(h_last, parents=parents)

    def back(g):
        dx, grads = _kernels.stacked_backward(caches, g)
        flat = [dx]
        for layer in grads:
            flat.extend(layer)
        return tuple(flat)

    out._backward = back
    return out


class PredicateModel:
    """G applied to encoded prefixes; owns every trainable parameter."""

    def __init__(self, config: BackboneConfig, schema: FeatureSchema,
                 expansion_width: int = 0, seed: int = 0):
        self.config = config
        self.schema = schema
        self.expansion_width = int(expansion_width)
        if self.expansion_width < 0:
            raise ValueError("expansion_width must be >= 0")
        self.params: dict[str, Parameter] = {}
        rng = np.random.default_rng(seed)
        d, h = config.embed_dim, config.hidden_dim

        self._init("embed.activity", (schema.activity_table_size, d), d, rng)
        for attr in schema.event_categorical:
            self._init(f"embed.event.{attr.name}", (attr.table_size, d), d,
                       rng)
        for attr in schema.case_categorical:
            self._init(f"embed.case.{attr.name}", (attr.table_size, d), d,
                       rng)
        e = len(schema.event_numeric)
        if e:
            self._init("proj.event.W", (2 * e, d), 2 * e, rng)
            self._init("proj.event.b", (d,), 2 * e, rng)

        in_dim = self._rnn_input_dim()
        for layer in range(config.layers):
            fan = in_dim if layer == 0 else h
            self._init(f"gru.l{layer}.W_ih", (fan, 3 * h), fan, rng)
            self._init(f"gru.l{layer}.W_hh", (h, 3 * h), h, rng)
            self._init(f"gru.l{layer}.b_ih", (3 * h,), fan, rng)
            self._init(f"gru.l{layer}.b_hh", (3 * h,), h, rng)

        width = self._head_input_dim()
        for i, out_w in enumerate(config.head_hidden):
            self._init(f"head.l{i}.W", (width, out_w), width, rng)
            self._init(f"head.l{i}.b", (out_w,), width, rng)
            width = out_w
        self._init("head.out.W", (width, 1), width, rng)
        self._init("head.out.b", (1,), width, rng)

    def _init(self, name: str, shape: tuple[int, ...], fan_in: int,
              rng: np.random.Generator) -> None:
        bound = 1.0 / np.sqrt(fan_in)
        self.params[name] = Parameter(rng.uniform(-bound, bound, shape), name)

    def _rnn_input_dim(self) -> int:
        d = self.config.embed_dim
        dim = d * (1 + len(self.schema.event_categorical))
        if self.schema.event_numeric:
            dim += d
        return dim

    def _head_input_dim(self) -> int:
        return (self.config.hidden_dim
                + self.config.embed_dim * len(self.schema.case_categorical)
                + 2 * self.schema.n_static_numeric
                + self.expansion_width)

    @property
    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def _gru_layers(self) -> list[tuple[Parameter, ...]]:
        return [
            (self.params[f"gru.l{i}.W_ih"], self.params[f"gru.l{i}.W_hh"],
             self.params[f"gru.l{i}.b_ih"], self.params[f"gru.l{i}.b_hh"])
            for i in range(self.config.layers)
        ]

    def forward(self, batch: Batch) -> Value:
        """Truth degrees for the batch, shape (n,), all strictly in (0, 1)."""
        if len(batch) == 0:
            raise ValueError("cannot run the model on an empty batch")
        if batch.expansion.shape[1] != self.expansion_width:
            raise ValueError(
                f"batch has {batch.expansion.shape[1]} expansion slots, "
                f"model expects {self.expansion_width}")
        n, T = batch.act_idx.shape
        d = self.config.embed_dim

        parts = [take_rows(self.params["embed.activity"], batch.act_idx)]
        for j, attr in enumerate(self.schema.event_categorical):
            parts.append(take_rows(self.params[f"embed.event.{attr.name}"],
                                   batch.ev_cat[:, :, j]))
        if self.schema.event_numeric:
            raw = np.concatenate([batch.ev_num, batch.ev_pres], axis=2)
            flat = matmul(Value(raw.reshape(n * T, -1)),
                          self.params["proj.event.W"])
            flat = flat + self.params["proj.event.b"]
            parts.append(reshape(flat, (n, T, d)))
        x = concat(parts, axis=2) if len(parts) > 1 else parts[0]

        h = gru_scan(x, batch.lengths, self._gru_layers())

        head_parts: list[Value] = [h]
        for j, attr in enumerate(self.schema.case_categorical):
            head_parts.append(take_rows(self.params[f"embed.case.{attr.name}"],
                                        batch.case_cat[:, j]))
        statics = np.concatenate(
            [batch.static_num, batch.static_pres, batch.expansion], axis=1)
        if statics.shape[1]:
            head_parts.append(Value(statics))
        z = concat(head_parts, axis=1) if len(head_parts) > 1 else h

        for i in range(len(self.config.head_hidden)):
            z = tanh(matmul(z, self.params[f"head.l{i}.W"])
                     + self.params[f"head.l{i}.b"])
        z = matmul(z, self.params["head.out.W"]) + self.params["head.out.b"]
        truth = sigmoid(reshape(z, (n,)))
        return clamp_eps(truth, EPS, 1.0 - EPS)

    def predict(self, batch: Batch) -> np.ndarray:
        """Forward pass without keeping the graph; plain float outputs."""
        return self.forward(batch).data.copy()

    # -- persistence ----------------------------------------------------

    def save(self, path, extra_meta: dict | None = None) -> None:
        meta = {
            "config": self.config.to_dict(),
            "config_hash": self.config.config_hash(),
            "schema": self.schema.to_json(),
            "expansion_width": self.expansion_width,
        }
        if extra_meta:
            meta.update(extra_meta)
        save_checkpoint(path, self.parameters(), meta)

    @classmethod
    def load(cls, path) -> tuple["PredicateModel", dict]:
        arrays, meta = load_checkpoint(path)
        config = BackboneConfig.from_dict(meta["config"])
        schema = FeatureSchema.from_json(meta["schema"])
        model = cls(config, schema, meta["expansion_width"], seed=0)
        if set(arrays) != set(model.params):
            missing = sorted(set(model.params) - set(arrays))
            extra = sorted(set(arrays) - set(model.params))
            raise ValueError(f"checkpoint parameter mismatch: missing "
                             f"{missing}, unexpected {extra}")
        for name, param in model.params.items():
            if arrays[name].shape != param.data.shape:
                raise ValueError(
                    f"checkpoint shape mismatch for {name}: "
                    f"{arrays[name].shape} vs {param.data.shape}")
            param.data = arrays[name].astype(np.float64)
        return model, meta

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            p.data = arrays[name].copy()
