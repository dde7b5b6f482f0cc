"""Residual gated projection head with hand-written gradients.

The head is a stack of gated linear unit layers, each a residual update

    y = x + sigmoid(x Wg + bg) * (x Wv + bv)

applied at the embedding width. With value weights and biases at zero the
head is exactly the identity, which is how training starts: the tuned
space begins as the frozen base space and moves only where the loss asks
it to. Gradients are computed by explicit reverse-mode passes (no autograd
dependency) so they can be verified against central differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Vector
from .errors import DimensionMismatchError, ParseError

N_LAYERS_DEFAULT = 3
GATE_INIT_SCALE = 0.01

FORMAT_TAG = "projection-head"
FORMAT_VERSION = 1


def _sigmoid(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


@dataclass
class _Layer:
    gate_w: np.ndarray
    gate_b: np.ndarray
    value_w: np.ndarray
    value_b: np.ndarray


class ProjectionHead:
    """Mutable training object; all parameters are float64 arrays."""

    def __init__(self, layers: list[_Layer]):
        if not layers:
            raise ValueError("head needs at least one layer")
        self.layers = layers
        self.dim = layers[0].gate_w.shape[0]
        for layer in layers:
            for mat in (layer.gate_w, layer.value_w):
                if mat.shape != (self.dim, self.dim):
                    raise ValueError("layer weight shape mismatch")
            for vec in (layer.gate_b, layer.value_b):
                if vec.shape != (self.dim,):
                    raise ValueError("layer bias shape mismatch")

    # -- construction ------------------------------------------------------

    @classmethod
    def initialize(cls, dim: int, *, n_layers: int = N_LAYERS_DEFAULT, seed: int = 0,
                   gate_scale: float = GATE_INIT_SCALE) -> "ProjectionHead":
        """Gate parameters uniform in +-gate_scale, value parameters zero.

        Zero value paths make the fresh head exactly the identity map.
        """
        rng = np.random.default_rng(seed)
        layers = []
        for _ in range(n_layers):
            layers.append(_Layer(
                gate_w=rng.uniform(-gate_scale, gate_scale, size=(dim, dim)),
                gate_b=rng.uniform(-gate_scale, gate_scale, size=dim),
                value_w=np.zeros((dim, dim)),
                value_b=np.zeros(dim),
            ))
        return cls(layers)

    @classmethod
    def identity(cls, dim: int, *, n_layers: int = N_LAYERS_DEFAULT) -> "ProjectionHead":
        layers = [_Layer(np.zeros((dim, dim)), np.zeros(dim),
                         np.zeros((dim, dim)), np.zeros(dim))
                  for _ in range(n_layers)]
        return cls(layers)

    def copy(self) -> "ProjectionHead":
        return ProjectionHead([
            _Layer(l.gate_w.copy(), l.gate_b.copy(), l.value_w.copy(), l.value_b.copy())
            for l in self.layers
        ])

    # -- parameter access --------------------------------------------------

    def params(self) -> dict[str, np.ndarray]:
        """Live parameter arrays keyed by a stable name."""
        out: dict[str, np.ndarray] = {}
        for i, layer in enumerate(self.layers):
            out[f"layer{i}.gate_w"] = layer.gate_w
            out[f"layer{i}.gate_b"] = layer.gate_b
            out[f"layer{i}.value_w"] = layer.value_w
            out[f"layer{i}.value_b"] = layer.value_b
        return out

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(arr) for name, arr in self.params().items()}

    def apply_gradients(self, grads: dict[str, np.ndarray], learning_rate: float) -> None:
        for name, arr in self.params().items():
            arr -= learning_rate * grads[name]

    def drift_from_identity(self) -> float:
        """L2 norm of all value-path parameters (gate params do not move a
        fresh head off the identity, value params do)."""
        total = 0.0
        for layer in self.layers:
            total += float(np.sum(layer.value_w ** 2)) + float(np.sum(layer.value_b ** 2))
        return float(np.sqrt(total))

    # -- forward / backward ------------------------------------------------

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward_cached(x)
        return y

    def forward_cached(self, x: np.ndarray):
        """Forward pass keeping per-layer activations for backward().

        Accepts a single vector (d,) or a batch (n, d).
        """
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise DimensionMismatchError(
                f"head expects width {self.dim}, got {x.shape[-1]}")
        cache = []
        out = x
        for layer in self.layers:
            gate = _sigmoid(out @ layer.gate_w + layer.gate_b)
            value = out @ layer.value_w + layer.value_b
            cache.append((out, gate, value))
            out = out + gate * value
        return out, cache

    def backward(self, cache, d_out: np.ndarray,
                 grads: dict[str, np.ndarray]) -> np.ndarray:
        """Accumulate parameter gradients for one cached forward pass.

        ``d_out`` is the loss gradient at the head output; the return value
        is the gradient at the head input (unused by training, handy for
        checking).
        """
        dy = np.asarray(d_out, dtype=np.float64)
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            x, gate, value = cache[i]
            dv = dy * gate
            da = dy * value * gate * (1.0 - gate)
            if x.ndim == 1:
                grads[f"layer{i}.gate_w"] += np.outer(x, da)
                grads[f"layer{i}.gate_b"] += da
                grads[f"layer{i}.value_w"] += np.outer(x, dv)
                grads[f"layer{i}.value_b"] += dv
            else:
                grads[f"layer{i}.gate_w"] += x.T @ da
                grads[f"layer{i}.gate_b"] += da.sum(axis=0)
                grads[f"layer{i}.value_w"] += x.T @ dv
                grads[f"layer{i}.value_b"] += dv.sum(axis=0)
            dy = dy + da @ layer.gate_w.T + dv @ layer.value_w.T
        return dy

    # -- persistence -------------------------------------------------------

    def save(self, path) -> None:
        """Versioned plain-text checkpoint; floats via repr so the round
        trip is bit-exact."""
        lines = [f"{FORMAT_TAG} {FORMAT_VERSION}",
                 f"dim {self.dim}",
                 f"layers {len(self.layers)}"]
        for name, arr in self.params().items():
            if arr.ndim == 2:
                lines.append(f"matrix {name} {arr.shape[0]} {arr.shape[1]}")
                for row in arr:
                    lines.append(" ".join(repr(v) for v in row.tolist()))
            else:
                lines.append(f"vector {name} {arr.shape[0]}")
                lines.append(" ".join(repr(v) for v in arr.tolist()))
        lines.append("end")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "ProjectionHead":
        with open(path, "r", encoding="utf-8") as fh:
            lines = [line.rstrip("\n") for line in fh]
        it = iter(enumerate(lines, start=1))

        def expect(prefix: str) -> tuple[int, str]:
            for lineno, line in it:
                if not line.strip():
                    continue
                if not line.startswith(prefix):
                    raise ParseError(f"expected {prefix!r}, got {line!r}", path, lineno)
                return lineno, line
            raise ParseError(f"unexpected end of file, wanted {prefix!r}", path)

        _, header = expect(FORMAT_TAG)
        version = header.split()[1]
        if int(version) != FORMAT_VERSION:
            raise ParseError(f"unsupported checkpoint version {version}", path)
        _, dim_line = expect("dim")
        dim = int(dim_line.split()[1])
        _, layers_line = expect("layers")
        n_layers = int(layers_line.split()[1])

        values: dict[str, np.ndarray] = {}
        for _ in range(n_layers * 4):
            lineno, decl = expect("")
            parts = decl.split()
            if parts[0] == "matrix":
                name, rows, cols = parts[1], int(parts[2]), int(parts[3])
                mat = np.empty((rows, cols))
                for r in range(rows):
                    lineno, row_line = next(it, (None, None))
                    if row_line is None:
                        raise ParseError("truncated matrix block", path, lineno)
                    row = [float(tok) for tok in row_line.split()]
                    if len(row) != cols:
                        raise ParseError(f"matrix row width {len(row)} != {cols}", path, lineno)
                    mat[r] = row
                values[name] = mat
            elif parts[0] == "vector":
                name, width = parts[1], int(parts[2])
                lineno, vec_line = next(it, (None, None))
                if vec_line is None:
                    raise ParseError("truncated vector block", path, lineno)
                vec = np.array([float(tok) for tok in vec_line.split()])
                if vec.shape[0] != width:
                    raise ParseError(f"vector width {vec.shape[0]} != {width}", path, lineno)
                values[name] = vec
            else:
                raise ParseError(f"unknown block {parts[0]!r}", path, lineno)
        expect("end")

        layers = []
        for i in range(n_layers):
            try:
                layers.append(_Layer(
                    gate_w=values[f"layer{i}.gate_w"],
                    gate_b=values[f"layer{i}.gate_b"],
                    value_w=values[f"layer{i}.value_w"],
                    value_b=values[f"layer{i}.value_b"],
                ))
            except KeyError as missing:
                raise ParseError(f"checkpoint missing block {missing}", path) from None
        head = cls(layers)
        if head.dim != dim:
            raise ParseError(f"declared dim {dim} != stored dim {head.dim}", path)
        return head


def head_forward(head: ProjectionHead, vector: Vector) -> Vector:
    """Apply the head to one embedding, staying in Vector space."""
    return Vector(head.forward(vector.values))
