"""Performance estimators: representation similarity and tabular accuracy.

The similarity score compares per-layer feature matrices of a candidate
against a fixed reference stack::

    score = sum_i ||R_i^T X_i||_F^2 / (||R_i^T R_i||_F * ||X_i^T X_i||_F)

Each term is an uncentred linear-CKA value in [0, 1].

Candidates are represented by a small differentiable surrogate: a stem
layer followed by the cell DAG, where every gene picks the transform on its
edge. Training runs plain full-batch gradient descent on a single batch with
hand-derived gradients.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DivergenceError, NumericError, ShapeError
from .genotype import EDGES, NUM_NODES, Genotype, Operation

FeatureStack = Sequence[np.ndarray]

DATASETS = ("cifar10", "cifar100", "in16")

# receptive width on the (circular) feature axis for each conv op
CONV_WIDTH = {Operation.nor_conv_1x1: 1, Operation.nor_conv_3x3: 3}
POOL_WIDTH = 3


def _check_pair(xref, x):
    xref = np.asarray(xref, dtype=float)
    x = np.asarray(x, dtype=float)
    if xref.ndim != 2 or x.ndim != 2:
        raise ShapeError(f"expected 2-d matrices, got shapes {xref.shape} and {x.shape}")
    if xref.shape[0] != x.shape[0]:
        raise ShapeError(f"row counts differ: {xref.shape[0]} vs {x.shape[0]}")
    if not (np.isfinite(xref).all() and np.isfinite(x).all()):
        raise NumericError("feature matrices contain non-finite entries")
    return xref, x


def _layer_term_raw(xref, x):
    cross = xref.T @ x
    rr = xref.T @ xref
    gx = x.T @ x
    den = math.sqrt(np.vdot(rr, rr)) * math.sqrt(np.vdot(gx, gx))
    if den == 0.0:
        return 0.0
    return float(np.vdot(cross, cross) / den)


def layer_term(xref, x) -> float:
    """Similarity of one layer pair, in [0, 1].

    Zero-norm inputs score 0.
    """
    xref, x = _check_pair(xref, x)
    return min(_layer_term_raw(xref, x), 1.0)


def layer_term_grad(xref, x):
    """Return (term, d term / d x) with `xref` held fixed."""
    xref, x = _check_pair(xref, x)
    rr = xref.T @ xref
    gx = x.T @ x
    a = np.linalg.norm(rr)
    b = np.linalg.norm(gx)
    if a == 0.0 or b == 0.0:
        return 0.0, np.zeros_like(x)
    cross = xref.T @ x
    num = np.sum(cross**2)
    t = num / (a * b)
    # d num/dx = 2 R R^T x ; d ||x^T x||_F / dx = 2 x (x^T x) / ||x^T x||_F
    grad = 2.0 * (xref @ cross) / (a * b) - t * 2.0 * (x @ gx) / (b * b)
    return float(t), grad


def check_stack(stack: FeatureStack) -> None:
    if len(stack) < 1:
        raise ShapeError("feature stack must hold at least one layer")
    rows = {np.shape(m)[0] for m in stack}
    if len(rows) != 1:
        raise ShapeError(f"layers disagree on row count: {sorted(rows)}")


def rmi_score(ref: FeatureStack, cand: FeatureStack) -> float:
    """Sum of per-layer similarity terms; lies in [0, L]."""
    if len(ref) != len(cand):
        raise ShapeError(f"stack lengths differ: {len(ref)} vs {len(cand)}")
    check_stack(ref)
    check_stack(cand)
    return float(sum(layer_term(r, x) for r, x in zip(ref, cand)))


def _check_beta(beta):
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")


def combined_loss(cand: FeatureStack, ref: FeatureStack, task_loss: float, beta: float) -> float:
    """beta * (1 - score / L) + (1 - beta) * task_loss."""
    _check_beta(beta)
    if task_loss < 0:
        raise ValueError(f"task loss must be non-negative, got {task_loss}")
    dissim = 1.0 - rmi_score(ref, cand) / len(ref)
    return beta * dissim + (1.0 - beta) * task_loss


@dataclass
class ReferenceModel:
    stack: tuple[np.ndarray, ...]
    descriptor: str = "reference"

    def __post_init__(self):
        arrs = []
        for m in self.stack:
            m = np.array(m, dtype=float)
            m.setflags(write=False)
            arrs.append(m)
        self.stack = tuple(arrs)
        check_stack(self.stack)

    @property
    def num_layers(self) -> int:
        return len(self.stack)


@dataclass
class TrainSettings:
    batch: np.ndarray
    targets: np.ndarray
    epochs: int = 100
    beta: float = 0.8
    step: float = 1e-2

    def __post_init__(self):
        _check_beta(self.beta)
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.step <= 0:
            raise ValueError(f"step size must be positive, got {self.step}")
        if np.shape(self.batch)[0] != np.shape(self.targets)[0]:
            raise ShapeError("batch and targets have different row counts")


def band_mask(d: int, width: int) -> np.ndarray:
    """0/1 mask of entries within width//2 of the diagonal, wrapping around."""
    i = np.arange(d)
    dist = np.abs(i[:, None] - i[None, :])
    dist = np.minimum(dist, d - dist)
    return (dist <= width // 2).astype(float)


def pool_matrix(d: int) -> np.ndarray:
    m = band_mask(d, POOL_WIDTH)
    return m / m.sum(axis=1, keepdims=True)


@dataclass
class SurrogateNet:
    """Stem plus a DAG of edge transforms over `num_layers - 1` nodes.

    Node 0 is the stem output. Node j sums the transforms of its incoming
    edges. Nodes past the stem also feed the stem activation forward with
    their own output, so an edge leaving a node that received only `none`
    still sees a nonzero signal.
    """

    stem: np.ndarray
    edges: tuple[tuple[int, int, Operation], ...]
    weights: dict[int, np.ndarray] = field(default_factory=dict)
    num_layers: int = NUM_NODES

    def __post_init__(self):
        d = self.stem.shape[1]
        for k, (target, source, op) in enumerate(self.edges):
            if not 0 <= source < target < self.num_layers:
                raise ShapeError(f"edge {k} ({source}->{target}) outside a {self.num_layers}-node DAG")
            if op in CONV_WIDTH and self.weights[k].shape != (d, d):
                raise ShapeError(f"edge {k} weight has shape {self.weights[k].shape}, expected {(d, d)}")

    @property
    def width(self) -> int:
        return self.stem.shape[1]

    def copy(self) -> SurrogateNet:
        return copy.deepcopy(self)

    def parameters(self) -> list[np.ndarray]:
        """Trainable arrays in a fixed order: stem, then conv edges by position."""
        return [self.stem] + [self.weights[k] for k in sorted(self.weights)]


def build_surrogate(g: Genotype, in_width: int, width: int, seed: int) -> SurrogateNet:
    """Surrogate for `g` with weights drawn per (seed, edge position, op).

    Keying each block on its own edge means genotypes that share a gene also
    share that edge's weights.
    """
    stem = np.random.default_rng([seed, 0, 0]).normal(0.0, 1.0 / np.sqrt(in_width), size=(in_width, width))
    edges = []
    weights = {}
    for k, ((target, source), op) in enumerate(zip(EDGES, g.ops)):
        edges.append((target, source, op))
        if op in CONV_WIDTH:
            rng = np.random.default_rng([seed, k + 1, int(op)])
            w = rng.normal(0.0, 1.0 / np.sqrt(CONV_WIDTH[op]), size=(width, width))
            weights[k] = w * band_mask(width, CONV_WIDTH[op])
    return SurrogateNet(stem=stem, edges=tuple(edges), weights=weights, num_layers=NUM_NODES)


def _forward(net: SurrogateNet, batch: np.ndarray):
    d = net.width
    x0 = np.tanh(batch @ net.stem)
    xs = [x0] + [np.zeros((batch.shape[0], d)) for _ in range(net.num_layers - 1)]
    hs = [x0]
    conv_out = {}
    pool = pool_matrix(d)
    for j in range(1, net.num_layers):
        for k, (target, source, op) in enumerate(net.edges):
            if target != j or op == Operation.none:
                continue
            h = hs[source]
            if op == Operation.skip_connect:
                xs[j] = xs[j] + h
            elif op == Operation.avg_pool_3x3:
                xs[j] = xs[j] + h @ pool
            else:
                y = np.tanh(h @ (net.weights[k] * band_mask(d, CONV_WIDTH[op])))
                conv_out[k] = y
                xs[j] = xs[j] + y
        hs.append(xs[j] + x0)
    return xs, hs, conv_out


def forward(net: SurrogateNet, batch) -> list[np.ndarray]:
    """Feature stack of `net` on `batch`: stem output, then every node."""
    batch = np.asarray(batch, dtype=float)
    if batch.shape[1] != net.stem.shape[0]:
        raise ShapeError(f"batch width {batch.shape[1]} does not match stem input {net.stem.shape[0]}")
    return _forward(net, batch)[0]


def task_loss(stack: FeatureStack, targets) -> float:
    """Mean squared error of the last layer against the regression targets."""
    return float(np.mean((stack[-1] - targets) ** 2))


def loss_and_grad(net: SurrogateNet, ref: FeatureStack, batch, targets, beta: float):
    """Combined loss on one batch and its gradient for every trainable array.

    Gradients come back in the order of :meth:`SurrogateNet.parameters`.
    """
    _check_beta(beta)
    batch = np.asarray(batch, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if len(ref) != net.num_layers:
        raise ShapeError(f"reference has {len(ref)} layers, surrogate has {net.num_layers}")
    xs, hs, conv_out = _forward(net, batch)
    nl = net.num_layers
    d = net.width

    sim = 0.0
    gx = []
    for r, x in zip(ref, xs):
        t, g = layer_term_grad(r, x)
        sim += t
        gx.append(-beta / nl * g)
    resid = xs[-1] - targets
    mse = float(np.mean(resid**2))
    gx[-1] = gx[-1] + (1.0 - beta) * 2.0 * resid / resid.size
    loss = beta * (1.0 - sim / nl) + (1.0 - beta) * mse

    pool = pool_matrix(d)
    gh = [np.zeros_like(x) for x in xs]
    gw = {}
    gx0_extra = np.zeros_like(xs[0])
    for j in range(nl - 1, 0, -1):
        # hs[j] = xs[j] + xs[0]
        gj = gx[j] + gh[j]
        gx0_extra += gh[j]
        for k, (target, source, op) in enumerate(net.edges):
            if target != j or op == Operation.none:
                continue
            if op == Operation.skip_connect:
                gh[source] += gj
            elif op == Operation.avg_pool_3x3:
                gh[source] += gj @ pool.T
            else:
                mask = band_mask(d, CONV_WIDTH[op])
                dz = gj * (1.0 - conv_out[k] ** 2)
                gw[k] = (hs[source].T @ dz) * mask
                gh[source] += dz @ (net.weights[k] * mask).T
    g0 = gx[0] + gh[0] + gx0_extra
    gstem = batch.T @ (g0 * (1.0 - xs[0] ** 2))
    return loss, [gstem] + [gw[k] for k in sorted(net.weights)]


def train_single_batch(
    net: SurrogateNet,
    ref: ReferenceModel,
    settings: TrainSettings,
    callback: Callable[[int, float], None] | None = None,
):
    """Gradient descent on the combined loss for `settings.epochs` steps.

    Works on a copy of `net`. Returns the trained copy and its final
    similarity score against the reference. `callback(epoch, loss)` sees the
    loss before each update.
    """
    if np.shape(settings.batch)[0] != ref.stack[0].shape[0]:
        raise ShapeError("batch row count does not match the reference stack")
    net = net.copy()
    params = net.parameters()
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(settings.epochs):
            loss, grads = loss_and_grad(net, ref.stack, settings.batch, settings.targets, settings.beta)
            if not np.isfinite(loss):
                raise DivergenceError(epoch, loss)
            if callback is not None:
                callback(epoch, loss)
            for p, g in zip(params, grads):
                p -= settings.step * g
        stack = forward(net, settings.batch)
    if not all(np.isfinite(x).all() for x in stack):
        raise DivergenceError(settings.epochs, float("nan"))
    return net, rmi_score(ref.stack, stack)


def synth_forward(g: Genotype, batch, seed: int, width: int | None = None) -> list[np.ndarray]:
    """Feature stack of the seeded surrogate for `g` (no training)."""
    batch = np.asarray(batch, dtype=float)
    width = batch.shape[1] if width is None else width
    return forward(build_surrogate(g, batch.shape[1], width, seed), batch)


def make_reference(batch, seed: int, genotype: Genotype | None = None, width: int | None = None):
    """Synthetic reference: the surrogate of `genotype` (all 3x3 convs by default).

    Returns the ReferenceModel and regression targets taken from its last layer.
    """
    if genotype is None:
        genotype = Genotype((Operation.nor_conv_3x3,) * len(EDGES))
    stack = synth_forward(genotype, batch, seed, width)
    ref = ReferenceModel(tuple(stack), descriptor=f"surrogate {genotype} seed={seed}")
    return ref, np.array(stack[-1])


def tabular_accuracy(table, g: Genotype, dataset: str = "cifar10") -> float:
    """Stored test accuracy (percent) of `g` on `dataset`."""
    if dataset not in DATASETS:
        raise ValueError(f"unknown dataset {dataset!r}; choose from {DATASETS}")
    return table.value(g, f"{dataset}_test")
