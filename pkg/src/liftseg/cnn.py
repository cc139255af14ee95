"""Per-image unsupervised convolutional decomposition.

A small network is fitted to a single image: a three-block decomposition
path (1 -> 32 relu, 32 -> 32 relu, 32 -> K linear, all 3x3 kernels with
zero padding 1) produces K feature maps, and a one-block reconstruction
path maps their pointwise sum back to the image. Training minimizes

    balance        alpha1 * sum_k (||m_k||_2 - ||f||_2 / K)^2
    incoherence   -alpha2 * sum_{k != j} log(1 - cos(m_k, m_j))
    reconstruction (1 - alpha1 - alpha2) * ||recon(sum_k m_k) - f||_2^2

where norms and inner products are unweighted sums over all pixels and
the incoherence sum runs over ordered pairs. Epsilon floors keep the log
and the cosine denominators defined for zero or perfectly correlated
maps. Gradients are exact analytic backpropagation (relu subgradient 0
at the kink); the optimizer is Adam. Everything is deterministic given
the seed.
"""
from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from liftseg import _kernels as kernels
from liftseg.errors import NumericalError, ValidationError
from liftseg.model import as_image, normalize_features

HIDDEN_CHANNELS = 32
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

LossTerms = namedtuple("LossTerms", ["total", "balance", "incoherence", "reconstruction"])


@dataclass
class ConvBlockParams:
    """One 3x3 convolutional block: weights (out, in, 3, 3), biases (out,)."""

    weights: np.ndarray
    biases: np.ndarray
    activation: str  # "relu" or "linear"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 4 or self.weights.shape[2:] != (3, 3):
            raise ValidationError(f"weights must be (out, in, 3, 3), got {self.weights.shape}")
        if self.biases.shape != (self.weights.shape[0],):
            raise ValidationError("bias length must equal the output channel count")
        if self.activation not in ("relu", "linear"):
            raise ValidationError(f"unknown activation {self.activation!r}")


@dataclass
class NetworkParams:
    """Decomposition blocks (3) plus the reconstruction block."""

    decomposition: list
    reconstruction: ConvBlockParams
    k: int

    def __post_init__(self):
        if len(self.decomposition) != 3:
            raise ValidationError("expected exactly 3 decomposition blocks")
        if self.decomposition[-1].weights.shape[0] != self.k:
            raise ValidationError("last decomposition block must output k channels")
        if self.reconstruction.weights.shape[:2] != (1, 1):
            raise ValidationError("reconstruction block must map 1 channel to 1")

    def blocks(self):
        return list(self.decomposition) + [self.reconstruction]


@dataclass(frozen=True)
class CnnConfig:
    k: int = 3
    alpha1: float = 0.25
    alpha2: float = 0.25
    iterations: int = 2000
    learning_rate: float = 1e-3
    seed: int = 0
    eps: float = 1e-6

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        if not (0.0 <= self.alpha1 < 1.0 and 0.0 <= self.alpha2 < 1.0):
            raise ValidationError("alpha1 and alpha2 must lie in [0, 1)")
        if not self.alpha1 + self.alpha2 < 1.0:
            raise ValidationError("alpha1+alpha2 must be < 1")
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be > 0")
        if not self.eps > 0:
            raise ValidationError("eps must be > 0")

    @classmethod
    def from_dict(cls, d):
        known = {"k", "alpha1", "alpha2", "iterations", "learning_rate", "seed", "eps"}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown cnn config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return {
            "k": self.k,
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
            "iterations": self.iterations,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "eps": self.eps,
        }


def _layer_shapes(k):
    return [
        (HIDDEN_CHANNELS, 1, "relu"),
        (HIDDEN_CHANNELS, HIDDEN_CHANNELS, "relu"),
        (k, HIDDEN_CHANNELS, "linear"),
        (1, 1, "linear"),
    ]


def init_params(config):
    """Seeded uniform init on [-s, s] with s = sqrt(1 / (in * 9)); zero biases."""
    rng = np.random.default_rng(config.seed)
    blocks = []
    for cout, cin, act in _layer_shapes(config.k):
        s = np.sqrt(1.0 / (cin * 9))
        blocks.append(ConvBlockParams(
            weights=rng.uniform(-s, s, size=(cout, cin, 3, 3)),
            biases=np.zeros(cout),
            activation=act,
        ))
    return NetworkParams(decomposition=blocks[:3], reconstruction=blocks[3], k=config.k)


def _apply_block(block, x):
    y = kernels.conv3x3_forward(np.ascontiguousarray(x), block.weights, block.biases)
    if block.activation == "relu":
        y = np.maximum(y, 0.0)
    return y


def forward_decompose(params, f):
    """Run the decomposition path: (H, W) image -> (K, H, W) feature maps."""
    x = as_image(f)[None]
    for block in params.decomposition:
        x = _apply_block(block, x)
    return x


def forward_reconstruct(params, stack):
    """Apply the reconstruction block to the pointwise channel sum."""
    stack = np.asarray(stack, dtype=np.float64)
    s = stack.sum(axis=0)[None]
    return _apply_block(params.reconstruction, s)[0]


def loss_terms(maps, recon, f, alpha1, alpha2, eps):
    """Evaluate the three loss terms for given maps and reconstruction."""
    maps = np.asarray(maps, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    kc = maps.shape[0]
    f_norm = float(np.sqrt(np.sum(f * f)))
    norms = np.sqrt(np.sum(maps.reshape(kc, -1) ** 2, axis=1))

    balance = alpha1 * float(np.sum((norms - f_norm / kc) ** 2))

    incoherence = 0.0
    for k in range(kc):
        for j in range(kc):
            if j == k:
                continue
            ip = float(np.sum(maps[k] * maps[j]))
            cos = ip / (max(eps, norms[k]) * max(eps, norms[j]))
            incoherence += -alpha2 * np.log(max(eps, 1.0 - cos))

    resid = recon - f
    reconstruction = (1.0 - alpha1 - alpha2) * float(np.sum(resid * resid))

    total = balance + incoherence + reconstruction
    return LossTerms(total, balance, float(incoherence), reconstruction)


def _forward_full(params, f):
    """Forward pass keeping every intermediate needed for backprop."""
    x0 = np.ascontiguousarray(f)[None]
    b1, b2, b3 = params.decomposition
    z1 = kernels.conv3x3_forward(x0, b1.weights, b1.biases)
    a1 = np.maximum(z1, 0.0)
    z2 = kernels.conv3x3_forward(a1, b2.weights, b2.biases)
    a2 = np.maximum(z2, 0.0)
    maps = kernels.conv3x3_forward(a2, b3.weights, b3.biases)
    s = maps.sum(axis=0)[None]
    recon = kernels.conv3x3_forward(
        np.ascontiguousarray(s), params.reconstruction.weights, params.reconstruction.biases
    )[0]
    return {"x0": x0, "z1": z1, "a1": a1, "z2": z2, "a2": a2, "maps": maps,
            "s": s, "recon": recon}


def _loss_and_grad(params, f, config):
    """Loss terms plus exact gradients w.r.t. every weight and bias."""
    cache = _forward_full(params, f)
    maps = cache["maps"]
    recon = cache["recon"]
    kc = config.k
    eps = config.eps
    alpha1, alpha2 = config.alpha1, config.alpha2

    terms = loss_terms(maps, recon, f, alpha1, alpha2, eps)

    f_norm = float(np.sqrt(np.sum(f * f)))
    norms = np.sqrt(np.sum(maps.reshape(kc, -1) ** 2, axis=1))

    d_maps = np.zeros_like(maps)

    # balance term: d/dm_k [ (||m_k|| - F/K)^2 ] = 2 (||m_k|| - F/K) m_k / ||m_k||
    for k in range(kc):
        if norms[k] > 0.0:
            d_maps[k] += alpha1 * 2.0 * (norms[k] - f_norm / kc) * maps[k] / norms[k]

    # incoherence term, ordered pairs; clamped factors contribute zero
    for k in range(kc):
        for j in range(kc):
            if j == k:
                continue
            nk = max(eps, norms[k])
            nj = max(eps, norms[j])
            ip = float(np.sum(maps[k] * maps[j]))
            cos = ip / (nk * nj)
            t = 1.0 - cos
            if t < eps:
                continue  # log argument clamped at eps
            coef = alpha2 / t
            dck = maps[j] / (nk * nj)
            if norms[k] > eps:
                dck = dck - ip * maps[k] / (nk * nk * nj * norms[k])
            dcj = maps[k] / (nk * nj)
            if norms[j] > eps:
                dcj = dcj - ip * maps[j] / (nj * nj * nk * norms[j])
            d_maps[k] += coef * dck
            d_maps[j] += coef * dcj

    # reconstruction term
    dr = (2.0 * (1.0 - alpha1 - alpha2) * (recon - f))[None]
    rec = params.reconstruction
    g_rec_w = kernels.conv3x3_grad_weights(cache["s"], dr)
    g_rec_b = np.array([dr.sum()])
    ds = kernels.conv3x3_grad_input(dr, rec.weights)
    d_maps += ds[0][None, :, :]

    # back through the decomposition path
    b1, b2, b3 = params.decomposition
    dz3 = np.ascontiguousarray(d_maps)
    g3_w = kernels.conv3x3_grad_weights(cache["a2"], dz3)
    g3_b = dz3.sum(axis=(1, 2))
    da2 = kernels.conv3x3_grad_input(dz3, b3.weights)
    dz2 = np.ascontiguousarray(da2 * (cache["z2"] > 0.0))
    g2_w = kernels.conv3x3_grad_weights(cache["a1"], dz2)
    g2_b = dz2.sum(axis=(1, 2))
    da1 = kernels.conv3x3_grad_input(dz2, b2.weights)
    dz1 = np.ascontiguousarray(da1 * (cache["z1"] > 0.0))
    g1_w = kernels.conv3x3_grad_weights(cache["x0"], dz1)
    g1_b = dz1.sum(axis=(1, 2))

    grads = NetworkParams(
        decomposition=[
            ConvBlockParams(g1_w, g1_b, b1.activation),
            ConvBlockParams(g2_w, g2_b, b2.activation),
            ConvBlockParams(g3_w, g3_b, b3.activation),
        ],
        reconstruction=ConvBlockParams(g_rec_w, g_rec_b, rec.activation),
        k=config.k,
    )
    return terms, grads


def decomposition_loss(params, f, config):
    """Loss terms (total, balance, incoherence, reconstruction) at params."""
    f = as_image(f)
    cache = _forward_full(params, f)
    return loss_terms(cache["maps"], cache["recon"], f, config.alpha1, config.alpha2, config.eps)


def loss_gradient(params, f, config):
    """Exact analytic gradient of the total loss, NetworkParams-shaped."""
    f = as_image(f)
    _, grads = _loss_and_grad(params, f, config)
    return grads


def train_decomposition(f, config=None):
    """Fit the network to one image with Adam; fully seeded.

    Returns (params, stack, loss_trace): the trained parameters, the final
    decomposition passed through normalize_features, and the per-iteration
    total loss. Raises NumericalError if the loss turns non-finite.
    """
    if config is None:
        config = CnnConfig()
    f = as_image(f)
    params = init_params(config)

    tensors = []
    for block in params.blocks():
        tensors.append(block.weights)
        tensors.append(block.biases)
    m_state = [np.zeros_like(t) for t in tensors]
    v_state = [np.zeros_like(t) for t in tensors]

    trace = []
    for it in range(config.iterations):
        terms, grads = _loss_and_grad(params, f, config)
        if not np.isfinite(terms.total):
            raise NumericalError(f"non-finite loss at iteration {it}")
        trace.append(float(terms.total))

        gtensors = []
        for block in grads.blocks():
            gtensors.append(block.weights)
            gtensors.append(block.biases)

        t = it + 1
        corr1 = 1.0 - ADAM_BETA1 ** t
        corr2 = 1.0 - ADAM_BETA2 ** t
        for theta, g, m, v in zip(tensors, gtensors, m_state, v_state):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            theta -= config.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + ADAM_EPS)

    stack = normalize_features(forward_decompose(params, f))
    return params, stack, trace
