"""Two-stage affinity fusion of depth-based and height-refined features.

The channel stage squeezes the concatenated inputs to a per-channel gate
through a bottleneck MLP; the spatial stage turns the sum of the gated
maps into a single-channel gate through two 3x3 convolutions. The fused
output is, per location, a convex combination of the two gated inputs.

Everything is straight float64 numpy. The backward pass is written by
hand and validated against central finite differences (`grad_check`),
with the scalar objective fixed to the sum of squares of the fused map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

DEFAULT_REDUCTION = 16
FD_STEP = 1e-4


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign to stay overflow-free for large |x|.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


@dataclass(frozen=True)
class SfaParams:
    """Weights of the fusion block for channel count C and reduction r.

    Shapes: w1 (2C/r, 2C), w2 (C, 2C/r), conv1_w (C/r, C, 3, 3),
    conv2_w (1, C/r, 3, 3), each with a matching bias vector. r must
    divide both C and 2C.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    reduction: int = DEFAULT_REDUCTION

    def __post_init__(self) -> None:
        for name in ("w1", "b1", "w2", "b2", "conv1_w", "conv1_b", "conv2_w", "conv2_b"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        c, r = self.channels, self.reduction
        if r < 1 or c % r or (2 * c) % r:
            raise ValueError(f"reduction {r} must divide channels {c} and {2 * c}")
        expect = {
            "w1": (2 * c // r, 2 * c),
            "b1": (2 * c // r,),
            "w2": (c, 2 * c // r),
            "b2": (c,),
            "conv1_w": (c // r, c, 3, 3),
            "conv1_b": (c // r,),
            "conv2_w": (1, c // r, 3, 3),
            "conv2_b": (1,),
        }
        for name, shape in expect.items():
            got = getattr(self, name).shape
            if got != shape:
                raise DimensionError(f"{name} must have shape {shape}, got {got}")

    @property
    def channels(self) -> int:
        return self.w2.shape[0]

    @classmethod
    def random(
        cls, channels: int, reduction: int = DEFAULT_REDUCTION, seed: int = 0
    ) -> "SfaParams":
        """Fixed-seed init, uniform in [-0.1, 0.1].

        The small range keeps pre-activations in the well-conditioned
        sigmoid region, which the gradient checks rely on.
        """
        rng = np.random.default_rng(seed)
        c, r = channels, reduction

        def u(*shape):
            return rng.uniform(-0.1, 0.1, size=shape)

        return cls(
            w1=u(2 * c // r, 2 * c),
            b1=u(2 * c // r),
            w2=u(c, 2 * c // r),
            b2=u(c),
            conv1_w=u(c // r, c, 3, 3),
            conv1_b=u(c // r),
            conv2_w=u(1, c // r, 3, 3),
            conv2_b=u(1),
            reduction=r,
        )

    @classmethod
    def zeros(cls, channels: int, reduction: int = DEFAULT_REDUCTION) -> "SfaParams":
        c, r = channels, reduction
        return cls(
            w1=np.zeros((2 * c // r, 2 * c)),
            b1=np.zeros(2 * c // r),
            w2=np.zeros((c, 2 * c // r)),
            b2=np.zeros(c),
            conv1_w=np.zeros((c // r, c, 3, 3)),
            conv1_b=np.zeros(c // r),
            conv2_w=np.zeros((1, c // r, 3, 3)),
            conv2_b=np.zeros(1),
            reduction=r,
        )

    _FIELDS = ("w1", "b1", "w2", "b2", "conv1_w", "conv1_b", "conv2_w", "conv2_b")

    def to_vector(self) -> np.ndarray:
        return np.concatenate([getattr(self, f).ravel() for f in self._FIELDS])

    def from_vector(self, vec: np.ndarray) -> "SfaParams":
        """Rebuild params of this shape from a flat vector."""
        parts, offset = {}, 0
        for f in self._FIELDS:
            ref = getattr(self, f)
            parts[f] = vec[offset : offset + ref.size].reshape(ref.shape)
            offset += ref.size
        if offset != vec.size:
            raise DimensionError(f"expected vector of size {offset}, got {vec.size}")
        return SfaParams(reduction=self.reduction, **parts)


@dataclass(frozen=True)
class AffinityOutputs:
    """Forward-pass products: both gates, both gated maps, and the fusion."""

    channel_gate: np.ndarray  # (C,) in (0, 1)
    spatial_gate: np.ndarray  # (1, H, W) in (0, 1)
    depth_weighted: np.ndarray
    height_weighted: np.ndarray
    fused: np.ndarray


def _check_pair(f_db: np.ndarray, f_hr: np.ndarray, channels: int) -> tuple[np.ndarray, np.ndarray]:
    f_db = np.asarray(f_db, dtype=np.float64)
    f_hr = np.asarray(f_hr, dtype=np.float64)
    if f_db.shape != f_hr.shape:
        raise DimensionError(f"input shapes differ: {f_db.shape} vs {f_hr.shape}")
    if f_db.ndim != 3 or f_db.shape[0] != channels:
        raise DimensionError(
            f"inputs must be ({channels}, H, W), got {f_db.shape}"
        )
    return f_db, f_hr


def conv3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """3x3 convolution, stride 1, zero padding 1. x is (I, H, W)."""
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))
    return np.einsum("oikl,ihwkl->ohw", w, win) + b[:, None, None]


def _conv3x3_input_grad(dy: np.ndarray, w: np.ndarray, height: int, width: int) -> np.ndarray:
    """Gradient of conv3x3 w.r.t. its input."""
    full = np.zeros((w.shape[1], height + 2, width + 2))
    for ky in range(3):
        for kx in range(3):
            full[:, ky : ky + height, kx : kx + width] += np.einsum(
                "ohw,oi->ihw", dy, w[:, :, ky, kx]
            )
    return full[:, 1 : height + 1, 1 : width + 1]


def _conv3x3_weight_grad(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))
    return np.einsum("ohw,ihwkl->oikl", dy, win)


def channel_stage(
    f_db: np.ndarray, f_hr: np.ndarray, params: SfaParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Compute the channel gate and scale the two inputs with it.

    The concatenated pair is global-average-pooled, passed through the
    bottleneck (linear, ReLU, linear) and squashed to a gate in (0, 1)^C.
    The depth branch is scaled by the gate, the height branch by its
    complement.

    Returns (gate, gated depth features, gated height features).
    """
    f_db, f_hr = _check_pair(f_db, f_hr, params.channels)
    pooled = np.concatenate([f_db, f_hr]).mean(axis=(1, 2))
    hidden = relu(params.w1 @ pooled + params.b1)
    gate = sigmoid(params.w2 @ hidden + params.b2)
    return gate, gate[:, None, None] * f_db, (1.0 - gate)[:, None, None] * f_hr


def spatial_stage(
    f_db_cs: np.ndarray, f_hr_cs: np.ndarray, params: SfaParams
) -> tuple[np.ndarray, np.ndarray]:
    """Compute the spatial gate and fuse the channel-stage outputs.

    The summed inputs pass through conv-ReLU-conv to a single-channel map,
    squashed to (0, 1); the fusion is gate * depth + (1 - gate) * height,
    broadcast over channels.

    Returns (gate map of shape (1, H, W), fused features).
    """
    f_db_cs, f_hr_cs = _check_pair(f_db_cs, f_hr_cs, params.channels)
    mixed = conv3x3(f_db_cs + f_hr_cs, params.conv1_w, params.conv1_b)
    gate = sigmoid(conv3x3(relu(mixed), params.conv2_w, params.conv2_b))
    fused = gate * f_db_cs + (1.0 - gate) * f_hr_cs
    return gate, fused


def sfa_forward(f_db: np.ndarray, f_hr: np.ndarray, params: SfaParams) -> AffinityOutputs:
    """Channel stage followed by the spatial stage."""
    a1, db_cs, hr_cs = channel_stage(f_db, f_hr, params)
    a2, fused = spatial_stage(db_cs, hr_cs, params)
    return AffinityOutputs(
        channel_gate=a1,
        spatial_gate=a2,
        depth_weighted=db_cs,
        height_weighted=hr_cs,
        fused=fused,
    )


def sum_square_loss(f_db: np.ndarray, f_hr: np.ndarray, params: SfaParams) -> float:
    """Sum of squares of the fused output, the grad-check objective."""
    return float((sfa_forward(f_db, f_hr, params).fused ** 2).sum())


def sfa_gradients(
    f_db: np.ndarray, f_hr: np.ndarray, params: SfaParams
) -> tuple[float, np.ndarray, np.ndarray, SfaParams]:
    """Analytic gradients of sum_square_loss.

    Returns (loss, d f_db, d f_hr, d params) where the parameter gradient
    is packed into an SfaParams of matching shapes.
    """
    f_db, f_hr = _check_pair(f_db, f_hr, params.channels)
    c = params.channels
    _, h, w = f_db.shape

    # Forward, keeping every intermediate needed by the backward sweep.
    pooled = np.concatenate([f_db, f_hr]).mean(axis=(1, 2))
    z1 = params.w1 @ pooled + params.b1
    h1 = relu(z1)
    z2 = params.w2 @ h1 + params.b2
    a1 = sigmoid(z2)
    db_cs = a1[:, None, None] * f_db
    hr_cs = (1.0 - a1)[:, None, None] * f_hr

    mixed_in = db_cs + hr_cs
    mixed = conv3x3(mixed_in, params.conv1_w, params.conv1_b)
    act = relu(mixed)
    z3 = conv3x3(act, params.conv2_w, params.conv2_b)
    a2 = sigmoid(z3)
    fused = a2 * db_cs + (1.0 - a2) * hr_cs
    loss = float((fused**2).sum())

    d_fused = 2.0 * fused
    d_a2 = (d_fused * (db_cs - hr_cs)).sum(axis=0, keepdims=True)
    d_db_cs = d_fused * a2
    d_hr_cs = d_fused * (1.0 - a2)

    d_z3 = d_a2 * a2 * (1.0 - a2)
    d_conv2_w = _conv3x3_weight_grad(d_z3, act)
    d_conv2_b = d_z3.sum(axis=(1, 2))
    d_act = _conv3x3_input_grad(d_z3, params.conv2_w, h, w)
    d_mixed = d_act * (mixed > 0)
    d_conv1_w = _conv3x3_weight_grad(d_mixed, mixed_in)
    d_conv1_b = d_mixed.sum(axis=(1, 2))
    d_mixed_in = _conv3x3_input_grad(d_mixed, params.conv1_w, h, w)
    d_db_cs += d_mixed_in
    d_hr_cs += d_mixed_in

    d_a1 = (d_db_cs * f_db).sum(axis=(1, 2)) - (d_hr_cs * f_hr).sum(axis=(1, 2))
    d_f_db = d_db_cs * a1[:, None, None]
    d_f_hr = d_hr_cs * (1.0 - a1)[:, None, None]

    d_z2 = d_a1 * a1 * (1.0 - a1)
    d_w2 = np.outer(d_z2, h1)
    d_b2 = d_z2
    d_h1 = params.w2.T @ d_z2
    d_z1 = d_h1 * (z1 > 0)
    d_w1 = np.outer(d_z1, pooled)
    d_b1 = d_z1
    d_pooled = params.w1.T @ d_z1

    d_concat = np.broadcast_to(d_pooled[:, None, None] / (h * w), (2 * c, h, w))
    d_f_db = d_f_db + d_concat[:c]
    d_f_hr = d_f_hr + d_concat[c:]

    grads = SfaParams(
        w1=d_w1,
        b1=d_b1,
        w2=d_w2,
        b2=d_b2,
        conv1_w=d_conv1_w,
        conv1_b=d_conv1_b,
        conv2_w=d_conv2_w,
        conv2_b=d_conv2_b,
        reduction=params.reduction,
    )
    return loss, d_f_db, d_f_hr, grads


def relu_kink_margin(f_db: np.ndarray, f_hr: np.ndarray, params: SfaParams) -> float:
    """Distance of the closest ReLU pre-activation to its kink.

    Central finite differences are only valid when every pre-activation
    stays on one side of zero across the +-step perturbations, so check
    fixtures must keep this margin safely above the step size.
    """
    f_db, f_hr = _check_pair(f_db, f_hr, params.channels)
    pooled = np.concatenate([f_db, f_hr]).mean(axis=(1, 2))
    z1 = params.w1 @ pooled + params.b1
    _, db_cs, hr_cs = channel_stage(f_db, f_hr, params)
    mixed = conv3x3(db_cs + hr_cs, params.conv1_w, params.conv1_b)
    return float(min(np.min(np.abs(z1)), np.min(np.abs(mixed))))


def make_check_case(
    channels: int,
    size: int,
    reduction: int,
    seed: int,
    step: float = FD_STEP,
) -> tuple[np.ndarray, np.ndarray, SfaParams]:
    """Seeded random (f_db, f_hr, params) safe for grad_check.

    Draws are deterministic in (seed, attempt); a draw is rejected when a
    ReLU pre-activation sits within 4x the finite-difference step of its
    kink, where the central difference would straddle the nonsmooth point.
    """
    for attempt in range(64):
        rng = np.random.default_rng((seed, attempt))
        params = SfaParams.random(channels, reduction, seed=rng.integers(2**32))
        f_db = rng.uniform(-1.0, 1.0, size=(channels, size, size))
        f_hr = rng.uniform(-1.0, 1.0, size=(channels, size, size))
        if relu_kink_margin(f_db, f_hr, params) >= 4.0 * step:
            return f_db, f_hr, params
    raise RuntimeError(f"no kink-safe fixture found for seed {seed}")


def grad_check(
    f_db: np.ndarray,
    f_hr: np.ndarray,
    params: SfaParams,
    step: float = FD_STEP,
) -> float:
    """Max relative error between analytic and finite-difference gradients.

    Every parameter entry and every entry of both inputs is perturbed by
    +-step and the central difference of sum_square_loss is compared with
    the analytic gradient. The per-entry error is |a - n| scaled by
    max(1, |a|, |n|).
    """
    f_db = np.asarray(f_db, dtype=np.float64)
    f_hr = np.asarray(f_hr, dtype=np.float64)
    _, d_db, d_hr, d_params = sfa_gradients(f_db, f_hr, params)
    analytic = np.concatenate([d_db.ravel(), d_hr.ravel(), d_params.to_vector()])

    theta = np.concatenate([f_db.ravel(), f_hr.ravel(), params.to_vector()])
    n_db, n_hr = f_db.size, f_hr.size

    def loss_at(vec: np.ndarray) -> float:
        a = vec[:n_db].reshape(f_db.shape)
        b = vec[n_db : n_db + n_hr].reshape(f_hr.shape)
        p = params.from_vector(vec[n_db + n_hr :])
        return sum_square_loss(a, b, p)

    numeric = np.empty_like(theta)
    for i in range(theta.size):
        bumped = theta.copy()
        bumped[i] = theta[i] + step
        hi = loss_at(bumped)
        bumped[i] = theta[i] - step
        lo = loss_at(bumped)
        numeric[i] = (hi - lo) / (2.0 * step)

    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / scale))
