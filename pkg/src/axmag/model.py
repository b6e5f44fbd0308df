"""Learned axial magnifier.

The network follows the encoder / texture branch / motion-separation /
decoder split. The motion-separation part extracts shape feature pairs
aligned with the canonical axes using one shared set of 1D (1x3)
convolution kernels: the y path applies the identical kernels under
spatial transposition. A rotation-matrix projection turns the (x, y) pair
into features along the user angle and its orthogonal; the manipulator
amplifies feature differences per axis (again sharing spatially transposed
kernels) and everything is projected back and decoded.

The manipulator's two convolutions are bias-free, so zero magnification is
an exact feature-level identity, and (with ReLU being positively
homogeneous) the amplified feature is exactly linear in the factor:
factors far outside the trained range still behave sensibly as long as
the product factor x motion stays within the trained amplified range.

All tensors are NHWC. Weights live in a flat name -> Tensor dict and
serialize to one AXTF file per block plus a ``model.txt`` manifest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import axtf
from .autodiff import (
    Tensor,
    add,
    as_tensor,
    concat_channels,
    conv2d,
    mul,
    parameter,
    relu,
    scale,
    sub,
    transpose_hw,
    upsample2_nearest,
)
from .classical import MagnificationSpec, temporal_bandpass


@dataclass(frozen=True)
class ModelConfig:
    channels: int = 32
    input_channels: int = 3
    beta: float = 0.5
    symmetric_shape_loss: bool = False
    color_perturbation: bool = True
    seed: int = 0


def _conv_param(rng, kh, kw, cin, cout, dtype):
    std = math.sqrt(2.0 / (kh * kw * cin))
    return rng.standard_normal((kh, kw, cin, cout)).astype(dtype) * dtype.type(std)


class Model:
    """Parameter store plus the forward pipeline."""

    def __init__(self, config: ModelConfig, params: dict):
        self.config = config
        self.params = params

    # ---------------------------------------------------------------- init

    @classmethod
    def initialize(cls, config: ModelConfig, dtype=np.float32) -> "Model":
        rng = np.random.default_rng(config.seed)
        dtype = np.dtype(dtype)
        c = config.channels
        cin = config.input_channels
        p = {}

        def conv(name, kh, kw, ci, co, bias=True, zero=False):
            if zero:
                weight = np.zeros((kh, kw, ci, co), dtype)
            else:
                weight = _conv_param(rng, kh, kw, ci, co, dtype)
            p[f"{name}.w"] = parameter(weight, f"{name}.w")
            if bias:
                p[f"{name}.b"] = parameter(np.zeros(co, dtype), f"{name}.b")

        def res_block(name, ch, k=(3, 3)):
            conv(f"{name}.a", k[0], k[1], ch, ch)
            # zero-started second conv makes each block an identity at init,
            # keeping activation scales flat through the whole stack
            conv(f"{name}.b", k[0], k[1], ch, ch, zero=True)

        conv("encoder.conv1", 7, 7, cin, c)
        conv("encoder.conv2", 3, 3, c, c)
        res_block("encoder.res1", c)
        res_block("encoder.res2", c)

        conv("texture.conv1", 3, 3, c, c)
        res_block("texture.res1", c)
        res_block("texture.res2", c)

        conv("shape.conv1", 1, 3, c, c)
        conv("shape.conv2", 1, 3, c, c)
        res_block("shape.res", c, k=(1, 3))

        conv("manip.g", 1, 3, c, c, bias=False)
        conv("manip.h", 1, 3, c, c, bias=False)

        conv("decoder.fuse", 3, 3, 3 * c, 2 * c)
        res_block("decoder.res1", 2 * c)
        res_block("decoder.res2", 2 * c)
        conv("decoder.out", 3, 3, 2 * c, 3)
        return cls(config, p)

    def parameter_count(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def set_trainable(self, flag: bool) -> None:
        for t in self.params.values():
            t.requires_grad = flag
            t.grad = None

    def astype(self, dtype) -> "Model":
        dtype = np.dtype(dtype)
        params = {
            name: Tensor(t.data.astype(dtype), requires_grad=t.requires_grad, name=name)
            for name, t in self.params.items()
        }
        return Model(self.config, params)

    # ------------------------------------------------------------- blocks

    def _conv(self, t, name, stride=1):
        return conv2d(t, self.params[f"{name}.w"], self.params.get(f"{name}.b"), stride)

    def _res(self, t, name):
        u = relu(self._conv(t, f"{name}.a"))
        return add(t, self._conv(u, f"{name}.b"))

    def encode(self, x) -> Tensor:
        """Image (B, H, W, 3) to features at (B, H/2, W/2, C)."""
        t = relu(self._conv(as_tensor(x), "encoder.conv1"))
        t = relu(self._conv(t, "encoder.conv2", stride=2))
        t = self._res(t, "encoder.res1")
        return self._res(t, "encoder.res2")

    def texture_branch(self, enc) -> Tensor:
        """Appearance features at (B, H/4, W/4, C), held fixed by magnification."""
        t = relu(self._conv(enc, "texture.conv1", stride=2))
        t = self._res(t, "texture.res1")
        return self._res(t, "texture.res2")

    def _shape_1d(self, t) -> Tensor:
        t = relu(self._conv(t, "shape.conv1"))
        t = relu(self._conv(t, "shape.conv2"))
        u = relu(self._conv(t, "shape.res.a"))
        return add(t, self._conv(u, "shape.res.b"))

    def shape_branch(self, enc):
        """Shape pair along the canonical axes.

        The y path is, by definition, the x path run on the spatially
        transposed features with the very same kernels, then transposed
        back: s_y(E) == T(s_x(T(E))) holds bit-exactly.
        """
        sx = self._shape_1d(enc)
        sy = transpose_hw(self._shape_1d(transpose_hw(enc)))
        return sx, sy

    def manipulate(self, s1, s2, alpha, transposed=False) -> Tensor:
        """Amplify the shape difference: s2 + h(alpha * g(s2 - s1)).

        ``alpha`` may be a scalar or a per-pixel (B, h, w, 1) grid. The
        orthogonal path reuses the same g/h kernels under spatial
        transposition (``transposed=True``). g and h carry no bias, so
        alpha = 0 returns s2 exactly.
        """
        if transposed:
            if isinstance(alpha, np.ndarray) and alpha.ndim == 4:
                alpha = alpha.swapaxes(1, 2)
            out = self.manipulate(transpose_hw(s1), transpose_hw(s2), alpha)
            return transpose_hw(out)
        d = sub(s2, s1)
        gd = relu(self._conv(d, "manip.g"))
        return add(s2, self._conv(_scl(gd, alpha), "manip.h"))

    def decode(self, texture, dx, dy) -> Tensor:
        """Predict the output image from texture plus manipulated shape."""
        cat = concat_channels([dx, dy, upsample2_nearest(texture)])
        t = relu(self._conv(cat, "decoder.fuse"))
        t = self._res(t, "decoder.res1")
        t = self._res(t, "decoder.res2")
        return self._conv(upsample2_nearest(t), "decoder.out")

    # ------------------------------------------------------------ pipeline

    def pipeline(self, i1, i2, angle_deg, alpha_par, alpha_perp, mag_map=None) -> dict:
        """Full forward pass; returns every intermediate for loss terms."""
        x1 = _as_batch(i1, self.config)
        x2 = _as_batch(i2, self.config)
        e1 = self.encode(x1)
        e2 = self.encode(x2)
        t1 = self.texture_branch(e1)
        t2 = self.texture_branch(e2)
        s1 = self.shape_branch(e1)
        s2 = self.shape_branch(e2)
        p1 = project(s1, angle_deg)
        p2 = project(s2, angle_deg)
        a_par, a_perp = _axis_factors(alpha_par, alpha_perp, mag_map, x1.data.shape)
        d_par = self.manipulate(p1[0], p2[0], a_par)
        d_perp = self.manipulate(p1[1], p2[1], a_perp, transposed=True)
        dx, dy = inverse_project((d_par, d_perp), angle_deg)
        out = self.decode(t2, dx, dy)
        return {
            "pred": out,
            "t1": t1,
            "t2": t2,
            "sx1": s1[0],
            "sy1": s1[1],
            "sx2": s2[0],
            "sy2": s2[1],
        }

    def forward(self, i1, i2, mspec: MagnificationSpec, single=None):
        """Predict the axially magnified frame for an input pair.

        Accepts single frames (H, W, 3|1) or batches; returns matching
        shape. Output values are unconstrained (clamp at image export).
        """
        mag_map = mspec.per_pixel_map
        parts = self.pipeline(
            i1, i2, mspec.angle_deg, mspec.alpha_par, mspec.alpha_perp, mag_map
        )
        out = parts["pred"].data
        if single is None:
            single = np.asarray(i1).ndim < 4
        return out[0] if single else out


def _as_batch(x, config) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim == 3:
        arr = arr[None]
    if arr.shape[3] == 1 and config.input_channels == 3:
        arr = np.repeat(arr, 3, axis=3)
    if arr.shape[1] % 4 or arr.shape[2] % 4:
        raise ValueError("frame dims must be divisible by 4")
    return Tensor(arr)


def _cos_sin(angle_deg):
    a = np.deg2rad(np.asarray(angle_deg, dtype=np.float64))
    c, s = np.cos(a), np.sin(a)
    if c.ndim == 0:
        return float(c), float(s)
    return c.reshape(-1, 1, 1, 1), s.reshape(-1, 1, 1, 1)


def project(pair, angle_deg):
    """Rotate an (x, y) shape pair onto (angle, angle-orthogonal) axes."""
    sx, sy = pair
    c, s = _cos_sin(angle_deg)
    s_par = add(_scl(sx, c), _scl(sy, s))
    s_perp = add(_scl(sx, -s), _scl(sy, c))
    return s_par, s_perp


def inverse_project(pair, angle_deg):
    """Exact inverse of :func:`project` (rotation by the negated angle)."""
    s_par, s_perp = pair
    c, s = _cos_sin(angle_deg)
    sx = add(_scl(s_par, c), _scl(s_perp, -s))
    sy = add(_scl(s_par, s), _scl(s_perp, c))
    return sx, sy


def _scl(t, factor):
    # python-float scaling keeps float32 tensors float32; array factors are
    # cast to the tensor dtype for the same reason
    t = as_tensor(t)
    if isinstance(factor, (int, float)):
        return scale(t, float(factor))
    return mul(t, np.asarray(factor, dtype=t.data.dtype))


def _axis_factors(alpha_par, alpha_perp, mag_map, input_shape):
    if mag_map is None:
        return alpha_par, alpha_perp
    m = np.asarray(mag_map, dtype=np.float32)
    if m.ndim == 3:
        m = m[None]
    if m.shape[1:3] != tuple(input_shape[1:3]):
        raise ValueError("mag_map dimensions do not match the frames")
    # the manipulator runs at half resolution; nearest-neighbor downsample
    m = m[:, ::2, ::2]
    return m[..., 0:1], m[..., 1:2]


# ------------------------------------------------------------------ loss


def perturb_colors(frames, rng):
    """Per-channel gain in [0.8, 1.2] plus offset in [-0.05, 0.05], clamped.

    Used to build the perturbed shape targets: the shape representation of
    a color-perturbed frame should match the original frame's, pushing
    appearance into the texture branch.
    """
    arr = np.asarray(frames, dtype=np.float32)
    b, _, _, c = arr.shape
    gain = rng.uniform(0.8, 1.2, size=(b, 1, 1, c)).astype(np.float32)
    offset = rng.uniform(-0.05, 0.05, size=(b, 1, 1, c)).astype(np.float32)
    return np.clip(arr * gain + offset, 0.0, 1.0)


def loss_terms(model: Model, batch: dict, rng) -> dict:
    """All loss components for a training batch.

    batch holds float arrays: i1, i2, i_mag (B,H,W,3), angle (B,),
    mag_map (B,H,W,2). Returns scalar tensors keyed by term name plus
    "total": recon + beta*(texture + shape_x) + shape_y (the y term joins
    the beta group when symmetric_shape_loss is set).
    """
    from .autodiff import mean_abs

    cfg = model.config
    parts = model.pipeline(batch["i1"], batch["i2"], batch["angle"], 0.0, 0.0, batch["mag_map"])
    l_recon = mean_abs(sub(parts["pred"], Tensor(batch["i_mag"])))
    l_texture = mean_abs(sub(parts["t1"], parts["t2"]))
    if cfg.color_perturbation:
        perturbed = perturb_colors(batch["i2"], rng)
    else:
        perturbed = batch["i2"]
    e2p = model.encode(_as_batch(perturbed, cfg))
    sx2p, sy2p = model.shape_branch(e2p)
    l_shape_x = mean_abs(sub(parts["sx2"], sx2p))
    l_shape_y = mean_abs(sub(parts["sy2"], sy2p))
    beta = cfg.beta
    total = add(l_recon, scale(add(l_texture, l_shape_x), beta))
    if cfg.symmetric_shape_loss:
        total = add(total, scale(l_shape_y, beta))
    else:
        total = add(total, l_shape_y)
    return {
        "total": total,
        "l_recon": l_recon,
        "l_texture": l_texture,
        "l_shape_x": l_shape_x,
        "l_shape_y": l_shape_y,
    }


# ------------------------------------------------------------- weight io


def save_model(model: Model, out_dir) -> None:
    """One AXTF tensor per parameter block plus a ``model.txt`` manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = model.config
    lines = [
        f"meta channels {cfg.channels}",
        f"meta input_channels {cfg.input_channels}",
        f"meta beta {cfg.beta}",
        f"meta symmetric_shape_loss {int(cfg.symmetric_shape_loss)}",
        f"meta color_perturbation {int(cfg.color_perturbation)}",
        f"meta seed {cfg.seed}",
    ]
    for name in sorted(model.params):
        tensor = model.params[name]
        fname = name.replace("/", "_") + ".axtf"
        axtf.write_tensor(out / fname, tensor.data)
        shape = ",".join(str(d) for d in tensor.data.shape)
        lines.append(f"block {name} {shape} {fname}")
    (out / "model.txt").write_text("\n".join(lines) + "\n")


def load_model(model_dir, trainable=False) -> Model:
    src = Path(model_dir)
    manifest = src / "model.txt"
    if not manifest.exists():
        raise FileNotFoundError(f"no model.txt manifest in {src}")
    meta = {}
    params = {}
    for line in manifest.read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "meta":
            meta[parts[1]] = parts[2]
        elif parts[0] == "block":
            name, shape_s, fname = parts[1], parts[2], parts[3]
            data = axtf.read_tensor(src / fname)
            expected = tuple(int(d) for d in shape_s.split(","))
            if data.shape != expected:
                raise ValueError(f"{name}: manifest shape {expected} != file {data.shape}")
            params[name] = Tensor(data, requires_grad=trainable, name=name)
    config = ModelConfig(
        channels=int(meta["channels"]),
        input_channels=int(meta["input_channels"]),
        beta=float(meta["beta"]),
        symmetric_shape_loss=bool(int(meta["symmetric_shape_loss"])),
        color_perturbation=bool(int(meta["color_perturbation"])),
        seed=int(meta["seed"]),
    )
    return Model(config, params)


# ----------------------------------------------------------- video runner


def magnify_video_msm(model: Model, frames, mspec: MagnificationSpec, tf=None) -> np.ndarray:
    """Run the learned magnifier over a frame stack.

    static mode references frame 0; dynamic mode accumulates consecutive
    shape differences. With a temporal filter, the g(shape difference)
    sequence is filtered along time before the factors scale it.
    """
    stack = np.asarray(frames, dtype=np.float32)
    if stack.ndim == 3:
        stack = stack[:, :, :, None]
    if stack.shape[0] < 2:
        raise ValueError("need at least 2 frames")
    if stack.shape[3] == 1:
        stack = np.repeat(stack, 3, axis=3)
    cfg = model.config
    angle = mspec.angle_deg
    a_par, a_perp = _axis_factors(
        mspec.alpha_par, mspec.alpha_perp, mspec.per_pixel_map, (1,) + stack.shape[1:]
    )

    n = stack.shape[0]
    proj = []
    textures = []
    for t in range(n):
        e = model.encode(_as_batch(stack[t], cfg))
        textures.append(model.texture_branch(e))
        proj.append(project(model.shape_branch(e), angle))

    def g_of(diff, transposed):
        if transposed:
            return transpose_hw(relu(model._conv(transpose_hw(diff), "manip.g")))
        return relu(model._conv(diff, "manip.g"))

    # accumulated (or reference) g-differences per axis, shape (T, ...)
    gseq = {0: [], 1: []}
    for axis in (0, 1):
        transposed = axis == 1
        if mspec.mode == "static":
            for t in range(n):
                gseq[axis].append(g_of(sub(proj[t][axis], proj[0][axis]), transposed).data[0])
        else:
            acc = None
            for t in range(n):
                if t == 0:
                    acc = np.zeros_like(proj[0][axis].data[0])
                else:
                    step = g_of(sub(proj[t][axis], proj[t - 1][axis]), transposed).data[0]
                    acc = acc + step
                gseq[axis].append(acc.copy())
    g_par = np.stack(gseq[0])
    g_perp = np.stack(gseq[1])
    if tf is not None:
        g_par = temporal_bandpass(g_par, tf).astype(np.float32)
        g_perp = temporal_bandpass(g_perp, tf).astype(np.float32)

    def h_path(gval, alpha, transposed):
        scaled = _scl(Tensor(gval[None]), alpha)
        if transposed:
            return transpose_hw(model._conv(transpose_hw(scaled), "manip.h"))
        return model._conv(scaled, "manip.h")

    outs = []
    for t in range(n):
        d_par = add(proj[t][0], h_path(g_par[t], a_par, False))
        d_perp = add(proj[t][1], h_path(g_perp[t], a_perp, True))
        dx, dy = inverse_project((d_par, d_perp), angle)
        outs.append(model.decode(textures[t], dx, dy).data[0])
    return np.stack(outs)
