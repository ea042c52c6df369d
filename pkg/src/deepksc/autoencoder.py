"""Convolutional autoencoder with hand-written backpropagation.

The encoder is a stack of stride-2 convolutions with "same" padding and
ReLU activations (28 -> 14 -> 7 -> 4 for the default 20-10-5 channel
layout, giving an 80-dimensional latent code). The decoder mirrors it
with transposed convolutions whose output sizes are pinned to the
encoder's input sizes, so the reconstruction has the shape of the input.

Tensors use NHWC layout. Convolution kernels are stored as
``(c_in, kh, kw, c_out)``; a transposed convolution mapping ``f`` channels
to ``c`` channels stores its kernel as ``(c, kh, kw, f)``, i.e. as the
forward convolution it is the adjoint of.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError
from .ksc import assign, stack_bases

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def same_padding(size, kernel, stride):
    """Output size and ``(before, after)`` padding of a "same" strided conv."""
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return out, (total // 2, total - total // 2)


# -- primitive ops -----------------------------------------------------------

def _windows(xp, k, stride):
    return sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]


def conv2d(x, w, pad, stride):
    """Strided 2-D convolution (cross-correlation) without bias.

    A stacked matmul runs one GEMM per sample, so each sample's output is
    bit-identical however the batch is sliced.
    """
    k = w.shape[1]
    xp = np.pad(x, ((0, 0), pad, pad, (0, 0)))
    win = _windows(xp, k, stride)
    n, ho, wo = win.shape[:3]
    cols = np.ascontiguousarray(win).reshape(n, ho * wo, -1)
    return np.matmul(cols, w.reshape(-1, w.shape[3])).reshape(n, ho, wo, w.shape[3])


def conv2d_grad_weight(x, dout, k, pad, stride):
    xp = np.pad(x, ((0, 0), pad, pad, (0, 0)))
    return np.tensordot(_windows(xp, k, stride), dout, axes=([0, 1, 2], [0, 1, 2]))


def conv2d_grad_input(dout, w, in_hw, pad, stride):
    """Adjoint of :func:`conv2d` with respect to its input (col2im)."""
    n, ho, wo, _ = dout.shape
    c, k = w.shape[0], w.shape[1]
    h, wd = in_hw
    f = dout.shape[3]
    cols = np.matmul(dout.reshape(n, ho * wo, f), w.reshape(-1, f).T).reshape(n, ho, wo, c, k, k)
    xp = np.zeros((n, h + pad[0] + pad[1], wd + pad[0] + pad[1], c))
    span_h, span_w = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    for i in range(k):
        for j in range(k):
            xp[:, i:i + span_h:stride, j:j + span_w:stride, :] += cols[:, :, :, :, i, j]
    return xp[:, pad[0]:pad[0] + h, pad[0]:pad[0] + wd, :]


# -- architecture and parameters ---------------------------------------------

@dataclass(frozen=True)
class CaeArch:
    """Shape description of the autoencoder."""

    image_shape: tuple = (28, 28, 1)
    channels: tuple = (20, 10, 5)
    kernels: tuple = (5, 3, 3)
    stride: int = 2

    def __post_init__(self):
        object.__setattr__(self, "image_shape", tuple(int(v) for v in self.image_shape))
        object.__setattr__(self, "channels", tuple(int(v) for v in self.channels))
        object.__setattr__(self, "kernels", tuple(int(v) for v in self.kernels))
        if len(self.channels) != len(self.kernels) or not self.channels:
            raise ValueError("channels and kernels must be non-empty and of equal length")
        if len(self.image_shape) != 3 or self.image_shape[0] != self.image_shape[1]:
            raise ValueError("image_shape must be (size, size, channels) with square images")

    @property
    def n_layers(self):
        return len(self.channels)

    @property
    def sizes(self):
        """Spatial (h, w) at every encoder level, input first."""
        h, w = self.image_shape[:2]
        out = [(h, w)]
        for k in self.kernels:
            h, w = same_padding(h, k, self.stride)[0], same_padding(w, k, self.stride)[0]
            out.append((h, w))
        return out

    @property
    def latent_shape(self):
        h, w = self.sizes[-1]
        return (h, w, self.channels[-1])

    @property
    def latent_dim(self):
        h, w, c = self.latent_shape
        return h * w * c

    def encoder_layers(self):
        """``(c_in, c_out, kernel, in_hw, pad)`` per encoder layer."""
        chans = (self.image_shape[2],) + self.channels
        sizes = self.sizes
        for l, k in enumerate(self.kernels):
            yield chans[l], chans[l + 1], k, sizes[l], same_padding(sizes[l][0], k, self.stride)[1]

    def param_shapes(self):
        """Ordered mapping of parameter name to shape.

        Encoder layers come first, then decoder layers in the order they
        are applied; each weight precedes its bias.
        """
        shapes = {}
        enc = list(self.encoder_layers())
        for l, (cin, cout, k, _, _) in enumerate(enc):
            shapes[f"enc{l}.w"] = (cin, k, k, cout)
            shapes[f"enc{l}.b"] = (cout,)
        for j, (cin, cout, k, _, _) in enumerate(reversed(enc)):
            shapes[f"dec{j}.w"] = (cin, k, k, cout)
            shapes[f"dec{j}.b"] = (cin,)
        return shapes


@dataclass
class CaeParams:
    """Autoencoder weights plus Adam optimiser state."""

    arch: CaeArch
    tensors: dict
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)
    adam_t: int = 0

    def __post_init__(self):
        for name, shape in self.arch.param_shapes().items():
            if name not in self.tensors:
                raise DimensionError(f"missing parameter {name}")
            if self.tensors[name].shape != shape:
                raise DimensionError(f"{name} has shape {self.tensors[name].shape}, expected {shape}")
            self.adam_m.setdefault(name, np.zeros(shape))
            self.adam_v.setdefault(name, np.zeros(shape))

    @property
    def names(self):
        return list(self.arch.param_shapes())

    @property
    def latent_dim(self):
        return self.arch.latent_dim

    def copy(self):
        return CaeParams(
            self.arch,
            {k: v.copy() for k, v in self.tensors.items()},
            {k: v.copy() for k, v in self.adam_m.items()},
            {k: v.copy() for k, v in self.adam_v.items()},
            self.adam_t,
        )


def init_params(arch=None, seed=0):
    """He-uniform kernels (fan-in scaling) and zero biases."""
    arch = arch or CaeArch()
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in arch.param_shapes().items():
        if name.endswith(".b"):
            tensors[name] = np.zeros(shape)
        else:
            # fan-in: conv reads c_in*k*k values; transposed conv reads c_out*k*k
            fan_in = shape[0] * shape[1] * shape[2] if name.startswith("enc") else shape[1] * shape[2] * shape[3]
            limit = np.sqrt(6.0 / fan_in)
            tensors[name] = rng.uniform(-limit, limit, size=shape)
    return CaeParams(arch, tensors)


# -- forward / backward ------------------------------------------------------

def as_images(x, arch):
    """Validate an image batch; ``uint8`` input is scaled to [0, 1]."""
    x = np.asarray(x)
    if x.dtype == np.uint8:
        x = x / 255.0
    else:
        x = x.astype(np.float64, copy=False)
    if x.ndim == 3 and arch.image_shape[2] == 1:
        x = x[..., None]
    if x.shape[1:] != arch.image_shape:
        raise DimensionError(f"expected images of shape {arch.image_shape}, got {x.shape[1:]}")
    return x


def _encode(params, x):
    arch, t = params.arch, params.tensors
    acts = [x]
    for l, (_, _, _, _, pad) in enumerate(arch.encoder_layers()):
        pre = conv2d(acts[-1], t[f"enc{l}.w"], pad, arch.stride) + t[f"enc{l}.b"]
        acts.append(np.maximum(pre, 0.0))
    return acts


def _decode(params, h):
    arch, t = params.arch, params.tensors
    enc = list(arch.encoder_layers())
    acts = [h]
    last = len(enc) - 1
    for j, (_, _, _, in_hw, pad) in enumerate(reversed(enc)):
        pre = conv2d_grad_input(acts[-1], t[f"dec{j}.w"], in_hw, pad, arch.stride) + t[f"dec{j}.b"]
        acts.append(pre if j == last else np.maximum(pre, 0.0))
    return acts


def encode(params, x, batch_size=None):
    """Latent codes ``(n, d)`` of an image batch ``(n, H, W, C)``."""
    x = as_images(x, params.arch)
    if batch_size is None or x.shape[0] <= batch_size:
        return _encode(params, x)[-1].reshape(x.shape[0], -1)
    return np.concatenate([encode(params, x[i:i + batch_size]) for i in range(0, x.shape[0], batch_size)])


def decode(params, z):
    """Images ``(n, H, W, C)`` decoded from latent codes ``(n, d)``."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != params.latent_dim:
        raise DimensionError(f"expected latents of shape (n, {params.latent_dim}), got {z.shape}")
    return _decode(params, z.reshape((z.shape[0],) + params.arch.latent_shape))[-1]


def recon_loss(params, x):
    """Summed squared reconstruction error over the batch."""
    x = as_images(x, params.arch)
    xhat = _decode(params, _encode(params, x)[-1])[-1]
    return float(np.sum((x - xhat) ** 2))


def _ksc_residual_vectors(z, subs, labels):
    """Per-sample ``(I - S S^T) z`` for each sample's assigned subspace."""
    bases = stack_bases(subs)[np.asarray(labels)]
    return z - np.einsum("ndp,np->nd", bases, np.einsum("ndp,nd->np", bases, z))


def latent_ksc_grad(z, subs, labels, lam=1.0):
    """Gradient ``2 lam (I - S S^T) z`` of the subspace term for each latent row."""
    return (2.0 * lam) * _ksc_residual_vectors(np.atleast_2d(z), subs, labels)


def total_loss(params, x, subs, labels, lam):
    """Reconstruction loss plus ``lam`` times the k-subspace residual sum."""
    x = as_images(x, params.arch)
    enc = _encode(params, x)
    xhat = _decode(params, enc[-1])[-1]
    loss = float(np.sum((x - xhat) ** 2))
    if lam:
        r = _ksc_residual_vectors(enc[-1].reshape(x.shape[0], -1), subs, labels)
        loss += lam * float(np.sum(r * r))
    return loss


def backward(params, x, subs=None, labels=None, lam=0.0):
    """Gradients of the joint loss with respect to every parameter.

    The latent code receives ``2 * lam * (I - S S^T) z`` from the subspace
    term on top of the backpropagated reconstruction error; the decoder
    sees only the reconstruction term.

    If ``subs`` is given without ``labels``, each sample is assigned to its
    nearest subspace first.

    Returns
    -------
    grads : dict
        Same keys and shapes as ``params.tensors``.
    info : dict
        Batch losses ``"ae"``, ``"ksc"``, ``"total"``, the latent codes
        ``"z"`` and the memberships ``"labels"`` used.
    """
    arch, t = params.arch, params.tensors
    x = as_images(x, arch)
    n = x.shape[0]
    enc_acts = _encode(params, x)
    dec_acts = _decode(params, enc_acts[-1])
    diff = dec_acts[-1] - x
    loss_ae = float(np.sum(diff * diff))
    grads = {}

    enc = list(arch.encoder_layers())
    last = len(enc) - 1
    g = 2.0 * diff
    for j, (_, _, k, _, pad) in reversed(list(enumerate(reversed(enc)))):
        if j != last:
            g = g * (dec_acts[j + 1] > 0)
        grads[f"dec{j}.b"] = g.sum(axis=(0, 1, 2))
        grads[f"dec{j}.w"] = conv2d_grad_weight(g, dec_acts[j], k, pad, arch.stride)
        g = conv2d(g, t[f"dec{j}.w"], pad, arch.stride)

    z = enc_acts[-1].reshape(n, -1)
    loss_ksc = 0.0
    if subs is not None:
        if labels is None:
            labels = assign(z, subs)
        r = _ksc_residual_vectors(z, subs, labels)
        loss_ksc = float(np.sum(r * r))
        if lam:
            g = g + latent_ksc_grad(z, subs, labels, lam).reshape(g.shape)

    for l in reversed(range(len(enc))):
        _, _, k, in_hw, pad = enc[l]
        g = g * (enc_acts[l + 1] > 0)
        grads[f"enc{l}.b"] = g.sum(axis=(0, 1, 2))
        grads[f"enc{l}.w"] = conv2d_grad_weight(enc_acts[l], g, k, pad, arch.stride)
        if l:
            g = conv2d_grad_input(g, t[f"enc{l}.w"], in_hw, pad, arch.stride)

    info = {"ae": loss_ae, "ksc": loss_ksc, "total": loss_ae + lam * loss_ksc, "z": z, "labels": labels}
    return grads, info


def adam_step(params, grads, lr=1e-3, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
    """Bias-corrected Adam update, applied in place; returns ``params``."""
    params.adam_t += 1
    t = params.adam_t
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, g in grads.items():
        m = params.adam_m[name]
        v = params.adam_v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params.tensors[name] -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params
