"""Binary checkpoint format for a trained model and its subspaces.

Layout (all integers little-endian)::

    b"KSCN"                          magic
    u8      version (1)
    u32 x3  image height, width, channels
    u32     number of encoder layers L
    u32 xL  encoder channel list
    u32 xL  encoder kernel sizes
    u32     stride
    u32 x3  latent dim d, subspace dim p, number of subspaces k
    u64     Adam timestep
    f64 ... weights/biases in declaration order, then Adam first moments,
            then Adam second moments (same order)
    f64 ... k bases, each d x p row-major

``p = k = 0`` means no subspaces are stored.
"""

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .autoencoder import CaeArch, CaeParams
from .errors import FormatError
from .grassmann import SubspaceBasis

MAGIC = b"KSCN"
VERSION = 1


def to_bytes(params, subspaces=None):
    arch = params.arch
    subs = list(subspaces or [])
    d = arch.latent_dim
    p = subs[0].p if subs else 0
    head = [MAGIC, struct.pack("<B", VERSION)]
    ints = [*arch.image_shape, arch.n_layers, *arch.channels, *arch.kernels, arch.stride, d, p, len(subs)]
    head.append(struct.pack(f"<{len(ints)}I", *ints))
    head.append(struct.pack("<Q", params.adam_t))
    body = []
    for store in (params.tensors, params.adam_m, params.adam_v):
        for name in params.names:
            body.append(np.ascontiguousarray(store[name], dtype="<f8").tobytes())
    for s in subs:
        body.append(np.ascontiguousarray(s.basis, dtype="<f8").tobytes())
    return b"".join(head + body)


def from_bytes(buf):
    """Inverse of :func:`to_bytes`; returns ``(params, subspaces)``."""
    view = memoryview(buf)
    if bytes(view[:4]) != MAGIC:
        raise FormatError("not a KSCN checkpoint (bad magic)")
    if len(view) < 5 or view[4] != VERSION:
        raise FormatError(f"unsupported checkpoint version {view[4] if len(view) > 4 else None}")
    pos = 5

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(view):
            raise FormatError("truncated checkpoint")
        out = struct.unpack_from(fmt, view, pos)
        pos += size
        return out

    h, w, c, n_layers = take("<4I")
    channels = take(f"<{n_layers}I")
    kernels = take(f"<{n_layers}I")
    (stride,) = take("<I")
    d, p, k = take("<3I")
    (adam_t,) = take("<Q")
    arch = CaeArch((h, w, c), channels, kernels, stride)
    if arch.latent_dim != d:
        raise FormatError(f"latent dim {d} inconsistent with architecture ({arch.latent_dim})")

    def tensor(shape):
        nonlocal pos
        count = int(np.prod(shape))
        if pos + 8 * count > len(view):
            raise FormatError("truncated checkpoint")
        out = np.frombuffer(view, dtype="<f8", count=count, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * count
        return out

    shapes = arch.param_shapes()
    stores = [{name: tensor(shape) for name, shape in shapes.items()} for _ in range(3)]
    subs = [SubspaceBasis(tensor((d, p))) for _ in range(k)]
    if pos != len(view):
        raise FormatError(f"{len(view) - pos} trailing bytes in checkpoint")
    return CaeParams(arch, stores[0], stores[1], stores[2], adam_t), subs


def save_checkpoint(path, params, subspaces=None):
    """Write atomically: a temp file in the same directory is renamed into place."""
    path = Path(path)
    data = to_bytes(params, subspaces)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path):
    return from_bytes(Path(path).read_bytes())
