"""File formats: PNG/PGM images, FSTK feature stacks, network parameters.

FSTK layout (little-endian): magic "FSTK", version u32 = 1, then K, H, W
as u32, then K*H*W float32 samples, channel-major then row-major.

Parameter file layout (little-endian): magic "LSNN", version u32 = 1,
K u32, then for each block in fixed order (decomposition 1..3, then
reconstruction): out u32, in u32, weights float64 (out-major, then in,
then row, then column), biases float64.
"""
from __future__ import annotations

import struct

import numpy as np
from PIL import Image

from liftseg.cnn import ConvBlockParams, NetworkParams, _layer_shapes
from liftseg.errors import ValidationError
from liftseg.metrics import PALETTE
from liftseg.model import validate_image

FSTK_MAGIC = b"FSTK"
FSTK_VERSION = 1
PARAMS_MAGIC = b"LSNN"
PARAMS_VERSION = 1

# Rec. 709 luminance weights for RGB input.
_LUMA = (0.2126, 0.7152, 0.0722)


def load_image(path):
    """Load a PNG or PGM file as a (H, W) float64 image in [0, 1].

    8-bit data is scaled by 1/255, 16-bit by 1/65535; RGB(A) input is
    converted to luminance.
    """
    try:
        with Image.open(path) as im:
            mode = im.mode
            if mode in ("RGB", "RGBA", "P"):
                rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
                arr = (_LUMA[0] * rgb[:, :, 0] + _LUMA[1] * rgb[:, :, 1]
                       + _LUMA[2] * rgb[:, :, 2]) / 255.0
            elif mode == "L":
                arr = np.asarray(im, dtype=np.float64) / 255.0
            elif mode in ("I", "I;16", "I;16B", "I;16L"):
                arr = np.asarray(im, dtype=np.float64) / 65535.0
            else:
                raise ValidationError(f"unsupported image mode {mode!r} in {path}")
    except (OSError, SyntaxError) as exc:
        raise ValidationError(f"cannot read image {path}: {exc}") from exc
    validate_image(arr)
    return arr


def load_label_map(path):
    """Load a label map from a palette or grayscale PNG."""
    try:
        with Image.open(path) as im:
            if im.mode in ("P", "L"):
                arr = np.asarray(im, dtype=np.int64)
            else:
                raise ValidationError(
                    f"label maps must be palette or 8-bit grayscale PNG, got mode {im.mode!r}"
                )
    except (OSError, SyntaxError) as exc:
        raise ValidationError(f"cannot read label map {path}: {exc}") from exc
    return arr


def _palette_bytes():
    flat = [0, 0, 0]  # class 0: black
    for c in range(255):
        flat.extend(PALETTE[c % len(PALETTE)])
    return flat


def save_label_png(labels, path):
    """Save a label map as an 8-bit palette PNG (index = class)."""
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() > 255:
        raise ValidationError("label values must fit in one byte")
    im = Image.fromarray(labels.astype(np.uint8), mode="P")
    im.putpalette(_palette_bytes())
    im.save(path, format="PNG")


def save_overlay_png(rgb, path):
    Image.fromarray(np.asarray(rgb, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def write_feature_stack(path, stack):
    """Write a (K, H, W) stack as an FSTK file (float32 payload)."""
    stack = np.asarray(stack, dtype=np.float64)
    if stack.ndim != 3:
        raise ValidationError(f"feature stack must be (K, H, W), got {stack.shape}")
    kc, h, w = stack.shape
    with open(path, "wb") as fh:
        fh.write(FSTK_MAGIC)
        fh.write(struct.pack("<IIII", FSTK_VERSION, kc, h, w))
        fh.write(np.ascontiguousarray(stack, dtype="<f4").tobytes())


def read_feature_stack(path):
    """Read an FSTK file back into a (K, H, W) float64 stack."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read feature stack {path}: {exc}") from exc
    header = 4 + 4 * 4
    if len(blob) < header:
        raise ValidationError(f"{path}: truncated FSTK header")
    if blob[:4] != FSTK_MAGIC:
        raise ValidationError(f"{path}: bad magic, not an FSTK file")
    version, kc, h, w = struct.unpack("<IIII", blob[4:header])
    if version != FSTK_VERSION:
        raise ValidationError(f"{path}: unsupported FSTK version {version}")
    expected = kc * h * w * 4
    if len(blob) - header != expected:
        raise ValidationError(
            f"{path}: payload size mismatch (expected {expected} bytes, "
            f"got {len(blob) - header})"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=header)
    return data.reshape(kc, h, w).astype(np.float64)


def write_network_params(path, params):
    """Serialize NetworkParams in the fixed block order."""
    with open(path, "wb") as fh:
        fh.write(PARAMS_MAGIC)
        fh.write(struct.pack("<II", PARAMS_VERSION, params.k))
        for block in params.blocks():
            out_c, in_c = block.weights.shape[:2]
            fh.write(struct.pack("<II", out_c, in_c))
            fh.write(np.ascontiguousarray(block.weights, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(block.biases, dtype="<f8").tobytes())


def read_network_params(path):
    """Read NetworkParams written by write_network_params."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read parameter file {path}: {exc}") from exc
    if len(blob) < 12 or blob[:4] != PARAMS_MAGIC:
        raise ValidationError(f"{path}: not a network parameter file")
    version, kc = struct.unpack("<II", blob[4:12])
    if version != PARAMS_VERSION:
        raise ValidationError(f"{path}: unsupported parameter version {version}")
    pos = 12
    blocks = []
    for exp_out, exp_in, act in _layer_shapes(kc):
        if len(blob) < pos + 8:
            raise ValidationError(f"{path}: truncated block header")
        out_c, in_c = struct.unpack("<II", blob[pos:pos + 8])
        pos += 8
        if (out_c, in_c) != (exp_out, exp_in):
            raise ValidationError(
                f"{path}: unexpected block shape {out_c}x{in_c}, "
                f"expected {exp_out}x{exp_in}"
            )
        nw = out_c * in_c * 9
        need = (nw + out_c) * 8
        if len(blob) < pos + need:
            raise ValidationError(f"{path}: truncated block payload")
        weights = np.frombuffer(blob, dtype="<f8", count=nw, offset=pos)
        pos += nw * 8
        biases = np.frombuffer(blob, dtype="<f8", count=out_c, offset=pos)
        pos += out_c * 8
        blocks.append(ConvBlockParams(
            weights=weights.reshape(out_c, in_c, 3, 3).copy(),
            biases=biases.copy(),
            activation=act,
        ))
    if pos != len(blob):
        raise ValidationError(f"{path}: trailing bytes after parameter blocks")
    return NetworkParams(decomposition=blocks[:3], reconstruction=blocks[3], k=kc)
