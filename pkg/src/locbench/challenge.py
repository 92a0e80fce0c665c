"""Challenging-query detection: blur and dynamic-content flags.

A query is *blurry* when little of its energy sits in high spatial
frequencies: low-pass the image in the Fourier domain (zero every
coefficient outside a centered square of side 2*cutoff+1), invert, and
take the mean absolute difference against the original. A small
difference means the high frequencies were absent to begin with, so
*low* mad = blurry; the flag is ``mad <= threshold``.

A query is *dynamic* when at least 20% of its pixels carry a label
from the dynamic class set (people, vehicles, ...). Masks are 8-bit
label rasters; class names resolve through a label table.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BlurScore",
    "DynamicFraction",
    "BLUR_CUTOFF",
    "BLUR_MAD_THRESHOLD",
    "DYNAMIC_MIN_FRACTION",
    "to_grayscale",
    "blur_score",
    "dynamic_fraction",
]

BLUR_CUTOFF = 60
BLUR_MAD_THRESHOLD = 20.0
DYNAMIC_MIN_FRACTION = 0.20

GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class BlurScore:
    image_id: str
    mad: float
    blurry: bool

    def __post_init__(self):
        if self.mad < 0:
            raise ValueError("mad must be non-negative")


@dataclass(frozen=True)
class DynamicFraction:
    image_id: str
    fraction: float
    dynamic: bool

    def __post_init__(self):
        if not (0.0 <= self.fraction <= 1.0):
            raise ValueError("fraction must lie in [0, 1]")


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """Luminance conversion with 0.299/0.587/0.114 weights; grayscale
    input passes through as float64."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[2] == 3:
        return img @ GRAY_WEIGHTS
    raise ValueError(f"expected HxW or HxWx3 image, got shape {img.shape}")


def blur_score(
    image: np.ndarray,
    cutoff: int = BLUR_CUTOFF,
    threshold: float = BLUR_MAD_THRESHOLD,
    image_id: str = "",
) -> BlurScore:
    """Mean absolute difference between an image and its low-passed self.

    The kept band is the centered (2*cutoff+1)-sided square in the
    shifted Fourier plane, so the DC term always survives and constant
    offsets cancel in the difference. Images smaller than the kept
    square are rejected: the low-pass would be the identity.
    """
    img = to_grayscale(image)
    h, w = img.shape
    side = 2 * cutoff + 1
    if h < side or w < side:
        raise ValueError(f"image {h}x{w} smaller than the {side}x{side} low-pass window")
    spectrum = np.fft.fftshift(np.fft.fft2(img))
    keep = np.zeros_like(spectrum)
    rc, cc = h // 2, w // 2
    keep[rc - cutoff : rc + cutoff + 1, cc - cutoff : cc + cutoff + 1] = spectrum[
        rc - cutoff : rc + cutoff + 1, cc - cutoff : cc + cutoff + 1
    ]
    recon = np.fft.ifft2(np.fft.ifftshift(keep)).real
    mad = float(np.mean(np.abs(img - recon)))
    return BlurScore(image_id=image_id, mad=mad, blurry=mad <= threshold)


def dynamic_fraction(
    mask: np.ndarray,
    dynamic_classes,
    label_table: dict | None = None,
    image_id: str = "",
) -> DynamicFraction:
    """Fraction of pixels labeled with any of the dynamic classes.

    ``dynamic_classes`` holds class names when ``label_table`` (id ->
    name) is given, raw integer label ids otherwise. Unknown entries
    are ignored with a warning rather than failing the image. The
    dynamic flag uses the inclusive 20% threshold.
    """
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ValueError("mask must be a 2D label raster")
    if m.size == 0:
        raise ValueError("empty mask")
    ids = []
    unknown = []
    if label_table is not None:
        name_to_id = {}
        for label_id, name in label_table.items():
            name_to_id[name] = int(label_id)
        for cls in dynamic_classes:
            if cls in name_to_id:
                ids.append(name_to_id[cls])
            elif isinstance(cls, (int, np.integer)) and int(cls) in label_table:
                ids.append(int(cls))
            else:
                unknown.append(cls)
    else:
        for cls in dynamic_classes:
            if isinstance(cls, (int, np.integer)) and 0 <= int(cls) <= 255:
                ids.append(int(cls))
            else:
                unknown.append(cls)
    if unknown:
        warnings.warn(f"ignoring unknown dynamic class(es): {unknown!r}", stacklevel=2)
    if ids:
        fraction = float(np.isin(m, ids).mean())
    else:
        fraction = 0.0
    return DynamicFraction(
        image_id=image_id,
        fraction=fraction,
        dynamic=fraction >= DYNAMIC_MIN_FRACTION,
    )
