"""Class-conditioned sampling from an SS decoder and a binary PGM (P5) writer."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import VariantError
from .model import SsVaeModel


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def pgm_bytes(img: np.ndarray) -> bytes:
    """Binary graymap, maxval 255, of a 2-D image with values in [0, 1]."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"PGM needs a 2-D image, got shape {img.shape}")
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + to_uint8(img).tobytes()


def write_pgm(path, img: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "wb") as f:
        f.write(pgm_bytes(img))
    os.replace(tmp, path)


def read_pgm(path) -> np.ndarray:
    """Inverse of :func:`write_pgm` for the files it writes (no comments in the header)."""
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5" or len(parts) < 4:
        raise ValueError(f"{path}: not a binary PGM")
    w, h = map(int, parts[1].split())
    if int(parts[2]) != 255:
        raise ValueError(f"{path}: maxval must be 255")
    return np.frombuffer(parts[3], dtype=np.uint8, count=w * h).reshape(h, w)


def tile(images: np.ndarray, rows: int, cols: int, shape: tuple[int, int]) -> np.ndarray:
    """Arrange ``rows*cols`` flat images row-major into one (rows*h, cols*w) canvas."""
    h, w = shape
    images = np.asarray(images).reshape(rows, cols, h, w)
    return images.transpose(0, 2, 1, 3).reshape(rows * h, cols * w)


def latent_grid(n: int, latent_dim: int, rng: np.random.Generator | int | None = None, span: float = 2.0) -> np.ndarray:
    """n*n latent codes: an even grid over [-span, span]^2 when latent_dim == 2, else N(0, I) draws."""
    if latent_dim == 2:
        axis = np.linspace(-span, span, n)
        zy, zx = np.meshgrid(axis, axis, indexing="ij")
        # top row of the canvas holds the largest second coordinate
        return np.stack([zx.ravel(), zy[::-1].ravel()], axis=1)
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return rng.standard_normal((n * n, latent_dim))


def generate_class_grids(model: SsVaeModel, n: int = 5, seed: int = 0) -> dict[int, np.ndarray]:
    """Decode the same n*n latent codes once per class with a one-hot pi.

    Returns class -> (n*n, input_dim) images.  Needs an SS model whose
    decoder reads pi; ES/EU models cannot separate class from style.
    """
    spec = model.spec
    if not spec.feeds_pi:
        raise VariantError(f"{spec.variant} model (pi_to_decoder={spec.pi_to_decoder}) cannot condition on a class")
    if len(spec.head_sizes) != 1:
        raise VariantError("class-conditioned generation supports a single pi head")
    z = latent_grid(n, spec.latent_dim, seed).astype(model.dtype)
    classes = spec.head_sizes[0]
    out = {}
    for k in range(classes):
        onehot = np.zeros((len(z), classes), dtype=model.dtype)
        onehot[:, k] = 1.0
        out[k] = model.decode(onehot, z).data
    return out


def grid_predictions(model: SsVaeModel, grids: dict[int, np.ndarray]) -> dict[int, int]:
    """Majority vote of the model's own classifier over each class grid (ties go to the lower class)."""
    preds = {}
    for k, imgs in grids.items():
        votes = np.bincount(model.classify(imgs).data.argmax(axis=1), minlength=model.spec.head_sizes[0])
        preds[k] = int(votes.argmax())
    return preds


def self_consistency(model: SsVaeModel, grids: dict[int, np.ndarray]) -> int:
    """Number of class grids whose majority prediction is their conditioning class."""
    return sum(int(p == k) for k, p in grid_predictions(model, grids).items())


def write_class_grids(
    grids: dict[int, np.ndarray], out_dir, n: int, shape: tuple[int, int] = (28, 28)
) -> list[Path]:
    """One ``class_<k>.pgm`` per class plus ``all_classes.pgm`` stacking them top to bottom."""
    out_dir = Path(out_dir)
    written = []
    canvases = []
    for k in sorted(grids):
        canvas = tile(grids[k], n, n, shape)
        canvases.append(canvas)
        path = out_dir / f"class_{k}.pgm"
        write_pgm(path, canvas)
        written.append(path)
    combined = out_dir / "all_classes.pgm"
    write_pgm(combined, np.concatenate(canvases, axis=0))
    written.append(combined)
    return written
