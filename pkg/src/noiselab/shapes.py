"""Synthetic single-channel shape images used as the training corpus.

Four classes - disk, square, cross, stripes - rendered at 16x16 with
randomized placement and size. Pixel values live in [-1, 1]; the
foreground/background levels are drawn so their contrast is always at
least 1.0. Rendering is a pure function of the drawn parameters, so a
record is reproducible from (class, seed) alone.
"""

from __future__ import annotations

import numpy as np

from .rng import RngStream, derive_stream

CLASS_NAMES = ("disk", "square", "cross", "stripes")
NUM_CLASSES = len(CLASS_NAMES)


class ShapesDataset:
    def __init__(self, size: int = 16):
        self.size = size
        self.image_shape = (1, size, size)
        ax = np.arange(size, dtype=np.float64)
        self._px = np.broadcast_to(ax[None, None, :], (1, size, size))
        self._py = np.broadcast_to(ax[None, :, None], (1, size, size))

    # -- rendering -----------------------------------------------------------

    def _render(self, classes: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Render a batch from uniform parameter draws u of shape (8, n)."""
        n = classes.size
        s = self.size
        x = self._px
        y = self._py
        col = lambda v: v.reshape(n, 1, 1)

        bg = -0.9 + 0.35 * u[0]          # [-0.90, -0.55]
        fg = 0.55 + 0.35 * u[1]          # [ 0.55,  0.90]
        cx = col(s * (0.3 + 0.4 * u[2]))
        cy = col(s * (0.3 + 0.4 * u[3]))

        mask = np.zeros((n, s, s), dtype=bool)
        for cid in range(NUM_CLASSES):
            rows = classes == cid
            if not np.any(rows):
                continue
            if cid == 0:  # disk
                r = col(s * (0.16 + 0.15 * u[4]))
                m = (x - cx) ** 2 + (y - cy) ** 2 <= r ** 2
            elif cid == 1:  # square
                half = col(s * (0.13 + 0.15 * u[4]))
                m = (np.abs(x - cx) <= half) & (np.abs(y - cy) <= half)
            elif cid == 2:  # cross
                thick = col(s * (0.05 + 0.05 * u[4]))
                arm = col(s * (0.25 + 0.18 * u[5]))
                m = ((np.abs(x - cx) <= thick) & (np.abs(y - cy) <= arm)) | \
                    ((np.abs(y - cy) <= thick) & (np.abs(x - cx) <= arm))
            else:  # stripes
                period = col(s * (0.18 + 0.18 * u[4]))
                phase = col(u[5]) * period
                coord = np.where(col(u[6]) < 0.5, x, y)
                m = np.mod(coord + phase, period) < 0.5 * period
            mask[rows] = m[rows]

        img = np.where(mask, col(fg), col(bg))
        return img[:, None, :, :]  # (n, 1, H, W)

    # -- sampling ------------------------------------------------------------

    def sample(self, rng: RngStream, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Draw n (image, class) records from one stream."""
        classes = rng.integers(0, NUM_CLASSES, n).astype(np.intp)
        u = rng.uniform(0.0, 1.0, (8, n))
        return self._render(classes, u), classes

    def sample_class(self, rng: RngStream, class_id: int, n: int) -> np.ndarray:
        classes = np.full(n, class_id, dtype=np.intp)
        u = rng.uniform(0.0, 1.0, (8, n))
        return self._render(classes, u)

    def image(self, class_id: int, seed: int) -> np.ndarray:
        """Single record, reproducible from (class, seed)."""
        if not 0 <= class_id < NUM_CLASSES:
            raise ValueError(f"class id out of range [0, {NUM_CLASSES}): {class_id}")
        rng = derive_stream(seed, f"shape-{CLASS_NAMES[class_id]}")
        u = rng.uniform(0.0, 1.0, (8, 1))
        return self._render(np.array([class_id], dtype=np.intp), u)[0]

    def class_template(self, class_id: int, n: int = 512, seed: int = 0) -> np.ndarray:
        """Mean image of a class; used by template-matching probes."""
        rng = derive_stream(seed, f"template-{class_id}")
        return self.sample_class(rng, class_id, n).mean(axis=0)
