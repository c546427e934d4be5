"""Regenerates the tiny fixture datasets used by the tests.

    python3 tests/fixtures/generate.py

Output is deterministic for a given numpy/Pillow version.
"""

from pathlib import Path

import numpy as np
from PIL import Image

ROOT = Path(__file__).resolve().parent
SIZE = 32
rng = np.random.default_rng(20240611)


def background(h, w):
    base = rng.integers(20, 90, size=(h, w, 3))
    ramp = np.linspace(0, 30, w)[None, :, None]
    return np.clip(base + ramp, 0, 255).astype(np.uint8)


def disk(h, w, cx, cy, r):
    yy, xx = np.mgrid[0:h, 0:w]
    return (xx - cx) ** 2 + (yy - cy) ** 2 < r * r


def paint(img, mask, colour):
    noise = rng.integers(-15, 15, size=img.shape)
    fg = np.clip(np.array(colour)[None, None, :] + noise, 0, 255).astype(np.uint8)
    img[mask] = fg[mask]


def save_mask(path, mask):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray((mask * 255).astype(np.uint8), mode="L").save(path)


def save_rgb(path, img):
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".jpg":
        Image.fromarray(img, mode="RGB").save(path, quality=95)
    else:
        Image.fromarray(img, mode="RGB").save(path)


def image_instances():
    root = ROOT / "images"
    specs = [
        ("apple", [(11, 12, 7, (200, 60, 50))]),
        ("pair", [(9, 20, 5, (60, 190, 80)), (23, 11, 6, (220, 200, 60))]),
        ("ball", [(18, 17, 9, (80, 120, 230))]),
    ]
    for name, objects in specs:
        img = background(SIZE, SIZE)
        for k, (cx, cy, r, colour) in enumerate(objects):
            m = disk(SIZE, SIZE, cx, cy, r)
            paint(img, m, colour)
            save_mask(root / "masks" / name / f"{k}.png", m)
        save_rgb(root / "images" / f"{name}.png", img)


def sequences(root, specs, annotate_every=1):
    for name, frames, start, velocity, r, colour in specs:
        bg = background(SIZE, SIZE)
        for t in range(frames):
            cx = start[0] + velocity[0] * t
            cy = start[1] + velocity[1] * t
            m = disk(SIZE, SIZE, cx, cy, r)
            img = bg.copy()
            paint(img, m, colour)
            save_rgb(root / "JPEGImages" / name / f"{t:05d}.jpg", img)
            if t % annotate_every == 0:
                save_mask(root / "Annotations" / name / f"{t:05d}.png", m)


def main():
    image_instances()
    davis = ROOT / "davis"
    sequences(
        davis,
        [
            ("drift", 10, (8, 12), (1.5, 0.5), 7, (210, 70, 60)),
            ("hop", 6, (22, 20), (-1.0, -1.2), 6, (70, 200, 90)),
        ],
    )
    (davis / "val.txt").write_text("drift\nhop\n")
    sparse = ROOT / "sparse"
    sequences(sparse, [("walk", 11, (6, 16), (2.0, 0.0), 6, (230, 210, 70))], annotate_every=5)
    (sparse / "val.txt").write_text("walk\n")


if __name__ == "__main__":
    main()
