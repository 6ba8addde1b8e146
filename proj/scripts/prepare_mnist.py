#!/usr/bin/env python3
"""Fetch the bundled MNIST digit images and write them as IDX files.

The `mnist` npm package ships 10,000 genuine MNIST digits (28x28 grayscale,
roughly 1,000 per class) as JSON. This script fetches it with `npm pack`,
converts the pixels back to unsigned bytes and writes four IDX files under
data/mnist/: a 6,000-image training pool and a 4,000-image test set, split
per class in bundled order so the conversion is fully deterministic.

Usage:
    python3 scripts/prepare_mnist.py [--out data/mnist] [--digits-dir DIR]

--digits-dir skips the download and reads 0.json..9.json from an existing
directory (e.g. an unpacked copy of the package's src/digits/).
"""

import argparse
import json
import pathlib
import struct
import subprocess
import sys
import tarfile
import tempfile

TRAIN_FRACTION = 0.6
SIDE = 28


def fetch_digits(tmp: pathlib.Path) -> pathlib.Path:
    subprocess.run(
        ["npm", "pack", "mnist@1.1.0", "--pack-destination", str(tmp)],
        check=True,
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    tgz = next(tmp.glob("mnist-*.tgz"))
    with tarfile.open(tgz) as tar:
        tar.extractall(tmp)
    return tmp / "package" / "src" / "digits"


def load_digit(digits_dir: pathlib.Path, digit: int) -> list[bytes]:
    data = json.loads((digits_dir / f"{digit}.json").read_text())["data"]
    if len(data) % (SIDE * SIDE) != 0:
        raise SystemExit(f"{digit}.json payload is not a multiple of {SIDE * SIDE}")
    images = []
    for off in range(0, len(data), SIDE * SIDE):
        pixels = data[off : off + SIDE * SIDE]
        images.append(bytes(min(255, max(0, round(v * 255))) for v in pixels))
    return images


def write_idx_images(path: pathlib.Path, images: list[bytes]) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), SIDE, SIDE))
        for img in images:
            f.write(img)


def write_idx_labels(path: pathlib.Path, labels: list[int]) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data/mnist", type=pathlib.Path)
    ap.add_argument("--digits-dir", default=None, type=pathlib.Path)
    args = ap.parse_args()

    out: pathlib.Path = args.out
    expected = [
        out / "train-images-idx3-ubyte",
        out / "train-labels-idx1-ubyte",
        out / "t10k-images-idx3-ubyte",
        out / "t10k-labels-idx1-ubyte",
    ]
    if all(p.exists() for p in expected):
        print(f"{out} already prepared; nothing to do")
        return 0
    out.mkdir(parents=True, exist_ok=True)

    with tempfile.TemporaryDirectory() as tmp:
        digits_dir = args.digits_dir or fetch_digits(pathlib.Path(tmp))
        per_digit = [load_digit(digits_dir, d) for d in range(10)]

        train_imgs: list[bytes] = []
        train_lbls: list[int] = []
        test_imgs: list[bytes] = []
        test_lbls: list[int] = []
        # Deterministic split: the first 60% of each class in bundled order
        # forms the training pool. Classes are interleaved in the output so
        # any prefix of the files keeps the class mix.
        cut = [int(len(imgs) * TRAIN_FRACTION) for imgs in per_digit]
        for rank in range(max(len(i) for i in per_digit)):
            for d  in range(10):
                if rank >= len(per_digit[d]):
                    continue
                if rank < cut[d]:
                    train_imgs.append(per_digit[d][rank])
                    train_lbls.append(d)
                else:
                    test_imgs.append(per_digit[d][rank])
                    test_lbls.append(d)

    write_idx_images(expected[0], train_imgs)
    write_idx_labels(expected[1], train_lbls)
    write_idx_images(expected[2], test_imgs)
    write_idx_labels(expected[3], test_lbls)
    print(f"wrote {len(train_imgs)} training and {len(test_imgs)} test images to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
