#!/usr/bin/env python3
"""Convert the digit JSON files shipped by the npm `mnist` package into IDX.

The package stores each digit class as {"data": [...]} with 784 floats per
image, already scaled to [0,1] and rounded to three decimals.  Multiplying by
255 and rounding recovers the original unsigned bytes exactly.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/mnist_json_to_idx.py package/src/digits $DAFC_DATA_DIR/mnist

Writes train-images-idx3-ubyte and train-labels-idx1-ubyte, interleaving the
classes so that any prefix of the file is roughly class balanced.
"""
import argparse
import json
import pathlib
import struct


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir", type=pathlib.Path)
    ap.add_argument("out_dir", type=pathlib.Path)
    args = ap.parse_args()

    per_class = []
    for d in range(10):
        raw = json.loads((args.digits_dir / f"{d}.json").read_text())["data"]
        if len(raw) % 784:
            raise SystemExit(f"{d}.json: length {len(raw)} is not a multiple of 784")
        imgs = [bytes(int(round(v * 255.0)) for v in raw[i:i + 784])
                for i in range(0, len(raw), 784)]
        per_class.append(imgs)

    images, labels = [], []
    longest = max(len(c) for c in per_class)
    for i in range(longest):
        for d, imgs in enumerate(per_class):
            if i < len(imgs):
                images.append(imgs[i])
                labels.append(d)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    with open(args.out_dir / "train-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(img)
    with open(args.out_dir / "train-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))
    print(f"wrote {len(images)} images to {args.out_dir}")


if __name__ == "__main__":
    main()
