"""Export torchvision's ImageNet VGG-19 trunk to the ccl tensor archive.

    python scripts/export_vgg19.py vgg19.ccl
    export CCL_BACKBONE_WEIGHTS=$PWD/vgg19.ccl

Only the 13 convolutions up to conv5_1 are written, under torchvision's
names (features.<idx>.weight / .bias). Requires torch and torchvision.
"""
import argparse
import struct

import numpy as np
import torch
from torchvision.models import VGG19_Weights, vgg19

CONV_INDICES = [0, 2, 5, 7, 10, 12, 14, 16, 19, 21, 23, 25, 28]


def nchw(t):
    a = t.detach().cpu().numpy().astype("<f4")
    if a.ndim == 1:  # bias -> 1 x C x 1 x 1
        return a.reshape(1, -1, 1, 1)
    return a


def write_archive(path, tensors):
    with open(path, "wb") as f:
        f.write(b"CCLTENS1")
        f.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            a = np.ascontiguousarray(tensors[name])
            raw = name.encode()
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<4i", *a.shape))
            f.write(a.tobytes())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", help="archive path to write")
    args = ap.parse_args()
    state = vgg19(weights=VGG19_Weights.IMAGENET1K_V1).state_dict()
    tensors = {}
    for i in CONV_INDICES:
        for kind in ("weight", "bias"):
            name = f"features.{i}.{kind}"
            tensors[name] = nchw(state[name])
    write_archive(args.out, tensors)
    print(f"wrote {len(tensors)} tensors to {args.out}")


if __name__ == "__main__":
    main()
