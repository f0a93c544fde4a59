#!/usr/bin/env python3
"""Download the torchvision ImageNet VGG16 weights and write the
convolutions up to relu3_3 as a safetensors file.

    python scripts/fetch_vgg16.py --out weights/vgg16_relu3_3.safetensors

Prints the SHA-256 of the written file; put it in the training config as
`perceptual_sha256` next to `perceptual_weights`.
"""

import argparse
import hashlib
import pathlib

import torch
from safetensors.torch import save_file
from torchvision.models import VGG16_Weights, vgg16

# torchvision `features` indices of conv1_1 .. conv3_3
CONV_INDICES = (0, 2, 5, 7, 10, 12, 14)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=pathlib.Path, default=pathlib.Path("weights/vgg16_relu3_3.safetensors"))
    args = parser.parse_args()

    model = vgg16(weights=VGG16_Weights.IMAGENET1K_V1).eval()
    state = model.state_dict()
    tensors = {}
    for i in CONV_INDICES:
        for kind in ("weight", "bias"):
            name = f"features.{i}.{kind}"
            tensors[name] = state[name].to(torch.float32).contiguous()

    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_file(tensors, str(args.out), metadata={"source": "torchvision VGG16_Weights.IMAGENET1K_V1"})
    digest = hashlib.sha256(args.out.read_bytes()).hexdigest()
    print(f"wrote {args.out}")
    print(f"perceptual_weights = {args.out}")
    print(f"perceptual_sha256 = {digest}")


if __name__ == "__main__":
    main()
