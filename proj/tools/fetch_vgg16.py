#!/usr/bin/env python3
"""Download torchvision's ImageNet VGG16 and export the convolutions up to
relu3_3 in recnet's archive format.

    pip install torch torchvision
    python3 tools/fetch_vgg16.py --out weights/vgg16_relu3_3.rec

Prints the SHA-256 of the written file; put it in the config as
`vgg_sha256` next to `vgg_weights`.
"""

import argparse
import hashlib
import struct
import sys
import zlib

# Indices of the conv layers in torchvision's vgg16().features up to relu3_3.
CONV_INDICES = (0, 2, 5, 7, 10, 12, 14)


def put_str(buf, s):
    data = s.encode("utf-8")
    buf += struct.pack("<I", len(data))
    buf += data


def write_archive(path, meta, arrays):
    payload = bytearray()
    payload += struct.pack("<I", len(meta))
    for key in sorted(meta):
        put_str(payload, key)
        put_str(payload, meta[key])
    payload += struct.pack("<I", len(arrays))
    for name in sorted(arrays):
        arr = arrays[name]
        put_str(payload, name)
        payload += struct.pack("<I", arr.ndim)
        payload += struct.pack("<%dq" % arr.ndim, *arr.shape)
        payload += arr.astype("<f8").tobytes(order="C")
    with open(path, "wb") as f:
        f.write(b"RECNETAR")
        f.write(struct.pack("<IQ", 1, len(payload)))
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(bytes(payload)) & 0xFFFFFFFF))


def export_features(features, path, source):
    """Writes the convolutions of a torchvision vgg16().features stack."""
    arrays = {}
    for idx in CONV_INDICES:
        conv = features[idx]
        # torch stores OIHW; recnet kernels are (kh, kw, in, out).
        arrays["features.%d.weight" % idx] = conv.weight.detach().double().numpy().transpose(2, 3, 1, 0).copy()
        arrays["features.%d.bias" % idx] = conv.bias.detach().double().numpy().copy()
    meta = {"kind": "vgg16-features", "source": source, "last_layer": "relu3_3"}
    write_archive(path, meta, arrays)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True, help="output archive path")
    args = parser.parse_args()

    try:
        from torchvision.models import VGG16_Weights, vgg16
    except ImportError:
        sys.exit("error: torch and torchvision are required (pip install torch torchvision)")

    features = vgg16(weights=VGG16_Weights.IMAGENET1K_V1).features
    export_features(features, args.out, "torchvision IMAGENET1K_V1")

    with open(args.out, "rb") as f:
        digest = hashlib.sha256(f.read()).hexdigest()
    print("wrote %s" % args.out)
    print("vgg_sha256 = %s" % digest)


if __name__ == "__main__":
    main()
