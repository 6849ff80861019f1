#!/usr/bin/env python3
# Copyright 2026 The treekv-cpp Authors
# SPDX-License-Identifier: Apache-2.0
"""Standalone reference for the weight-generation recurrence.

Re-implements SplitMix64, the polar normal method and the documented
generation order without touching the C++ sources, and prints the first
entries of layer 0 / head 0 W_Q so the unit tests can freeze them.

    python3 weights_reference.py 42 8 4
"""
import math
import struct
import sys

MASK = (1 << 64) - 1


def splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return state, z ^ (z >> 31)


def normals(seed):
    state = seed
    while True:
        while True:
            state, a = splitmix64(state)
            state, b = splitmix64(state)
            u = 2.0 * ((a >> 11) * 2.0**-53) - 1.0
            v = 2.0 * ((b >> 11) * 2.0**-53) - 1.0
            s = u * u + v * v
            if 0.0 < s < 1.0:
                break
        f = math.sqrt(-2.0 * math.log(s) / s)
        yield u * f
        yield v * f


def to_f32(x):
    return struct.unpack("<f", struct.pack("<f", x))[0]


def main():
    seed, d_model, d_head = (int(a) for a in sys.argv[1:4])
    gen = normals(seed)
    scale = 1.0 / math.sqrt(d_model)
    wq = [to_f32(next(gen) * scale) for _ in range(d_model * d_head)]
    for i in range(4):
        print(f"W_Q[0][{i}] = {wq[i]!r}  bits=0x{struct.unpack('<I', struct.pack('<f', wq[i]))[0]:08x}")


if __name__ == "__main__":
    main()
