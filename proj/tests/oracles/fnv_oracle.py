"""Independent reference for the FNV-1a trigram test embedder.

Sparse, double precision, written without reference to the C++ code. Used
to compute the expected values frozen into the C++ tests.
"""
import math
import sys

OFFSET = 14695981039346656037
PRIME = 1099511628211
MASK = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    h = OFFSET
    for b in data:
        h ^= b
        h = (h * PRIME) & MASK
    return h


def lower_ascii(data: bytes) -> bytes:
    return bytes(b + 32 if 65 <= b <= 90 else b for b in data)


def embed(text: str, dim: int) -> dict:
    data = lower_ascii(text.encode("utf-8"))
    windows = [data] if len(data) < 3 else [data[i:i + 3] for i in range(len(data) - 2)]
    acc = {}
    for w in windows:
        b = fnv1a64(w) % dim
        acc[b] = acc.get(b, 0.0) + 1.0
    norm = math.sqrt(sum(v * v for v in acc.values()))
    return {k: v / norm for k, v in acc.items()}


def cosine(a: dict, b: dict) -> float:
    return sum(v * b.get(k, 0.0) for k, v in a.items())


def sim(x: str, y: str, dim: int = 1536) -> float:
    return cosine(embed(x, dim), embed(y, dim))


if __name__ == "__main__":
    for arg in sys.argv[1:]:
        print(arg, embed(arg, 8))
