"""Seeded hashed character n-gram text features.

Character 3-5-grams of the normalized query (wrapped in boundary markers)
are hashed with a keyed digest into a fixed number of signed buckets, then
L2-normalized. Deterministic across processes and platforms: the digest is
keyed by the seed, never by Python's per-process string hashing.
"""

import hashlib

import numpy as np

from .data import normalize_query

NGRAM_SIZES = (3, 4, 5)
_BOUNDARY_OPEN = "<"
_BOUNDARY_CLOSE = ">"


class HashedNgramEmbedder:
    """Projects text to a dense vector of ``dim`` signed hash buckets."""

    def __init__(self, dim=256, seed=0):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        if seed < 0:
            raise ValueError(f"seed must be >= 0, got {seed}")
        self.dim = dim
        self.seed = seed
        self._key = int(seed).to_bytes(8, "little")
        self._bucket_cache = {}

    def _bucket(self, ngram):
        cached = self._bucket_cache.get(ngram)
        if cached is None:
            digest = hashlib.blake2b(
                ngram.encode("utf-8"), digest_size=8, key=self._key).digest()
            value = int.from_bytes(digest, "little")
            cached = (value % self.dim, 1.0 if value >> 63 == 0 else -1.0)
            self._bucket_cache[ngram] = cached
        return cached

    def ngrams(self, text):
        padded = _BOUNDARY_OPEN + normalize_query(text) + _BOUNDARY_CLOSE
        out = []
        for size in NGRAM_SIZES:
            for start in range(len(padded) - size + 1):
                out.append(padded[start:start + size])
        if not out:
            out.append(padded)
        return out

    def embed(self, text):
        """Signed bucket counts of the text's n-grams, L2-normalized."""
        if not text.strip():
            raise ValueError("cannot embed empty text")
        vec = np.zeros(self.dim)
        for ngram in self.ngrams(text):
            idx, sign = self._bucket(ngram)
            vec[idx] += sign
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec

    def embed_many(self, texts):
        return np.stack([self.embed(t) for t in texts])
