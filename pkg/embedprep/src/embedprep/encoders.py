"""Embedding backends.

The default backend is a seeded feature-hashing encoder: token unigrams
and bigrams are hashed into a fixed number of signed buckets.  It needs
no weights, no network and no cache, and two equal strings always map to
the same vector, so banks built from it are reproducible byte for byte.

A sentence-transformers adapter is provided for real models; it is
constructed lazily so that merely naming it costs nothing when the
package or its weights are absent.
"""

import hashlib
import re

import numpy as np

from .errors import ConfigurationError, EncoderError

_TOKEN = re.compile(r"[a-z0-9]+")
_HASH_KEY = b"embedprep-v1"


def _features(text: str):
    tokens = _TOKEN.findall(text.lower())
    return tokens + [a + " " + b for a, b in zip(tokens, tokens[1:])]


class HashingEncoder:
    """Signed bag-of-ngrams folded into ``dim`` buckets.

    Bucket index and sign come from a keyed blake2b digest, so the map is
    stable across processes and platforms (unlike the builtin ``hash``,
    which is salted per interpreter run).
    """

    def __init__(self, dim: int):
        if dim < 2:
            raise ConfigurationError(f"hashing encoder needs dim >= 2, got {dim}")
        self.dim = int(dim)
        self.name = f"hashing-{self.dim}"

    def _vector(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        feats = _features(text)
        for feat in feats:
            digest = hashlib.blake2b(feat.encode("utf-8"), key=_HASH_KEY,
                                     digest_size=9).digest()
            idx = int.from_bytes(digest[:8], "little") % self.dim
            sign = 1.0 if digest[8] & 1 else -1.0
            vec[idx] += sign
        if feats:
            vec /= np.sqrt(len(feats))
        return vec

    def encode(self, texts) -> np.ndarray:
        rows = [self._vector(str(t)) for t in texts]
        return np.asarray(rows, dtype=np.float32).reshape(len(rows), self.dim)


class SentenceTransformerEncoder:
    """Adapter over sentence-transformers; loads the model on first use."""

    def __init__(self, model_name: str):
        self.model_name = model_name
        self.name = f"st:{model_name}"
        self._model = None

    def _load(self):
        try:
            from sentence_transformers import SentenceTransformer
            return SentenceTransformer(self.model_name)
        except Exception as exc:
            raise EncoderError(
                f"encoder {self.name!r} unavailable ({exc}); install or cache "
                f"the model and retry") from exc

    @property
    def model(self):
        if self._model is None:
            self._model = self._load()
        return self._model

    @property
    def dim(self) -> int:
        return int(self.model.get_sentence_embedding_dimension())

    def encode(self, texts) -> np.ndarray:
        texts = [str(t) for t in texts]
        try:
            out = self.model.encode(texts, convert_to_numpy=True,
                                    normalize_embeddings=False)
            return np.asarray(out, dtype=np.float32).reshape(len(texts), self.dim)
        except EncoderError:
            raise
        except Exception:
            # find which string broke so the caller can report and retry it
            for i, text in enumerate(texts):
                try:
                    self.model.encode([text], convert_to_numpy=True,
                                      normalize_embeddings=False)
                except Exception as exc:
                    raise EncoderError(
                        f"encoder {self.name} failed on string {i}: {exc}",
                        index=i) from exc
            raise


_HASHING = re.compile(r"^hashing-(\d+)$")


def resolve(name: str):
    """Encoder instance for a name: 'hashing-<dim>' or 'st:<model>'."""
    match = _HASHING.match(name)
    if match:
        return HashingEncoder(int(match.group(1)))
    if name.startswith("st:") and len(name) > 3:
        return SentenceTransformerEncoder(name[3:])
    raise ConfigurationError(
        f"unknown encoder {name!r}; expected hashing-<dim> or st:<model>")
