"""Vocabulary, tokenizer, and the language-only Transformer."""

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from ..numerics import (
    ShapeError,
    Tensor,
    add,
    embedding,
    l2_normalize,
    reshape,
    take,
)
from .layers import (
    ParamTree,
    additive_mask,
    apply_linear,
    init_block,
    init_linear,
    transformer_block,
)

PAD, CLS, SEP, MASK, UNK = 0, 1, 2, 3, 4
RESERVED_TOKENS: Tuple[str, ...] = ("[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]")


@dataclass(frozen=True)
class Vocab:
    """Token to id map with dense ids; ids 0..4 are reserved."""

    token_to_id: Dict[str, int]

    def __post_init__(self):
        for i, tok in enumerate(RESERVED_TOKENS):
            if self.token_to_id.get(tok) != i:
                raise ValueError(f"reserved token {tok} must have id {i}")
        ids = sorted(self.token_to_id.values())
        if ids != list(range(len(ids))):
            raise ValueError("vocabulary ids must be dense from 0")

    @property
    def size(self) -> int:
        return len(self.token_to_id)

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)


def build_vocab(corpus: Union[str, Iterable[str]], max_size: int) -> Vocab:
    """Whitespace word frequencies; keep the most frequent words.

    Ties break lexicographically so the result is deterministic. `max_size`
    counts the reserved ids, so the corpus contributes at most
    max_size - 5 words.
    """
    if max_size < len(RESERVED_TOKENS):
        raise ValueError(f"max_size must be at least {len(RESERVED_TOKENS)}")
    texts = [corpus] if isinstance(corpus, str) else list(corpus)
    counts: Counter = Counter()
    for text in texts:
        counts.update(text.split())
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    mapping = {tok: i for i, tok in enumerate(RESERVED_TOKENS)}
    for word, _ in ranked[: max_size - len(RESERVED_TOKENS)]:
        mapping[word] = len(mapping)
    return Vocab(mapping)


def save_vocab(vocab: Vocab, path) -> None:
    rows = sorted(vocab.token_to_id.items(), key=lambda kv: kv[1])
    with open(path, "w", encoding="utf-8") as fh:
        for token, idx in rows:
            fh.write(f"{token}\t{idx}\n")


def load_vocab(path) -> Vocab:
    mapping: Dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            token, _, idx = line.partition("\t")
            mapping[token] = int(idx)
    return Vocab(mapping)


@dataclass(frozen=True)
class TokenSequence:
    """Ids plus a 0/1 mask; ids[0] is CLS and PAD fills only the masked tail."""

    ids: Tuple[int, ...]
    attention_mask: Tuple[int, ...]

    def __post_init__(self):
        if not self.ids or self.ids[0] != CLS:
            raise ValueError("sequence must start with CLS")
        if len(self.ids) != len(self.attention_mask):
            raise ValueError("mask length must match ids")
        for i, (tok, m) in enumerate(zip(self.ids, self.attention_mask)):
            if m not in (0, 1):
                raise ValueError("mask entries must be 0 or 1")
            if m == 0 and tok != PAD:
                raise ValueError(f"masked-off slot {i} must hold PAD")
            if m == 1 and tok == PAD:
                raise ValueError(f"PAD at live slot {i}")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def real_length(self) -> int:
        return int(sum(self.attention_mask))


def tokenize(text: str, vocab: Vocab, max_len: int = 50) -> TokenSequence:
    """CLS plus word ids, truncated to max_len slots; OOV words become UNK."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    words = text.split()[: max_len - 1]
    ids = (CLS,) + tuple(vocab.id_of(w) for w in words)
    return TokenSequence(ids=ids, attention_mask=(1,) * len(ids))


def pad_sequence(seq: TokenSequence, max_len: int) -> TokenSequence:
    """Right-pad with PAD up to max_len; the mask marks the live prefix."""
    if len(seq) > max_len:
        raise ValueError(f"sequence of {len(seq)} does not fit in {max_len} slots")
    tail = max_len - len(seq)
    return TokenSequence(
        ids=seq.ids + (PAD,) * tail,
        attention_mask=seq.attention_mask + (0,) * tail,
    )


@dataclass(frozen=True)
class TextStackConfig:
    layers: int = 2
    hidden: int = 1024
    heads: int = 16
    mlp_ratio: int = 4
    max_len: int = 50
    embed_dim: Optional[int] = None

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise ValueError(f"hidden {self.hidden} not divisible by {self.heads} heads")

    @property
    def contrastive_dim(self) -> int:
        return self.hidden if self.embed_dim is None else self.embed_dim


def init_text_params(rng: np.random.Generator, config: TextStackConfig, vocab_size: int) -> ParamTree:
    d = config.hidden
    return {
        "tok": Tensor(rng.normal(0.0, 0.02, (vocab_size, d)), requires_grad=True),
        "pos": Tensor(rng.normal(0.0, 0.02, (config.max_len, d)), requires_grad=True),
        "blocks": [init_block(rng, d, config.mlp_ratio) for _ in range(config.layers)],
        "proj": init_linear(rng, d, config.contrastive_dim),
    }


def encode_text(seq: TokenSequence, config: TextStackConfig, params: ParamTree) -> Tensor:
    """Run the language-only stack; returns states for all max_len slots.

    The sequence is padded to max_len internally. PAD keys carry a -1e9
    additive bias, so real tokens give them exactly zero attention weight.
    """
    padded = pad_sequence(seq, config.max_len)
    ids = np.asarray(padded.ids, dtype=np.int64)
    x = add(embedding(params["tok"], ids), params["pos"])
    mask = additive_mask(padded.attention_mask)
    for block in params["blocks"]:
        x = transformer_block(x, block, config.heads, mask)
    return x


def text_embedding(states: Tensor, params: ParamTree) -> Tensor:
    """Contrastive text embedding: projected, L2-normalized CLS state."""
    cls_state = take(states, 0)
    return l2_normalize(apply_linear(cls_state, params["proj"]))
