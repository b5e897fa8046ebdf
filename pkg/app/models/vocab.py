from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import torch

from app.core import Expression

PAD = "<pad>"
UNK = "<unk>"


@dataclass(frozen=True)
class Vocabulary:
    tokens: Tuple[str, ...]
    _index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.tokens[:2] != (PAD, UNK):
            raise ValueError("vocabulary must start with the pad and unknown tokens")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    @classmethod
    def build(cls, expressions: Iterable[Expression], extra_words: Iterable[str] = ()) -> "Vocabulary":
        words = set(extra_words)
        for expr in expressions:
            words.update(expr.tokens)
        words.discard(PAD)
        words.discard(UNK)
        return cls((PAD, UNK) + tuple(sorted(words)))

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, expression: Expression) -> List[int]:
        unk = self._index[UNK]
        return [self._index.get(t, unk) for t in expression.tokens]

    def encode_batch(self, expressions: Sequence[Expression]) -> Tuple[torch.Tensor, torch.Tensor]:
        """Flat token ids plus per-expression offsets, as ``nn.EmbeddingBag`` expects."""
        ids: List[int] = []
        offsets: List[int] = []
        for expr in expressions:
            offsets.append(len(ids))
            ids.extend(self.encode(expr))
        return torch.tensor(ids, dtype=torch.long), torch.tensor(offsets, dtype=torch.long)
