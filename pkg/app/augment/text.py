"""Text augmentation for referring expressions.

Weak: flip-correlated position-word mirroring. Strong: one EDA op per
candidate (synonym replacement, random insertion, random swap, random
deletion), then cosine-similarity filtering against the weak text.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from app.augment.image import AugmentationRecord
from app.augment.lexicon import PositionLexicon, TextResources
from app.core import Expression
from app.errors import EmbeddingComputationError

EmbedFn = Callable[[Expression], np.ndarray]

STRONG_TEXT_OPS = ("sr", "ri", "rs", "rd")


@dataclass(frozen=True)
class EdaParams:
    n_sr: int = 1
    n_ri: int = 1
    p_rd: float = 0.1


@dataclass(frozen=True)
class TextCandidateSet:
    weak_text: Expression
    candidates: Tuple[Tuple[Expression, float], ...]
    threshold: float

    @property
    def retained(self) -> Tuple[Tuple[Expression, float], ...]:
        return tuple((expr, theta) for expr, theta in self.candidates if theta >= self.threshold)


def weak_text_adapt(expression: Expression, record: AugmentationRecord, lexicon: PositionLexicon) -> Expression:
    """Mirror position words when the paired image was horizontally flipped.

    The swap is a single simultaneous pass, so "left of the right bag"
    becomes "right of the left bag".
    """
    if not record.horizontal_flipped:
        return expression
    return Expression.from_tokens([lexicon.mirror(t) for t in expression.tokens])


def _replaceable(tokens: Sequence[str], synonyms: Dict[str, Tuple[str, ...]], stopwords) -> List[str]:
    seen: List[str] = []
    for t in tokens:
        if t not in stopwords and t in synonyms and t not in seen:
            seen.append(t)
    return seen


def synonym_replacement(tokens, n, synonyms, stopwords, rng: np.random.Generator) -> List[str]:
    words = list(tokens)
    candidates = _replaceable(words, synonyms, stopwords)
    order = rng.permutation(len(candidates)) if candidates else []
    for index in list(order)[:n]:
        word = candidates[int(index)]
        options = synonyms[word]
        replacement = options[int(rng.integers(len(options)))]
        words = [replacement if w == word else w for w in words]
    return words


def random_insertion(tokens, n, synonyms, stopwords, rng: np.random.Generator) -> List[str]:
    words = list(tokens)
    candidates = _replaceable(words, synonyms, stopwords)
    if not candidates:
        return words
    for _ in range(n):
        word = candidates[int(rng.integers(len(candidates)))]
        options = synonyms[word]
        words.insert(int(rng.integers(len(words) + 1)), options[int(rng.integers(len(options)))])
    return words


def random_swap(tokens, rng: np.random.Generator) -> List[str]:
    words = list(tokens)
    if len(words) < 2:
        return words
    i = int(rng.integers(len(words)))
    j = int(rng.integers(len(words) - 1))
    if j >= i:
        j += 1
    words[i], words[j] = words[j], words[i]
    return words


def random_deletion(tokens, p: float, rng: np.random.Generator) -> List[str]:
    words = list(tokens)
    keep = rng.random(len(words)) >= p
    kept = [w for w, k in zip(words, keep) if k]
    if not kept:
        # never return an empty sentence
        return [words[int(rng.integers(len(words)))]]
    return kept


def strong_text_augment(
    expression: Expression,
    rng: np.random.Generator,
    params: EdaParams,
    resources: TextResources,
) -> Expression:
    """Apply exactly one of SR/RI/RS/RD, chosen uniformly."""
    op = STRONG_TEXT_OPS[int(rng.integers(len(STRONG_TEXT_OPS)))]
    tokens = expression.tokens
    if op == "sr":
        out = synonym_replacement(tokens, params.n_sr, resources.synonyms, resources.stopwords, rng)
    elif op == "ri":
        out = random_insertion(tokens, params.n_ri, resources.synonyms, resources.stopwords, rng)
    elif op == "rs":
        out = random_swap(tokens, rng)
    else:
        out = random_deletion(tokens, params.p_rd, rng)
    return Expression.from_tokens(out)


def generate_candidates(
    expression: Expression,
    count: int,
    rng: np.random.Generator,
    params: EdaParams,
    resources: TextResources,
) -> List[Expression]:
    if count < 1:
        raise ValueError("candidate count must be at least 1")
    return [strong_text_augment(expression, child, params, resources) for child in rng.spawn(count)]


def _checked(embed: EmbedFn, expression: Expression) -> Tuple[np.ndarray, float]:
    vec = np.asarray(embed(expression), dtype=np.float64)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0 or not np.isfinite(norm):
        raise EmbeddingComputationError(f"zero-norm embedding for text '{expression.text}'")
    return vec, norm


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def semantic_filter(
    weak_text: Expression,
    candidates: Sequence[Expression],
    embed: EmbedFn,
    threshold: float,
) -> TextCandidateSet:
    """Score candidates by cosine similarity to the weak text; keep those >= threshold.

    Candidate order is preserved; no ranking.
    """
    weak_vec, weak_norm = _checked(embed, weak_text)
    scored = []
    for cand in candidates:
        vec, norm = _checked(embed, cand)
        if np.array_equal(vec, weak_vec):
            theta = 1.0
        else:
            theta = float(np.dot(vec, weak_vec) / (norm * weak_norm))
        scored.append((cand, float(np.clip(theta, -1.0, 1.0))))
    return TextCandidateSet(weak_text, tuple(scored), threshold)


def pick_training_text(candidate_set: TextCandidateSet, rng: np.random.Generator) -> Expression:
    retained = candidate_set.retained
    if not retained:
        return candidate_set.weak_text
    return retained[int(rng.integers(len(retained)))][0]
