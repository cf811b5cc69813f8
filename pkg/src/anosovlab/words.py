"""Free-group combinatorics.

Letters are signed integers: ``1..k`` are the generators and ``-1..-k`` their
inverses. Internally letters are also mapped to *symbols* ``0..2k-1`` (the
alphabet of the coding subshift), ordered ``1, 2, .., k, -1, .., -k``; every
lexicographic comparison in this module uses that symbol order.

Bulk enumeration goes through :func:`sphere_array`, which returns a
``(count, n)`` integer array of letters; the streaming functions are thin
wrappers around it.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

DEFAULT_BALL_CAP = 5_000_000
BALL_CAP_ENV = "ANOSOVLAB_BALL_CAP"


class ResourceCapError(RuntimeError):
    """Raised when an enumeration would exceed the configured size cap."""


def ball_cap() -> int:
    return int(os.environ.get(BALL_CAP_ENV, DEFAULT_BALL_CAP))


@dataclass(frozen=True)
class ReducedWord:
    letters: tuple[int, ...]
    rank: int

    def __post_init__(self):
        _check_letters(self.letters, self.rank)
        for x, y in zip(self.letters, self.letters[1:]):
            if x == -y:
                raise ValueError(f"word {self.letters} is not reduced")

    def __len__(self) -> int:
        return len(self.letters)

    def __iter__(self):
        return iter(self.letters)

    def inverse(self) -> "ReducedWord":
        return ReducedWord(tuple(-x for x in reversed(self.letters)), self.rank)

    def __mul__(self, other: "ReducedWord") -> "ReducedWord":
        return reduce(self.letters + tuple(other.letters), self.rank)

    def is_cyclically_reduced(self) -> bool:
        return len(self.letters) < 2 or self.letters[0] != -self.letters[-1]

    def to_json(self) -> list[int]:
        return [int(x) for x in self.letters]

    def __str__(self) -> str:
        return word_string(self.letters)


def _check_letters(letters: Sequence[int], rank: int) -> None:
    if rank < 1:
        raise ValueError("rank must be >= 1")
    for x in letters:
        if x == 0 or abs(x) > rank:
            raise ValueError(f"letter {x} out of range for rank {rank}")


def word_string(letters: Sequence[int]) -> str:
    """``(1, -2)`` -> ``"aB"`` (capital = inverse)."""
    out = []
    for x in letters:
        c = chr(ord("a") + abs(x) - 1)
        out.append(c if x > 0 else c.upper())
    return "".join(out)


def parse_word(text: str, rank: int) -> ReducedWord:
    letters = []
    for c in text:
        idx = ord(c.lower()) - ord("a") + 1
        letters.append(idx if c.islower() else -idx)
    return reduce(letters, rank)


def reduce(letters: Sequence[int], rank: int) -> ReducedWord:
    """Free reduction by a single stack pass."""
    letters = tuple(int(x) for x in letters)
    _check_letters(letters, rank)
    stack: list[int] = []
    for x in letters:
        if stack and stack[-1] == -x:
            stack.pop()
        else:
            stack.append(x)
    return ReducedWord(tuple(stack), rank)


def cyclic_reduction(w: ReducedWord) -> ReducedWord:
    letters = w.letters
    i, j = 0, len(letters) - 1
    while i < j and letters[i] == -letters[j]:
        i += 1
        j -= 1
    return ReducedWord(letters[i:j + 1], w.rank)


# ---------------------------------------------------------------------------
# symbols and vectorized spheres

def letter_to_symbol(letters, rank: int):
    x = np.asarray(letters)
    return np.where(x > 0, x - 1, rank - x - 1)


def symbol_to_letter(symbols, rank: int):
    s = np.asarray(symbols)
    return np.where(s < rank, s + 1, rank - s - 1)


def inverse_symbol(symbols, rank: int):
    s = np.asarray(symbols)
    return np.where(s < rank, s + rank, s - rank)


def sphere_size(rank: int, n: int) -> int:
    if n == 0:
        return 1
    return 2 * rank * (2 * rank - 1) ** (n - 1)


def ball_size(rank: int, L: int) -> int:
    return sum(sphere_size(rank, n) for n in range(L + 1))


def sphere_array(rank: int, n: int, cap: int | None = None) -> np.ndarray:
    """All reduced words of length ``n`` as a ``(count, n)`` array of letters,
    in lexicographic symbol order."""
    cap = ball_cap() if cap is None else cap
    if sphere_size(rank, n) > cap:
        raise ResourceCapError(
            f"sphere of radius {n} in rank {rank} has {sphere_size(rank, n)} words (cap {cap})")
    syms = np.zeros((1, 0), dtype=np.int8)
    for _ in range(n):
        syms = extend_symbols(syms, rank)
    return symbol_to_letter(syms, rank).astype(np.int8)


def extend_symbols(syms: np.ndarray, rank: int) -> np.ndarray:
    """Append every admissible symbol to every row of ``syms``."""
    m = 2 * rank
    count, n = syms.shape
    rep = np.repeat(syms, m, axis=0)
    new = np.tile(np.arange(m, dtype=syms.dtype), count)
    if n > 0:
        keep = new != inverse_symbol(rep[:, -1], rank)
        rep, new = rep[keep], new[keep]
    return np.concatenate([rep, new[:, None]], axis=1)


def enumerate_ball(rank: int, L: int, cap: int | None = None) -> Iterator[ReducedWord]:
    """Every reduced word of length <= L exactly once, by increasing length."""
    if rank < 1 or L < 0:
        raise ValueError("need rank >= 1 and L >= 0")
    cap = ball_cap() if cap is None else cap
    if ball_size(rank, L) > cap:
        raise ResourceCapError(f"ball of radius {L} exceeds cap {cap}")
    for n in range(L + 1):
        for row in sphere_array(rank, n, cap):
            yield ReducedWord(tuple(int(x) for x in row), rank)


def words_to_codes(arr: np.ndarray, rank: int) -> np.ndarray:
    """Integer code of each row (base-2k digits of the symbols)."""
    syms = letter_to_symbol(arr, rank).astype(np.int64)
    code = np.zeros(arr.shape[0], dtype=np.int64)
    for j in range(arr.shape[1]):
        code = code * (2 * rank) + syms[:, j]
    return code


def cyclically_reduced_array(rank: int, n: int) -> np.ndarray:
    arr = sphere_array(rank, n)
    if n >= 2:
        arr = arr[arr[:, 0] != -arr[:, -1]]
    return arr


def _rotation_codes(arr: np.ndarray, rank: int) -> np.ndarray:
    n = arr.shape[1]
    return np.stack([words_to_codes(np.roll(arr, -r, axis=1), rank) for r in range(n)], axis=1)


def _is_power(arr: np.ndarray) -> np.ndarray:
    n = arr.shape[1]
    power = np.zeros(arr.shape[0], dtype=bool)
    for p in range(2, n + 1):
        if n % p == 0 and all(p % q for q in range(2, p)):
            power |= np.all(arr == np.roll(arr, -(n // p), axis=1), axis=1)
    return power


def conjugacy_array(rank: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Canonical representatives of conjugacy classes of cyclic length ``n``
    (least rotation in symbol order) and a primitivity mask."""
    if n < 1:
        raise ValueError("n must be >= 1")
    arr = cyclically_reduced_array(rank, n)
    rot = _rotation_codes(arr, rank)
    canon = arr[rot[:, 0] == rot.min(axis=1)]
    return canon, ~_is_power(canon)


def conjugacy_classes(rank: int, L: int) -> Iterator[tuple[ReducedWord, bool]]:
    """Yield ``(representative, is_primitive)`` for every conjugacy class of
    cyclic length 1..L."""
    if L < 1:
        raise ValueError("L must be >= 1")
    for n in range(1, L + 1):
        canon, prim = conjugacy_array(rank, n)
        for row, p in zip(canon, prim):
            yield ReducedWord(tuple(int(x) for x in row), rank), bool(p)


def random_ray(rank: int, N: int, seed: int | None = None) -> ReducedWord:
    """Uniform non-backtracking walk of length N."""
    return ReducedWord(tuple(int(x) for x in random_rays(rank, N, 1, seed)[0]), rank)


def random_rays(rank: int, N: int, count: int, seed=None) -> np.ndarray:
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = np.random.default_rng(seed)
    m = 2 * rank
    syms = np.empty((count, N), dtype=np.int64)
    syms[:, 0] = rng.integers(0, m, size=count)
    for t in range(1, N):
        # uniform among the 2k-1 symbols different from the inverse of the last
        step = rng.integers(0, m - 1, size=count)
        banned = inverse_symbol(syms[:, t - 1], rank)
        syms[:, t] = step + (step >= banned)
    return symbol_to_letter(syms, rank).astype(np.int8)


def cone_at_infinity(w: ReducedWord) -> Callable[[Sequence[int]], bool]:
    """Cone type of ``w`` at infinity: rays ``y`` such that ``w y`` is reduced."""
    if len(w) == 0:
        raise ValueError("cone type of the empty word is undefined")
    banned = -w.letters[-1]
    return lambda ray: len(ray) > 0 and int(ray[0]) != banned


def common_prefix_length(u: Sequence[int], v: Sequence[int]) -> int:
    n = 0
    for x, y in zip(u, v):
        if x != y:
            break
        n += 1
    return n


def ray_to_json(ray: ReducedWord, depth: int | None = None) -> dict:
    return {"letters": ray.to_json(), "rank": ray.rank,
            "depth": len(ray) if depth is None else int(depth)}


def ray_from_json(data: dict) -> ReducedWord:
    return ReducedWord(tuple(data["letters"]), data["rank"])


def dumps_words(words: Sequence[ReducedWord]) -> str:
    return json.dumps([w.to_json() for w in words])
