"""Words over the generator alphabet {F1..F5} with exact length accounting.

A word is a finite sequence of signed letters; evaluation composes
left-to-right, i.e. word [s1, s2, ..., sk] realizes s1 o s2 o ... o sk
(the rightmost letter acts first).  Length is the letter count, the
quantity the word metric bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GENERATOR_IDS = ("F1", "F2", "F3", "F4", "F5")


@dataclass(frozen=True)
class Letter:
    gen: str
    sign: int

    def __post_init__(self):
        if self.sign not in (-1, 1):
            raise ValueError(f"letter sign must be +-1, got {self.sign}")

    def inverse(self):
        return Letter(self.gen, -self.sign)

    def __str__(self):
        return self.gen if self.sign == 1 else self.gen + "^-1"


class Word:
    """Immutable letter sequence."""

    __slots__ = ("letters",)

    def __init__(self, letters=()):
        self.letters = tuple(letters)

    def __len__(self):
        return len(self.letters)

    def __add__(self, other):
        return Word(self.letters + other.letters)

    def __iter__(self):
        return iter(self.letters)

    def __eq__(self, other):
        return isinstance(other, Word) and self.letters == other.letters

    def __hash__(self):
        return hash(self.letters)

    def inverse(self):
        return Word(tuple(l.inverse() for l in reversed(self.letters)))

    def free_reduce(self):
        """Cancel adjacent inverse pairs until none remain."""
        out = []
        for letter in self.letters:
            if out and out[-1].gen == letter.gen and out[-1].sign == -letter.sign:
                out.pop()
            else:
                out.append(letter)
        return Word(tuple(out))

    def evaluate_lift(self, generators, x):
        """Lift of the realized composition at x (array ok).

        ``generators`` maps generator id -> Diffeo.  Letters apply right to
        left; an inverse letter applies the generator's inverse lift.
        """
        y = np.asarray(x, dtype=float) + 0.0
        for letter in reversed(self.letters):
            g = generators[letter.gen]
            y = g.lift(y) if letter.sign == 1 else g.inverse_lift(y)
        return y

    def counts(self):
        out = {}
        for letter in self.letters:
            out[letter.gen] = out.get(letter.gen, 0) + 1
        return out

    def to_json(self):
        return [[l.gen, l.sign] for l in self.letters]

    @classmethod
    def from_json(cls, obj):
        return cls(tuple(Letter(g, s) for g, s in obj))

    def __repr__(self):
        return f"<Word len={len(self)}>"


def power_word(gen: str, k: int) -> Word:
    """The |k|-letter word for gen^k."""
    sign = 1 if k >= 0 else -1
    return Word(tuple(Letter(gen, sign) for _ in range(abs(k))))
