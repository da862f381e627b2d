"""Mutation fuzzer for the sequence language."""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from spinmem import dsl
from spinmem.library import shipped_files

_ALPHABET = "pulsedyrtcwmf0123456789.-+e=/{}# \tπ\x00"
_TOKENS = [
    "pulse", "delay", "detect", "repeat", "{", "}", "=", "mw", "rf", "1-2", "1-3", "2-4", "3-4", "5-1", "pi",
    "pi/2", "3rad", "phase=", "dur=", "offset=", "window=", "composite=bb1", "err=0.1", "90deg", "1e400us",
    "-1us", "0us", "12", "1.5.5us", "kHz", "#", "phase=1e999999999deg", "repeat 1000000 {",
]


@dataclass
class FuzzReport:
    cases: int = 0
    accepted: int = 0
    diagnostics: int = 0
    with_span: int = 0
    crashes: list = field(default_factory=list)

    @property
    def span_fraction(self) -> float:
        return 1.0 if self.diagnostics == 0 else self.with_span / self.diagnostics


def _seed_lines() -> list[str]:
    lines = []
    for p in shipped_files():
        lines.extend(ln for ln in p.read_text(encoding="utf-8").splitlines() if ln and not ln.startswith("#"))
    return lines


def _mutate(line: str, rnd: random.Random) -> str:
    op = rnd.randrange(6)
    if op == 0 and line:  # delete a character
        i = rnd.randrange(len(line))
        return line[:i] + line[i + 1 :]
    if op == 1:  # insert a character
        i = rnd.randrange(len(line) + 1)
        return line[:i] + rnd.choice(_ALPHABET) + line[i:]
    if op == 2 and line:  # replace a character
        i = rnd.randrange(len(line))
        return line[:i] + rnd.choice(_ALPHABET) + line[i + 1 :]
    words = line.split()
    if op == 3 and words:  # replace a token
        words[rnd.randrange(len(words))] = rnd.choice(_TOKENS)
        return " ".join(words)
    if op == 4 and len(words) > 1:  # drop a token
        del words[rnd.randrange(len(words))]
        return " ".join(words)
    return " ".join(rnd.choice(_TOKENS) for _ in range(rnd.randrange(1, 6)))


def make_cases(n: int = 10_000, seed: int = 2024) -> list[str]:
    rnd = random.Random(seed)
    pool = _seed_lines()
    cases = []
    for _ in range(n):
        k = rnd.randrange(1, 8)
        lines = [rnd.choice(pool) for _ in range(k)]
        for _ in range(rnd.randrange(1, 4)):
            j = rnd.randrange(k)
            lines[j] = _mutate(lines[j], rnd)
        if rnd.random() < 0.1:
            lines.insert(rnd.randrange(k + 1), rnd.choice(["repeat 3 {", "}", "repeat 0 {", "{"]))
        cases.append("\n".join(lines))
    return cases


def _span_ok(err: dsl.SeqError, text: str) -> bool:
    lines = text.splitlines()
    s = err.span
    if not (isinstance(s, dsl.SourceSpan) and 1 <= s.line <= len(lines)):
        return False
    ln = lines[s.line - 1]
    return 1 <= s.start <= s.end <= len(ln) and (not err.token or ln[s.start - 1 : s.end] == err.token[: s.end - s.start + 1])


def run(cases) -> FuzzReport:
    rep = FuzzReport()
    for text in cases:
        rep.cases += 1
        try:
            dsl.parse(text)
            rep.accepted += 1
        except dsl.SeqError as e:
            rep.diagnostics += 1
            rep.with_span += _span_ok(e, text)
        except Exception as e:  # anything else is a crash
            rep.crashes.append((text, repr(e)))
    return rep
