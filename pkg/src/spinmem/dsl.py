"""Line-oriented pulse sequence language (``.sps`` files).

One statement per line, ``#`` starts a comment::

    pulse mw 1-2 pi/2 phase=90deg dur=700ns
    delay 29.3us
    pulse rf 1-3 pi phase=0deg dur=20us offset=2kHz
    repeat 5 {
        pulse rf 1-3 pi phase=90deg
        delay 1ms
    }
    detect 1-2 window=8us

Angles are ``pi``, ``pi/2`` or ``<float>rad``.  Phases take ``deg`` or
``rad``; a bare number is radians.  Units are exact decimal scalings, so
``parse(serialize(seq)) == seq`` holds bit for bit.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation, localcontext

from .pulses import Pulse
from .sequence import Delay, Detect, Sequence
from .spin import Transition

MAX_EVENTS = 1_000_000
MAX_DEPTH = 16

_NUM = r"[+-]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?"
_QTY = re.compile(rf"^({_NUM})([A-Za-z]*)$")
_LEVELS = re.compile(r"^([0-9]+)-([0-9]+)$")
_TIME = {"ns": "1e-9", "us": "1e-6", "ms": "1e-3", "s": "1"}
_FREQ = {"Hz": "1", "kHz": "1e3", "MHz": "1e6"}


@dataclass(frozen=True)
class SourceSpan:
    """1-based line and column range (inclusive) of a token."""

    line: int
    start: int
    end: int

    def __post_init__(self):
        if self.line < 1 or self.start < 1 or self.end < self.start:
            raise ValueError(f"bad span {self.line}:{self.start}-{self.end}")

    def __str__(self) -> str:
        return f"{self.line}:{self.start}-{self.end}"


class SeqError(ValueError):
    kind = "error"

    def __init__(self, message: str, span: SourceSpan, token: str = ""):
        super().__init__(f"{span}: {message}" + (f" (at {token!r})" if token else ""))
        self.message = message
        self.span = span
        self.token = token

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "message": self.message,
            "line": self.span.line,
            "column_start": self.span.start,
            "column_end": self.span.end,
            "token": self.token,
        }


class SeqSyntaxError(SeqError):
    kind = "syntax"


class SeqSemanticError(SeqError):
    kind = "semantic"


@dataclass(frozen=True)
class _Tok:
    text: str
    span: SourceSpan


_TOKEN = re.compile(r"[{}=]|[^\s{}=#]+")


def _tokenize(line: str, lineno: int) -> list[_Tok]:
    body = line.split("#", 1)[0]
    return [_Tok(m.group(), SourceSpan(lineno, m.start() + 1, m.end())) for m in _TOKEN.finditer(body)]


def _decimal(text: str, tok: _Tok) -> Decimal:
    if not re.fullmatch(_NUM, text):
        raise SeqSyntaxError("malformed number", tok.span, tok.text)
    try:
        return Decimal(text)
    except InvalidOperation:  # exponent beyond what Decimal accepts
        raise SeqSemanticError("number out of range", tok.span, tok.text) from None


def _scaled(tok: _Tok, units: dict, what: str) -> float:
    m = _QTY.match(tok.text)
    if not m:
        raise SeqSyntaxError(f"expected a {what} like 5us", tok.span, tok.text)
    num, unit = m.groups()
    if unit not in units:
        raise SeqSyntaxError(f"unit must be one of {', '.join(units)}", tok.span, tok.text)
    try:
        with localcontext() as ctx:
            ctx.prec = 60
            val = _decimal(num, tok) * Decimal(units[unit])
        out = float(val)
    except ArithmeticError:  # decimal overflow for absurd exponents
        out = math.inf
    if not math.isfinite(out):
        raise SeqSemanticError(f"{what} out of range", tok.span, tok.text)
    return out


def _levels(tok: _Tok) -> tuple[int, int]:
    m = _LEVELS.match(tok.text)
    if not m:
        raise SeqSyntaxError("expected a level pair like 1-2", tok.span, tok.text)
    a, b = int(m.group(1)), int(m.group(2))
    if not (1 <= a <= 4 and 1 <= b <= 4) or a == b:
        raise SeqSemanticError("levels must be two distinct values in 1..4", tok.span, tok.text)
    return a, b


def _angle(tok: _Tok) -> float:
    t = tok.text
    if t == "pi":
        return math.pi
    if t == "pi/2":
        return math.pi / 2
    if not t.endswith("rad"):
        raise SeqSyntaxError("angle must be pi, pi/2 or <number>rad", tok.span, t)
    val = float(_decimal(t[:-3], tok))
    if not 0 < val <= 4 * math.pi + 1e-12:
        raise SeqSemanticError("pulse angle must lie in (0, 4pi]", tok.span, t)
    return val


def _phase(tok: _Tok) -> float:
    t = tok.text
    if t.endswith("deg"):
        val = math.radians(float(_decimal(t[:-3], tok)))
    elif t.endswith("rad"):
        val = float(_decimal(t[:-3], tok))
    else:
        val = float(_decimal(t, tok))
    if not math.isfinite(val):
        raise SeqSemanticError("phase out of range", tok.span, t)
    return val


def _keyvals(toks: list[_Tok], allowed: set[str]) -> dict[str, _Tok]:
    out: dict[str, _Tok] = {}
    i = 0
    while i < len(toks):
        k = toks[i]
        if k.text in ("=", "{", "}") or i + 1 >= len(toks) or toks[i + 1].text != "=":
            raise SeqSyntaxError("expected key=value", k.span, k.text)
        if i + 2 >= len(toks) or toks[i + 2].text in ("=", "{", "}"):
            span = SourceSpan(k.span.line, k.span.start, toks[i + 1].span.end)
            raise SeqSyntaxError("missing value", span, k.text + "=")
        if k.text not in allowed:
            raise SeqSyntaxError(f"unknown option; expected one of {', '.join(sorted(allowed))}", k.span, k.text)
        if k.text in out:
            raise SeqSyntaxError("duplicate option", k.span, k.text)
        out[k.text] = toks[i + 2]
        i += 3
    return out


def _transition(levels, channel, tok: _Tok) -> Transition:
    tr = Transition(levels, channel)
    try:
        tr.validate()
    except ValueError as exc:
        raise SeqSemanticError(str(exc), tok.span, tok.text) from None
    return tr


def _parse_pulse(toks: list[_Tok]) -> Pulse:
    head = toks[0]
    if len(toks) < 4:
        last = toks[-1]
        raise SeqSyntaxError("pulse needs: channel, levels, angle and phase=...", last.span, last.text)
    ch = toks[1]
    if ch.text not in ("mw", "rf"):
        raise SeqSyntaxError("channel must be mw or rf", ch.span, ch.text)
    levels = _levels(toks[2])
    angle = _angle(toks[3])
    opts = _keyvals(toks[4:], {"phase", "dur", "offset", "composite", "err"})
    if "phase" not in opts:
        raise SeqSyntaxError("pulse needs phase=...", head.span, head.text)
    tr = _transition(levels, ch.text, toks[2])
    phase = _phase(opts["phase"])
    dur = _scaled(opts["dur"], {k: _TIME[k] for k in ("ns", "us", "ms", "s")}, "duration") if "dur" in opts else 0.0
    if dur < 0:
        raise SeqSemanticError("negative pulse duration", opts["dur"].span, opts["dur"].text)
    off = _scaled(opts["offset"], _FREQ, "frequency") if "offset" in opts else 0.0
    comp = "none"
    if "composite" in opts:
        c = opts["composite"]
        if c.text not in ("bb1", "none"):
            raise SeqSemanticError("composite must be bb1 or none", c.span, c.text)
        comp = c.text
    err = None
    if "err" in opts:
        e = opts["err"]
        err = float(_decimal(e.text, e))
        if not abs(err) < 1:
            raise SeqSemanticError("|err| must be < 1", e.span, e.text)
    return Pulse(tr, angle, phase, dur, off, comp, err)


def _parse_delay(toks: list[_Tok]) -> Delay:
    if len(toks) != 2:
        t = toks[-1] if len(toks) < 2 else toks[2]
        raise SeqSyntaxError("delay takes exactly one duration", t.span, t.text)
    d = _scaled(toks[1], _TIME, "duration")
    if d < 0:
        raise SeqSemanticError("negative delay", toks[1].span, toks[1].text)
    return Delay(d)


def _parse_detect(toks: list[_Tok]) -> Detect:
    if len(toks) < 2:
        raise SeqSyntaxError("detect needs a level pair and window=...", toks[0].span, toks[0].text)
    levels = _levels(toks[1])
    opts = _keyvals(toks[2:], {"window"})
    if "window" not in opts:
        raise SeqSyntaxError("detect needs window=...", toks[0].span, toks[0].text)
    w = _scaled(opts["window"], {k: _TIME[k] for k in ("ns", "us", "ms", "s")}, "window")
    if not w > 0:
        raise SeqSemanticError("detection window must be positive", opts["window"].span, opts["window"].text)
    tr = Transition(levels, "mw")
    if tr.kind != "electron":
        raise SeqSemanticError("detection needs an electron transition", toks[1].span, toks[1].text)
    return Detect(tr, w)


def parse(text: str) -> Sequence:
    """Parse ``.sps`` source into a flat, validated Sequence."""
    if not isinstance(text, str):
        raise TypeError("parse expects str")
    # stack of (event list, repeat count, opening token)
    stack: list[tuple[list, int, _Tok | None]] = [([], 1, None)]
    total = 0
    lines = text.splitlines()
    for lineno, line in enumerate(lines, start=1):
        toks = _tokenize(line, lineno)
        if not toks:
            continue
        head = toks[0]
        kw = head.text
        if kw == "}":
            if len(toks) > 1:
                raise SeqSyntaxError("'}' must stand alone", toks[1].span, toks[1].text)
            if len(stack) == 1:
                raise SeqSyntaxError("unmatched '}'", head.span, kw)
            body, n, _ = stack.pop()
            total += len(body) * (n - 1)
            if total > MAX_EVENTS:
                raise SeqSemanticError(f"sequence expands to more than {MAX_EVENTS} events", head.span, kw)
            stack[-1][0].extend(body * n)
            continue
        if kw == "repeat":
            if len(toks) != 3 or toks[2].text != "{":
                t = toks[min(len(toks) - 1, 2)]
                raise SeqSyntaxError("expected: repeat <n> {", t.span, t.text)
            if not re.fullmatch(r"[0-9]+", toks[1].text):
                raise SeqSyntaxError("repeat count must be a non-negative integer", toks[1].span, toks[1].text)
            n = int(toks[1].text)
            if n < 1:
                raise SeqSemanticError("repeat count must be at least 1", toks[1].span, toks[1].text)
            if n > MAX_EVENTS:
                raise SeqSemanticError(f"repeat count above {MAX_EVENTS}", toks[1].span, toks[1].text)
            if len(stack) > MAX_DEPTH:
                raise SeqSemanticError("repeat blocks nested too deeply", head.span, kw)
            stack.append(([], n, head))
            continue
        if kw == "pulse":
            ev = _parse_pulse(toks)
        elif kw == "delay":
            ev = _parse_delay(toks)
        elif kw == "detect":
            ev = _parse_detect(toks)
        else:
            raise SeqSyntaxError("unknown statement; expected pulse, delay, detect or repeat", head.span, kw)
        stack[-1][0].append(ev)
        total += 1
        if total > MAX_EVENTS:
            raise SeqSemanticError(f"sequence longer than {MAX_EVENTS} events", head.span, kw)
    if len(stack) > 1:
        opener = stack[-1][2]
        raise SeqSyntaxError("unclosed repeat block", opener.span, opener.text)
    return Sequence(stack[0][0])


def parse_file(path) -> Sequence:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


# ---------------------------------------------------------------- serializer


def _dec_text(d: Decimal) -> str:
    s = format(d.normalize(), "f")
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    return s if s not in ("-0", "") else "0"


def _fmt_scaled(value: float, units: list[tuple[str, str]]) -> str:
    """Shortest exact decimal of ``value`` in the largest unit giving a mantissa >= 1."""
    exact = Decimal(repr(value))
    with localcontext() as ctx:
        ctx.prec = 60
        for name, scale in units:
            m = exact / Decimal(scale)
            if abs(m) >= 1 or name == units[-1][0]:
                return _dec_text(m) + name
    raise AssertionError("unreachable")


_TIME_OUT = [("s", "1"), ("ms", "1e-3"), ("us", "1e-6"), ("ns", "1e-9")]
_FREQ_OUT = [("MHz", "1e6"), ("kHz", "1e3"), ("Hz", "1")]


def _fmt_time(v: float) -> str:
    return "0s" if v == 0 else _fmt_scaled(v, _TIME_OUT)


def _fmt_angle(a: float) -> str:
    if a == math.pi:
        return "pi"
    if a == math.pi / 2:
        return "pi/2"
    return repr(a) + "rad"


def _fmt_phase(p: float) -> str:
    deg = f"{math.degrees(p):.6g}"
    if "e" not in deg and math.radians(float(deg)) == p:
        return ("0" if deg == "-0" else deg) + "deg"
    return repr(p) + "rad"


def _fmt_event(ev) -> str:
    if isinstance(ev, Pulse):
        a, b = ev.transition.levels
        parts = [f"pulse {ev.transition.channel} {a}-{b} {_fmt_angle(ev.angle)} phase={_fmt_phase(ev.phase)}"]
        if ev.duration:
            parts.append(f"dur={_fmt_time(ev.duration)}")
        if ev.carrier_offset:
            parts.append(f"offset={_fmt_scaled(ev.carrier_offset, _FREQ_OUT)}")
        if ev.composite != "none":
            parts.append(f"composite={ev.composite}")
        if ev.error is not None:
            parts.append(f"err={ev.error!r}")
        return " ".join(parts)
    if isinstance(ev, Delay):
        return f"delay {_fmt_time(ev.duration)}"
    if isinstance(ev, Detect):
        a, b = ev.transition.levels
        return f"detect {a}-{b} window={_fmt_time(ev.window)}"
    raise TypeError(f"cannot serialize {ev!r}")


def _runs(lines: list[str], max_period: int = 8):
    """Greedy run-length grouping: yields (count, block) pairs."""
    i, n = 0, len(lines)
    while i < n:
        best = (1, 1)  # (period, count)
        for p in range(1, min(max_period, (n - i) // 2) + 1):
            block = lines[i : i + p]
            k = 1
            while lines[i + k * p : i + (k + 1) * p] == block:
                k += 1
            if k >= 2 and p * k > best[0] * best[1] and (p * k - p) > 1:
                best = (p, k)
        p, k = best
        yield k, lines[i : i + p]
        i += p * k


def serialize(seq: Sequence, header: str | None = None) -> str:
    """Canonical text; repeated runs are folded into ``repeat`` blocks."""
    lines = [_fmt_event(ev) for ev in seq.events]
    out = []
    if header:
        out.extend("# " + h if h else "#" for h in header.splitlines())
    for k, block in _runs(lines):
        if k == 1:
            out.extend(block)
        else:
            out.append(f"repeat {k} {{")
            out.extend("    " + b for b in block)
            out.append("}")
    return "\n".join(out) + "\n"
