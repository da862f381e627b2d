"""Reference sequences shipped as ``.sps`` files under ``spinmem/protocols``."""
from __future__ import annotations

import math
from importlib import resources
from pathlib import Path

from . import dsl
from .protocols import CpmgOptions, MemoryOptions, initial_echo, memory_write_read, nuclear_probe, nuclear_echo_time
from .pulses import PulseDurations
from .sequence import Sequence
from .tomography import CARDINAL, TomographySettings, measurement_sequence

_SAFE = {"+": "plus", "-": "minus"}


def _tag(label: str) -> str:
    return _SAFE[label[0]] + label[1:] if label[0] in _SAFE else label


def library() -> dict[str, tuple[Sequence, str]]:
    """name -> (sequence, header comment)."""
    out: dict[str, tuple[Sequence, str]] = {}
    methods = MemoryOptions(durations=PulseDurations())
    out["fig2_memory"] = (
        memory_write_read(0.0, tau_n=25e-3, opts=methods),
        "Write, store for 2 tau_n = 50 ms with one rf refocusing pulse, read.\n"
        "tau_e = 30 us, a = 15 us, mw pi 1400 ns, rf pi 20 us.",
    )
    out["fig2_reference_echo"] = (
        initial_echo(0.0, methods),
        "Hahn echo with tau = tau_e: the reference for the recovered echo.",
    )
    fast = MemoryOptions(durations=PulseDurations.fast(), cpmg=CpmgOptions(1e3, 101))
    out["fig2b_cpmg"] = (
        memory_write_read(0.0, opts=fast),
        "Storage under CPMG decoupling: 101 rf pi pulses at 1 kHz (MG phases).",
    )
    tn = 500e-6
    out["fig3_probe"] = (
        nuclear_probe(0.0, nuclear_echo_time(tn, methods), 2e3, tn, methods),
        "Nuclear coherence probe at the nuclear echo centre: rf pi/2 offset by 2 kHz,\n"
        "then a 5 us Hahn echo on the 1-2 line.",
    )
    st = TomographySettings(methods)
    for label in CARDINAL:
        for chain in ("start", "recovered"):
            out[f"fig4_{_tag(label)}_{chain}"] = (
                measurement_sequence(label, chain, st, math.inf),
                f"Tomography of {label}, {chain} state: xy echo then z echo (z readout phase 0).",
            )
    return out


def protocol_dir() -> Path:
    return Path(str(resources.files("spinmem") / "protocols"))


def shipped_files() -> list[Path]:
    return sorted(protocol_dir().glob("*.sps"))


def write_library(directory: Path | None = None) -> list[Path]:
    d = Path(directory) if directory else protocol_dir()
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, (seq, header) in library().items():
        p = d / f"{name}.sps"
        p.write_text(dsl.serialize(seq, header), encoding="utf-8")
        paths.append(p)
    return paths


if __name__ == "__main__":  # regenerate the shipped files
    for p in write_library():
        print(p)
