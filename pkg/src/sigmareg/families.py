"""Generated benchmark families and access to the bundled example systems."""

from __future__ import annotations

from pathlib import Path

from . import frontend as fe


def reissig_source(k: int, converted: bool = False) -> str:
    """Linear family A x' + x = q with n = 2k+1 whose structural index k+1 overestimates index 1.

    With ``converted`` every f_{2i-1} is replaced by f_{2i-1} - f_{2i}.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    n = 2 * k + 1
    xs = [f"x{j}" for j in range(1, n + 1)]
    qs = [f"q{j}" for j in range(1, n + 1)]
    lines = [
        f"system reissig_k{k}{'_conv' if converted else ''};",
        "var " + ", ".join(xs) + ";",
        "input " + ", ".join(qs) + ";",
    ]
    for i in range(1, k + 1):
        a, b = 2 * i - 1, 2 * i
        common = f"x{b}' + x{b + 1}'"
        if converted:
            lines.append(f"eq f{a}_bar: x{a} - x{b} - q{a}(t) + q{b}(t);")
        else:
            lines.append(f"eq f{a}: {common} + x{a} - q{a}(t);")
        lines.append(f"eq f{b}: {common} + x{b} - q{b}(t);")
    lines.append(f"eq f{n}: x{n} - q{n}(t);")
    return "\n".join(lines) + "\n"


def reissig(k: int, converted: bool = False) -> fe.DaeSystem:
    return fe.parse(reissig_source(k, converted))


def reissig_offsets(k: int) -> tuple:
    """Non-canonical offsets for the converted family: c = (1,0,1,0,...,1), d = (1,...,1)."""
    n = 2 * k + 1
    return tuple(1 if j % 2 == 0 else 0 for j in range(n)), (1,) * n


def corpus_dir() -> Path:
    return Path(__file__).with_name("corpus")


def load(name: str) -> fe.DaeSystem:
    return fe.parse((corpus_dir() / f"{name}.dae").read_text())
