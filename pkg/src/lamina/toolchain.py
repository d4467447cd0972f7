"""Assembles generated code and links it against the support library.

The C runtime is compiled once per (source, compiler) combination and
kept in a small archive cache, keyed by content hash, so repeated
compiles and test runs do not shell out to the C compiler for the
runtime again.  Builds land in the cache via an atomic rename and are
safe against concurrent callers.
"""
from __future__ import annotations

import hashlib
import os
import subprocess
import tempfile
from pathlib import Path

from .errors import ToolchainError

RUNTIME_DIR = Path(__file__).resolve().parent / "runtime"


def compiler() -> str:
    return os.environ.get("LAMINA_CC", "cc")


def cache_dir() -> Path:
    env = os.environ.get("LAMINA_CACHE_DIR")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "lamina"


def _run(cmd: list[str], what: str):
    try:
        proc = subprocess.run(cmd, capture_output=True, text=True)
    except FileNotFoundError:
        raise ToolchainError(f"{what}: {cmd[0]!r} not found") from None
    if proc.returncode != 0:
        raise ToolchainError(f"{what} failed:\n{proc.stderr.strip()}")


def _content_key(*paths: Path) -> str:
    h = hashlib.sha256()
    h.update(compiler().encode())
    for p in paths:
        h.update(b"\x00")
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


def _cached_build(name: str, sources: list[Path], build) -> Path:
    """Returns the cached artifact, building it atomically if absent."""
    key = _content_key(*sources)
    out = cache_dir() / f"{name}-{key}"
    if out.exists():
        return out
    out.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory(dir=out.parent) as tmp:
        produced = build(Path(tmp))
        os.replace(produced, out)
    return out


def runtime_object() -> Path:
    src = RUNTIME_DIR / "runtime.c"
    hdr = RUNTIME_DIR / "runtime.h"

    def build(tmp: Path) -> Path:
        obj = tmp / "runtime.o"
        _run([compiler(), "-O2", "-I", str(RUNTIME_DIR), "-c", str(src),
              "-o", str(obj)], "runtime compile")
        return obj

    return _cached_build("runtime", [src, hdr], build)


def harness_binary() -> Path:
    src = RUNTIME_DIR / "harness.c"
    hdr = RUNTIME_DIR / "runtime.h"
    runtime = runtime_object()

    def build(tmp: Path) -> Path:
        exe = tmp / "harness"
        _run([compiler(), "-O2", "-I", str(RUNTIME_DIR), "-o", str(exe),
              str(src), str(runtime)], "harness build")
        return exe

    return _cached_build("harness", [src, hdr, RUNTIME_DIR / "runtime.c"],
                         build)


def link_program(asm: str, out_path: str | Path) -> Path:
    """Assembles `asm` and links the runtime into an executable."""
    out_path = Path(out_path)
    runtime = runtime_object()
    with tempfile.TemporaryDirectory() as tmp:
        asm_path = Path(tmp) / "program.s"
        asm_path.write_text(asm)
        _run([compiler(), "-o", str(out_path), str(asm_path),
              str(runtime)], "link")
    return out_path
