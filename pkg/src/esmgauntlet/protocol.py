"""Out-of-process model adapters.

The child writes one JSON handshake line to stdout::

    {"protocol":"esm-adapter/1","nlat":..,"nlon":..,"variables":[..],"dt_seconds":..,"deterministic":true}

then answers every state frame on stdin with a next-state frame on stdout.
A frame is ``b"EVF1"``, a little-endian uint32 payload length, and
nvar*nlat*nlon float64 LE values in advertised variable order, row-major
(lat, lon). A zero-length frame from the parent asks the child to exit 0.

Run ``python -m esmgauntlet.protocol --variant upwind --nlat 64 --nlon 128 --dt 600``
to serve a built-in toy model this way.
"""
from __future__ import annotations

import argparse
import json
import shlex
import struct
import subprocess
import sys
import threading
from typing import BinaryIO, Mapping, Optional, Sequence

import numpy as np

from .errors import AdapterBrokenError, AdapterInitError
from .grid import GridSpec

PROTOCOL = "esm-adapter/1"
FRAME_MAGIC = b"EVF1"
_HEADER = struct.Struct("<4sI")


def encode_frame(state: Mapping[str, np.ndarray], variables: Sequence[str]) -> bytes:
    payload = b"".join(np.ascontiguousarray(state[n], dtype="<f8").tobytes() for n in variables)
    return _HEADER.pack(FRAME_MAGIC, len(payload)) + payload


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            break
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(stream: BinaryIO) -> Optional[bytes]:
    """Payload of the next frame, or None at a clean end of stream."""
    head = _read_exact(stream, _HEADER.size)
    if not head:
        return None
    if len(head) != _HEADER.size:
        raise EOFError("truncated frame header")
    magic, length = _HEADER.unpack(head)
    if magic != FRAME_MAGIC:
        raise ValueError(f"bad frame magic {magic!r}")
    payload = _read_exact(stream, length)
    if len(payload) != length:
        raise EOFError("truncated frame payload")
    return payload


def decode_payload(payload: bytes, variables: Sequence[str], shape) -> dict:
    n = shape[0] * shape[1]
    if len(payload) != 8 * n * len(variables):
        raise ValueError(f"payload of {len(payload)} bytes does not hold {len(variables)} x {shape} floats")
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return {name: flat[i * n : (i + 1) * n].reshape(shape) for i, name in enumerate(variables)}


class SubprocessAdapter:
    """ModelAdapter backed by a child process speaking the framed protocol."""

    def __init__(self, command, grid: Optional[GridSpec] = None, variables: Optional[Sequence[str]] = None,
                 timeout_s: float = 30.0):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout_s = timeout_s
        self._steps = 0
        try:
            self.proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.DEVNULL
            )
        except OSError as exc:
            raise AdapterInitError(f"cannot spawn adapter {self.command!r}: {exc}") from None
        try:
            hs = self._handshake()
            nlat, nlon = int(hs["nlat"]), int(hs["nlon"])
            self.variables = tuple(str(v) for v in hs["variables"])
            self.dt_s = float(hs["dt_seconds"])
            self.deterministic = bool(hs.get("deterministic", False))
        except AdapterInitError:
            self.close(force=True)
            raise
        except (KeyError, TypeError, ValueError) as exc:
            self.close(force=True)
            raise AdapterInitError(f"malformed handshake: {exc!r}") from None
        if grid is not None and (nlat, nlon) != grid.shape:
            self.close(force=True)
            raise AdapterInitError(f"adapter grid {nlat}x{nlon} does not match expected {grid.nlat}x{grid.nlon}")
        if variables is not None and tuple(variables) != self.variables:
            self.close(force=True)
            raise AdapterInitError(f"adapter variables {self.variables} differ from expected {tuple(variables)}")
        self.grid = grid if grid is not None else GridSpec.regular(nlat, nlon)

    def _handshake(self) -> dict:
        box = {}

        def reader():
            try:
                box["line"] = self.proc.stdout.readline()
            except Exception as exc:  # pragma: no cover - surfaced below
                box["error"] = exc

        th = threading.Thread(target=reader, daemon=True)
        th.start()
        th.join(self.timeout_s)
        if th.is_alive():
            raise AdapterInitError(f"no handshake within {self.timeout_s} s")
        line = box.get("line", b"")
        if not line:
            raise AdapterInitError("adapter exited before handshake")
        try:
            hs = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise AdapterInitError(f"handshake is not JSON: {line[:80]!r}") from None
        if not isinstance(hs, dict) or hs.get("protocol") != PROTOCOL:
            raise AdapterInitError(f"unsupported protocol in handshake: {hs!r}"[:200])
        return hs

    def step(self, state):
        step = self._steps
        try:
            self.proc.stdin.write(encode_frame(state, self.variables))
            self.proc.stdin.flush()
            payload = read_frame(self.proc.stdout)
        except (BrokenPipeError, OSError, EOFError, ValueError) as exc:
            raise AdapterBrokenError(f"adapter stream failed: {exc}", step) from None
        if payload is None:
            raise AdapterBrokenError("adapter closed its output", step)
        try:
            out = decode_payload(payload, self.variables, self.grid.shape)
        except ValueError as exc:
            raise AdapterBrokenError(str(exc), step) from None
        self._steps += 1
        return out

    def close(self, force: bool = False):
        proc = getattr(self, "proc", None)
        if proc is None or proc.poll() is not None:
            return
        try:
            if not force:
                proc.stdin.write(_HEADER.pack(FRAME_MAGIC, 0))
                proc.stdin.flush()
            proc.stdin.close()
            proc.wait(timeout=5)
        except (OSError, subprocess.TimeoutExpired):
            proc.kill()
            proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self.close(force=True)
        except Exception:
            pass


# -- child side ------------------------------------------------------------------------

def serve(model, stdin: BinaryIO, stdout: BinaryIO) -> int:
    """Run the child half of the protocol for an in-process adapter."""
    hs = {
        "protocol": PROTOCOL,
        "nlat": model.grid.nlat,
        "nlon": model.grid.nlon,
        "variables": list(model.variables),
        "dt_seconds": model.dt_s,
        "deterministic": bool(getattr(model, "deterministic", True)),
    }
    stdout.write(json.dumps(hs).encode("utf-8") + b"\n")
    stdout.flush()
    while True:
        payload = read_frame(stdin)
        if payload is None or len(payload) == 0:
            return 0
        state = decode_payload(payload, model.variables, model.grid.shape)
        stdout.write(encode_frame(model.step(state), model.variables))
        stdout.flush()


def child_command(variant: str, grid: GridSpec, dt_s: float, variables=("q", "u", "v"), **options) -> list:
    """argv that launches a built-in toy model behind the protocol with this interpreter."""
    cmd = [sys.executable, "-m", "esmgauntlet.protocol", "--variant", variant,
           "--nlat", str(grid.nlat), "--nlon", str(grid.nlon), "--dt", repr(float(dt_s)),
           "--variables", ",".join(variables)]
    for key, value in options.items():
        cmd += [f"--{key.replace('_', '-')}", repr(value)]
    return cmd


def main(argv=None) -> int:
    from .toymodels import make_builtin_adapter

    p = argparse.ArgumentParser(prog="python -m esmgauntlet.protocol", description="serve a built-in toy model")
    p.add_argument("--variant", default="upwind", choices=("upwind", "leaky", "teleport", "identity"))
    p.add_argument("--nlat", type=int, required=True)
    p.add_argument("--nlon", type=int, required=True)
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--variables", default="q,u,v")
    p.add_argument("--leak-lambda", type=float, default=1e-3)
    p.add_argument("--smoothing-strength", type=float, default=0.1)
    args = p.parse_args(argv)
    grid = GridSpec.regular(args.nlat, args.nlon)
    model = make_builtin_adapter(args.variant, grid, args.dt, tuple(args.variables.split(",")),
                                 leak_lambda=args.leak_lambda, smoothing_strength=args.smoothing_strength)
    return serve(model, sys.stdin.buffer, sys.stdout.buffer)


if __name__ == "__main__":
    sys.exit(main())
