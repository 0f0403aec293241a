"""File formats, loaders and deterministic synthetic workloads.

Network descriptions are JSON documents with a ``schema_version`` and an
``engine`` tag (``sne``, ``cutie`` or ``pulp-patch``). Weight payloads live
in sibling binary files referenced by relative path and SHA-256 digest:

* SNE kernels: ``KW41`` magic, u32 LE entry count, then 4-bit two's
  complement entries, two per byte, low nibble first, in
  ``(c_out, c_in, ky, kx)`` order.
* CUTIE kernels: a ``KTT1`` packed tensor with dims ``(c_out, c_in, k*k)``.

Event streams are CSV (``tick,x,y,c``) or ``KEV1`` binary: the magic
followed by little-endian ``{u32 tick, u16 x, u16 y, u16 c}`` records.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import jsonschema
import numpy as np
from PIL import Image

from . import codec
from .codec import TernaryTensor
from .cutie import MAX_CHANNELS, CutieNetwork, TernaryConvLayer, cutie_memcheck
from .errors import InvalidDims, InvalidEncoding, MemoryBudgetExceeded, ParseError, SchemaViolation, UnsortedStream
from .pulp import ConvPatchSpec
from .sne import Event, LifConfig, LifLayer, SneNetwork, check_memory_budget

SCHEMA_VERSION = 1
EVENT_MAGIC = b"KEV1"
EVENT_RECORD = struct.Struct("<IHHH")
KW4_MAGIC = b"KW41"
KW4_HEADER = struct.Struct("<4sI")


def read_json(path) -> Any:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", path=path) from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=path, line=exc.lineno) from None


# ------------------------------------------------------------------ schema

_PAYLOAD = {
    "type": "object",
    "required": ["path", "sha256"],
    "properties": {"path": {"type": "string"}, "sha256": {"type": "string", "pattern": "^[0-9a-f]{64}$"}},
    "additionalProperties": False,
}
_UINT = {"type": "integer", "minimum": 0}
_POS = {"type": "integer", "minimum": 1}
_THETA = {"oneOf": [{"type": "integer"}, {"type": "array", "items": {"type": "integer"}}]}

NETWORK_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "engine"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "engine": {"enum": ["sne", "cutie", "pulp-patch"]},
        "name": {"type": "string"},
        "seed": {"type": ["integer", "null"]},
    },
    "allOf": [
        {
            "if": {"properties": {"engine": {"const": "sne"}}},
            "then": {
                "required": ["layers"],
                "properties": {
                    "latency": _UINT,
                    "layers": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "object",
                            "required": ["height", "width", "c_in", "c_out", "threshold", "leak_num", "leak_shift", "weights"],
                            "properties": {
                                "height": _POS,
                                "width": _POS,
                                "c_in": _POS,
                                "c_out": _POS,
                                "threshold": {"type": "integer", "minimum": 1, "maximum": 127},
                                "leak_num": {"type": "integer", "minimum": 0, "maximum": 255},
                                "leak_shift": {"type": "integer", "minimum": 0, "maximum": 8},
                                "weights": _PAYLOAD,
                            },
                            "additionalProperties": False,
                        },
                    },
                },
            },
        },
        {
            "if": {"properties": {"engine": {"const": "cutie"}}},
            "then": {
                "required": ["input", "layers"],
                "properties": {
                    "input": {"type": "array", "items": _POS, "minItems": 3, "maxItems": 3},
                    "overhead_per_layer": _UINT,
                    "layers": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["c_in", "c_out", "kernel", "theta_lo", "theta_hi", "weights"],
                            "properties": {
                                "c_in": {"type": "integer", "minimum": 1, "maximum": MAX_CHANNELS},
                                "c_out": {"type": "integer", "minimum": 1, "maximum": MAX_CHANNELS},
                                "kernel": {"enum": [1, 3]},
                                "theta_lo": _THETA,
                                "theta_hi": _THETA,
                                "pool": {"enum": ["none", "max2x2"]},
                                "final": {"type": "boolean"},
                                "weights": _PAYLOAD,
                            },
                            "additionalProperties": False,
                        },
                    },
                },
            },
        },
        {
            "if": {"properties": {"engine": {"const": "pulp-patch"}}},
            "then": {
                "required": ["patch"],
                "properties": {
                    "patch": {
                        "type": "object",
                        "required": ["n_out", "c_in", "c_out", "kernel"],
                        "properties": {
                            "n_out": _UINT,
                            "c_in": _UINT,
                            "c_out": _UINT,
                            "kernel": _UINT,
                            "a_bits": {"enum": [2, 4, 8]},
                            "w_bits": {"enum": [2, 4, 8]},
                        },
                        "additionalProperties": False,
                    },
                    "network_macs": _POS,
                },
            },
        },
    ],
}

_HINTS = {"maximum": f" (CUTIE datapath has {MAX_CHANNELS} parallel output channels)"}


def validate_description(doc: Any, path=None) -> None:
    validator = jsonschema.Draft202012Validator(NETWORK_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if not errors:
        return
    err = jsonschema.exceptions.best_match(errors)
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    hint = _HINTS.get(err.validator, "") if where.endswith(("c_out", "c_in")) else ""
    raise SchemaViolation(err.message + hint, path=path, field=where)


# ----------------------------------------------------------------- payloads


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def pack_nibbles(weights: np.ndarray) -> bytes:
    flat = np.asarray(weights, dtype=np.int64).reshape(-1)
    if flat.size and (flat.min() < -8 or flat.max() > 7):
        raise ValueError("4-bit weights must be in [-8, 7]")
    nib = (flat & 0xF).astype(np.uint8)
    if nib.size % 2:
        nib = np.append(nib, np.uint8(0))
    body = (nib[0::2] | (nib[1::2] << 4)).astype(np.uint8).tobytes()
    return KW4_HEADER.pack(KW4_MAGIC, flat.size) + body


def unpack_nibbles(blob: bytes, path=None) -> np.ndarray:
    if len(blob) < KW4_HEADER.size:
        raise ParseError("truncated 4-bit weight header", path=path)
    magic, count = KW4_HEADER.unpack_from(blob)
    if magic != KW4_MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {KW4_MAGIC!r}", path=path)
    body = np.frombuffer(blob, dtype=np.uint8, offset=KW4_HEADER.size)
    if body.size != (count + 1) // 2:
        raise ParseError(f"weight payload has {body.size} bytes, {count} entries need {(count + 1) // 2}", path=path)
    nib = np.empty(body.size * 2, dtype=np.int16)
    nib[0::2] = body & 0xF
    nib[1::2] = body >> 4
    nib = nib[:count]
    return np.where(nib >= 8, nib - 16, nib).astype(np.int8)


def _read_payload(base: Path, ref: dict, where: str) -> bytes:
    p = base / ref["path"]
    try:
        blob = p.read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read payload: {exc.strerror}", path=p, field=where) from None
    if sha256(blob) != ref["sha256"]:
        raise ParseError("payload checksum mismatch", path=p, field=where)
    return blob


# ----------------------------------------------------------------- networks


def _load_sne(doc: dict, base: Path, path) -> SneNetwork:
    layers = []
    for i, d in enumerate(doc["layers"]):
        where = f"layers/{i}/weights"
        w = unpack_nibbles(_read_payload(base, d["weights"], where), path=base / d["weights"]["path"])
        shape = (d["c_out"], d["c_in"], 3, 3)
        if w.size != int(np.prod(shape)):
            raise ParseError(f"payload holds {w.size} weights, layer needs {int(np.prod(shape))}", path=path, field=where)
        try:
            cfg = LifConfig(d["threshold"], d["leak_num"], d["leak_shift"])
        except ValueError as exc:
            raise SchemaViolation(str(exc), path=path, field=f"layers/{i}") from None
        layers.append(LifLayer(d["height"], d["width"], w.reshape(shape), cfg))
    try:
        net = SneNetwork(layers, latency=doc.get("latency", 0))
    except InvalidDims as exc:
        raise SchemaViolation(str(exc), path=path, field="layers") from None
    return net


def _load_cutie(doc: dict, base: Path, path) -> CutieNetwork:
    layers = []
    for i, d in enumerate(doc["layers"]):
        where = f"layers/{i}/weights"
        blob = _read_payload(base, d["weights"], where)
        try:
            t = codec.unpack_tensor(blob)
        except (ParseError, InvalidEncoding) as exc:
            raise ParseError(str(exc), path=base / d["weights"]["path"], field=where) from None
        k = d["kernel"]
        if t.dims != (d["c_out"], d["c_in"], k * k):
            raise ParseError(f"payload dims {t.dims} do not match layer {(d['c_out'], d['c_in'], k * k)}", path=path, field=where)
        try:
            layers.append(
                TernaryConvLayer(
                    t.data.reshape(d["c_out"], d["c_in"], k, k),
                    d["theta_lo"],
                    d["theta_hi"],
                    d.get("pool", "none"),
                    d.get("final", False),
                )
            )
        except ValueError as exc:
            raise SchemaViolation(str(exc), path=path, field=f"layers/{i}") from None
    try:
        return CutieNetwork(tuple(doc["input"]), tuple(layers))
    except ValueError as exc:
        raise SchemaViolation(str(exc), path=path, field="layers") from None


@dataclass
class LoadedNetwork:
    engine: str
    network: Any
    doc: dict = field(repr=False)


def load_network(path) -> LoadedNetwork:
    """Parse and fully validate a network description; nothing partial escapes on error."""
    path = Path(path)
    doc = read_json(path)
    validate_description(doc, path)
    engine = doc["engine"]
    if engine == "sne":
        net = _load_sne(doc, path.parent, path)
    elif engine == "cutie":
        net = _load_cutie(doc, path.parent, path)
    else:
        net = ConvPatchSpec(**doc["patch"])
    if engine == "sne":
        rep = check_memory_budget(net)
        if not rep.fits:
            raise MemoryBudgetExceeded(
                f"{path}: {rep.state_bytes} neuron state bytes and {rep.weight_entries} weights exceed the SNE memories"
            )
    elif engine == "cutie":
        rep = cutie_memcheck(net)
        if not rep.fits:
            raise MemoryBudgetExceeded(
                f"{path}: {rep.weight_bytes} weight bytes / {rep.fm_bytes} feature-map bytes exceed the CUTIE memories"
            )
    return LoadedNetwork(engine, net, doc)


# ------------------------------------------------------------------- events


def _parse_csv_events(text: str, path, polarity: bool) -> list[Event]:
    events = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if lineno == 1 and parts and parts[0] == "tick":
            continue
        if len(parts) != 4:
            raise ParseError(f"expected 4 fields, got {len(parts)}", path=path, line=lineno)
        try:
            tick, x, y, c = (int(p) for p in parts)
        except ValueError:
            raise ParseError(f"non-integer field in {line!r}", path=path, line=lineno) from None
        if polarity:
            if c not in (-1, 0, 1):
                raise ParseError(f"polarity must be -1, 0 or 1, got {c}", path=path, line=lineno)
            c = 1 if c > 0 else 0
        if min(tick, x, y, c) < 0:
            raise ParseError("fields must be unsigned", path=path, line=lineno)
        events.append(Event(tick, x, y, c))
    return events


def _parse_binary_events(blob: bytes, path) -> list[Event]:
    if blob[:4] != EVENT_MAGIC:
        raise ParseError(f"bad magic {blob[:4]!r}, expected {EVENT_MAGIC!r}", path=path)
    body = blob[4:]
    if len(body) % EVENT_RECORD.size:
        raise ParseError(f"truncated record at byte {4 + len(body) - len(body) % EVENT_RECORD.size}", path=path)
    return [Event(*rec) for rec in EVENT_RECORD.iter_unpack(body)]


def load_events(path, fmt: str | None = None, *, polarity: bool = False, auto_sort: bool = False) -> list[Event]:
    """Read an event stream; ``fmt`` is ``csv`` or ``binary`` (guessed from the magic if omitted).

    With ``polarity=True`` the fourth CSV column is a DVS polarity folded
    into channel 0 (off) or 1 (on).
    """
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", path=path) from None
    if not blob:
        return []
    if fmt is None:
        fmt = "binary" if blob[:4] == EVENT_MAGIC else "csv"
    if fmt == "binary":
        events = _parse_binary_events(blob, path)
    elif fmt == "csv":
        try:
            text = blob.decode("ascii")
        except UnicodeDecodeError:
            raise ParseError("CSV event file is not ASCII text", path=path) from None
        events = _parse_csv_events(text, path, polarity)
    else:
        raise ValueError(f"unknown event format {fmt!r}")
    for i in range(1, len(events)):
        if events[i].tick < events[i - 1].tick:
            if auto_sort:
                return sorted(events, key=lambda e: e.tick)
            raise UnsortedStream(f"{path}: event {i} (tick {events[i].tick}) precedes tick {events[i - 1].tick}")
    return events


def events_to_csv(events: Sequence[Event]) -> str:
    return "".join(f"{e.tick},{e.x},{e.y},{e.c}\n" for e in events)


def events_to_binary(events: Sequence[Event]) -> bytes:
    return EVENT_MAGIC + b"".join(EVENT_RECORD.pack(*e) for e in events)


def save_events(path, events: Sequence[Event], fmt: str | None = None) -> None:
    path = Path(path)
    fmt = fmt or ("binary" if path.suffix == ".kev" else "csv")
    if fmt == "binary":
        path.write_bytes(events_to_binary(events))
    else:
        path.write_text(events_to_csv(events))


# ------------------------------------------------------------ trits, images


def trits_to_text(t: TernaryTensor) -> str:
    h, w, c = t.dims
    lines = [f"{h} {w} {c}"]
    for row in t.data.reshape(h * w, c):
        lines.append(" ".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"


def trits_from_text(text: str, path=None) -> TernaryTensor:
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty trit file", path=path)
    try:
        h, w, c = (int(v) for v in lines[0].split())
    except ValueError:
        raise ParseError("first line must be 'height width channels'", path=path, line=1) from None
    values = []
    for lineno, line in enumerate(lines[1:], 2):
        try:
            values.extend(int(v) for v in line.split())
        except ValueError:
            raise ParseError("non-integer trit", path=path, line=lineno) from None
    if len(values) != h * w * c:
        raise ParseError(f"{len(values)} trits, dims need {h * w * c}", path=path)
    if any(v not in (-1, 0, 1) for v in values):
        raise ParseError("values must be -1, 0 or 1", path=path)
    return TernaryTensor(np.array(values, dtype=np.int8).reshape(h, w, c))


TRIT_LOW, TRIT_HIGH = 85, 170


def pixels_to_trits(pixels: np.ndarray) -> TernaryTensor:
    """Tercile split: > 170 -> +1, < 85 -> -1, otherwise 0."""
    px = np.asarray(pixels)
    if px.ndim == 2:
        px = px[:, :, None]
    out = np.zeros(px.shape, dtype=np.int8)
    out[px > TRIT_HIGH] = 1
    out[px < TRIT_LOW] = -1
    return TernaryTensor(out)


def load_image(path) -> TernaryTensor:
    """8-bit PGM (one channel) or PPM (three channels) mapped to trits."""
    try:
        with Image.open(path) as img:
            if img.mode not in ("L", "RGB"):
                raise ParseError(f"unsupported image mode {img.mode}; need 8-bit PGM or PPM", path=path)
            px = np.asarray(img)
    except OSError as exc:
        raise ParseError(f"cannot read image: {exc}", path=path) from None
    return pixels_to_trits(px)


# -------------------------------------------------------------- generators

SNE_DEFAULT_DIMS = (32, 32, 2)
SNE_DEFAULT_CHANNELS = (16, 16, 16, 16)
SNE_DEFAULT_TICKS = 20
CIFAR_INPUT = (32, 32, 1)
# (c_out, kernel, pool, final)
CIFAR_LAYERS = (
    (96, 3, "none", False),
    (96, 3, "max2x2", False),
    (96, 3, "none", False),
    (96, 3, "max2x2", False),
    (96, 3, "none", False),
    (96, 3, "max2x2", False),
    (10, 3, "none", True),
)


@dataclass
class Synthetic:
    kind: str
    description: dict
    payloads: dict[str, bytes]
    inputs: dict[str, bytes]

    def write(self, out_dir, name: str = "net") -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for fname, blob in {**self.payloads, **self.inputs}.items():
            (out / fname).write_bytes(blob)
        path = out / f"{name}.json"
        path.write_text(json.dumps({**self.description, "name": name}, indent=2) + "\n")
        return path


def synthetic_events(dims: Sequence[int], ticks: int, density: float, seed: int) -> list[Event]:
    """Exactly ``round(density * sites)`` distinct events, uniformly placed over ticks x pixels x channels."""
    h, w, c = dims
    if not 0 <= density <= 1:
        raise InvalidDims(f"density must be in [0, 1], got {density}")
    sites = h * w * c * ticks
    n = int(round(density * sites))
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(sites, size=n, replace=False)) if n else np.array([], dtype=np.int64)
    t, rest = np.divmod(idx, h * w * c)
    pix, ch = np.divmod(rest, c)
    y, x = np.divmod(pix, w)
    return [Event(int(a), int(b), int(cc), int(d)) for a, b, cc, d in zip(t, x, y, ch)]


def _gen_sne(dims, density, seed, channels, ticks) -> Synthetic:
    h, w, c_in = dims
    rng = np.random.default_rng(seed)
    layers, payloads = [], {}
    c = c_in
    for i, c_out in enumerate(channels):
        wts = rng.integers(-3, 8, size=(c_out, c, 3, 3))
        blob = pack_nibbles(wts)
        fname = f"sne_l{i}.kw4"
        payloads[fname] = blob
        layers.append(
            {
                "height": h,
                "width": w,
                "c_in": c,
                "c_out": c_out,
                "threshold": 24,
                "leak_num": 224,
                "leak_shift": 8,
                "weights": {"path": fname, "sha256": sha256(blob)},
            }
        )
        c = c_out
    desc = {"schema_version": SCHEMA_VERSION, "engine": "sne", "name": "synthetic-sne", "seed": seed, "latency": 0, "layers": layers}
    events = synthetic_events(dims, ticks, density, seed)
    return Synthetic("sne", desc, payloads, {"events.csv": events_to_csv(events).encode()})


def _gen_cutie(dims, density, seed, layers_spec) -> Synthetic:
    h, w, c = dims
    rng = np.random.default_rng(seed)
    layers, payloads = [], {}
    nonzero = 0.5 if density is None else density
    for i, (c_out, k, pool, final) in enumerate(layers_spec):
        wts = rng.choice([-1, 0, 1], size=(c_out, c, k, k), p=[nonzero / 2, 1 - nonzero, nonzero / 2])
        blob = codec.pack_tensor(TernaryTensor(wts.reshape(c_out, c, k * k)))
        fname = f"cutie_l{i}.ktt"
        payloads[fname] = blob
        # dead zone scaled with the accumulator spread
        spread = max(1, int(round(0.5 * np.sqrt(nonzero * c * k * k))))
        layers.append(
            {
                "c_in": c,
                "c_out": c_out,
                "kernel": k,
                "theta_lo": -spread,
                "theta_hi": spread,
                "pool": pool,
                "final": final,
                "weights": {"path": fname, "sha256": sha256(blob)},
            }
        )
        c = c_out
    desc = {
        "schema_version": SCHEMA_VERSION,
        "engine": "cutie",
        "name": "synthetic-cutie",
        "seed": seed,
        "input": [h, w, dims[2]],
        "overhead_per_layer": 0,
        "layers": layers,
    }
    px = rng.integers(0, 256, size=(h, w), dtype=np.uint8) if dims[2] == 1 else None
    inputs = {}
    if px is not None:
        inputs["input.pgm"] = f"P5\n{w} {h}\n255\n".encode() + px.tobytes()
    return Synthetic("cutie", desc, payloads, inputs)


def _gen_patch(dims, seed) -> Synthetic:
    n_out, c_in, c_out, k = dims
    desc = {
        "schema_version": SCHEMA_VERSION,
        "engine": "pulp-patch",
        "name": "synthetic-patch",
        "seed": seed,
        "patch": {"n_out": n_out, "c_in": c_in, "c_out": c_out, "kernel": k, "a_bits": 8, "w_bits": 8},
    }
    return Synthetic("patch", desc, {}, {})


def gen_synthetic(
    kind: str,
    dims: Sequence[int] | None = None,
    density: float | None = None,
    seed: int = 0,
    *,
    channels: Sequence[int] = SNE_DEFAULT_CHANNELS,
    ticks: int = SNE_DEFAULT_TICKS,
) -> Synthetic:
    """Deterministic stand-in workloads.

    * ``sne``: dims ``(h, w, c_in)``; ``density`` is the input event activity.
    * ``cutie``: dims ``(h, w, c_in)``; CIFAR10-scale topology, ``density``
      is the fraction of non-zero weights.
    * ``patch``: dims ``(n_out, c_in, c_out, kernel)``.
    """
    if kind == "sne":
        dims = tuple(dims or SNE_DEFAULT_DIMS)
        if len(dims) != 3 or min(dims) <= 0 or ticks <= 0:
            raise InvalidDims(f"sne dims must be three positive ints, got {dims}")
        syn = _gen_sne(dims, 0.01 if density is None else density, seed, channels, ticks)
        net_budget = check_memory_budget(_load_sne_from_synthetic(syn))
        if not net_budget.fits:
            raise InvalidDims(f"generated network exceeds SNE memory ({net_budget})")
        return syn
    if kind == "cutie":
        dims = tuple(dims or CIFAR_INPUT)
        if len(dims) != 3 or min(dims) <= 0:
            raise InvalidDims(f"cutie dims must be three positive ints, got {dims}")
        return _gen_cutie(dims, density, seed, CIFAR_LAYERS)
    if kind == "patch":
        dims = tuple(dims or (64, 8, 16, 3))
        if len(dims) != 4 or min(dims) <= 0:
            raise InvalidDims(f"patch dims must be four positive ints, got {dims}")
        return _gen_patch(dims, seed)
    raise InvalidDims(f"unknown workload kind {kind!r}")


def _load_sne_from_synthetic(syn: Synthetic) -> SneNetwork:
    layers = []
    for d in syn.description["layers"]:
        w = unpack_nibbles(syn.payloads[d["weights"]["path"]]).reshape(d["c_out"], d["c_in"], 3, 3)
        layers.append(LifLayer(d["height"], d["width"], w, LifConfig(d["threshold"], d["leak_num"], d["leak_shift"])))
    return SneNetwork(layers)


def fixture_path(name: str) -> Path:
    """Path of a bundled fixture file."""
    from importlib import resources

    return Path(str(resources.files("kraken_sim") / "data" / "fixtures" / name))
