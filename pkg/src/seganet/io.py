"""On-disk formats: tensor containers, dataset manifests and checkpoints.

Tensor container (``.sgt``)::

    "SGT1" | dtype u8 (0 = float32, 1 = uint8) | ndim u8 | 2 zero bytes
    | ndim x u32 LE dims | row-major LE payload

Checkpoint (``.sgm``)::

    "SGM1" | u32 LE config-JSON length | config JSON (UTF-8)
    | u64 LE parameter count | float32 LE payload | u64 LE blake2b-64 of payload

A dataset is a directory holding ``manifest.txt`` (``key = value`` lines,
``#`` comments) plus the containers it references.
"""
import hashlib
import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .model import ModelConfig, ModelParams
from .stacks import check_spacing

TENSOR_MAGIC = b"SGT1"
CHECKPOINT_MAGIC = b"SGM1"
MANIFEST_NAME = "manifest.txt"
MANIFEST_FORMAT = "seganet-dataset-1"
ORDERINGS = ("apex_to_superior", "superior_to_apex")
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("u1")}
_CODES = {np.dtype("float32"): 0, np.dtype("uint8"): 1}


def encode_tensor(array):
    a = np.asarray(array)
    if a.dtype == bool:
        a = a.astype(np.uint8)
    code = _CODES.get(a.dtype)
    if code is None:
        raise DataError(f"container stores float32 or uint8, not {a.dtype}")
    if a.ndim == 0 or a.ndim > 255:
        raise DataError(f"container needs 1..255 dims, got {a.ndim}")
    if any(d >= 2**32 for d in a.shape):
        raise DataError(f"dimension overflow: {a.shape}")
    header = TENSOR_MAGIC + struct.pack("<BB2x", code, a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    return header + np.ascontiguousarray(a, dtype=_DTYPES[code]).tobytes()


def decode_tensor(blob, expect_dtype=None):
    if len(blob) < 8 or blob[:4] != TENSOR_MAGIC:
        raise DataError("not a tensor container (bad magic)")
    code, ndim, r0, r1 = struct.unpack_from("<BBBB", blob, 4)
    if code not in _DTYPES:
        raise DataError(f"unknown dtype code {code}")
    if r0 or r1:
        raise DataError("reserved header bytes are not zero")
    if ndim == 0 or len(blob) < 8 + 4 * ndim:
        raise DataError("truncated container header")
    dims = struct.unpack_from(f"<{ndim}I", blob, 8)
    dtype = _DTYPES[code]
    if expect_dtype is not None and dtype != np.dtype(expect_dtype).newbyteorder("<"):
        raise DataError(f"container holds {dtype}, expected {np.dtype(expect_dtype)}")
    start = 8 + 4 * ndim
    n = int(np.prod(dims, dtype=np.uint64))
    if len(blob) - start != n * dtype.itemsize:
        raise DataError(f"payload has {len(blob) - start} bytes, dims {dims} need {n * dtype.itemsize}")
    return np.frombuffer(blob, dtype=dtype, offset=start).reshape(dims).astype(dtype.newbyteorder("="))


def write_tensor(path, array):
    Path(path).write_bytes(encode_tensor(array))


def read_tensor(path, expect_dtype=None):
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return decode_tensor(blob, expect_dtype)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


# ---- checkpoints


def save_checkpoint(path, params):
    config = json.dumps(params.config.to_dict(), sort_keys=True).encode()
    payload = np.ascontiguousarray(params.vector, dtype="<f4").tobytes()
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC + struct.pack("<I", len(config)) + config)
        fh.write(struct.pack("<Q", params.count) + payload + digest)


def load_checkpoint(path):
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc.strerror}") from None
    if blob[:4] != CHECKPOINT_MAGIC or len(blob) < 8:
        raise DataError(f"{path}: not a checkpoint (bad magic)")
    (n_json,) = struct.unpack_from("<I", blob, 4)
    pos = 8 + n_json
    try:
        config = ModelConfig.from_dict(json.loads(blob[8:pos].decode()))
    except (ValueError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: bad model config: {exc}") from None
    if len(blob) < pos + 8:
        raise DataError(f"{path}: truncated checkpoint")
    (count,) = struct.unpack_from("<Q", blob, pos)
    payload = blob[pos + 8 : pos + 8 + 4 * count]
    digest = blob[pos + 8 + 4 * count :]
    if len(payload) != 4 * count or len(digest) != 8:
        raise DataError(f"{path}: truncated checkpoint")
    if hashlib.blake2b(payload, digest_size=8).digest() != digest:
        raise DataError(f"{path}: checksum mismatch")
    vector = np.frombuffer(payload, dtype="<f4").astype(np.float32)
    try:
        return ModelParams(config, vector)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


# ---- datasets


@dataclass
class Dataset:
    """Per-phase stacks in apex -> superior order."""

    spacing: tuple
    images: list | None = None  # float32 [S, H, W] per phase
    masks: list | None = None  # bool [S, H, W] per phase
    lv_flags: np.ndarray | None = None
    subject: str = "subject"
    group: str = "patient"
    root: Path | None = None

    @property
    def phases(self):
        return len(self.images if self.images is not None else self.masks)

    @property
    def slices(self):
        return (self.images if self.images is not None else self.masks)[0].shape[0]


def parse_manifest(text):
    entries = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DataError(f"manifest line {lineno}: expected 'key = value'")
        key = key.strip()
        if key in entries:
            raise DataError(f"manifest line {lineno}: duplicate key {key!r}")
        entries[key] = value.strip()
    return entries


def _manifest_path(path):
    path = Path(path)
    return path / MANIFEST_NAME if path.is_dir() else path


def read_lv_flags(path):
    try:
        tokens = Path(path).read_text().split()
    except OSError as exc:
        raise DataError(f"cannot read LV flags {path}: {exc.strerror}") from None
    if not tokens or any(t not in ("0", "1") for t in tokens):
        raise DataError(f"{path}: LV flags must be whitespace-separated 0/1 values")
    return np.array([t == "1" for t in tokens])


def write_lv_flags(path, flags):
    Path(path).write_text(" ".join("1" if f else "0" for f in flags) + "\n")


def load_dataset(path):
    """Validate a manifest and every file it references, then load it.

    Stacks stored superior -> apex are flipped so callers always see
    apex -> superior.
    """
    mpath = _manifest_path(path)
    try:
        entries = parse_manifest(mpath.read_text())
    except OSError as exc:
        raise DataError(f"cannot read manifest {mpath}: {exc.strerror}") from None
    root = mpath.parent

    def need(key):
        if key not in entries:
            raise DataError(f"{mpath}: missing key {key!r}")
        return entries[key]

    if need("format") != MANIFEST_FORMAT:
        raise DataError(f"{mpath}: unsupported format {entries['format']!r}")
    try:
        spacing = check_spacing(need("spacing").split())
        phases, slices = int(need("phases")), int(need("slices"))
    except ValueError as exc:
        raise DataError(f"{mpath}: {exc}") from None
    if phases < 1 or slices < 1:
        raise DataError(f"{mpath}: phases and slices must be positive")
    ordering = entries.get("ordering", ORDERINGS[0])
    if ordering not in ORDERINGS:
        raise DataError(f"{mpath}: ordering must be one of {ORDERINGS}")
    group = entries.get("group", "patient")
    if group not in ("patient", "volunteer"):
        raise DataError(f"{mpath}: group must be 'patient' or 'volunteer'")

    stacks = {}
    for kind in ("image", "mask"):
        keys = sorted((k for k in entries if k.startswith(kind + ".")), key=lambda k: k.split(".", 1)[1])
        if not keys:
            continue
        idx = sorted(int(k.split(".", 1)[1]) for k in keys)
        if idx != list(range(phases)):
            raise DataError(f"{mpath}: {kind} entries must be {kind}.0 .. {kind}.{phases - 1}")
        files = [root / entries[f"{kind}.{i}"] for i in range(phases)]
        for f in files:
            if not f.is_file():
                raise DataError(f"{mpath}: missing file {f}")
        stacks[kind] = files
    if not stacks:
        raise DataError(f"{mpath}: no image or mask entries")
    flags_file = None
    if "lv_flags" in entries:
        flags_file = root / entries["lv_flags"]
        if not flags_file.is_file():
            raise DataError(f"{mpath}: missing file {flags_file}")

    flip = ordering == "superior_to_apex"
    loaded = {}
    for kind, files in stacks.items():
        out = []
        for f in files:
            a = read_tensor(f, np.float32 if kind == "image" else np.uint8)
            if a.ndim != 3 or a.shape[0] != slices:
                raise DataError(f"{f}: expected [{slices}, H, W], got {list(a.shape)}")
            if out and a.shape != out[0].shape:
                raise DataError(f"{f}: dims {list(a.shape)} differ from phase 0")
            if kind == "mask":
                if a.max(initial=0) > 1:
                    raise DataError(f"{f}: mask is not binary")
                a = a.astype(bool)
            elif not np.isfinite(a).all():
                raise DataError(f"{f}: image holds non-finite values")
            out.append(a[::-1].copy() if flip else a)
        loaded[kind] = out
    if len(loaded) == 2 and loaded["image"][0].shape != loaded["mask"][0].shape:
        raise DataError(f"{mpath}: image and mask dims differ")
    flags = None
    if flags_file is not None:
        flags = read_lv_flags(flags_file)
        if flags.size != slices:
            raise DataError(f"{flags_file}: {flags.size} flags for {slices} slices")
        flags = flags[::-1].copy() if flip else flags
    return Dataset(
        spacing, loaded.get("image"), loaded.get("mask"), flags, entries.get("subject", mpath.parent.name), group, root
    )


def write_dataset(directory, dataset):
    """Write ``dataset`` as containers plus manifest (apex -> superior)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    first = dataset.images if dataset.images is not None else dataset.masks
    lines = [
        f"format = {MANIFEST_FORMAT}",
        f"subject = {dataset.subject}",
        f"group = {dataset.group}",
        "spacing = " + " ".join(repr(float(s)) for s in dataset.spacing),
        f"phases = {len(first)}",
        f"slices = {first[0].shape[0]}",
        f"ordering = {ORDERINGS[0]}",
    ]
    for kind, stacks in (("image", dataset.images), ("mask", dataset.masks)):
        if stacks is None:
            continue
        for p, a in enumerate(stacks):
            name = f"{kind}_{p:03d}.sgt"
            write_tensor(d / name, np.asarray(a, dtype=np.float32 if kind == "image" else np.uint8))
            lines.append(f"{kind}.{p} = {name}")
    if dataset.lv_flags is not None:
        write_lv_flags(d / "lv_flags.txt", dataset.lv_flags)
        lines.append("lv_flags = lv_flags.txt")
    (d / MANIFEST_NAME).write_text("\n".join(lines) + "\n")
    return d / MANIFEST_NAME


def write_phantom(directory, phantom):
    """Dataset directory plus ``landmarks.json`` with the analytic record."""
    ds = Dataset(
        phantom.spacing, phantom.images, phantom.masks, phantom.lv_flags, phantom.spec.subject, phantom.spec.group
    )
    path = write_dataset(directory, ds)
    record = dict(phantom.landmarks)
    record["volumes_ml"] = [float(v) for v in phantom.volumes_ml]
    record["spec"] = asdict(phantom.spec)
    (Path(directory) / "landmarks.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    return path
