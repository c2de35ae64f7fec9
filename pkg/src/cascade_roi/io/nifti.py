"""Minimal NIfTI-1 single-file reader/writer (.nii / .nii.gz).

Only the fields needed for 3D scalar volumes are interpreted: ``dim``,
``pixdim``, ``datatype``, ``vox_offset``, ``scl_slope``/``scl_inter`` and the
``qoffset`` origin.  Written files are little-endian with a 352-byte data
offset (348-byte header plus an empty 4-byte extension block).
"""

from __future__ import annotations

import gzip
import os
from typing import Union

import numpy as np

from ..errors import DimensionUnsupported, IoFailure, MalformedHeader, UnsupportedDatatype
from ..volume import GridMeta, Mask, Volume

HEADER_SIZE = 348
VOX_OFFSET = 352

DT_UINT8 = 2
DT_INT16 = 4
DT_FLOAT32 = 16

_DATATYPES = {
    DT_UINT8: np.dtype(np.uint8),
    DT_INT16: np.dtype(np.int16),
    DT_FLOAT32: np.dtype(np.float32),
}

HEADER_DTYPE = np.dtype(
    [
        ("sizeof_hdr", "i4"),
        ("data_type", "S10"),
        ("db_name", "S18"),
        ("extents", "i4"),
        ("session_error", "i2"),
        ("regular", "S1"),
        ("dim_info", "u1"),
        ("dim", "i2", (8,)),
        ("intent_p1", "f4"),
        ("intent_p2", "f4"),
        ("intent_p3", "f4"),
        ("intent_code", "i2"),
        ("datatype", "i2"),
        ("bitpix", "i2"),
        ("slice_start", "i2"),
        ("pixdim", "f4", (8,)),
        ("vox_offset", "f4"),
        ("scl_slope", "f4"),
        ("scl_inter", "f4"),
        ("slice_end", "i2"),
        ("slice_code", "u1"),
        ("xyzt_units", "u1"),
        ("cal_max", "f4"),
        ("cal_min", "f4"),
        ("slice_duration", "f4"),
        ("toffset", "f4"),
        ("glmax", "i4"),
        ("glmin", "i4"),
        ("descrip", "S80"),
        ("aux_file", "S24"),
        ("qform_code", "i2"),
        ("sform_code", "i2"),
        ("quatern_b", "f4"),
        ("quatern_c", "f4"),
        ("quatern_d", "f4"),
        ("qoffset_x", "f4"),
        ("qoffset_y", "f4"),
        ("qoffset_z", "f4"),
        ("srow_x", "f4", (4,)),
        ("srow_y", "f4", (4,)),
        ("srow_z", "f4", (4,)),
        ("intent_name", "S16"),
        ("magic", "S4"),
    ]
)
assert HEADER_DTYPE.itemsize == HEADER_SIZE

PathLike = Union[str, os.PathLike]


def _is_gz(path: PathLike) -> bool:
    return str(path).endswith(".gz")


def _read_bytes(path: PathLike) -> bytes:
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    # sniff the gzip magic rather than trusting the extension
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise MalformedHeader(f"corrupt gzip stream in {path}: {exc}") from exc
    return raw


def parse_header(raw: bytes):
    """Decode the 348-byte header, detecting byte order from ``sizeof_hdr``.

    Returns the header record and the byte-order character (``"<"`` or ``">"``).
    """
    if len(raw) < HEADER_SIZE:
        raise MalformedHeader(f"file is shorter than a NIfTI-1 header ({len(raw)} bytes)")
    for order in ("<", ">"):
        hdr = np.frombuffer(raw[:HEADER_SIZE], dtype=HEADER_DTYPE.newbyteorder(order))[0]
        if int(hdr["sizeof_hdr"]) == HEADER_SIZE:
            break
    else:
        size = int(np.frombuffer(raw[:4], "<i4")[0])
        raise MalformedHeader(f"sizeof_hdr is {size}, expected {HEADER_SIZE}")
    if bytes(hdr["magic"]) != b"n+1":
        raise MalformedHeader(f"bad magic {bytes(hdr['magic'])!r}, expected 'n+1\\0'")
    return hdr, order


def read_nifti(path: PathLike) -> Union[Volume, Mask]:
    """Load a 3D NIfTI-1 file.

    uint8 files whose values are all 0/1 come back as a :class:`Mask`; every
    other supported file is returned as a float32 :class:`Volume`.
    """
    raw = _read_bytes(path)
    hdr, order = parse_header(raw)

    dim = [int(d) for d in hdr["dim"]]
    ndim = dim[0]
    if ndim == 4:
        if dim[4] > 1:
            raise DimensionUnsupported(f"4D volume with {dim[4]} frames is not supported")
    elif ndim != 3:
        raise DimensionUnsupported(f"dim[0] = {ndim}; only 3D volumes are supported")
    dims = tuple(dim[1:4])
    if any(d < 1 for d in dims):
        raise MalformedHeader(f"non-positive dimension in {dims}")

    code = int(hdr["datatype"])
    if code not in _DATATYPES:
        raise UnsupportedDatatype(f"NIfTI datatype {code} is not supported")
    dtype = _DATATYPES[code].newbyteorder(order)

    offset = int(hdr["vox_offset"])
    if offset < HEADER_SIZE:
        raise MalformedHeader(f"vox_offset {offset} lies inside the header")
    n = dims[0] * dims[1] * dims[2]
    nbytes = n * dtype.itemsize
    if len(raw) < offset + nbytes:
        raise MalformedHeader(f"{path}: expected {nbytes} data bytes after offset {offset}")
    flat = np.frombuffer(raw, dtype=dtype, count=n, offset=offset)

    spacing = tuple(abs(float(p)) for p in hdr["pixdim"][1:4])
    if not all(s > 0 for s in spacing):
        raise MalformedHeader(f"non-positive voxel spacing {spacing}")
    origin = (float(hdr["qoffset_x"]), float(hdr["qoffset_y"]), float(hdr["qoffset_z"]))
    meta = GridMeta(dims, spacing, origin)

    slope = float(hdr["scl_slope"])
    inter = float(hdr["scl_inter"])
    rescale = np.isfinite(slope) and slope not in (0.0, 1.0)

    if code == DT_UINT8 and not rescale and np.isin(flat, (0, 1)).all():
        return Mask.from_flat(meta, flat)
    if rescale:
        values = (slope * flat.astype(np.float64) + inter).astype(np.float32)
    else:
        values = flat.astype(np.float32)
    return Volume.from_flat(meta, values)


def build_header(meta: GridMeta, datatype: int) -> bytes:
    hdr = np.zeros((), dtype=HEADER_DTYPE.newbyteorder("<"))
    hdr["sizeof_hdr"] = HEADER_SIZE
    hdr["regular"] = b"r"
    hdr["dim"] = [3, *meta.dims, 1, 1, 1, 1]
    hdr["datatype"] = datatype
    hdr["bitpix"] = _DATATYPES[datatype].itemsize * 8
    hdr["pixdim"] = [1.0, *meta.spacing, 0.0, 0.0, 0.0, 0.0]
    hdr["vox_offset"] = VOX_OFFSET
    hdr["scl_slope"] = 0.0
    hdr["xyzt_units"] = 2  # NIFTI_UNITS_MM
    hdr["qform_code"] = 1
    hdr["sform_code"] = 1
    hdr["qoffset_x"], hdr["qoffset_y"], hdr["qoffset_z"] = meta.origin
    sx, sy, sz = meta.spacing
    ox, oy, oz = meta.origin
    hdr["srow_x"] = [sx, 0.0, 0.0, ox]
    hdr["srow_y"] = [0.0, sy, 0.0, oy]
    hdr["srow_z"] = [0.0, 0.0, sz, oz]
    hdr["magic"] = b"n+1"
    return hdr.tobytes()


def encode_nifti(v: Union[Volume, Mask], datatype: int = None) -> bytes:
    """Uncompressed NIfTI-1 bytes for ``v``.

    ``datatype`` defaults to uint8 for masks and float32 for volumes; int16
    may be requested for integer-valued volumes.
    """
    if datatype is None:
        datatype = DT_UINT8 if isinstance(v, Mask) else DT_FLOAT32
    if datatype not in _DATATYPES:
        raise UnsupportedDatatype(f"cannot write NIfTI datatype {datatype}")
    target = _DATATYPES[datatype].newbyteorder("<")
    flat = v.flat
    cast = flat.astype(target)
    if datatype != DT_FLOAT32 and not np.array_equal(cast.astype(flat.dtype), flat):
        raise UnsupportedDatatype(f"values are not representable as {_DATATYPES[datatype]}")
    return build_header(v.meta, datatype) + b"\x00" * (VOX_OFFSET - HEADER_SIZE) + cast.tobytes()


def write_nifti(v: Union[Volume, Mask], path: PathLike, datatype: int = None) -> None:
    """Write ``v`` to ``path``; gzip-compressed iff the name ends in ``.gz``.

    The gzip member carries no timestamp or filename, so identical inputs give
    identical files.
    """
    payload = encode_nifti(v, datatype)
    try:
        with open(path, "wb") as f:
            if _is_gz(path):
                with gzip.GzipFile(filename="", mode="wb", fileobj=f, mtime=0, compresslevel=6) as gz:
                    gz.write(payload)
            else:
                f.write(payload)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_header(path: PathLike) -> dict:
    """Header fields as a plain dict (for inspection and debugging)."""
    hdr, _ = parse_header(_read_bytes(path))
    out = {}
    for name in HEADER_DTYPE.names:
        val = hdr[name]
        out[name] = bytes(val) if isinstance(val, bytes) else np.asarray(val).tolist()
    return out
