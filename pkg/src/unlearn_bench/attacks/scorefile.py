"""Columnar binary score-matrix files (``.scm``).

Byte-exact layout, all integers little-endian:

    offset  size        field
    0       4           magic ``b"UBSM"``
    4       2           uint16 format version (currently 1)
    6       2           uint16 plane count: 1 single-model, 2 paired
    8       4           uint32 S (shadow or pair count)
    12      4           uint32 Q (query count)
    16      8*Q         int64 query indices
    ...     4*S*Q each  plane(s), float32 row-major scores; for paired
                        files the base plane precedes the unlearned plane
    ...     S*Q         uint8 mask plane (single: 1=IN 0=OUT;
                        paired: 0=NEVER 1=FORGOTTEN 2=KEPT)
    ...     4           uint32 footer length
    ...     var         UTF-8 JSON provenance footer, sorted keys
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import BenchError
from .shadows import PairedScoreMatrix, ScoreMatrix

MAGIC = b"UBSM"
VERSION = 1


def write_score_file(path: str | Path, matrix: ScoreMatrix | PairedScoreMatrix) -> None:
    if isinstance(matrix, ScoreMatrix):
        planes = [matrix.scores]
    else:
        planes = [matrix.base_scores, matrix.unlearned_scores]
    s, q = planes[0].shape
    footer = json.dumps(matrix.provenance, sort_keys=True, separators=(",", ":")).encode()
    parts = [
        MAGIC,
        struct.pack("<HHII", VERSION, len(planes), s, q),
        np.ascontiguousarray(matrix.query_indices, dtype="<i8").tobytes(),
    ]
    for plane in planes:
        parts.append(np.ascontiguousarray(plane, dtype="<f4").tobytes())
    parts.append(np.ascontiguousarray(matrix.mask, dtype=np.uint8).tobytes())
    parts.append(struct.pack("<I", len(footer)))
    parts.append(footer)
    Path(path).write_bytes(b"".join(parts))


def read_score_file(path: str | Path) -> ScoreMatrix | PairedScoreMatrix:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise BenchError("BAD_BLOB", f"{path} is not a score-matrix file")
    version, n_planes, s, q = struct.unpack("<HHII", blob[4:16])
    if version != VERSION:
        raise BenchError("BAD_BLOB", f"unsupported score file version {version}")
    offset = 16
    queries = np.frombuffer(blob, dtype="<i8", count=q, offset=offset).astype(np.int64)
    offset += 8 * q
    planes = []
    for _ in range(n_planes):
        plane = np.frombuffer(blob, dtype="<f4", count=s * q, offset=offset)
        planes.append(plane.reshape(s, q).astype(np.float32))
        offset += 4 * s * q
    mask = np.frombuffer(blob, dtype=np.uint8, count=s * q, offset=offset).reshape(s, q).copy()
    offset += s * q
    (footer_len,) = struct.unpack("<I", blob[offset : offset + 4])
    offset += 4
    provenance = json.loads(blob[offset : offset + footer_len].decode())
    if n_planes == 1:
        return ScoreMatrix(query_indices=queries, scores=planes[0], mask=mask, provenance=provenance)
    if n_planes == 2:
        return PairedScoreMatrix(
            query_indices=queries,
            base_scores=planes[0],
            unlearned_scores=planes[1],
            mask=mask,
            provenance=provenance,
        )
    raise BenchError("BAD_BLOB", f"unsupported plane count {n_planes}")
