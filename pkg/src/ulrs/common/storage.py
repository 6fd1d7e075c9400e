"""
Text artefact formats shared by the CLI and the tests.

Every writer goes through `atomic_write`: a file either appears complete under
its final name or not at all.
"""

import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Sequence, TextIO, Union

import numpy as np
from structlog import get_logger

from ulrs.common.errors import DataError
from ulrs.types import Detection, Dictionary, FloatArray, RocCurve

logger = get_logger()

PathLike = Union[str, os.PathLike[str]]

DICTIONARY_MAGIC = "ULRSDICT"
DICTIONARY_VERSION = 1
ROC_HEADER = "pf,pd,threshold"
SWEEP_HEADER = "T,esr"
DECISIONS_HEADER = "frame,t,threshold,decision"


def _fmt(value: float) -> str:
    return "%.17g" % value


@contextmanager
def atomic_write(path: PathLike) -> Iterator[TextIO]:
    """
    Provide a text handle whose content replaces `path` on success.

    The temporary file lives next to the target so the final rename stays on
    one filesystem; on any exception it is removed and the target is untouched.
    """
    target = Path(path)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=target.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="ascii", newline="\n") as handle:
            yield handle
        os.replace(tmp_name, target)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.debug("artefact_written", path=str(target))


def _read_lines(path: PathLike) -> list[str]:
    try:
        with open(path, encoding="ascii") as handle:
            return handle.read().splitlines()
    except UnicodeDecodeError as exc:
        raise DataError("artefact is not ASCII text", path=str(path)) from exc


def _parse_row(path: PathLike, number: int, text: str, sep: str | None) -> list[float]:
    try:
        values = [float(token) for token in text.split(sep)]
    except ValueError as exc:
        raise DataError("malformed number", path=str(path), line=number) from exc
    if not all(np.isfinite(values)):
        raise DataError("non-finite value", path=str(path), line=number)
    return values


# --- Dictionary --------------------------------------------------------------


def write_dictionary(path: PathLike, D: Dictionary) -> None:
    with atomic_write(path) as out:
        out.write(f"{DICTIONARY_MAGIC} {DICTIONARY_VERSION} {D.n} {D.K}\n")
        for row in D.atoms:
            out.write(" ".join(_fmt(v) for v in row) + "\n")


def read_dictionary(path: PathLike) -> Dictionary:
    lines = [line for line in _read_lines(path) if line.strip()]
    if not lines:
        raise DataError("dictionary file is empty", path=str(path))
    header = lines[0].split()
    if len(header) != 4 or header[0] != DICTIONARY_MAGIC:
        raise DataError("missing ULRSDICT header", path=str(path), line=1)
    if header[1] != str(DICTIONARY_VERSION):
        raise DataError("unsupported dictionary version", path=str(path), version=header[1])
    try:
        n, K = int(header[2]), int(header[3])
    except ValueError as exc:
        raise DataError("malformed dictionary shape", path=str(path), line=1) from exc
    if len(lines) - 1 != n:
        raise DataError("dictionary row count disagrees with header", path=str(path), expected=n, got=len(lines) - 1)

    rows = []
    for number, text in enumerate(lines[1:], start=2):
        row = _parse_row(path, number, text, None)
        if len(row) != K:
            raise DataError("dictionary row has wrong width", path=str(path), line=number, expected=K, got=len(row))
        rows.append(row)
    return Dictionary(np.asarray(rows, dtype=np.float64))


# --- Vector CSV --------------------------------------------------------------


def write_vectors(path: PathLike, vectors: FloatArray) -> None:
    """One vector per line, comma-separated, no header."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    with atomic_write(path) as out:
        for row in vectors:
            out.write(",".join(_fmt(v) for v in row) + "\n")


def read_vectors(path: PathLike) -> FloatArray:
    rows: list[list[float]] = []
    for number, text in enumerate(_read_lines(path), start=1):
        if not text.strip():
            continue
        row = _parse_row(path, number, text, ",")
        if rows and len(row) != len(rows[0]):
            raise DataError("ragged vector file", path=str(path), line=number, expected=len(rows[0]), got=len(row))
        rows.append(row)
    if not rows:
        raise DataError("vector file holds no vectors", path=str(path))
    return np.asarray(rows, dtype=np.float64)


def noise_floor_path(dictionary_path: PathLike) -> Path:
    """Where the noise floor of a VAD dictionary lives: `<dictionary>.floor`."""
    path = Path(dictionary_path)
    return path.with_name(path.name + ".floor")


def write_noise_floor(path: PathLike, floor: FloatArray) -> None:
    """A noise floor is stored as a one-row vector file next to its dictionary."""
    write_vectors(path, np.asarray(floor, dtype=np.float64).reshape(1, -1))


def read_noise_floor(path: PathLike) -> FloatArray:
    rows = read_vectors(path)
    if rows.shape[0] != 1:
        raise DataError("noise floor file must hold one vector", path=str(path), rows=rows.shape[0])
    return rows[0]


# --- Results -----------------------------------------------------------------


def write_roc(path: PathLike, roc: RocCurve) -> None:
    with atomic_write(path) as out:
        out.write(ROC_HEADER + "\n")
        for pf, pd, threshold in roc:
            out.write(f"{_fmt(pf)},{_fmt(pd)},{_fmt(threshold)}\n")


def read_roc(path: PathLike) -> RocCurve:
    lines = _read_lines(path)
    if not lines or lines[0].strip() != ROC_HEADER:
        raise DataError("missing ROC header", path=str(path), line=1)
    rows = []
    for number, text in enumerate(lines[1:], start=2):
        if not text.strip():
            continue
        try:
            values = [float(token) for token in text.split(",")]
        except ValueError as exc:
            raise DataError("malformed number", path=str(path), line=number) from exc
        if len(values) != 3:
            raise DataError("ROC rows need three fields", path=str(path), line=number)
        rows.append(values)
    table = np.asarray(rows, dtype=np.float64).reshape(-1, 3)
    return RocCurve(pf=table[:, 0], pd=table[:, 1], thresholds=table[:, 2])


def write_sweep(path: PathLike, sweep: Sequence[tuple[int, float]]) -> None:
    with atomic_write(path) as out:
        out.write(SWEEP_HEADER + "\n")
        for T, esr in sweep:
            out.write(f"{int(T)},{_fmt(esr)}\n")


def write_decisions(path: PathLike, detections: Sequence[Detection]) -> None:
    with atomic_write(path) as out:
        out.write(DECISIONS_HEADER + "\n")
        for frame, det in enumerate(detections):
            out.write(f"{frame},{_fmt(det.statistic_t)},{_fmt(det.threshold)},{det.decision.flag}\n")


# --- Reference labels --------------------------------------------------------


def read_labels(path: PathLike) -> np.ndarray:
    labels = []
    for number, text in enumerate(_read_lines(path), start=1):
        token = text.strip()
        if not token:
            continue
        if token not in ("0", "1"):
            raise DataError("labels must be 0 or 1", path=str(path), line=number, value=token)
        labels.append(int(token))
    return np.asarray(labels, dtype=np.int8)


def write_labels(path: PathLike, labels: Sequence[int] | np.ndarray) -> None:
    with atomic_write(path) as out:
        for label in np.asarray(labels).ravel():
            out.write(f"{int(bool(label))}\n")
