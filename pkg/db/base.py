"""Shared helpers for the binary and text formats written to disk."""
import os
import struct
import tempfile
from pathlib import Path
from typing import Tuple, Union

from models.errors import WeightsFormatError

PathLike = Union[str, Path]

U32 = struct.Struct("<I")


def _process_umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


# read once; os.umask cannot be queried without setting it
FILE_MODE = 0o666 & ~_process_umask()


def atomic_write_bytes(path: PathLike, payload: bytes) -> None:
    """Write to a temp file next to `path`, then move it into place.

    The file gets the mode `open` would have given it (0o666 less the umask)
    rather than the 0o600 of the temp file.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.chmod(tmp, FILE_MODE)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


class Reader:
    """Cursor over a byte buffer; running past the end raises `error_cls`."""

    def __init__(self, payload: bytes, source: str, error_cls=WeightsFormatError):
        self.payload = payload
        self.offset = 0
        self.source = source
        self.error_cls = error_cls

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.payload):
            raise self.error_cls(f"{self.source}: truncated while reading {what}.")
        chunk = self.payload[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def u32(self, what: str) -> int:
        return U32.unpack(self.take(4, what))[0]

    def remaining(self) -> int:
        return len(self.payload) - self.offset


def pack_u32(*values: int) -> bytes:
    return b"".join(U32.pack(v) for v in values)


def read_magic(reader: Reader, magic: bytes) -> None:
    found = reader.take(len(magic), "magic")
    if found != magic:
        raise reader.error_cls(f"{reader.source}: bad magic {found!r}, expected {magic!r}.")


def shape_of(reader: Reader, what: str) -> Tuple[int, ...]:
    ndim = reader.u32(f"{what} rank")
    return tuple(reader.u32(f"{what} dim") for _ in range(ndim))
