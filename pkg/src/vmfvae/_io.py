"""Atomic file output and run-directory locking."""
import contextlib
import os
import tempfile


def atomic_write_bytes(path, data):
    """Write to a temp file in the target directory, then rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


class RunDirLocked(RuntimeError):
    pass


@contextlib.contextmanager
def run_lock(directory):
    """Exclusive ``.lock`` file in ``directory`` for the duration of the block."""
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, ".lock")
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RunDirLocked(f"{directory} is in use by another run (remove {path} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(path)
