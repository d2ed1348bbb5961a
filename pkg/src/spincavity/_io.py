"""Small file helpers shared by every exporter."""

import hashlib
import os
import tempfile


def format_float(v):
    """Shortest text that round-trips a double (up to 17 significant digits)."""
    return format(float(v), ".17g")


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_csv(path, header, columns, comments=()):
    """Write equal-length numeric columns as CSV with full precision."""
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(header))
    for row in zip(*columns):
        lines.append(",".join(format_float(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_csv(path):
    """Return ``(header, rows)`` of a numeric CSV, skipping ``#`` comments."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    header = [h.strip() for h in lines[0].split(",")]
    rows = [[float(x) for x in ln.split(",")] for ln in lines[1:]]
    return header, rows
