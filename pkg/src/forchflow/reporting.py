"""CSV emission and the output manifest.

Floats are written with ``repr`` (shortest round-trip form), which makes
byte-identical reruns the expected behavior for identical configs and seeds
in single-threaded mode.  The manifest lists every emitted file with its
SHA-256 so a run directory is self-describing.
"""

import csv
import hashlib
from pathlib import Path


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(65536), b""):
            h.update(block)
    return h.hexdigest()


class Manifest:
    """Collects emitted files and run metadata; written last."""

    def __init__(self, out_dir, meta=None):
        self.out_dir = Path(out_dir)
        self.meta = dict(meta or {})
        self.files = []

    def add(self, path):
        self.files.append(Path(path))
        return path

    def write(self, name="manifest.txt"):
        import numpy
        import scipy

        from . import __version__, kernels

        lines = [f"forchflow {__version__}"]
        lines.append(f"kernel_backend {kernels.BACKEND}")
        lines.append(f"numpy {numpy.__version__}")
        lines.append(f"scipy {scipy.__version__}")
        for k in sorted(self.meta):
            lines.append(f"{k} {self.meta[k]}")
        lines.append("")
        for p in sorted(self.files):
            rel = p.relative_to(self.out_dir) if p.is_relative_to(self.out_dir) else p
            lines.append(f"{rel} sha256={sha256_file(p)} bytes={p.stat().st_size}")
        target = self.out_dir / name
        target.write_text("\n".join(lines) + "\n")
        return target
