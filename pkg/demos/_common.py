"""Shared helper: where demos write their artifacts."""
import sys
import tempfile
from pathlib import Path


def output_dir(name: str) -> Path:
    """First CLI argument if given, else a fresh temporary directory."""
    if len(sys.argv) > 1:
        out = Path(sys.argv[1])
        out.mkdir(parents=True, exist_ok=True)
        return out
    return Path(tempfile.mkdtemp(prefix=f"fkroi-{name}-"))
