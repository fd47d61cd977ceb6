#!/usr/bin/env python3
"""Download the public sepsis emergency-ward event log.

Usage: python scripts/fetch_sepsis.py [DEST_DIR]

Fetches the gzipped XES file from the 4TU research-data archive,
decompresses it, and writes DEST_DIR/sepsis.xes (default: data/).
Needs network access; rerunning with the file already present is a
no-op. The real-data tests in the suite skip themselves until this
file exists.
"""

import gzip
import shutil
import sys
import urllib.request
from pathlib import Path

URL = ("https://data.4tu.nl/file/33632f3c-5c48-40cf-8d8f-2db57f5a6ce7/"
       "643dccf2-985a-459e-835c-a82bce1c0339")
EXPECTED_MIN_BYTES = 3_000_000  # decompressed log is a ~4 MB XML document


def main() -> int:
    dest_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("data")
    dest = dest_dir / "sepsis.xes"
    if dest.exists() and dest.stat().st_size >= EXPECTED_MIN_BYTES:
        print(f"{dest} already present; nothing to do")
        return 0
    dest_dir.mkdir(parents=True, exist_ok=True)
    archive = dest_dir / "sepsis.xes.gz"
    print(f"downloading {URL}")
    try:
        with urllib.request.urlopen(URL, timeout=120) as response, \
                open(archive, "wb") as fh:
            shutil.copyfileobj(response, fh)
    except OSError as exc:
        print(f"download failed: {exc}", file=sys.stderr)
        print("fetch the 'Sepsis Cases - Event Log' XES file manually "
              f"and place it at {dest}", file=sys.stderr)
        return 1
    with gzip.open(archive, "rb") as src, open(dest, "wb") as out:
        shutil.copyfileobj(src, out)
    archive.unlink()
    size = dest.stat().st_size
    if size < EXPECTED_MIN_BYTES:
        print(f"warning: {dest} is only {size} bytes; the download may "
              "be incomplete", file=sys.stderr)
        return 1
    print(f"wrote {dest} ({size} bytes)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
