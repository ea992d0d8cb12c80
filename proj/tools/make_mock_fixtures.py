#!/usr/bin/env python3
"""Builds the mock-backend fixture tree from a reply script.

The script is a YAML list of {template, key, reply}. Each reply is written to
<out>/<template>/<digest>.txt, where digest is the first 16 hex digits of the
SHA-256 over "name\\x1fvalue\\x1e" records of the key in name order. The key
gets attempt "0" unless it names one. Files not produced by the script are removed.
"""

import argparse
import hashlib
import pathlib
import sys

import yaml


def key_digest(key):
    buf = "".join(f"{k}\x1f{v}\x1e" for k, v in sorted(key.items()))
    return hashlib.sha256(buf.encode("utf-8")).hexdigest()[:16]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("script", type=pathlib.Path, nargs="+")
    ap.add_argument("--out", type=pathlib.Path, required=True)
    args = ap.parse_args()

    wanted = {}
    for script in args.script:
        for i, entry in enumerate(yaml.safe_load(script.read_text(encoding="utf-8")) or []):
            key = {str(k): str(v) for k, v in (entry.get("key") or {}).items()}
            key.setdefault("attempt", "0")
            path = args.out / entry["template"] / (key_digest(key) + ".txt")
            if path in wanted:
                sys.exit(f"{script}[{i}]: duplicate key {entry['template']} {key}")
            wanted[path] = entry["reply"]

    for old in args.out.glob("*/*.txt"):
        if old not in wanted:
            old.unlink()
    for path, reply in sorted(wanted.items()):
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(reply, encoding="utf-8")
    print(f"wrote {len(wanted)} fixtures to {args.out}")


if __name__ == "__main__":
    main()
