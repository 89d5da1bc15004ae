#!/usr/bin/env python3
"""Write fsed manifests.

    make_manifest.py esc50 ESC-50-master          # -> ESC-50-master/manifest.csv
    make_manifest.py scenes path/to/scene/wavs    # -> path/to/scene/wavs/manifest.csv

ESC-50 rows come from meta/esc50.csv (label = category). Scene manifests list
every .wav below the directory, labelled by its parent folder.
"""
import argparse
import csv
import wave
from pathlib import Path


def duration(path):
    with wave.open(str(path)) as w:
        return w.getnframes() / w.getframerate()


def esc50(root):
    rows = []
    with open(root / "meta" / "esc50.csv", newline="") as f:
        for r in csv.DictReader(f):
            rel = Path("audio") / r["filename"]
            rows.append((Path(r["filename"]).stem, rel.as_posix(), r["category"], 5.0))
    return rows


def scenes(root):
    rows = []
    for p in sorted(root.rglob("*.wav")):
        rel = p.relative_to(root)
        label = rel.parent.as_posix() or "scene"
        rows.append((rel.with_suffix("").as_posix().replace("/", "_"), rel.as_posix(), label,
                     duration(p)))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("kind", choices=["esc50", "scenes"])
    ap.add_argument("root", type=Path)
    ap.add_argument("--out", type=Path, help="manifest path (default ROOT/manifest.csv)")
    a = ap.parse_args()
    rows = esc50(a.root) if a.kind == "esc50" else scenes(a.root)
    if not rows:
        raise SystemExit(f"no clips found under {a.root}")
    out = a.out or a.root / "manifest.csv"
    with open(out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["clip_id", "path", "label", "duration_s"])
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {out}")


if __name__ == "__main__":
    main()
