"""Build the canonical manifest of TID2013 from `mos_with_names.txt`, keeping
the four shared distortion classes and only the natural reference images."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Dict

import pandas as pd

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from app.datasets import DatasetManifest, ManifestRecord, manifest_counts, write_manifest  # noqa: E402

DISTORTION_CODES = {"01": "wn", "08": "gblur", "10": "jpeg", "11": "jp2k"}
EXCLUDED_REFERENCES = {"i25"}


def parse_mapping(pairs) -> Dict[str, str]:
    mapping = dict(DISTORTION_CODES)
    for pair in pairs or []:
        code, _, distortion = pair.partition("=")
        mapping[code.strip()] = distortion.strip()
    return mapping


def convert(tid_dir: Path, mapping: Dict[str, str] = DISTORTION_CODES) -> DatasetManifest:
    table = pd.read_csv(tid_dir / "mos_with_names.txt", sep=r"\s+", header=None, names=["mos", "name"])
    images = {p.name.lower(): p for p in (tid_dir / "distorted_images").iterdir()}

    records = []
    for row in table.itertuples(index=False):
        name = str(row.name).lower()
        reference, code, _level = Path(name).stem.split("_")
        if reference in EXCLUDED_REFERENCES or code not in mapping:
            continue
        path = images.get(name, tid_dir / "distorted_images" / row.name)
        records.append(
            ManifestRecord(
                image_path=str(path),
                reference_id=reference,
                distortion=mapping[code],
                score=float(row.mos),
                score_min=0.0,
                score_max=9.0,
                polarity="higher-is-better",
            )
        )
    return DatasetManifest(tuple(records), "tid2013")


def main() -> None:
    parser = argparse.ArgumentParser(description="Convert TID2013 metadata to a manifest")
    parser.add_argument("--tid-dir", required=True, help="Unpacked TID2013 directory")
    parser.add_argument("--map", action="append", help="Override a code mapping, e.g. 09=gblur")
    parser.add_argument("--out", default="data/tid2013.csv")
    args = parser.parse_args()

    manifest = convert(Path(args.tid_dir), parse_mapping(args.map))
    write_manifest(manifest, args.out)
    print(f"Manifest written: {args.out}")
    print(f"Images: {len(manifest)} {manifest_counts(manifest)}")


if __name__ == "__main__":
    main()
