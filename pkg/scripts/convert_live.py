"""Build the canonical manifest of LIVE IQA (release 2) from `dmos.mat` and
`refnames_all.mat`. Reference copies (orgs == 1) and fast fading are dropped."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy.io import loadmat

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from app.datasets import DatasetManifest, ManifestRecord, manifest_counts, write_manifest  # noqa: E402

# Folder name -> (class, number of images); dmos.mat is ordered the same way.
FOLDERS = (
    ("jp2k", "jp2k", 227),
    ("jpeg", "jpeg", 233),
    ("wn", "wn", 174),
    ("gblur", "gblur", 174),
    ("fastfading", None, 174),
)


def convert(live_dir: Path, dmos_file: str = "dmos.mat", refnames_file: str = "refnames_all.mat") -> DatasetManifest:
    dmos_mat = loadmat(live_dir / dmos_file)
    dmos = np.ravel(dmos_mat["dmos"])
    orgs = np.ravel(dmos_mat["orgs"])
    refnames = [str(np.ravel(name)[0]) for name in np.ravel(loadmat(live_dir / refnames_file)["refnames_all"])]

    records = []
    offset = 0
    for folder, distortion, count in FOLDERS:
        for i in range(count):
            idx = offset + i
            if distortion is None or orgs[idx] == 1:
                continue
            records.append(
                ManifestRecord(
                    image_path=str(live_dir / folder / f"img{i + 1}.bmp"),
                    reference_id=Path(refnames[idx]).stem,
                    distortion=distortion,
                    score=float(dmos[idx]),
                    score_min=0.0,
                    score_max=100.0,
                    polarity="lower-is-better",
                )
            )
        offset += count
    # Realigned DMOS can dip slightly below zero.
    low = min(r.score for r in records)
    if low < 0:
        records = [replace(r, score_min=low) for r in records]
    return DatasetManifest(tuple(records), "live")


def main() -> None:
    parser = argparse.ArgumentParser(description="Convert LIVE IQA metadata to a manifest")
    parser.add_argument("--live-dir", required=True, help="Unpacked databaserelease2 directory")
    parser.add_argument("--dmos", default="dmos.mat", help="DMOS file (e.g. dmos_realigned.mat)")
    parser.add_argument("--out", default="data/live.csv")
    args = parser.parse_args()

    manifest = convert(Path(args.live_dir), args.dmos)
    write_manifest(manifest, args.out)
    print(f"Manifest written: {args.out}")
    print(f"Images: {len(manifest)} {manifest_counts(manifest)}")


if __name__ == "__main__":
    main()
