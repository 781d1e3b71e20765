"""Build the canonical manifest of CSIQ from the `csiq.DMOS.xlsx` spreadsheet."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import pandas as pd

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from app.datasets import DatasetManifest, ManifestRecord, manifest_counts, write_manifest  # noqa: E402

# Spreadsheet dst_type -> (class, image folder, file tag).
DISTORTION_TYPES = {
    "noise": ("wn", "awgn", "AWGN"),
    "blur": ("gblur", "blur", "BLUR"),
    "jpeg": ("jpeg", "jpeg", "JPEG"),
    "jpeg 2000": ("jp2k", "jpeg2000", "jpeg2000"),
}


def convert(csiq_dir: Path, sheet: str = "all_by_image", header_row: int = 0) -> DatasetManifest:
    df = pd.read_excel(csiq_dir / "csiq.DMOS.xlsx", sheet_name=sheet, header=header_row, engine="openpyxl")
    df.columns = [str(c).strip().lower() for c in df.columns]

    records = []
    for row in df.to_dict("records"):
        kind = str(row.get("dst_type", "")).strip().lower()
        if kind not in DISTORTION_TYPES or pd.isna(row.get("dmos")):
            continue
        distortion, folder, tag = DISTORTION_TYPES[kind]
        image = str(row["image"]).strip()
        level = int(row["dst_lev"])
        records.append(
            ManifestRecord(
                image_path=str(csiq_dir / "dst_imgs" / folder / f"{image}.{tag}.{level}.png"),
                reference_id=image,
                distortion=distortion,
                score=float(row["dmos"]),
                score_min=0.0,
                score_max=1.0,
                polarity="lower-is-better",
            )
        )
    return DatasetManifest(tuple(records), "csiq")


def main() -> None:
    parser = argparse.ArgumentParser(description="Convert CSIQ metadata to a manifest")
    parser.add_argument("--csiq-dir", required=True, help="Directory with csiq.DMOS.xlsx and dst_imgs/")
    parser.add_argument("--sheet", default="all_by_image")
    parser.add_argument("--header-row", type=int, default=0, help="Spreadsheet row holding the column names")
    parser.add_argument("--out", default="data/csiq.csv")
    args = parser.parse_args()

    manifest = convert(Path(args.csiq_dir), args.sheet, args.header_row)
    write_manifest(manifest, args.out)
    print(f"Manifest written: {args.out}")
    print(f"Images: {len(manifest)} {manifest_counts(manifest)}")


if __name__ == "__main__":
    main()
