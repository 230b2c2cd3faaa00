"""Materialise the MovieLens 100K ``u.data`` file without direct internet access.

The ratings table ships inside the ``pytorch-widedeep`` wheel as a parquet file
with the original row order.  This script pulls the wheel through pip, reads the
table and writes it back out in the GroupLens tab-separated layout.

    python tools/fetch_movielens.py [--out data/ml-100k/u.data] [--wheel PATH]
"""

import argparse
import glob
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

MEMBER = "pytorch_widedeep/datasets/data/MovieLens100k_data.parquet.brotli"


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="data/ml-100k/u.data")
    parser.add_argument("--wheel", help="use an already downloaded pytorch-widedeep wheel")
    args = parser.parse_args(argv)

    import pandas as pd

    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel
        if wheel is None:
            subprocess.run(
                [sys.executable, "-m", "pip", "download", "--no-deps", "-d", tmp, "pytorch-widedeep"],
                check=True,
            )
            wheel = glob.glob(str(Path(tmp) / "pytorch_widedeep-*.whl"))[0]
        with zipfile.ZipFile(wheel) as zf:
            df = pd.read_parquet(io.BytesIO(zf.read(MEMBER)))

    cols = ["user_id", "movie_id", "rating", "timestamp"]
    if len(df) != 100000 or list(df.columns) != cols:
        raise SystemExit(f"unexpected table shape {df.shape} / columns {list(df.columns)}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    df[cols].to_csv(out, sep="\t", header=False, index=False)
    print(f"wrote {len(df)} ratings to {out}")


if __name__ == "__main__":
    main()
