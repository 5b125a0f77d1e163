"""Materialize MovieLens 100K as a tab-separated ``u.data`` file.

The GroupLens archive is not reachable from the build sandbox, but the
``recbole`` wheel ships the complete ratings table as an atomic ``.inter``
file.  This script pulls the wheel through pip and rewrites the table into
the original ``user<TAB>item<TAB>rating<TAB>timestamp`` layout.

    python scripts/fetch_ml100k.py [target_dir]

The target defaults to ``$LBDREC_DATA_DIR/ml-100k`` or ``./data/ml-100k``.
"""

import glob
import os
import subprocess
import sys
import tempfile
import zipfile

MEMBER = "recbole/dataset_example/ml-100k/ml-100k.inter"


def default_target():
    root = os.environ.get("LBDREC_DATA_DIR", os.path.join(os.getcwd(), "data"))
    return os.path.join(root, "ml-100k")


def main(argv):
    target = argv[1] if len(argv) > 1 else default_target()
    out = os.path.join(target, "u.data")
    if os.path.exists(out):
        print(out)
        return 0
    os.makedirs(target, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q",
             "-d", tmp, "recbole==1.2.1"],
            check=True,
        )
        wheel, = glob.glob(os.path.join(tmp, "recbole-*.whl"))
        lines = zipfile.ZipFile(wheel).read(MEMBER).decode().splitlines()
    with open(out + ".tmp", "w") as fh:
        for line in lines[1:]:
            fh.write(line.strip() + "\n")
    os.replace(out + ".tmp", out)
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
