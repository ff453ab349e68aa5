#!/usr/bin/env python3
"""Regenerate the LIBSVM files under data/ from publicly packaged copies.

Sources (fetched through the package managers, no direct downloads):
  breast-cancer  MASS::biopsy csv shipped inside the `pydataset` sdist
                 (699 rows, 16 with missing values dropped -> 683; the sample
                 ID is kept as feature 1 so there are 10 features, labels 2/4)
  diabetes       KEEL `pima.dat` shipped in the `keel-ds` wheel (768 x 8,
                 written with raw labels -1/+1)
  fmnist4        Fashion-MNIST images shipped in the `fashion-mnist` npm
                 package, classes 0..3, 500 train + 100 test images per class,
                 raw 0..255 pixel values

Usage:
  pip download --no-deps -d /tmp/pd pydataset keel-ds
  (cd /tmp/npm && npm pack fashion-mnist)
  python3 scripts/prepare_data.py --pydataset /tmp/pd/pydataset-0.2.0.tar.gz \
      --keel /tmp/pd/keel_ds-0.2.5-py3-none-any.whl \
      --fmnist /tmp/npm/fashion-mnist-1.1.0.tgz --out data
"""

import argparse
import csv
import io
import json
import random
import tarfile
import zipfile
from pathlib import Path


def write_libsvm(path, rows):
    with open(path, "w") as f:
        for label, feats in rows:
            parts = [str(label)]
            for i, v in enumerate(feats):
                if v != 0:
                    parts.append(f"{i + 1}:{v}")
            f.write(" ".join(parts) + "\n")


def split(rows, n_train, seed):
    rows = list(rows)
    random.Random(seed).shuffle(rows)
    return rows[:n_train], rows[n_train:]


def breast_cancer(sdist):
    with tarfile.open(sdist) as outer:
        inner_bytes = outer.extractfile("pydataset-0.2.0/pydataset/resources.tar.gz").read()
    with tarfile.open(fileobj=io.BytesIO(inner_bytes)) as inner:
        text = inner.extractfile("resources/rdata/csv/MASS/biopsy.csv").read().decode()
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        vals = [rec["ID"]] + [rec[f"V{i}"] for i in range(1, 10)]
        if any(v == "NA" for v in vals):
            continue
        label = 2 if rec["class"] == "benign" else 4
        rows.append((label, [int(v) for v in vals]))
    assert len(rows) == 683
    return split(rows, 546, seed=0)


def diabetes(wheel):
    with zipfile.ZipFile(wheel) as z:
        text = z.read("keel_ds/data/balanced/raw/pima.dat").decode()
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("@"):
            continue
        *vals, cls = [t.strip() for t in line.split(",")]
        label = 1 if cls == "tested_positive" else -1
        rows.append((label, [float(v) if "." in v else int(v) for v in vals]))
    assert len(rows) == 768
    return split(rows, 614, seed=0)


def fmnist(tgz, classes=(0, 1, 2, 3), n_train=500, n_test=100):
    train, test = [], []
    with tarfile.open(tgz) as t:
        for k in classes:
            imgs = json.load(t.extractfile(f"package/src/clothes/{k}.json"))["data"]
            train += [(k, imgs[i]) for i in range(n_train)]
            test += [(k, imgs[6000 + i]) for i in range(n_test)]
    random.Random(0).shuffle(train)
    random.Random(1).shuffle(test)
    return train, test


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--pydataset", required=True)
    ap.add_argument("--keel", required=True)
    ap.add_argument("--fmnist", required=True)
    ap.add_argument("--out", default="data")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    for name, (tr, te) in [
        ("breast_cancer", breast_cancer(args.pydataset)),
        ("diabetes", diabetes(args.keel)),
        ("fmnist4", fmnist(args.fmnist)),
    ]:
        write_libsvm(out / f"{name}.train", tr)
        write_libsvm(out / f"{name}.test", te)
        print(name, len(tr), len(te))


if __name__ == "__main__":
    main()
