#!/usr/bin/env python3
"""Convert a dense multi-label ARFF file (Mulan layout) into X.csv, Y.csv and labels.txt.

    arff_to_csv.py scene-train.arff scene-test.arff --labels 6 --out data/scene
    arff_to_csv.py yeast.arff --xml yeast.xml --out data/yeast

Several input files are concatenated in order. Label attributes are either the
last --labels attributes or the ones named in a Mulan XML file.
"""

import argparse
import sys
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
from scipy.io import arff


def label_names_from_xml(path):
    root = ET.parse(path).getroot()
    return [el.attrib["name"] for el in root.iter() if el.tag.split("}")[-1] == "label"]


def load(path):
    data, meta = arff.loadarff(path)
    return data, meta.names()


def as_float(column):
    if column.dtype.kind in "SO":
        return np.array([float(v.decode() if isinstance(v, bytes) else v) for v in column])
    return column.astype(float)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("arff", nargs="+", type=Path)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--labels", type=int, help="number of trailing label attributes")
    g.add_argument("--xml", type=Path, help="Mulan XML listing the label attributes")
    p.add_argument("--out", type=Path, required=True)
    args = p.parse_args(argv)

    tables = [load(f) for f in args.arff]
    names = tables[0][1]
    for f, (_, n) in zip(args.arff[1:], tables[1:]):
        if n != names:
            sys.exit(f"{f}: attributes differ from {args.arff[0]}")

    if args.xml:
        label_names = label_names_from_xml(args.xml)
        missing = [n for n in label_names if n not in names]
        if missing:
            sys.exit(f"labels not in ARFF: {', '.join(missing)}")
    else:
        if not 0 < args.labels < len(names):
            sys.exit(f"--labels must be between 1 and {len(names) - 1}")
        label_names = names[-args.labels:]
    feature_names = [n for n in names if n not in label_names]

    data = np.concatenate([t[0] for t in tables])
    x = np.column_stack([as_float(data[n]) for n in feature_names])
    y = np.column_stack([as_float(data[n]) for n in label_names]).astype(int)
    if not np.isin(y, (0, 1)).all():
        sys.exit("label attributes must be 0/1")

    args.out.mkdir(parents=True, exist_ok=True)
    np.savetxt(args.out / "X.csv", x, delimiter=",", fmt="%.17g")
    np.savetxt(args.out / "Y.csv", y, delimiter=",", fmt="%d")
    (args.out / "labels.txt").write_text("".join(n + "\n" for n in label_names))
    print(f"{args.out}: {x.shape[0]} rows, {x.shape[1]} features, {y.shape[1]} labels")


if __name__ == "__main__":
    main()
