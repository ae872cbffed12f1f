#!/usr/bin/env python3
"""Rebuild data/*.data in the UCI raw layout from copies bundled in PyPI wheels.

The UCI archive is not always reachable; these wheels carry the same records:
  - Cleveland heart disease: Orange3 (Orange/datasets/heart_disease.tab).
    Orange stores the label already binarized, so `num` is written as 0/1.
  - WDBC: scikit-learn (sklearn/datasets/data/breast_cancer.csv). Patient ids
    are not shipped there, so a running id is written instead.
  - Mammographic masses: keel-ds (keel_ds/data/balanced/raw/mammographic.dat),
    which already omits the rows containing '?'.

Usage: pip download --no-deps orange3 keel-ds -d wheels/ && \
       python3 scripts/make_data.py wheels/ data/
"""
import glob
import os
import sys
import zipfile


def wheel(directory, prefix):
    matches = sorted(glob.glob(os.path.join(directory, prefix + "*.whl")))
    if not matches:
        sys.exit(f"no {prefix} wheel in {directory}")
    return zipfile.ZipFile(matches[-1])


def cleveland(wheels):
    text = wheel(wheels, "orange3").read("Orange/datasets/heart_disease.tab").decode()
    codes = {
        1: {"female": "0", "male": "1"},
        2: {"typical ang": "1", "atypical ang": "2", "non-anginal": "3", "asymptomatic": "4"},
        6: {"normal": "0", "ST-T abnormal": "1", "left vent hypertrophy": "2"},
        10: {"upsloping": "1", "flat": "2", "downsloping": "3"},
        12: {"normal": "3", "fixed defect": "6", "reversable defect": "7"},
    }
    out = []
    for line in text.splitlines()[3:]:
        cells = line.split("\t")
        row = []
        for j, cell in enumerate(cells):
            if cell == "?":
                row.append("?")
            elif j in codes:
                row.append(codes[j][cell])
            else:
                row.append(cell)
        out.append(",".join(row))
    return out


def wdbc():
    import sklearn
    path = os.path.join(os.path.dirname(sklearn.__file__), "datasets", "data", "breast_cancer.csv")
    out = []
    with open(path) as f:
        next(f)
        for i, line in enumerate(f):
            cells = line.strip().split(",")
            diagnosis = "M" if cells[-1] == "0" else "B"
            out.append(",".join([str(900000 + i), diagnosis] + cells[:-1]))
    return out


def mammographic(wheels):
    text = wheel(wheels, "keel_ds").read("keel_ds/data/balanced/raw/mammographic.dat").decode()
    return [l.strip() for l in text.splitlines() if l.strip() and not l.startswith("@")]


def main():
    wheels, dest = sys.argv[1], sys.argv[2]
    files = {
        "processed.cleveland.data": cleveland(wheels),
        "wdbc.data": wdbc(),
        "mammographic_masses.data": mammographic(wheels),
    }
    for name, lines in files.items():
        with open(os.path.join(dest, name), "w") as f:
            f.write("\n".join(lines) + "\n")
        print(name, len(lines))


if __name__ == "__main__":
    main()
