#!/usr/bin/env python3
"""Regenerate the bundled benchmark datasets under data/.

Each dataset is a small synthetic binary classification problem written as a
tab-separated file with a header row and a ``target`` column, shaped like the
standardized public benchmark collections (tens of rows, single-digit feature
counts, all-numeric cells).  Generation is fully seeded, so rerunning this
script reproduces the committed files byte for byte.
"""

import os

import numpy as np

OUT_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "data")


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def write_tsv(name, feature_names, X, y):
    path = os.path.join(OUT_DIR, f"{name}.tsv")
    lines = ["\t".join(list(feature_names) + ["target"])]
    for row, t in zip(X, y):
        cells = [format(v, ".6g") for v in row] + [str(int(t))]
        lines.append("\t".join(cells))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"{path}: {X.shape[0]} rows, {X.shape[1]} features, "
          f"{int(y.sum())} positives")


def jpn_solvency():
    # 52 firms, 9 financial ratios; solvency driven by profitability and
    # liquidity factors that several ratios share, like the classic small
    # solvency tables
    rng = np.random.default_rng(20240521)
    n = 52
    profit = rng.normal(size=n)
    liquidity = rng.normal(size=n)
    leverage = rng.normal(size=n)
    X = np.column_stack([
        profit + 0.35 * rng.normal(size=n),            # ebit_ta
        0.8 * profit + 0.5 * rng.normal(size=n),       # ni_tc
        0.4 * profit + 0.9 * rng.normal(size=n),       # sales_ta
        0.7 * profit + 0.6 * rng.normal(size=n),       # ebit_sales
        0.6 * profit + 0.7 * rng.normal(size=n),       # ni_sales
        liquidity + 0.4 * rng.normal(size=n),          # wc_ta
        -0.8 * leverage + 0.5 * rng.normal(size=n),    # equity_tl
        -0.6 * leverage + 0.7 * rng.normal(size=n),    # equity_ta
        rng.normal(size=n),                            # sales_tc
    ])
    z = 1.6 * profit + 1.0 * liquidity - 0.7 * leverage
    y = (z + 0.5 * rng.normal(size=n) > 0.0).astype(int)
    names = ("ebit_ta", "ni_tc", "sales_ta", "ebit_sales", "ni_sales",
             "wc_ta", "equity_tl", "equity_ta", "sales_tc")
    write_tsv("jpn_solvency", names, X, y)


def cell_signal():
    # 100 assays, 7 markers, 3 informative with different strengths
    rng = np.random.default_rng(907)
    n = 100
    X = rng.normal(size=(n, 7))
    z = 1.8 * X[:, 0] + 1.1 * X[:, 1] - 0.8 * X[:, 2]
    y = (z + 0.6 * rng.normal(size=n) > 0.0).astype(int)
    names = tuple(f"marker_{i}" for i in range(1, 8))
    write_tsv("cell_signal", names, X, y)


def mine_rock():
    # 90 echoes, 10 bands; signal mixes a threshold effect and an interaction
    rng = np.random.default_rng(4119)
    n = 90
    X = rng.normal(size=(n, 10))
    z = 1.4 * (X[:, 0] > 0.2) + 1.1 * X[:, 1] * (X[:, 2] > 0) + 0.9 * X[:, 3]
    y = (z + 0.5 * rng.normal(size=n) > 0.8).astype(int)
    names = tuple(f"band_{i}" for i in range(1, 11))
    write_tsv("mine_rock", names, X, y)


def leaf_shape():
    # 120 leaves, 6 morphometrics; positives sit inside an ellipse of the
    # first two measurements
    rng = np.random.default_rng(66100)
    n = 120
    X = rng.normal(size=(n, 6))
    r2 = (X[:, 0] / 1.2) ** 2 + (X[:, 1] / 0.9) ** 2
    z = 1.5 * (r2 < 1.0) + 0.7 * X[:, 2]
    y = (z + 0.45 * rng.normal(size=n) > 0.75).astype(int)
    names = ("blade_len", "blade_width", "vein_density", "lobe_count",
             "margin_rough", "petiole_len")
    write_tsv("leaf_shape", names, X, y)


def credit_small():
    # 64 applicants, 8 attributes, 2 informative plus correlated nuisance
    rng = np.random.default_rng(8391)
    n = 64
    income = rng.normal(size=n)
    debt = rng.normal(size=n)
    X = np.column_stack([
        income,
        debt,
        0.7 * income + 0.7 * rng.normal(size=n),   # savings tracks income
        0.6 * debt + 0.8 * rng.normal(size=n),     # utilization tracks debt
        rng.normal(size=n),
        rng.normal(size=n),
        rng.normal(size=n),
        rng.normal(size=n),
    ])
    z = 1.7 * income - 1.3 * debt
    y = (z + 0.55 * rng.normal(size=n) > 0.0).astype(int)
    names = ("income", "debt_ratio", "savings", "utilization", "age_norm",
             "tenure", "inquiries", "region_code")
    write_tsv("credit_small", names, X, y)


def one_signal():
    # 80 rows, exactly one informative feature among 5; used for the
    # negative-correlation sanity check of the subset study
    rng = np.random.default_rng(1205)
    n = 80
    X = rng.normal(size=(n, 5))
    y = (1.9 * X[:, 0] + 0.5 * rng.normal(size=n) > 0.0).astype(int)
    names = ("signal", "noise_a", "noise_b", "noise_c", "noise_d")
    write_tsv("one_signal", names, X, y)


def main():
    os.makedirs(OUT_DIR, exist_ok=True)
    jpn_solvency()
    cell_signal()
    mine_rock()
    leaf_shape()
    credit_small()
    one_signal()


if __name__ == "__main__":
    main()
