#!/usr/bin/env python3
"""Convert the raw UCI Adult and German credit files into headed CSVs.

Usage: convert_uci.py <raw_dir> <out_dir>

<raw_dir> must contain adult.data, adult.test and german.data exactly as
distributed by the UCI repository.
"""
import csv
import os
import sys

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num",
    "marital_status", "occupation", "relationship", "race", "sex",
    "capital_gain", "capital_loss", "hours_per_week", "native_country",
    "income",
]

GERMAN_COLUMNS = [
    "checking_status", "duration", "credit_history", "purpose",
    "credit_amount", "savings", "employment", "installment_rate", "sex",
    "other_debtors", "residence_since", "property", "age",
    "other_installment_plans", "housing", "existing_credits", "job",
    "num_dependents", "telephone", "foreign_worker", "credit_risk",
]

# A91 male divorced/separated, A92 female div/sep/married, A93 male single,
# A94 male married/widowed, A95 female single.
GERMAN_SEX = {"A91": "male", "A92": "female", "A93": "male", "A94": "male", "A95": "female"}
GERMAN_RISK = {"1": "good", "2": "bad"}


def adult_rows(path):
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("|"):
                continue
            cells = [c.strip() for c in line.split(",")]
            cells[-1] = cells[-1].rstrip(".")
            yield cells


def main(raw, out):
    with open(os.path.join(out, "adult.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ADULT_COLUMNS)
        for name in ("adult.data", "adult.test"):
            for row in adult_rows(os.path.join(raw, name)):
                w.writerow(row)
    with open(os.path.join(out, "statlog.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(GERMAN_COLUMNS)
        with open(os.path.join(raw, "german.data")) as src:
            for line in src:
                cells = line.split()
                if not cells:
                    continue
                cells[8] = GERMAN_SEX[cells[8]]
                cells[20] = GERMAN_RISK[cells[20]]
                w.writerow(cells)


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
