"""Write the Wisconsin breast-cancer data as data/breast_cancer.csv (features..., label)."""
import csv
import pathlib

from sklearn.datasets import load_breast_cancer

out = pathlib.Path(__file__).resolve().parent.parent / "data" / "breast_cancer.csv"
out.parent.mkdir(exist_ok=True)
data = load_breast_cancer()
with out.open("w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow([*data.feature_names, "label"])
    for row, y in zip(data.data, data.target):
        w.writerow([*row, int(y)])
print(f"wrote {len(data.target)} rows to {out}")
