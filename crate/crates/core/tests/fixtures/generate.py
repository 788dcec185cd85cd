"""Regenerates the fixture files in this directory (python3, stdlib only)."""

import csv
import math
import os
import random

HERE = os.path.dirname(os.path.abspath(__file__))
rng = random.Random(20240611)


def csr(x0, y0, w, h, n):
    return [(x0 + rng.random() * w, y0 + rng.random() * h) for _ in range(n)]


def clustered(x0, y0, w, h, n, parents, sigma):
    centers = csr(x0, y0, w, h, parents)
    pts = []
    while len(pts) < n:
        cx, cy = rng.choice(centers)
        x, y = rng.gauss(cx, sigma), rng.gauss(cy, sigma)
        if x0 <= x <= x0 + w and y0 <= y <= y0 + h:
            pts.append((x, y))
    return pts


def regular(x0, y0, w, h, spacing, jitter):
    pts = []
    y = y0 + spacing / 2
    while y < y0 + h:
        x = x0 + spacing / 2
        while x < x0 + w:
            pts.append((x + rng.uniform(-jitter, jitter), y + rng.uniform(-jitter, jitter)))
            x += spacing
        y += spacing
    return pts


def slide_points(kind):
    regions = [(0, 0, 1600, 1200), (2600, 300, 1200, 1400)]
    pts = []
    for x0, y0, w, h in regions:
        n = int(w * h * rng.uniform(0.8e-4, 1.4e-4))
        if kind == "csr":
            pts += csr(x0, y0, w, h, n)
        elif kind == "clustered":
            pts += clustered(x0, y0, w, h, n, parents=max(3, n // 25), sigma=rng.uniform(25, 60))
        else:
            pts += regular(x0, y0, w, h, spacing=rng.uniform(85, 110), jitter=20)
    return pts


def write_centroids():
    kinds = ["csr", "clustered", "regular"]
    rows = []
    for i in range(12):
        slide = f"WSI-{i + 1:02d}"
        kind = kinds[i % 3]
        pts = slide_points(kind) if i != 11 else csr(0, 0, 800, 800, 5)
        rows += [(slide, "tubule", x, y) for x, y in pts]
        rows += [(slide, "glomerulus", x, y) for x, y in csr(0, 0, 3800, 1700, 12)]
    rng.shuffle(rows)  # readers must group interleaved slides
    with open(os.path.join(HERE, "centroids.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["slide_id", "object_type", "x_um", "y_um"])
        for s, t, x, y in rows:
            w.writerow([s, t, f"{x:.1f}", f"{y:.1f}"])
    return [f"WSI-{i + 1:02d}" for i in range(12)]


def write_subjects(slides):
    subjects = {}
    for i, s in enumerate(slides):
        subjects[s] = f"P{i // 2 + 1:02d}" if i < 8 else f"P{i - 3:02d}"
    with open(os.path.join(HERE, "subjects.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["observation_id", "subject_id"])
        for s in slides:
            w.writerow([s, subjects[s]])
    return subjects


OBJECTS = ["tubule", "glomerulus", "artery", "lumen", "nucleus", "interstitium"]
MEASURES = ["area", "perimeter", "eccentricity", "solidity", "intensity", "texture"]


def object_columns():
    return [f"{o}.{m}.{s}" for o in OBJECTS for m in MEASURES for s in ("mean", "std")]


def write_object_features(slides, subjects):
    cols = object_columns()
    with open(os.path.join(HERE, "object_features.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["observation_id", "subject_id"] + cols)
        for k, s in enumerate(slides):
            vals = []
            for j, _ in enumerate(cols):
                vals.append("NA" if (k * 7 + j) % 41 == 0 else repr(round(rng.lognormvariate(0, 0.5) * (j + 1), 6)))
            w.writerow([s, subjects[s]] + vals)
    with open(os.path.join(HERE, "object_features.meta.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["feature", "category", "source"])
        for c in cols:
            w.writerow([c, "Object-level", "morphometry"])


def write_phenotype(subjects):
    with open(os.path.join(HERE, "phenotype.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["subject_id", "fibrosis_pct"])
        for sid in sorted(set(subjects.values())):
            w.writerow([sid, f"{rng.uniform(2, 60):.2f}"])


SPATIAL = (
    ["GlobalDensity", "ANN"]
    + [f"{fn}.{k}" for fn in ("L", "g") for k in ("auc", "max", "min", "dist_at_max", "dist_at_min")]
    + [f"{fn}.{k}" for fn in ("G", "F", "J") for k in ("auc", "max", "min", "dist_at_max", "dist_at_min", "mean")]
)


def corr(a, b):
    ma, mb = sum(a) / len(a), sum(b) / len(b)
    sab = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    saa = sum((x - ma) ** 2 for x in a)
    sbb = sum((y - mb) ** 2 for y in b)
    return sab / math.sqrt(saa * sbb)


def write_study():
    """80 subjects, 30 spatial + 72 object-level features, six of which
    share a latent factor with the phenotype. Noise columns are redrawn
    until |corr(noise, phenotype)| <= 0.3, so exactly six features pass
    Bonferroni."""
    n = 80
    planted = {"L.max", "g.auc", "G.mean", "tubule.area.mean", "artery.texture.std", "lumen.solidity.mean"}
    cols = SPATIAL + object_columns()
    latent = [rng.gauss(0, 1) for _ in range(n)]
    y = [30 + 8 * latent[i] + rng.gauss(0, 2) for i in range(n)]
    columns = []
    for c in cols:
        if c in planted:
            columns.append([latent[i] + 0.3 * rng.gauss(0, 1) for i in range(n)])
            continue
        while True:
            col = [rng.gauss(0, 1) for _ in range(n)]
            if abs(corr(col, y)) <= 0.3:
                break
        columns.append(col)
    rows = [[repr(round(col[i], 9)) for col in columns] for i in range(n)]
    with open(os.path.join(HERE, "study_features.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["observation_id", "subject_id"] + cols)
        for i, row in enumerate(rows):
            w.writerow([f"S{i:03d}", f"S{i:03d}"] + row)
    with open(os.path.join(HERE, "study_features.meta.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["feature", "category", "source"])
        for c in SPATIAL:
            cat = "Density" if c in ("GlobalDensity", "ANN") else ("Correlation" if c[0] in "Lg" else "Spacing")
            w.writerow([c, cat, c.split(".")[0]])
        for c in object_columns():
            w.writerow([c, "Object-level", "morphometry"])
    with open(os.path.join(HERE, "study_phenotype.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["subject_id", "fibrosis_pct"])
        for i in range(n):
            w.writerow([f"S{i:03d}", repr(round(y[i], 6))])


if __name__ == "__main__":
    slides = write_centroids()
    subjects = write_subjects(slides)
    write_object_features(slides, subjects)
    write_phenotype(subjects)
    write_study()
