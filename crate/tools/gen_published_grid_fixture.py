#!/usr/bin/env python3
"""Build a prediction file whose subgroup AUCs reproduce a published grid.

Targets the DenseNet / CheXpert / No Finding AUCs of a published subgroup
table: White 0.87, Asian 0.88, Black 0.88, Female 0.87, Male 0.87. Group
sizes are chosen so every target is an exact ratio of pair counts (10+10
White, 5+5 Asian, 5+5 Black; 10+10 per sex), then a seeded local search
over distinct scores finds an assignment hitting all five at once.

    python3 tools/gen_published_grid_fixture.py --out crates/cli/tests/fixtures/published_grid
"""

import argparse
import csv
import math
import random
from fractions import Fraction
from pathlib import Path

TARGETS = {
    "White": Fraction(87, 100),
    "Asian": Fraction(88, 100),
    "Black": Fraction(88, 100),
    "Female": Fraction(87, 100),
    "Male": Fraction(87, 100),
}
RACE_SIZES = {"White": (10, 10), "Asian": (5, 5), "Black": (5, 5)}


def auc(ranks, labels, members):
    pos = [ranks[i] for i in members if labels[i] == 1]
    neg = [ranks[i] for i in members if labels[i] == 0]
    wins = sum(1 for p in pos for n in neg if p > n)
    return Fraction(wins, len(pos) * len(neg))


def build_samples(rng):
    samples = []
    for race, (p, n) in RACE_SIZES.items():
        for label, count in ((1, p), (0, n)):
            for _ in range(count):
                samples.append({"race": race, "label": label})
    # half of each (race, label) cell per sex keeps every sex group at 10+10
    by_cell = {}
    for s in samples:
        by_cell.setdefault((s["race"], s["label"]), []).append(s)
    for (race, _), cell in by_cell.items():
        rng.shuffle(cell)
        # odd cells alternate which sex gets the extra sample
        females = (len(cell) + (race == "Black")) // 2
        for k, s in enumerate(cell):
            s["sex"] = "Female" if k < females else "Male"
    return samples


def search(samples, rng, steps):
    labels = [s["label"] for s in samples]
    groups = {
        name: [i for i, s in enumerate(samples) if s["race"] == name or s["sex"] == name]
        for name in TARGETS
    }
    # start from a clean split, then degrade
    order = sorted(range(len(samples)), key=lambda i: (labels[i], rng.random()))
    ranks = [0] * len(samples)
    for r, i in enumerate(order):
        ranks[i] = r

    def loss(rk):
        return sum(abs(auc(rk, labels, g) - TARGETS[n]) for n, g in groups.items())

    current = loss(ranks)
    temperature = 0.05
    for step in range(steps):
        if current == 0:
            break
        a, b = rng.sample(range(len(samples)), 2)
        ranks[a], ranks[b] = ranks[b], ranks[a]
        trial = loss(ranks)
        t = temperature * (1 - step / steps)
        if trial <= current or (t > 0 and rng.random() < math.exp(-float(trial - current) / t)):
            current = trial
        else:
            ranks[a], ranks[b] = ranks[b], ranks[a]
    if current != 0:
        raise SystemExit(f"search did not converge (loss {float(current)})")
    return ranks, groups


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--steps", type=int, default=200000)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    samples = build_samples(rng)
    ranks, groups = search(samples, rng, args.steps)
    n = len(samples)
    args.out.mkdir(parents=True, exist_ok=True)

    with open(args.out / "manifest.csv", "w", newline="") as f:
        f.write("# stressbench-manifest v1\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["id", "image_path", "No Finding", "race", "sex"])
        for i, s in enumerate(samples):
            w.writerow([f"p{i:03d}", f"images/p{i:03d}.png", s["label"], s["race"], s["sex"]])

    with open(args.out / "predictions.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["id", "No Finding"])
        for i in range(n):
            # distinct scores in (0, 1), exactly representable in f32
            w.writerow([f"p{i:03d}", (ranks[i] + 1) / 64])

    (args.out / "config.toml").write_text(
        """[dataset]
name = "chexpert-published-grid"
manifest = "manifest.csv"
classes = ["No Finding"]
attributes = [{ name = "race" }, { name = "sex" }]

[[subgroups]]
name = "White"
attribute = "race"
equals = "White"

[[subgroups]]
name = "Asian"
attribute = "race"
equals = "Asian"

[[subgroups]]
name = "Black"
attribute = "race"
equals = "Black"

[[subgroups]]
name = "Female"
attribute = "sex"
equals = "Female"

[[subgroups]]
name = "Male"
attribute = "sex"
equals = "Male"

[scorer]
predictions = "predictions.csv"
"""
    )
    for name, g in groups.items():
        print(name, auc(ranks, [s["label"] for s in samples], g))


if __name__ == "__main__":
    main()
