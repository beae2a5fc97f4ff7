#!/usr/bin/env python3
"""Regenerate the synthetic 60-respondent fixture under data/toy/.

Everything here is invented: the respondents, the question wording and the
segmentation table. Output is deterministic for a given --seed.
"""

import argparse
import csv
import json
import random
from pathlib import Path

SEGMENTS = ["Alarmed", "Concerned", "Cautious", "Disengaged", "Doubtful", "Dismissive"]
# Latent attitude per segment, 0 (dismissive) .. 1 (alarmed).
LATENT = {"Alarmed": 0.95, "Concerned": 0.75, "Cautious": 0.55, "Disengaged": 0.45,
          "Doubtful": 0.25, "Dismissive": 0.05}
OUTCOME_MEAN = {"Alarmed": 6.2, "Concerned": 5.3, "Cautious": 4.3, "Disengaged": 4.0,
                "Doubtful": 3.0, "Dismissive": 1.9}

DEMOGRAPHICS = [
    ("gender", "categorical", ["Female", "Male", "Nonbinary"]),
    ("age_group", "ordinal", ["18-29", "30-44", "45-59", "60+"]),
    ("education", "ordinal", ["High school or less", "Some college", "Bachelor's degree", "Graduate degree"]),
    ("income", "ordinal", ["Under $50k", "$50k-$100k", "Over $100k"]),
    ("ethnicity", "categorical", ["Asian", "Black", "Hispanic", "White", "Other"]),
]
SASSY = [("sassy_importance", 5), ("sassy_worry", 4), ("sassy_harm_personal", 4), ("sassy_harm_future", 4)]
SASSY15 = [f"sassy15_{i:02d}" for i in range(1, 16)]
THEORY = [f"th{i:02d}" for i in range(1, 55)]

# First matching rule wins; the last rule is the default.
TABLE = {
    "items": [{"name": n, "min": 1, "max": k} for n, k in SASSY],
    "rules": [
        {"when": {"sassy_importance": [4, 5], "sassy_worry": [3, 4], "sassy_harm_future": [3, 4]},
         "label": "Alarmed"},
        {"when": {"sassy_importance": [3, 5], "sassy_worry": [2, 4]}, "label": "Concerned"},
        {"when": {"sassy_importance": 1, "sassy_worry": 1}, "label": "Dismissive"},
        {"when": {"sassy_importance": [1, 2], "sassy_harm_future": [1, 2]}, "label": "Doubtful"},
        {"when": {"sassy_harm_personal": 1, "sassy_harm_future": 1}, "label": "Disengaged"},
        {"label": "Cautious"},
    ],
}


def classify(values):
    for rule in TABLE["rules"]:
        ok = True
        for item, rng in rule.get("when", {}).items():
            lo, hi = (rng, rng) if isinstance(rng, int) else rng
            ok = ok and lo <= values[item] <= hi
        if ok:
            return rule["label"]
    raise AssertionError("table is total")


def ordinal(rng, latent, k, noise=0.18):
    x = min(max(latent + rng.gauss(0.0, noise), 0.0), 1.0)
    return 1 + min(k - 1, int(x * k))


def likert(rng, mean, sd=0.9):
    return min(7, max(1, round(rng.gauss(mean, sd))))


def make_rows(rng, n):
    rows = []
    for i in range(n):
        intended = SEGMENTS[i % len(SEGMENTS)]
        latent = LATENT[intended]
        row = {"respondent_id": f"R{i + 1:03d}"}
        for name, _, levels in DEMOGRAPHICS:
            if name == "education":
                row[name] = levels[ordinal(rng, 0.3 + 0.4 * latent, len(levels), 0.3) - 1]
            else:
                row[name] = rng.choice(levels)
        # Redraw until the table puts the respondent in the intended segment,
        # so every segment is populated.
        while True:
            sassy = {name: rng.randint(1, k) for name, k in SASSY}
            if classify(sassy) == intended:
                break
        row.update({k: str(v) for k, v in sassy.items()})
        for name in SASSY15:
            row[name] = str(ordinal(rng, latent, 5, 0.15))
        for j, name in enumerate(THEORY):
            # Every third theory item tracks the attitude; the rest are noise.
            row[name] = str(ordinal(rng, latent if j % 3 == 0 else 0.5, 5, 0.25))
        segment = classify(sassy)
        mean = OUTCOME_MEAN[segment]
        row["Q25"] = likert(rng, mean)
        row["Q26"] = likert(rng, mean - 0.2)
        row["Q27"] = likert(rng, mean + 0.1)
        rows.append((row, segment))
    return rows


def codebook():
    cols = [{"name": n, "type": t, "levels": lv} for n, t, lv in DEMOGRAPHICS]
    cols += [{"name": n, "type": "ordinal", "levels": [str(v) for v in range(1, k + 1)]} for n, k in SASSY]
    cols += [{"name": n, "type": "ordinal", "levels": ["1", "2", "3", "4", "5"]} for n in SASSY15]
    cols += [{"name": n, "type": "ordinal", "levels": ["1", "2", "3", "4", "5"]} for n in THEORY]
    return {"columns": cols}


DEMO_LINES = [
    "gender You identify as {value}.",
    "age_group Your age group is {value}.",
    "education Your highest education is: {value}.",
    "income Your household income is {value}.",
    "ethnicity Your race/ethnicity is {value}.",
]


def theory_line(name):
    return f"{name} Attitude statement {name[2:]}: your agreement on a 1-5 scale is {{value}}."


def write_identifier_sets(out):
    ids = out / "identifiers"
    ids.mkdir(parents=True, exist_ok=True)
    header = "# name, then the sentence used in the persona prompt\n"
    (ids / "demo.txt").write_text(header + "\n".join(DEMO_LINES) + "\n")
    (ids / "theory59.txt").write_text(header + "\n".join(DEMO_LINES + [theory_line(t) for t in THEORY]) + "\n")
    # Ten theory items spread across the battery.
    picked = THEORY[::5][:10]
    (ids / "theory15.txt").write_text(header + "\n".join(DEMO_LINES + [theory_line(t) for t in picked]) + "\n")
    (ids / "item15.txt").write_text(
        header + "\n".join(f"{n} Climate item {n[-2:]}: your answer on a 1-5 scale is {{value}}." for n in SASSY15) + "\n")
    sassy_lines = [
        "sassy_importance How important the issue is to you personally (1-5): {value}.",
        "sassy_worry How worried you are about it (1-4): {value}.",
        "sassy_harm_personal How much you expect it to harm you personally (1-4): {value}.",
        "sassy_harm_future How much you expect it to harm future generations (1-4): {value}.",
    ]
    (ids / "item4.txt").write_text(header + "\n".join(sassy_lines) + "\n")
    (ids / "candidates.txt").write_text(header + "\n".join(DEMO_LINES + [theory_line(t) for t in THEORY]) + "\n")


RUN_TOML = """\
# Toy run over the synthetic fixture. Use --mock (the seed below is required).
seed = 20240611
output_dir = "run"

[data]
human = "human.csv"
codebook = "codebook.json"
decision_table = "segmentation_table.json"
candidates = "identifiers/candidates.txt"

[configurations]
enabled = ["Demo", "Demo+Theory-59", "Demo+Theory-15", "Data-driven", "Item-15", "Item-4"]

[configurations.identifiers]
"Demo" = "identifiers/demo.txt"
"Demo+Theory-59" = "identifiers/theory59.txt"
"Demo+Theory-15" = "identifiers/theory15.txt"
"Item-15" = "identifiers/item15.txt"
"Item-4" = "identifiers/item4.txt"

[ranking]
rounds = 200
learning_rate = 0.1
target = "segment"

[decoding]
temperature = 0.8
top_p = 1.0
max_tokens = 8

[retry]
max_attempts = 3
backoff_ms = 1000
concurrency = 8

[[models]]
name = "llama"
url = "http://127.0.0.1:8000/v1/chat/completions"
model = "llama-3-70b-instruct"
token_env = "SEGSIM_API_TOKEN"
mock_compression = 0.6

[[models]]
name = "mixtral"
url = "http://127.0.0.1:8000/v1/chat/completions"
model = "mixtral-8x7b-instruct"
token_env = "SEGSIM_API_TOKEN"
mock_compression = 0.35

[mock]
enabled = false
compression = 0.5

[mock.compression_by_configuration]
"Item-4" = 0.8
"""


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "toy"))
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("-n", type=int, default=60)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(args.seed)
    rows = make_rows(rng, args.n)
    counts = {s: 0 for s in SEGMENTS}
    for _, s in rows:
        counts[s] += 1
    missing = [s for s, c in counts.items() if c < 3]
    if missing:
        raise SystemExit(f"seed {args.seed}: segments with fewer than 3 respondents: {missing}")

    fields = (["respondent_id"] + [d[0] for d in DEMOGRAPHICS] + [s[0] for s in SASSY] + SASSY15 + THEORY
              + ["Q25", "Q26", "Q27"])
    with open(out / "human.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row, _ in rows:
            w.writerow(row)
    (out / "codebook.json").write_text(json.dumps(codebook(), indent=2) + "\n")
    (out / "segmentation_table.json").write_text(json.dumps(TABLE, indent=2) + "\n")
    (out / "expected_segments.json").write_text(
        json.dumps({row["respondent_id"]: s for row, s in rows}, indent=2) + "\n")
    write_identifier_sets(out)
    (out / "run.toml").write_text(RUN_TOML)
    print("segments:", counts)


if __name__ == "__main__":
    main()
