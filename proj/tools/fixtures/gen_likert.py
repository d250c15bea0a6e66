#!/usr/bin/env python3
"""Writes the 4-rater Likert fixtures under data/fixtures/ and prints the
exact two-sided Mann-Whitney p of every non-reference cell against `full`,
computed with rational arithmetic over all rank assignments.
"""
import itertools
import json
import pathlib
from fractions import Fraction

ROOT = pathlib.Path(__file__).resolve().parents[2]
OUT = ROOT / "data" / "fixtures"
RATERS = ["r1", "r2", "r3", "r4"]

# setting -> dimension -> one score per rater
RQ1 = {
    "vanilla": {"fluency": [4, 4, 5, 4], "emotion": [3, 3, 4, 2], "coherence": [5, 6, 6, 7],
                "appropriateness": [5, 5, 5, 5], "overall": [4, 3, 4, 3]},
    "content": {"fluency": [3, 3, 4, 2], "emotion": [5, 4, 5, 6], "coherence": [2, 3, 3, 4],
                "appropriateness": [6, 6, 5, 6], "overall": [4, 5, 5, 4]},
    "behavior": {"fluency": [5, 5, 6, 5], "emotion": [6, 6, 5, 6], "coherence": [4, 5, 5, 6],
                 "appropriateness": [7, 6, 6, 6], "overall": [5, 6, 5, 6]},
    "full": {"fluency": [6, 6, 5, 6], "emotion": [6, 7, 6, 5], "coherence": [5, 6, 6, 7],
             "appropriateness": [6, 6, 6, 6], "overall": [6, 5, 6, 7]},
}
RQ3 = {
    "vanilla": {"listening": [3, 4, 4, 5], "questioning": [2, 3, 2, 3], "emotion_handling": [4, 4, 4, 4],
                "technique_practice": [3, 5, 4, 4], "recommendation": [2, 2, 3, 1]},
    "content": {"listening": [4, 5, 5, 5], "questioning": [4, 3, 5, 4], "emotion_handling": [5, 4, 6, 5],
                "technique_practice": [5, 5, 4, 6], "recommendation": [4, 3, 3, 4]},
    "behavior": {"listening": [5, 6, 5, 6], "questioning": [6, 5, 5, 6], "emotion_handling": [6, 5, 5, 6],
                 "technique_practice": [6, 6, 5, 7], "recommendation": [5, 6, 6, 5]},
    "full": {"listening": [6, 6, 7, 6], "questioning": [6, 6, 5, 7], "emotion_handling": [6, 6, 5, 7],
             "technique_practice": [6, 7, 6, 6], "recommendation": [6, 6, 7, 7]},
}


def exact_p(a, b):
    pooled = a + b
    def u_of(xs, ys):
        return sum(1 if x > y else Fraction(1, 2) if x == y else 0 for x in xs for y in ys)
    u1 = u_of(a, b)
    lo = hi = total = 0
    for idx in itertools.combinations(range(len(pooled)), len(a)):
        xs = [pooled[i] for i in idx]
        ys = [pooled[i] for i in range(len(pooled)) if i not in idx]
        u = u_of(xs, ys)
        total += 1
        lo += u <= u1
        hi += u >= u1
    return u1, min(Fraction(1), 2 * min(Fraction(lo, total), Fraction(hi, total)))


def write(name, table):
    lines = []
    for rater_index, rater in enumerate(RATERS):
        for setting, dims in table.items():
            for dim, scores in dims.items():
                lines.append(json.dumps({"rater_id": rater, "setting": setting, "dimension": dim,
                                         "score": scores[rater_index]}))
    (OUT / name).write_text("\n".join(lines) + "\n", encoding="utf-8")
    for setting, dims in table.items():
        if setting == "full":
            continue
        for dim, scores in dims.items():
            u1, p = exact_p([float(s) for s in scores], [float(s) for s in table["full"][dim]])
            mark = "**" if p < Fraction(1, 100) else "*" if p < Fraction(1, 20) else ""
            print(f"{name} {setting} {dim} u1={float(u1)} p={p} ({float(p):.6f}) mark={mark!r}")


if __name__ == "__main__":
    write("likert_rq1.jsonl", RQ1)
    write("likert_rq3.jsonl", RQ3)
