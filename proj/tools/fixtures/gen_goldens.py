#!/usr/bin/env python3
"""Writes tests/goldens/<setting>_<locale>_case<k>.txt from cases.json.

Independent of the C++ composer: plain str.replace over the template files,
display names read from config/labels.tsv.
"""
import json
import pathlib

ROOT = pathlib.Path(__file__).resolve().parents[2]
GOLDENS = ROOT / "tests" / "goldens"
SETTINGS = ["vanilla", "behavior", "content", "full"]
PREFIX = {"zh": {"counselor": "咨询师：", "client": "来访者："},
          "en": {"counselor": "Counselor: ", "client": "Client: "}}
JOIN = {"zh": "，", "en": ", "}


def label_names():
    names = {}
    for line in (ROOT / "config" / "labels.tsv").read_text(encoding="utf-8").splitlines():
        if line.strip() and not line.startswith("#"):
            code, en, zh = line.split("\t")
            names[code] = {"en": en, "zh": zh}
    return names


def template(setting, locale):
    body = (ROOT / "templates" / f"{setting}.{locale}.txt").read_text(encoding="utf-8")
    return body[:-1] if body.endswith("\n") else body


def render(setting, locale, case, names):
    out = template(setting, locale)
    history = "\n".join(PREFIX[locale][role] + text for role, text in case["history"])
    out = out.replace("{client_profile}", case["profile_text"])
    if setting in ("behavior", "full"):
        labels = case["behaviors"]
        out = out.replace("{client_behaviors}", JOIN[locale].join(names[c][locale] for c in labels))
        out = out.replace("{n}", str(len(labels)))
    if setting in ("content", "full"):
        out = out.replace("{utterance_content}", case["exemplar"])
    # History last: it is the only field whose text may contain braces.
    return out.replace("{dialogue_history}", history)


def main():
    cases = json.loads((GOLDENS / "cases.json").read_text(encoding="utf-8"))
    names = label_names()
    for locale in ("zh", "en"):
        for k, case in enumerate(cases[locale], start=1):
            for setting in SETTINGS:
                path = GOLDENS / f"{setting}_{locale}_case{k}.txt"
                path.write_text(render(setting, locale, case, names), encoding="utf-8")


if __name__ == "__main__":
    main()
