#!/usr/bin/env python3
"""Builds the ABC reference corpus used by the symbolic-kit oracle tests.

Tunes are pulled from the public-domain collections bundled with music21
(Ryan's Mammoth Collection, O'Neill's 1850, Aird's Airs, ...), filtered to
the ABC subset the parser supports, and converted with music21. For every
tune we record the (onset tick, MIDI pitch) list at 480 PPQ.

Output: crates/symbolic/tests/fixtures/abc_corpus.json

Usage: python3 tools/gen_abc_oracle.py [--limit N]
"""

import argparse
import glob
import json
import os
import re
import sys
from fractions import Fraction

import music21

PPQ = 480

# Headers the parser understands or ignores; anything else is skipped.
MAJOR_KEY = re.compile(r"^\s*([A-G][#b]?)\s*(maj|major|ion|ionian)?\s*$", re.I)
METER = re.compile(r"^\s*(\d+/\d+|C\|?)\s*$")
UNIT = re.compile(r"^\s*1/(1|2|4|8|16|32)\s*$")
TEMPO = re.compile(r"^\s*(\d+/\d+=)?\d+\s*$")
SUPPORTED_TONICS = {
    "C", "G", "D", "A", "E", "B", "F#", "C#",
    "F", "Bb", "Eb", "Ab", "Db", "Gb", "Cb",
}


def split_tunes(text):
    tunes, cur = [], None
    for line in text.splitlines():
        if line.startswith("X:"):
            if cur:
                tunes.append("\n".join(cur))
            cur = [line]
        elif cur is not None:
            cur.append(line)
    if cur:
        tunes.append("\n".join(cur))
    return tunes


def strip_annotations(body):
    body = re.sub(r'"[^"]*"', "", body)
    body = re.sub(r"![^!\n]*!", "", body)
    body = re.sub(r"\+[^+\n]*\+", "", body)
    return body


def music21_unreliable(body):
    """Constructs the reference converter mishandles: quoted annotations
    starting with < or > (read as broken rhythm), single-letter decoration
    shortcuts other than u/v/~/. , and note lengths wrapped onto the next
    line."""
    if re.search(r'"[<>]', body):
        return True
    plain = strip_annotations(body)
    if re.search(r"[H-Wh-tw]", plain):
        return True
    return any(re.match(r"\s*[\d/]", line) for line in body.splitlines())


def in_subset(tune):
    lines = tune.splitlines()
    headers, body, in_body = {}, [], False
    for line in lines:
        s = line.split("%", 1)[0].rstrip()
        if not in_body:
            m = re.match(r"^([A-Za-z]):(.*)$", s)
            if not m:
                if s.strip():
                    return None
                continue
            k, v = m.group(1), m.group(2)
            if k in headers and k in "MLKQ":
                return None
            headers[k] = v
            if k == "K":
                in_body = True
        else:
            if re.match(r"^[A-Za-z]:", s):
                return None
            body.append(s)
    if "K" not in headers or "M" not in headers:
        return None
    if "V" in headers or "P" in headers:
        return None
    km = MAJOR_KEY.match(headers["K"])
    if not km or km.group(1) not in SUPPORTED_TONICS:
        return None
    if not METER.match(headers["M"]):
        return None
    if "L" in headers and not UNIT.match(headers["L"]):
        return None
    if "Q" in headers and not TEMPO.match(headers["Q"]):
        return None
    if music21_unreliable("\n".join(body)):
        return None
    text = strip_annotations("\n".join(body))
    # ties, tuplets, grace notes, broken rhythm, voltas, inline fields,
    # multi-measure rests, double accidentals, overlays, symbol lines
    forbidden = [
        r"-", r"\(\d", r"\{", r"[<>]", r"\[\d", r"\|\d", r":\|\s*\d",
        r"\[[A-Za-z]:", r"Z", r"\^\^", r"__", r"&", r"\*",
    ]
    for pat in forbidden:
        if re.search(pat, text):
            return None
    # chords whose members carry their own lengths are ambiguous across tools
    for chord in re.findall(r"\[([^\]|]*)\]", text):
        if re.search(r"[A-Ga-g][,']*[\d/]", chord):
            return None
    if not re.search(r"[A-Ga-g]", text):
        return None
    return True


def oracle_events(tune):
    score = music21.converter.parse("%abc-2.1\n" + tune, format="abc")
    # music21 splits notes that overflow a bar into tied pieces; merge them
    # back so each written note is one sounding event.
    flat = score.flatten().stripTies()
    events = []
    for el in flat.notes:
        onset = Fraction(el.offset).limit_denominator(10_000) * PPQ
        if onset.denominator != 1:
            raise ValueError("non-integral onset")
        dur = Fraction(el.quarterLength).limit_denominator(10_000) * PPQ
        if dur.denominator != 1 or dur == 0:
            raise ValueError("grace or fractional duration")
        pitches = el.pitches if el.isChord else [el.pitch]
        for p in pitches:
            events.append([int(onset), int(p.midi), int(dur)])
    events.sort()
    return events


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--limit", type=int, default=80)
    ap.add_argument(
        "--out",
        default=os.path.join(
            os.path.dirname(__file__), "..", "crates", "symbolic", "tests",
            "fixtures", "abc_corpus.json"),
    )
    args = ap.parse_args()

    root = os.path.join(os.path.dirname(music21.__file__), "corpus")
    files = sorted(glob.glob(os.path.join(root, "**", "*.abc"), recursive=True))
    corpus, by_collection = [], {}
    for path in files:
        with open(path, encoding="utf-8", errors="replace") as fh:
            text = fh.read()
        for tune in split_tunes(text):
            if not in_subset(tune):
                continue
            try:
                events = oracle_events(tune)
            except Exception:
                continue
            if not events:
                continue
            source = os.path.relpath(path, root)
            by_collection.setdefault(source.split(os.sep)[0], []).append({
                "source": source,
                "abc": tune.strip() + "\n",
                "events": events,
            })

    # round-robin across collections so no single source dominates
    pools = [by_collection[k] for k in sorted(by_collection)]
    while len(corpus) < args.limit and any(pools):
        for pool in pools:
            if pool and len(corpus) < args.limit:
                corpus.append(pool.pop(0))

    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump({"ppq": PPQ, "reference": "music21 " + music21.__version__,
                   "tunes": corpus}, fh, indent=1)
    print(f"wrote {len(corpus)} tunes to {args.out}", file=sys.stderr)


if __name__ == "__main__":
    main()
