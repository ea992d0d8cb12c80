#!/usr/bin/env python3
"""Reference cosine for the fallback embedder: exact (unhashed) unigram + bigram counts.

Run: python3 tests/oracles/cosine_oracle.py. The printed value is frozen in tests/unit/test_evaluator.cpp.
"""

import math
import pathlib
import re
from collections import Counter

HERE = pathlib.Path(__file__).resolve().parent
FIXTURES = HERE.parent / "fixtures"


def terms(text):
    tokens = re.findall(r"[a-z0-9]+", text.lower())
    grams = tokens + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
    return Counter(grams)


def cosine(a, b):
    va, vb = terms(a), terms(b)
    dot = sum(w * vb[k] for k, w in va.items())
    return dot / (math.sqrt(sum(w * w for w in va.values())) * math.sqrt(sum(w * w for w in vb.values())))


a = (FIXTURES / "cosine_pair_a.txt").read_text(encoding="utf-8")
b = (FIXTURES / "cosine_pair_b.txt").read_text(encoding="utf-8")
print(repr(cosine(a, b)))
