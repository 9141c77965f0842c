#!/usr/bin/env python3
"""Writes WordNet-3.0-format database fixtures used by the tests and selftest.

    make_wordnet_fixture.py mini OUT_DIR   # 12 hand-written synsets
    make_wordnet_fixture.py lab  OUT_DIR   # ~1000 generated synsets

Offsets in data.* are real byte offsets, as in the distributed database.
"""
import random
import sys
from pathlib import Path

HEADER = [
    "  1 This file is a test fixture in WordNet 3.0 database format.",
    "  2 Lines beginning with two spaces are skipped by readers.",
]

POS_FILES = {"n": "noun", "v": "verb", "a": "adj"}


class Synset:
    def __init__(self, pos, words, ss_type=None):
        self.pos = pos
        self.ss_type = ss_type or pos
        self.words = words
        self.pointers = []  # (symbol, target Synset, src word idx, tgt word idx)
        self.offset = 0


def hypernym(child, parent):
    child.pointers.append(("@", parent, 0, 0))
    parent.pointers.append(("~", child, 0, 0))


def antonym(a, b, wa=1, wb=1):
    a.pointers.append(("!", b, wa, wb))
    b.pointers.append(("!", a, wb, wa))


def data_line(s):
    parts = [f"{s.offset:08d}", "03", s.ss_type, f"{len(s.words):02x}"]
    for w in s.words:
        parts += [w, "0"]
    parts.append(f"{len(s.pointers):03d}")
    for sym, tgt, wa, wb in s.pointers:
        parts += [sym, f"{tgt.offset:08d}", tgt.ss_type, f"{wa:02x}{wb:02x}"]
    if s.pos == "v":
        parts += ["01", "+", "02", "00"]
    return " ".join(parts) + " | fixture gloss  \n"


def strip_marker(word):
    i = word.find("(")
    return word[:i] if i >= 0 else word


def write_db(out, synsets):
    out.mkdir(parents=True, exist_ok=True)
    for pos, name in POS_FILES.items():
        group = [s for s in synsets if s.pos == pos]
        head = "".join(h + "\n" for h in HEADER)
        # Two passes: offsets depend on line lengths, which do not depend on
        # offset values because offsets are fixed-width.
        cursor = len(head.encode())
        for s in group:
            s.offset = cursor
            cursor += len(data_line(s).encode())
    for pos, name in POS_FILES.items():
        group = [s for s in synsets if s.pos == pos]
        with open(out / f"data.{name}", "w", newline="\n") as f:
            f.write("".join(h + "\n" for h in HEADER))
            for s in group:
                f.write(data_line(s))
        index = {}
        for s in group:
            for w in s.words:
                lemma = strip_marker(w).lower()
                entry = index.setdefault(lemma, {"offsets": [], "ptrs": set()})
                if s.offset not in entry["offsets"]:
                    entry["offsets"].append(s.offset)
                entry["ptrs"].update(p[0] for p in s.pointers)
        with open(out / f"index.{name}", "w", newline="\n") as f:
            f.write("".join(h + "\n" for h in HEADER))
            for lemma in sorted(index):
                e = index[lemma]
                ptrs = sorted(e["ptrs"])
                parts = [lemma, pos, str(len(e["offsets"])), str(len(ptrs))] + ptrs
                parts += [str(len(e["offsets"])), "0"] + [f"{o:08d}" for o in e["offsets"]]
                f.write(" ".join(parts) + "  \n")


def mini():
    animal = Synset("n", ["animal", "beast"])
    dog = Synset("n", ["dog", "hound"])
    cat = Synset("n", ["cat", "feline"])
    beagle = Synset("n", ["beagle"])
    table = Synset("n", ["table"])
    chair = Synset("n", ["chair", "seat"])
    move = Synset("v", ["move", "travel"])
    walk = Synset("v", ["walk", "stroll"])
    happy = Synset("a", ["happy", "glad"])
    sad = Synset("a", ["sad", "unhappy"])
    hot = Synset("a", ["hot"])
    cold = Synset("a", ["cold", "chilly(p)"])
    hypernym(dog, animal)
    hypernym(cat, animal)
    hypernym(beagle, dog)
    hypernym(walk, move)
    antonym(happy, sad)
    antonym(hot, cold)
    return [animal, dog, cat, beagle, table, chair, move, walk, happy, sad, hot, cold]


def lab(seed=20240601):
    rng = random.Random(seed)
    onsets = "b d f g k l m n p r s t v z br dr gr kl pl st tr".split()
    vowels = "a e i o u".split()
    codas = ["", "", "", "n", "r", "s", "l", "m"]
    used = set()

    def word(syllables=None):
        while True:
            k = syllables or rng.choice([2, 2, 3])
            w = "".join(rng.choice(onsets) + rng.choice(vowels) + rng.choice(codas)
                        for _ in range(k))
            if w not in used and len(w) > 2:
                used.add(w)
                return w

    def synset(pos, ss_type=None):
        n = rng.choice([1, 2, 2, 3])
        return Synset(pos, [word() for _ in range(n)], ss_type)

    nouns = [synset("n") for _ in range(600)]
    verbs = [synset("v") for _ in range(260)]
    adjs = [synset("a", rng.choice(["a", "a", "s"])) for _ in range(160)]

    # Lemmas the lexical filters must reject.
    nouns[5].words.append("ice_cream")
    nouns[17].words.append("x-ray")
    nouns[23].words.append("Apollo")
    nouns[31].words.append("ox")
    verbs[7].words.append("look_up")
    adjs[3].words[0] = adjs[3].words[0] + "(p)"
    # Polysemy: one lemma in two synsets.
    nouns[40].words.append(nouns[41].words[0])

    for group, roots in ((nouns, 30), (verbs, 20)):
        for i in range(roots, len(group)):
            hypernym(group[i], group[rng.randrange(0, i)])

    for group, count in ((nouns, 130), (verbs, 60), (adjs, 70)):
        order = list(range(len(group)))
        rng.shuffle(order)
        for j in range(count):
            a, b = group[order[2 * j]], group[order[2 * j + 1]]
            antonym(a, b, 1, 1)

    return nouns + verbs + adjs


def main():
    if len(sys.argv) != 3 or sys.argv[1] not in ("mini", "lab"):
        sys.exit(__doc__)
    synsets = mini() if sys.argv[1] == "mini" else lab()
    write_db(Path(sys.argv[2]), synsets)


if __name__ == "__main__":
    main()
