"""Generate the desk-scale sentence corpus used by the default synthetic config.

Sentences come from a small template grammar over a 50-word vocabulary so the
word n-gram model has real structure to exploit.  Output is deterministic.
"""
import argparse
import random

PRONOUNS = ["i", "we", "you", "they", "she", "he"]
ANIMATE = ["man", "child", "dog", "cat", "bird"]
THINGS = ["ball", "book", "car", "house", "door", "fish", "food", "road", "tree", "water"]
DETS = ["the", "a"]
ADJS = ["big", "small", "red", "old", "new", "good", "hot", "cold"]
TRANSITIVE = ["see", "saw", "like", "want", "need", "have", "took", "found", "made", "read", "eat"]
INTRANSITIVE = ["ran", "sat"]
ADVERBS = ["now", "here"]


def subject(rng):
    if rng.random() < 0.6:
        return [rng.choice(PRONOUNS)]
    return [rng.choice(DETS), rng.choice(ANIMATE)]


def obj(rng):
    words = [rng.choice(DETS)]
    if rng.random() < 0.5:
        words.append(rng.choice(ADJS))
    words.append(rng.choice(THINGS + ANIMATE))
    return words


def sentence(rng):
    r = rng.random()
    if r < 0.55:
        s = subject(rng) + [rng.choice(TRANSITIVE)] + obj(rng)
        if rng.random() < 0.3:
            s.append(rng.choice(ADVERBS))
    elif r < 0.7:
        s = subject(rng) + [rng.choice(INTRANSITIVE), rng.choice(ADVERBS)]
    elif r < 0.8:
        s = ["but"] + subject(rng) + ["don't", "know", "that"]
    elif r < 0.92:
        s = subject(rng) + ["don't", rng.choice(TRANSITIVE)] + obj(rng)
    else:
        s = subject(rng) + ["know", "that"] + subject(rng) + [rng.choice(INTRANSITIVE)]
    return " ".join(s)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--count", type=int, default=2400)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default="data/sentences.txt")
    args = ap.parse_args()
    rng = random.Random(args.seed)
    with open(args.out, "w") as f:
        for _ in range(args.count):
            f.write(sentence(rng) + "\n")


if __name__ == "__main__":
    main()
