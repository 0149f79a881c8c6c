#!/usr/bin/env python3
"""Convert the Cora citation release (cora.content, cora.cites) into a gotham dataset directory."""

import argparse
import json
import pathlib
import sys


def read_content(path):
    ids, feats, names = [], [], []
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            ids.append(parts[0])
            feats.append(parts[1:-1])
            names.append(parts[-1])
    return ids, feats, names


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--src", required=True, help="directory holding cora.content and cora.cites")
    ap.add_argument("--out", required=True)
    ap.add_argument("--base-classes", type=int, default=2)
    ap.add_argument("--way", type=int, default=1)
    ap.add_argument("--k", type=int, default=5)
    ap.add_argument("--csd", help="JSON object mapping class name to a descriptor vector")
    args = ap.parse_args()

    src = pathlib.Path(args.src)
    ids, feats, names = read_content(src / "cora.content")
    index = {pid: i for i, pid in enumerate(ids)}
    classes = sorted(set(names))
    label = {c: i for i, c in enumerate(classes)}

    edges, dropped = set(), 0
    with open(src / "cora.cites") as f:
        for line in f:
            parts = line.split()
            if len(parts) != 2:
                continue
            a, b = parts
            if a not in index or b not in index or a == b:
                dropped += 1
                continue
            u, v = sorted((index[a], index[b]))
            edges.add((u, v))

    base = list(range(args.base_classes))
    streamed = list(range(args.base_classes, len(classes)))
    sessions = []
    for s in range(0, len(streamed), args.way):
        few = streamed[s:s + args.way]
        arrivals = [i for i, n in enumerate(names) if label[n] in few]
        sessions.append({"few_shot": few, "zero_shot": [], "k": args.k, "arrivals": arrivals})

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "edges.tsv", "w") as f:
        for u, v in sorted(edges):
            f.write(f"{u}\t{v}\n{v}\t{u}\n")
    with open(out / "features.tsv", "w") as f:
        for row in feats:
            f.write(" ".join(row) + "\n")
    with open(out / "labels.tsv", "w") as f:
        for i, n in enumerate(names):
            f.write(f"{i}\t{label[n]}\n")
    if args.csd:
        with open(args.csd) as f:
            desc = json.load(f)
        missing = [c for c in classes if c not in desc]
        if missing:
            sys.exit(f"no descriptor for class(es): {', '.join(missing)}")
        with open(out / "csd.tsv", "w") as f:
            for c in classes:
                f.write(f"{label[c]}\t" + " ".join(repr(float(x)) for x in desc[c]) + "\n")
    with open(out / "schedule.json", "w") as f:
        json.dump({"base_classes": base, "sessions": sessions, "mode": "gfscil"}, f, indent=2)
        f.write("\n")
    with open(out / "classes.tsv", "w") as f:
        for c in classes:
            f.write(f"{label[c]}\t{c}\n")
    print(f"{len(ids)} nodes, {len(edges)} edges ({dropped} citations dropped), "
          f"{len(classes)} classes, {len(sessions)} streaming sessions -> {out}")


if __name__ == "__main__":
    main()
