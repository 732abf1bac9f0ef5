#!/usr/bin/env python3
"""Independent edge/node count for an OSM fixture under the converter's rules.

Usage: python3 count_fixture.py ../albany.osm
"""
import sys
import xml.etree.ElementTree as ET
from collections import defaultdict

SUPPORTED = {"motorway", "trunk", "primary", "secondary", "tertiary", "residential",
             "unclassified", "living_street", "service"}
SUPPORTED |= {c + "_link" for c in ["motorway", "trunk", "primary", "secondary", "tertiary"]}

root = ET.parse(sys.argv[1]).getroot()
signals = set()
for n in root.iter("node"):
    for t in n.iter("tag"):
        if t.get("k") == "highway" and t.get("v") == "traffic_signals":
            signals.add(n.get("id"))
ways = []
for w in root.iter("way"):
    tags = {t.get("k"): t.get("v") for t in w.iter("tag")}
    refs = [nd.get("ref") for nd in w.iter("nd")]
    if tags.get("highway") in SUPPORTED and len(refs) >= 2:
        ways.append((w.get("id"), refs, tags))

use = defaultdict(int)
for _, refs, _ in ways:
    for r in refs:
        use[r] += 1

edges = []  # (from, to, name)
for wid, refs, tags in ways:
    cut = [0] + [i for i in range(1, len(refs) - 1) if use[refs[i]] > 1 or refs[i] in signals] + [len(refs) - 1]
    ow = tags.get("oneway") in ("yes", "true", "1") or tags["highway"] == "motorway"
    for a, b in zip(cut, cut[1:]):
        u, v = refs[a], refs[b]
        edges.append((u, v, tags.get("name", "")))
        if not ow:
            edges.append((v, u, tags.get("name", "")))

adj = defaultdict(set)
for u, v, _ in edges:
    adj[u].add(v)
    adj[v].add(u)
seen, comps = set(), []
for s in sorted(adj):
    if s in seen:
        continue
    comp, stack = set(), [s]
    while stack:
        x = stack.pop()
        if x in comp:
            continue
        comp.add(x)
        stack.extend(adj[x] - comp)
    seen |= comp
    comps.append(comp)
big = max(comps, key=len)
kept = [e for e in edges if e[0] in big]
junctions = [n for n in big if len(adj[n]) >= 3 or n in signals]
print("components", sorted(len(c) for c in comps))
print("nodes", len(big))
print("edges", len(kept))
print("junctions", len(junctions))
print("traffic_lights", len([n for n in big if n in signals]))
for name in ["Madison Avenue", "Washington Avenue", "Lark Street", "Orange Street", "Dove Street"]:
    print(name, sum(1 for e in kept if e[2] == name))
