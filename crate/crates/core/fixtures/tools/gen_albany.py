#!/usr/bin/env python3
"""Writes albany.osm: a synthetic ~1 km^2 downtown extract centred on Albany, NY.

Street names follow the real downtown; geometry is a jittered lattice, not survey data.
Run from this directory: python3 gen_albany.py > ../albany.osm
"""
import math

LAT0, LON0 = 42.6526, -73.7562
M_PER_DEG = 111320.0

nodes = {}  # id -> (lat, lon, tags)
ways = []  # (id, [node ids], tags)
next_node = [1000]


def node(x, y, tags=None):
    nid = next_node[0]
    next_node[0] += 1
    lat = LAT0 + y / M_PER_DEG
    lon = LON0 + x / (M_PER_DEG * math.cos(math.radians(LAT0)))
    nodes[nid] = (round(lat, 7), round(lon, 7), tags or {})
    return nid


cols = [("Lark Street", -400.0), ("Dove Street", -200.0), ("Swan Street", 0.0),
        ("Eagle Street", 200.0), ("South Pearl Street", 400.0)]
rows = [("Orange Street", 425.0), ("Washington Avenue", 255.0), ("State Street", 85.0),
        ("Lancaster Street", -85.0), ("Hudson Avenue", -255.0), ("Madison Avenue", -425.0)]

signals = {
    ("Washington Avenue", "Lark Street"), ("Washington Avenue", "Swan Street"),
    ("Washington Avenue", "Eagle Street"), ("Washington Avenue", "South Pearl Street"),
    ("State Street", "Lark Street"), ("State Street", "Eagle Street"),
    ("State Street", "South Pearl Street"), ("Madison Avenue", "Lark Street"),
    ("Madison Avenue", "Eagle Street"), ("Madison Avenue", "South Pearl Street"),
    ("Hudson Avenue", "Eagle Street"),
}

# intersections with deterministic jitter
inter = {}
for ri, (rname, y) in enumerate(rows):
    for ci, (cname, x) in enumerate(cols):
        jx = ((ri * 7 + ci * 3) % 5 - 2) * 4.0
        jy = ((ri * 3 + ci * 5) % 5 - 2) * 3.0
        tags = {"highway": "traffic_signals"} if (rname, cname) in signals else None
        inter[(ri, ci)] = node(x + jx, y + jy, tags)

row_tags = {
    "Orange Street": {"highway": "residential"},
    "Washington Avenue": {"highway": "primary", "lanes": "4", "maxspeed": "30 mph"},
    "State Street": {"highway": "secondary", "lanes": "2"},
    "Lancaster Street": {"highway": "residential", "oneway": "yes"},
    "Hudson Avenue": {"highway": "tertiary"},
    "Madison Avenue": {"highway": "primary", "lanes": "4", "maxspeed": "30 mph"},
}
col_tags = {
    "Lark Street": {"highway": "secondary", "lanes": "2", "maxspeed": "25 mph"},
    "Dove Street": {"highway": "residential", "oneway": "yes"},
    "Swan Street": {"highway": "tertiary"},
    "Eagle Street": {"highway": "tertiary", "lanes": "2"},
    "South Pearl Street": {"highway": "primary", "lanes": "4", "maxspeed": "30 mph"},
}

way_id = [5000]


def way(nids, tags):
    ways.append((way_id[0], nids, tags))
    way_id[0] += 1


state_alley_node = None
for ri, (rname, y) in enumerate(rows):
    seq = []
    for ci in range(len(cols)):
        seq.append(inter[(ri, ci)])
        if ci + 1 < len(cols):
            x_mid = (cols[ci][1] + cols[ci + 1][1]) / 2.0
            bend = 6.0 if (ri + ci) % 2 == 0 else -5.0
            mid = node(x_mid, y + bend)
            if rname == "State Street" and ci == 2:
                state_alley_node = mid
            seq.append(mid)
    tags = dict(row_tags[rname], name=rname)
    if rname == "Lancaster Street":
        seq = list(reversed(seq))  # one-way westbound
    if rname == "Washington Avenue":
        split = seq.index(inter[(ri, 2)])
        way(seq[: split + 1], tags)
        way(seq[split:], tags)
    else:
        way(seq, tags)

for ci, (cname, x) in enumerate(cols):
    seq = [inter[(ri, ci)] for ri in range(len(rows))]  # north -> south
    way(seq, dict(col_tags[cname], name=cname))

# dead-end service alley off State Street
alley_end = node(100.0, 85.0 + 90.0)
way([state_alley_node, alley_end], {"highway": "service", "name": "Academy Alley"})

# non-vehicular ways (dropped by the highway filter)
p1, p2, p3 = node(-300.0, 340.0), node(-250.0, 300.0), node(-150.0, 330.0)
way([inter[(0, 0)], p1, p2, p3, inter[(1, 1)]], {"highway": "footway", "name": "Academy Park Path"})
way([inter[(4, 3)], node(300.0, -200.0)], {"highway": "cycleway"})
way([inter[(2, 4)], node(450.0, 120.0)], {"highway": "steps"})
# untagged way
way([inter[(5, 0)], node(-450.0, -470.0)], {"name": "Unmapped Track"})

# disconnected parking loop far from the grid (pruned as a minor component)
q = [node(600.0, -500.0), node(680.0, -500.0), node(680.0, -440.0)]
way(q, {"highway": "service", "name": "Empire Lot"})

print('<?xml version="1.0" encoding="UTF-8"?>')
print('<osm version="0.6" generator="gen_albany.py">')
lat_min = min(v[0] for v in nodes.values()); lat_max = max(v[0] for v in nodes.values())
lon_min = min(v[1] for v in nodes.values()); lon_max = max(v[1] for v in nodes.values())
print(f'  <bounds minlat="{lat_min}" minlon="{lon_min}" maxlat="{lat_max}" maxlon="{lon_max}"/>')
for nid in sorted(nodes):
    lat, lon, tags = nodes[nid]
    if tags:
        print(f'  <node id="{nid}" lat="{lat}" lon="{lon}">')
        for k, v in tags.items():
            print(f'    <tag k="{k}" v="{v}"/>')
        print('  </node>')
    else:
        print(f'  <node id="{nid}" lat="{lat}" lon="{lon}"/>')
for wid, nids, tags in ways:
    print(f'  <way id="{wid}">')
    for n in nids:
        print(f'    <nd ref="{n}"/>')
    for k, v in tags.items():
        print(f'    <tag k="{k}" v="{v}"/>')
    print('  </way>')
print('</osm>')
