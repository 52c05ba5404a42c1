#!/usr/bin/env python3
"""Regenerates the fixtures under data/ (maps, worlds, sentence replays,
embeddings, approach scenario, activation maps). Deterministic."""

import json
import math
import os
import random

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")
RES = 0.25


def grid(w_m, h_m):
    return [[0] * int(round(w_m / RES)) for _ in range(int(round(h_m / RES)))]


def cell(v):
    return int(math.floor(v / RES + 1e-9))


def hwall(g, y, x0, x1, doors=()):
    j = min(cell(y), len(g) - 1)
    for i in range(cell(x0), min(cell(x1), len(g[0]))):
        xc = (i + 0.5) * RES
        if not any(a <= xc <= b for a, b in doors):
            g[j][i] = 1


def vwall(g, x, y0, y1, doors=()):
    i = min(cell(x), len(g[0]) - 1)
    for j in range(cell(y0), min(cell(y1), len(g))):
        yc = (j + 0.5) * RES
        if not any(a <= yc <= b for a, b in doors):
            g[j][i] = 1


def border(g):
    h, w = len(g), len(g[0])
    for i in range(w):
        g[0][i] = g[h - 1][i] = 1
    for j in range(h):
        g[j][0] = g[j][w - 1] = 1


def block(g, x0, y0, x1, y1):
    for j in range(cell(y0), cell(y1)):
        for i in range(cell(x0), cell(x1)):
            g[j][i] = 1


def area(label, x0, y0, x1, y1, floor=0):
    return {"label": label, "floor": floor, "polygon": [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]}


def house():
    g = grid(16, 12)
    border(g)
    hwall(g, 6, 0, 16, doors=[(3, 4), (7, 8), (12, 13)])
    vwall(g, 8, 0, 6, doors=[(2.5, 3.5)])
    vwall(g, 6, 6, 12, doors=[(9, 10)])
    vwall(g, 10, 6, 12, doors=[(9, 10)])
    block(g, 10.5, 0.5, 12.5, 1.25)  # counter
    block(g, 0.5, 10.5, 2.5, 11.5)  # bed
    areas = [
        area("living room", 0, 0, 8, 6),
        area("kitchen", 8, 0, 16, 6),
        area("bedroom", 0, 6, 6, 12),
        area("bathroom", 6, 6, 10, 12),
        area("garage", 10, 6, 16, 12),
    ]
    return {"resolution": RES, "origin": [0.0, 0.0], "grids": [g], "areas": areas}


def office():
    g = grid(20, 12)
    border(g)
    hwall(g, 5, 0, 20, doors=[(3, 4), (10.5, 11.5), (16.5, 17.5)])
    hwall(g, 7, 0, 20, doors=[(2.5, 3.5), (8.5, 9.5), (15.5, 16.5)])
    vwall(g, 8, 0, 5)
    vwall(g, 14, 0, 5)
    vwall(g, 6, 7, 12)
    vwall(g, 12, 7, 12)
    block(g, 9.5, 1.5, 12.5, 3)  # conference table
    areas = [
        area("workstation", 0, 0, 8, 5),
        area("conference", 8, 0, 14, 5),
        area("printer", 14, 0, 20, 5),
        area("reception", 0, 7, 6, 12),
        area("pantry", 6, 7, 12, 12),
        area("workstation", 12, 7, 20, 12),
    ]
    return {"resolution": RES, "origin": [0.0, 0.0], "grids": [g], "areas": areas}


def lab():
    g0 = grid(14, 10)
    border(g0)
    vwall(g0, 7, 0, 10, doors=[(2, 3), (7, 8)])
    hwall(g0, 5, 7, 14, doors=[(10, 11)])
    g1 = grid(14, 10)
    border(g1)
    vwall(g1, 8, 0, 10, doors=[(4.5, 5.5)])
    block(g1, 2, 2, 4, 3)  # workbench
    areas = [
        area("cubicle", 0, 0, 7, 10),
        area("kitchen", 7, 0, 14, 5),
        area("office", 7, 5, 14, 10),
        area("workshop", 0, 0, 8, 10, floor=1),
        area("lounge", 8, 0, 14, 10, floor=1),
    ]
    return {"resolution": RES, "origin": [0.0, 0.0], "floors": 2, "grids": [g0, g1], "areas": areas}


# topic words; the first word of each topic names it
TOPICS = {
    "living": ["living", "tv", "television", "watching", "movie", "couch"],
    "kitchen": ["kitchen", "cooking", "lunch", "fridge", "microwave", "dinner"],
    "bedroom": ["bedroom", "bed", "sleeping", "nap", "resting", "pillow"],
    "bathroom": ["bathroom", "shower", "washing", "mirror", "towel", "sink"],
    "garage": ["garage", "car", "bike", "repairing", "wrench", "tires"],
    "workstation": ["workstation", "programming", "laptop", "coding", "engineer", "software"],
    "conference": ["conference", "presentation", "meeting", "projector", "call", "slides"],
    "printer": ["printer", "printing", "copies", "scanner", "paper", "documents"],
    "reception": ["reception", "visitors", "entrance", "guests", "front", "welcome"],
    "pantry": ["pantry", "tea", "coffee", "snack", "water", "break"],
    "cubicle": ["cubicle", "student", "studying", "desk", "thesis", "monitor"],
    "office": ["office", "professor", "paperwork", "advising", "grading", "faculty"],
    "workshop": ["workshop", "robot", "robots", "soldering", "hardware", "headsets"],
    "lounge": ["lounge", "sofa", "relaxing", "chatting", "games", "beanbag"],
}
GENERIC = (
    "x is are be can could might may likely probably usually often sometimes found find in at on near "
    "the a an of to with and or by around inside during most time spends spend work works working "
    "person people someone who that this there where when day afternoon morning area room lab house "
    "building place space floor upstairs downstairs next corner usual typically perhaps maybe also "
    "would should good best look first check"
).split()


def embeddings(rng):
    topics = list(TOPICS)
    dim = len(topics) + 12
    rows = {}
    for t, name in enumerate(topics):
        for w in TOPICS[name]:
            v = [rng.gauss(0, 0.18) for _ in range(dim)]
            v[t] += 1.0
            rows[w] = v
    for w in GENERIC:
        v = [rng.gauss(0, 0.05) for _ in range(dim)]
        v[len(topics) + rng.randrange(12)] += 1.0
        rows[w] = v
    lines = [f"{len(rows)} {dim}"]
    for w in sorted(rows):
        lines.append(w + " " + " ".join(f"{x:.5f}" for x in rows[w]))
    return "\n".join(lines) + "\n"


TEMPLATES = [
    "X is probably in the {a} {b}.",
    "X might be {b} near the {a}.",
    "X usually spends time around the {a} {b}.",
    "You can often find X at the {a} with {b}.",
    "Most likely X is in the {a} area.",
    "X could be {b} in the {a}.",
    "Check the {a} first, X is often {b} there.",
]


def sentences(rng, main, second, m=20):
    out = []
    for k in range(m):
        if k < 13:
            topic = main
        elif k < 17:
            topic = second
        else:
            topic = rng.choice([t for t in TOPICS if t not in (main, second)])
        words = TOPICS[topic]
        a, b = rng.sample(words, 2)
        out.append(rng.choice(TEMPLATES).format(a=a, b=b))
    rng.shuffle(out)
    return out


def person(pid, x, y, theta, appearance, clue, floor=0):
    return {
        "id": pid,
        "pose": {"x": x, "y": y, "theta": theta},
        "appearance": appearance,
        "location_clue": clue,
        "floor": floor,
    }


WORLDS = {
    "house": {
        "persons": [
            (person(1, 13.0, 2.5, 3.1, "red shirt with black hair", "person who loves cooking dinner"), "kitchen", "pantry"),
            (person(2, 2.5, 8.5, 0.0, "blue pajamas", "person who takes a nap after lunch"), "bedroom", "living"),
            (person(3, 14.0, 9.5, 1.6, "green overalls", "person who is repairing a bike"), "garage", "workshop"),
            (person(4, 3.0, 2.0, -1.5, "yellow hoodie", "person who is watching a movie"), "living", "bedroom"),
        ],
        "episodes": [
            ((1.5, 4.5, 0.0), 1), ((3.0, 10.0, -1.5), 1),
            ((10.0, 2.0, 3.1), 2), ((14.5, 4.0, 3.1), 2),
            ((2.0, 1.0, 0.0), 3), ((12.0, 1.8, 1.6), 3),
            ((14.0, 3.0, 3.1), 4), ((8.0, 10.5, -1.5), 4),
        ],
    },
    "office": {
        "persons": [
            (person(1, 2.0, 2.0, 0.5, "white shirt with glasses", "software engineer who is coding"), "workstation", "conference"),
            (person(2, 11.0, 4.0, -1.5, "grey suit", "manager giving a presentation"), "conference", "office"),
            (person(3, 17.0, 2.0, 1.6, "striped sweater", "assistant making copies of documents"), "printer", "reception"),
            (person(4, 2.0, 10.0, 0.0, "navy blazer", "receptionist who welcomes guests"), "reception", "printer"),
            (person(5, 9.0, 10.5, 3.1, "orange cardigan", "intern on a coffee break"), "pantry", "lounge"),
            (person(6, 18.0, 10.0, 3.1, "black turtleneck", "engineer writing software on a laptop"), "workstation", "pantry"),
            (person(7, 5.5, 3.5, 3.1, "purple dress", "designer who joins a call"), "conference", "workstation"),
            (person(8, 14.0, 9.0, -0.5, "brown jacket", "tester programming a laptop"), "workstation", "printer"),
        ],
        "episodes": [
            ((17.0, 6.0, 3.1), 1), ((2.0, 6.0, 0.0), 2), ((3.0, 6.0, 0.0), 3), ((11.0, 6.0, 3.1), 4),
            ((18.0, 6.0, 3.1), 5), ((4.0, 6.0, 0.0), 6), ((16.0, 6.0, 3.1), 7), ((4.0, 9.0, 0.0), 8),
        ],
    },
    "lab": {
        "persons": [
            (person(1, 2.0, 7.5, 0.0, "white shirt with black hair", "student who works on a thesis"), "cubicle", "workshop"),
            (person(2, 12.5, 2.0, 3.1, "red cap", "student eating lunch"), "kitchen", "lounge"),
            (person(3, 3.0, 6.0, 0.0, "blue jeans", "student who builds robots", 1), "workshop", "cubicle"),
            (person(4, 12.0, 7.0, 3.1, "green scarf", "professor grading paperwork"), "office", "cubicle"),
        ],
        "episodes": [
            ((10.0, 2.0, 3.1), 1), ((12.0, 8.0, 3.1), 1),
            ((2.0, 2.0, 0.0), 2), ((4.0, 9.0, 0.0), 2),
            ((6.0, 5.0, 3.1), 3), ((10.0, 4.0, 3.1), 3),
            ((1.5, 1.5, 0.0), 4), ((10.0, 1.0, 1.6), 4),
        ],
    },
}


def approach_scenario():
    g = grid(16, 16)
    border(g)
    block(g, 12.5, 2.0, 13.5, 3.5)  # cabinet off to the side
    return {
        "map": {"resolution": RES, "origin": [-8.0, -8.0], "grids": [g], "areas": [area("room", -8, -8, 8, 8)]},
        "human": {"x": 0.0, "y": 0.0, "theta": 0.0},
        "start_distance": 5.0,
    }


KD = {
    1: [
        "Approach the person straight from the front slowly so they can see the robot.",
        "Move straight toward the front of the person and slow down when close.",
        "Come from the front at a 45 degree angle, then go straight slowly.",
        "Take a slight curve and finish straight in front of the person, moving slowly.",
        "Approach from the front, keep a steady pace and stop in front of them.",
        "Drive straight at the person from the front and slowly come to a stop.",
        "Approach at 45 degrees from the front side and slowly straighten out.",
        "Go straight in front of the person, slowly, so the approach is visible.",
        "Move from the front in a gentle curved path and then slowly straight.",
        "Come in front of the person, not from behind, and move slowly.",
    ],
    0: [
        "Approach from the side so the person notices the robot, moving slowly.",
        "Move around in a curve to the side of the person, then slowly approach.",
        "Come from the side at 45 degrees and slowly approach the person.",
        "Do not approach from behind; go to the side and then slowly straight.",
        "Take a curved path toward the side of the person and slow down.",
        "Approach from the side in a curve, keeping a slow speed.",
        "Go to the side at 45 degrees, then approach slowly.",
        "Circle in a curve to the front of the person, then approach slowly.",
        "Move to the side of the person, not behind, and approach slowly.",
        "Approach the person from the side with a slow curved motion.",
    ],
}


def activation_maps(rng):
    maps = {}
    m = [[round(rng.uniform(0, 0.3), 3) for _ in range(16)] for _ in range(16)]
    for y in range(4, 9):
        for x in range(6, 10):
            m[y][x] = round(rng.uniform(0.6, 1.0), 3)
    maps["person_blob.csv"] = m
    maps["empty.csv"] = [[round(rng.uniform(0, 0.4), 3) for _ in range(16)] for _ in range(16)]
    return maps


def write(path, text):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        f.write(text)


def main():
    rng = random.Random(20231)
    write(os.path.join(ROOT, "embeddings.txt"), embeddings(rng))
    for name, build in (("house", house), ("office", office), ("lab", lab)):
        write(os.path.join(ROOT, "maps", f"{name}.json"), json.dumps(build(), separators=(",", ":")) + "\n")
        spec = WORLDS[name]
        sent = {}
        for p, main_topic, second in spec["persons"]:
            fname = f"{name}_{p['id']}.txt"
            write(os.path.join(ROOT, "sentences", fname), "\n".join(sentences(rng, main_topic, second)) + "\n")
            sent[str(p["id"])] = f"../sentences/{fname}"
        for k, ((x, y, th), target) in enumerate(spec["episodes"]):
            world = {
                "name": f"{name}-{k}",
                "map": f"../maps/{name}.json",
                "persons": [p for p, _, _ in spec["persons"]],
                "robot": {"x": x, "y": y, "theta": th, "floor": 0},
                "target_id": target,
                "sentences": {str(target): sent[str(target)]},
            }
            write(os.path.join(ROOT, "worlds", f"{name}-{k}.json"), json.dumps(world, indent=1) + "\n")
    write(os.path.join(ROOT, "approach.json"), json.dumps(approach_scenario(), separators=(",", ":")) + "\n")
    for g, lines in KD.items():
        write(os.path.join(ROOT, "kd", f"gaze{g}.txt"), "\n".join(lines) + "\n")
    for fname, m in activation_maps(rng).items():
        write(os.path.join(ROOT, "activation", fname), "\n".join(",".join(str(v) for v in row) for row in m) + "\n")
    header = "world,episode,method,seed,success,path_length,shortest_path,false_detections,failure\n"
    rows = [f"house,{i},cow,{i},false,{15.5 + i:.1f},{6.0 + i:.1f},{i % 3},path_budget" for i in range(4)]
    write(os.path.join(ROOT, "results_all_fail.csv"), header + "\n".join(rows) + "\n")


if __name__ == "__main__":
    main()
