"""Builds the 50-track filtering fixture and its expected sample set.

The expected set is computed here, independently of the Rust code:
detections need diagonal >= 600 and no occluded part; each track keeps its
longest run of consecutive frames (earliest on ties) and needs >= 20 frames;
every 5th frame from the run start is sampled; both quarter masks must exist
and cover > 25% of their bounding rectangles; the sample must fall in a split.
"""
import json
import math
import random
from pathlib import Path

HERE = Path(__file__).parent
rng = random.Random(20240611)

L_DIAG, MIN_LEN, STRIDE, MIN_FG = 600.0, 20, 5, 0.25
SPLITS = [("val", 1, 0, 4000), ("test", 2, 0, 4000), ("extra", 1, 4000, 8000)]

GOOD_Q1 = [(0, 0), (100, 0), (100, 60), (0, 60)]
GOOD_Q2 = [(0, 60), (100, 60), (50, 120)]
THIN = [(0, 0), (100, 100), (0, 10)]  # sliver, fraction 0.05
EXACT_QUARTER = [(0, 0), (100, 0), (25, 25), (0, 100)]  # fraction exactly 0.25


def area(poly):
    s = 0.0
    for (x0, y0), (x1, y1) in zip(poly, poly[1:] + poly[:1]):
        s += x0 * y1 - x1 * y0
    return abs(s) / 2


def fraction(poly):
    xs = [p[0] for p in poly]
    ys = [p[1] for p in poly]
    rect = (max(xs) - min(xs)) * (max(ys) - min(ys))
    a = area(poly)
    if a == 0 or rect == 0:
        return None
    return min(a / rect, 1.0)


def fmt(poly):
    return " ".join(f"{x} {y}" for x, y in poly)


def detection(cam, traj, frame, w, h, occluded, q1, q2):
    masks = []
    if q1 is not None:
        masks.append({"quarter": "Q1", "poly": fmt(q1)})
    if q2 is not None:
        masks.append({"quarter": "Q2", "poly": fmt(q2)})
    return {
        "camera": cam,
        "traj": traj,
        "frame": frame,
        "fish_bbox": [10.0, 20.0, w, h],
        "parts": [
            {"name": "head", "bbox": [600.0, 40.0, 100.0, 100.0], "occluded": occluded == "head"},
            {"name": "dorsal_fin", "bbox": [300.0, 20.0, 80.0, 40.0], "occluded": occluded == "dorsal_fin"},
            {"name": "tail_fin", "bbox": [10.0, 40.0, 100.0, 120.0], "occluded": False},
        ],
        "masks": masks,
    }


def track_frames(kind, start):
    n = rng.randint(22, 60)
    frames = list(range(start, start + n))
    if kind == "short":
        frames = frames[: rng.randint(5, 19)]
    elif kind == "exact20":
        frames = frames[:20]
    elif kind == "exact19":
        frames = frames[:19]
    elif kind == "gaps":
        for _ in range(rng.randint(1, 3)):
            cut = rng.randrange(len(frames))
            del frames[cut : cut + rng.randint(1, 4)]
    elif kind == "tie":
        frames = list(range(start, start + 25)) + list(range(start + 30, start + 55))
    return frames


def build():
    kinds = ["plain", "short", "exact20", "exact19", "gaps", "tie", "small", "occluded", "masks", "mixed"]
    rows = []
    meta = []
    for i in range(50):
        kind = kinds[i % len(kinds)]
        cam = 1 if i % 3 else 2
        traj = 100 + i
        base = 4000 - 30 if i == 20 else rng.choice([0, 1000, 2000, 5000]) + rng.randint(0, 500)
        frames = track_frames(kind, base)
        for f in frames:
            w, h = 800.0, 250.0
            occluded = None
            q1, q2 = GOOD_Q1, GOOD_Q2
            if kind == "small" or (kind == "mixed" and rng.random() < 0.15):
                w, h = 560.0, 200.0  # diagonal ~594.6
            if kind == "small" and f % 7 == 0:
                w, h = 580.0, 160.0  # diagonal ~601.7, kept
            if kind == "occluded" and rng.random() < 0.1:
                occluded = rng.choice(["head", "dorsal_fin"])
            if kind in ("masks", "mixed"):
                r = rng.random()
                if r < 0.15:
                    q1 = None
                elif r < 0.3:
                    q2 = THIN
                elif r < 0.45:
                    q1 = EXACT_QUARTER
            rows.append(detection(cam, traj, f, w, h, occluded, q1, q2))
        meta.append((cam, traj, kind))
    rng.shuffle(rows)
    return rows


def expected(rows):
    tracks = {}
    for r in rows:
        tracks.setdefault((r["camera"], r["traj"]), []).append(r)
    out = []
    for key in sorted(tracks):
        dets = sorted(tracks[key], key=lambda d: d["frame"])
        kept = []
        for d in dets:
            _, _, w, h = d["fish_bbox"]
            if math.hypot(w, h) < L_DIAG:
                continue
            if any(p["occluded"] for p in d["parts"]):
                continue
            kept.append(d)
        runs, cur = [], []
        for d in kept:
            if cur and d["frame"] == cur[-1]["frame"] + 1:
                cur.append(d)
            else:
                if cur:
                    runs.append(cur)
                cur = [d]
        if cur:
            runs.append(cur)
        if not runs:
            continue
        best = max(runs, key=len)  # max returns the first maximal run
        if len(best) < MIN_LEN:
            continue
        anchor = best[0]["frame"]
        for d in best:
            if (d["frame"] - anchor) % STRIDE:
                continue
            masks = {m["quarter"]: m["poly"] for m in d["masks"]}
            ok = True
            for q in ("Q1", "Q2"):
                if q not in masks:
                    ok = False
                    break
                nums = [float(v) for v in masks[q].split()]
                poly = list(zip(nums[0::2], nums[1::2]))
                fr = fraction(poly)
                if fr is None or not fr > MIN_FG:
                    ok = False
            if not ok:
                continue
            for name, cam, lo, hi in SPLITS:
                if d["camera"] == cam and lo <= d["frame"] < hi:
                    out.append(f"{name} {d['camera']}:{d['traj']}:{d['frame']}")
                    break
    return sorted(out)


def config():
    lines = [
        '[[stream]]\nname = "q1_sliced"\ndim = 4\n',
        "[filter]\nl_diag = 600.0\nmin_traj_length = 20\nframe_stride = 5\nmin_foreground_fraction = 0.25\n",
    ]
    for name, cam, lo, hi in SPLITS:
        lines.append(f'[[split]]\nname = "{name}"\ncamera = {cam}\nstart = {lo}\nend = {hi}\n')
    return "\n".join(lines)


if __name__ == "__main__":
    rows = build()
    (HERE / "detections.jsonl").write_text("".join(json.dumps(r) + "\n" for r in rows))
    (HERE / "config.toml").write_text(config())
    exp = expected(rows)
    (HERE / "expected_samples.txt").write_text("".join(e + "\n" for e in exp))
    print(f"{len(rows)} detections, {len(exp)} expected samples")
