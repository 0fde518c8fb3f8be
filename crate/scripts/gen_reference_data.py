#!/usr/bin/env python3
"""Writes the synthetic reference profiles and the LTE-like throughput trace.

Per-DNN totals T(b) = sum_k h_k(b) are pinned at b = 1, 10 and 20 from the
per-request reductions below, grow linearly past 20, and carry one
non-monotone bump for FCN (b = 11) and VGG16 (b = 18). Each layer takes a
share u_k of T(1) and a share v_k of the batching increment T(b) - T(1).

Usage: python3 scripts/gen_reference_data.py  (run from the repo root)
"""

import csv
import json

import numpy as np

GRID = [1, 2, 4, 8, 10, 11, 16, 17, 18, 20, 32, 64, 90]
MAX_BATCH = 90

# id: (layers, sum h(1) ms, reduction at 10, further reduction 10 -> 20, bump)
DNNS = {
    "vgg16": (38, 18.0, 0.63, 0.12, (18, 1.06)),
    "resnet50": (54, 20.0, 0.81, 0.33, None),
    "fcn": (40, 30.0, 0.57, 0.33, (11, 1.08)),
    "googlenet": (22, 24.0, 1 - 28.0 / 240.0, 0.43, None),
    "ssd": (51, 14.0, 0.67, 0.14, None),
}

SHARED = {
    "flownet2": (30, 25.0, 0.75, 0.30, None),
    "sdcnet_head": (10, 8.0, 0.60, 0.20, None),
    "rta_head": (8, 8.0, 0.60, 0.20, None),
}


def totals(s1, red10, red20, bump):
    s10 = 10 * s1 * (1 - red10)
    s20 = 20 * (s10 / 10) * (1 - red20)
    tail = 0.8 * (s20 - s10) / 10
    anchors_b = [1, 10, 20, 90]
    anchors_t = [s1, s10, s20, s20 + tail * 70]
    t = {b: float(np.interp(b, anchors_b, anchors_t)) for b in GRID}
    if bump:
        b, f = bump
        t[b] *= f
    return t


def component(rng, name, layers, s1, red10, red20, bump):
    t = totals(s1, red10, red20, bump)
    u = rng.uniform(0.5, 1.5, layers)
    u /= u.sum()
    v = rng.uniform(0.2, 1.8, layers)
    v /= v.sum()
    # activations shrink from well above the input image size to a small head
    bits = 1.6e6 * (0.02 / 1.6) ** (np.arange(layers) / max(layers - 1, 1))
    out = []
    for k in range(layers):
        runtime = {str(b): round(u[k] * t[1] + v[k] * (t[b] - t[1]), 6) for b in GRID}
        out.append({"name": f"{name}_{k + 1}", "runtime_ms": runtime, "output_bits": round(float(bits[k]))})
    return {"id": name, "layers": out}


def profiles():
    rng = np.random.default_rng(2024)
    comps = [component(rng, n, *spec) for n, spec in DNNS.items()]
    comps += [component(rng, n, *spec) for n, spec in SHARED.items()]
    dnns = [{"id": n, "stages": [n]} for n in DNNS]
    dnns += [
        {"id": "sdcnet", "stages": ["flownet2", "sdcnet_head"]},
        {"id": "rta", "stages": ["flownet2", "rta_head"]},
    ]
    return {"max_batch": MAX_BATCH, "components": comps, "dnns": dnns}


def lte_trace(seconds=1200):
    rng = np.random.default_rng(7)
    x = 12.0
    rows = []
    for t in range(seconds):
        x += rng.normal(0, 1.5) + 0.05 * (12.0 - x)
        x = min(max(x, 4.0), 20.0)
        rows.append((float(t), round(x, 3)))
    return rows


def main():
    with open("data/profiles/reference.json", "w") as f:
        json.dump(profiles(), f, indent=1)
        f.write("\n")
    with open("data/traces/lte.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["timestamp_s", "throughput_mbps"])
        w.writerows(lte_trace())


if __name__ == "__main__":
    main()
