#!/usr/bin/env python3
"""Run dcmg and recompute summary.json's trace metrics from trace.csv alone."""

import argparse
import csv
import json
import math
import subprocess
import sys
import tempfile
from pathlib import Path


def lsq_slope(ts, vs):
    n = len(ts)
    if n < 2:
        return 0.0
    st, sv = sum(ts), sum(vs)
    stt = sum(t * t for t in ts)
    stv = sum(t * v for t, v in zip(ts, vs))
    den = n * stt - st * st
    return (n * stv - st * sv) / den if den != 0 else 0.0


def metrics(path, v_ref, connected, rated):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    head, data = rows[0], [[float(x) for x in r] for r in rows[1:]]
    col = {name: k for k, name in enumerate(head)}
    t = [r[0] for r in data]
    t_end = t[-1]
    last_sec = [r[col["vavg"]] for r in data if r[0] >= t_end - 1 - 1e-9]
    final_apv = sum(last_sec) / len(last_sec)
    lo, hi = max(0.0, t_end - 4), t_end
    win = [r for r in data if lo - 1e-9 <= r[0] <= hi + 1e-9]
    slope = lsq_slope([r[0] for r in win], [r[col["vavg"]] for r in win])
    pu = [data[-1][col[f"I_{i + 1}"]] / rated[i] for i in range(len(rated)) if (i + 1) in connected]
    spread = max(pu) - min(pu) if pu else 0.0
    ind = [max(r[col[f"d_{i + 1}"]] for r in data) for i in range(len(rated))]
    ratio = 0.0
    for name, c in col.items():
        if name.startswith("r_"):
            cb = col["rbar_" + name[2:]]
            for r in data:
                if r[cb] > 0:
                    ratio = max(ratio, abs(r[c]) / r[cb])
    cls = "ramp" if abs(slope) > 1e-3 else "constant" if abs(final_apv - v_ref) > 1e-3 else "none"
    return {
        "final_apv": final_apv,
        "steady_apvd": final_apv - v_ref,
        "apvd_slope": slope,
        "current_spread": spread,
        "max_residual_ratio": ratio,
        "max_indicator": ind,
        "classification": cls,
    }


def close(a, b, rel):
    return abs(a - b) <= rel * max(abs(a), abs(b)) + 1e-12


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("dcmg")
    ap.add_argument("--scenario", default="paper8-attack")
    ap.add_argument("--attack", default="set1")
    ap.add_argument("--t-end", default="12")
    ap.add_argument("--rel", type=float, default=1e-9)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "run"
        cmd = [args.dcmg, "run", "--scenario", args.scenario, "--t-end", args.t_end, "--out", str(out)]
        if args.attack:
            cmd += ["--attack", args.attack]
        subprocess.run(cmd, check=True, stdout=subprocess.DEVNULL)
        summary = json.loads((out / "summary.json").read_text())
        want = summary["trace_metrics"]
        got = metrics(out / "trace.csv", summary["v_ref"], summary["connected"], summary["rated_current"])

    bad = []
    for key, val in got.items():
        ref = want[key]
        if isinstance(val, str):
            ok = val == ref
        elif isinstance(val, list):
            ok = len(val) == len(ref) and all(close(a, b, args.rel) for a, b in zip(val, ref))
        else:
            ok = close(val, ref, args.rel) and math.isfinite(val)
        print(f"{'ok  ' if ok else 'FAIL'} {key}: csv {val} summary {ref}")
        if not ok:
            bad.append(key)
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
