"""Compare the numba kernels with the pure-numpy fallback.

Each backend runs in its own interpreter because the choice is made at import
time (DNSFP_DISABLE_NUMBA). Results are checked for equality across backends.

    python3 benchmarks/bench_backends.py [--apps 40] [--traces 20] [--repeats 3]
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import subprocess
import sys
import time

WORKER = r"""
import hashlib, json, sys, time
import numpy as np
from dnsfp import _accel
from dnsfp.distance import dl_distance_matrix_scaled
from dnsfp.features import BNR_POLICY, Attack, build_vocabulary, extract_matrix, sequence_codes
from dnsfp.forest import ForestParams, train_forest
from dnsfp.synth import generate_dataset, generate_profiles

apps, per_app, repeats = map(int, sys.argv[1:4])
ds = generate_dataset(generate_profiles(apps, 1), per_app, seed=2)
traces = list(ds)
labels = ds.labels
seqs = [np.asarray(sequence_codes(t, BNR_POLICY), np.int64) for t in traces]
vocab = build_vocabulary(traces, Attack.SEGRAM)
X = extract_matrix(traces, vocab)
params = ForestParams(n_trees=20, seed=5)

def timed(fn):
    fn()  # warm-up / JIT compile
    ts = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        ts.append(time.perf_counter() - t0)
    return min(ts), out

res = {"backend": "numba" if _accel.use_numba() else "numpy"}
t, (D, _) = timed(lambda: dl_distance_matrix_scaled(seqs[:50], seqs))
res["dl_matrix_s"] = t
res["dl_digest"] = hashlib.sha1(D.tobytes()).hexdigest()
t, model = timed(lambda: train_forest(X, labels, params, threads=1))
res["forest_train_s"] = t
t, proba = timed(lambda: model.predict_proba(X))
res["forest_predict_s"] = t
res["forest_digest"] = hashlib.sha1(model.threshold.tobytes() + model.feature.tobytes() + proba.tobytes()).hexdigest()
print(json.dumps(res))
"""


def run_backend(disable: bool, args) -> dict:
    env = dict(os.environ)
    if disable:
        env["DNSFP_DISABLE_NUMBA"] = "1"
    else:
        env.pop("DNSFP_DISABLE_NUMBA", None)
    out = subprocess.run([sys.executable, "-c", WORKER, str(args.apps), str(args.traces), str(args.repeats)],
                         env=env, check=True, capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--apps", type=int, default=40)
    ap.add_argument("--traces", type=int, default=20)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    nb = run_backend(False, args)
    npy = run_backend(True, args)
    print(f"{'kernel':<18}{'numba (s)':>12}{'numpy (s)':>12}{'speedup':>10}")
    for key in ("dl_matrix_s", "forest_train_s", "forest_predict_s"):
        print(f"{key[:-2]:<18}{nb[key]:>12.4f}{npy[key]:>12.4f}{npy[key] / nb[key]:>9.1f}x")
    same = nb["dl_digest"] == npy["dl_digest"] and nb["forest_digest"] == npy["forest_digest"]
    print("outputs identical:", "yes" if same else "NO")
    if nb["backend"] != "numba":
        print("note: numba not importable; both runs used numpy")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
