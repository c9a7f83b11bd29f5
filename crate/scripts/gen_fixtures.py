"""Writes miniature benchmark files in the on-disk formats the loaders read.

Usage: python3 scripts/gen_fixtures.py [out_dir]
Default out_dir is crates/core/tests/fixtures. Output is deterministic.
"""

import csv
import os
import sys
from datetime import datetime, timedelta

import numpy as np

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
OUT = sys.argv[1] if len(sys.argv) > 1 else os.path.join(ROOT, "crates", "core", "tests", "fixtures")
rng = np.random.default_rng(7)


def mkdir(*parts):
    p = os.path.join(OUT, *parts)
    os.makedirs(p, exist_ok=True)
    return p


def swat():
    d = mkdir("swat")
    sensors = ["FIT101", "LIT101", "MV101", "P101"]
    start = datetime(2015, 12, 22, 16, 30)

    def write(name, rows, attack):
        with open(os.path.join(d, name), "w", newline="") as f:
            w = csv.writer(f)
            # The exports carry a grouping row above the real header.
            w.writerow([""] * (len(sensors) + 1) + [""])
            w.writerow([" Timestamp"] + sensors + ["Normal/Attack"])
            for t in range(rows):
                ts = (start + timedelta(seconds=t)).strftime(" %d/%m/%Y %I:%M:%S %p")
                vals = [f"{v:.6f}" for v in rng.normal(0.5, 0.1, len(sensors))]
                if t == 3:
                    vals[1] = ""
                label = "Normal"
                if attack and 10 <= t < 14:
                    label = "A ttack" if t == 12 else "Attack"
                w.writerow([ts] + vals + [label])

    write("SWaT_Dataset_Normal_v1.csv", 40, False)
    write("SWaT_Dataset_Attack_v0.csv", 30, True)


def wadi():
    d = mkdir("wadi")
    sensors = ["1_AIT_001_PV", "1_FIT_001_PV", "2_LT_002_PV", "2_P_003_STATUS"]
    prefix = "\\\\WIN-25J4RO10SBF\\LOG_DATA\\SUTD_WADI\\LOG_DATA\\"
    start = datetime(2017, 9, 25, 18, 0)

    def rows(n, label):
        out = []
        for t in range(n):
            now = start + timedelta(seconds=t)
            vals = [f"{v:.4f}" for v in rng.normal(10.0, 1.0, len(sensors))]
            vals[3] = ""  # column with no readings in the normal export
            row = [str(t + 1), now.strftime("%m/%d/%Y"), now.strftime("%I:%M:%S.000 %p")] + vals
            if label is not None:
                row.append(label(t))
            out.append(row)
        return out

    with open(os.path.join(d, "WADI_14days_new.csv"), "w", newline="") as f:
        f.write("Last 14 days of normal operation\n")
        f.write("Exported from historian\n")
        f.write("\n")
        w = csv.writer(f)
        w.writerow(["Row", "Date", "Time"] + [prefix + s for s in sensors])
        w.writerows(rows(36, None))

    def attack(t):
        return "-1" if 8 <= t < 12 else "1"

    with open(os.path.join(d, "WADI_attackdataLABLE.csv"), "w", newline="") as f:
        f.write("Attack data with labels\n")
        w = csv.writer(f)
        # Test columns come in a different order and without the prefix.
        order = [2, 0, 3, 1]
        w.writerow(["Row ", "Date ", "Time"] + [sensors[j] for j in order] + ["Attack LABLE (1:No Attack, -1:Attack)"])
        for r in rows(24, attack):
            vals = r[3:7]
            r[3:7] = [vals[j] for j in order]
            r[3 + order.index(3)] = "0"
            w.writerow(r)


def nasa(name, spacecraft, chans, width, f32):
    d = mkdir(name)
    mkdir(name, "train")
    mkdir(name, "test")
    seqs = {}
    for i, chan in enumerate(chans):
        dtype = np.float32 if f32 and i == 0 else np.float64
        tr = rng.uniform(-1, 1, (20 + i, width)).astype(dtype)
        te = rng.uniform(-1, 1, (15 + i, width)).astype(dtype)
        np.save(os.path.join(d, "train", f"{chan}.npy"), tr)
        np.save(os.path.join(d, "test", f"{chan}.npy"), te)
        seqs[chan] = [[2 + i, 5 + i]] if i != 1 else [[1, 2], [9, 11]]
    with open(os.path.join(d, "labeled_anomalies.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["chan_id", "spacecraft", "anomaly_sequences", "class", "num_values"])
        for chan in reversed(chans):
            w.writerow([chan, spacecraft, str(seqs[chan]), "[point]", 15])
        # A channel of the other spacecraft must be ignored.
        w.writerow(["X-99", "OTHER", "[[0, 1]]", "[point]", 15])


def smd():
    d = mkdir("smd")
    for sub in ("train", "test", "test_label"):
        mkdir("smd", sub)
    width = 6
    tr = rng.uniform(0, 1, (30, width))
    te = rng.uniform(0, 1, (25, width))
    lab = np.zeros(25, dtype=int)
    lab[7:11] = 1
    for sub, arr in (("train", tr), ("test", te)):
        with open(os.path.join(d, sub, "machine-1-1.txt"), "w") as f:
            for row in arr:
                f.write(",".join(f"{v:.6f}" for v in row) + "\n")
    with open(os.path.join(d, "test_label", "machine-1-1.txt"), "w") as f:
        f.write("\n".join(str(v) for v in lab) + "\n")


if __name__ == "__main__":
    swat()
    wadi()
    nasa("msl", "MSL", ["M-1", "C-1", "T-4"], 3, True)
    nasa("smap", "SMAP", ["P-1", "A-2"], 2, False)
    smd()
    print(f"fixtures written to {OUT}")
