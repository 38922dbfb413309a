#!/usr/bin/env python3
"""Writes the synthetic KDD-format fixture corpus used by the test suite.

The records follow the 42-column layout of the KDD Cup 99 files (41
features plus a label ending in '.') but the values are drawn from
hand-made per-class profiles. Re-running with the same seed rewrites
byte-identical files.
"""
import argparse
import gzip
import pathlib

import numpy as np

SERVICES = ["http", "smtp", "ftp_data", "private", "ecr_i", "telnet", "domain_u", "snmp"]
FLAGS = ["SF", "S0", "REJ", "RSTO", "SH"]

# class -> (protocol, service, flag, duration, src_bytes, dst_bytes, count, srv_count,
#           serror, rerror, same_srv, logged_in, failed_logins, hot)
PROFILES = {
    "normal": ("tcp", "http", "SF", 2, 250, 3000, 8, 10, 0.01, 0.02, 0.95, 1, 0, 0),
    "smurf": ("icmp", "ecr_i", "SF", 0, 1030, 0, 500, 500, 0.0, 0.0, 1.0, 0, 0, 0),
    "neptune": ("tcp", "private", "S0", 0, 0, 0, 150, 12, 1.0, 0.0, 0.08, 0, 0, 0),
    "portsweep": ("tcp", "private", "REJ", 3, 1, 0, 2, 2, 0.0, 0.9, 0.5, 0, 0, 0),
    "satan": ("tcp", "private", "REJ", 0, 2, 0, 20, 3, 0.1, 0.8, 0.1, 0, 0, 0),
    "warezclient": ("tcp", "ftp_data", "SF", 400, 300000, 0, 2, 2, 0.0, 0.0, 1.0, 1, 0, 20),
    "buffer_overflow": ("tcp", "telnet", "SF", 150, 1500, 8000, 1, 1, 0.0, 0.0, 1.0, 1, 0, 2),
    "apache2": ("tcp", "http", "RSTO", 1, 54000, 8000, 2, 3, 0.0, 0.6, 1.0, 0, 0, 1),
    "mailbomb": ("tcp", "smtp", "SF", 0, 6000, 250, 160, 160, 0.0, 0.0, 1.0, 1, 0, 0),
    "processtable": ("tcp", "private", "SF", 1800, 0, 15, 30, 2, 0.0, 0.0, 0.07, 0, 0, 0),
    "mscan": ("tcp", "private", "SH", 0, 0, 0, 40, 1, 0.9, 0.05, 0.03, 0, 0, 0),
    "saint": ("tcp", "private", "REJ", 0, 0, 0, 150, 3, 0.02, 0.95, 0.02, 0, 0, 0),
    "guess_passwd": ("tcp", "telnet", "RSTO", 4, 125, 180, 1, 1, 0.0, 0.5, 1.0, 0, 1, 0),
    "snmpgetattack": ("udp", "snmp", "SF", 0, 105, 105, 120, 120, 0.0, 0.0, 1.0, 0, 0, 0),
    "snmpguess": ("udp", "snmp", "SF", 0, 40, 0, 300, 300, 0.0, 0.0, 1.0, 0, 0, 0),
}

TRAIN = {"normal": 1200, "smurf": 300, "neptune": 200, "portsweep": 60, "satan": 40,
         "warezclient": 40, "buffer_overflow": 5, "guess_passwd": 60}
TEST = {"normal": 500, "smurf": 100, "neptune": 80, "portsweep": 20, "buffer_overflow": 3,
        "apache2": 90, "mailbomb": 90, "processtable": 90, "mscan": 90, "saint": 90,
        "guess_passwd": 90, "snmpgetattack": 90, "snmpguess": 90}


def rate(rng, centre):
    return max(0.0, min(1.0, round(centre + float(rng.normal(0.0, 0.05)), 2)))


def count(rng, mean):
    return int(rng.poisson(mean)) if mean > 0 else 0


def record(rng, label):
    (proto, service, flag, dur, src, dst, cnt, srv, serr, rerr, same, logged, failed, hot) = PROFILES[label]
    if rng.random() < 0.1:
        service = SERVICES[rng.integers(len(SERVICES))]
    if rng.random() < 0.05:
        flag = FLAGS[rng.integers(len(FLAGS))]
    c = min(count(rng, cnt), 511)
    s = min(count(rng, srv), 511)
    host = min(count(rng, 40 + cnt / 2), 255)
    host_srv = min(count(rng, 30 + srv / 2), 255)
    v = [
        count(rng, dur), proto, service, flag, count(rng, src), count(rng, dst),
        0, int(rng.random() < 0.01), 0, count(rng, hot), count(rng, failed),
        int(rng.random() < 0.9) if logged else int(rng.random() < 0.05),
        count(rng, 0.1 * hot), 0, 0, 0, count(rng, 0.05), 0, count(rng, 0.02), 0, 0,
        int(service == "ftp_data" and rng.random() < 0.3),
        c, s, rate(rng, serr), rate(rng, serr), rate(rng, rerr), rate(rng, rerr),
        rate(rng, same), rate(rng, 1.0 - same if same < 0.5 else 0.03), rate(rng, 0.05),
        host, host_srv, rate(rng, same), rate(rng, 0.05), rate(rng, 0.1), rate(rng, 0.02),
        rate(rng, serr), rate(rng, serr), rate(rng, rerr), rate(rng, rerr),
    ]
    return ",".join(f"{x:.2f}" if isinstance(x, float) else str(x) for x in v) + f",{label}."


def write(path, rng, counts, compress):
    lines = [record(rng, label) for label, n in counts.items() for _ in range(n)]
    order = rng.permutation(len(lines))
    text = "\n".join(lines[i] for i in order) + "\n"
    if compress:
        with open(path, "wb") as raw, gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as gz:
            gz.write(text.encode())
    else:
        path.write_text(text)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="tests/fixtures", type=pathlib.Path)
    ap.add_argument("--seed", default=99, type=int)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    write(args.out / "kdd_train_fixture.gz", rng, TRAIN, compress=True)
    write(args.out / "kdd_test_fixture.txt", rng, TEST, compress=False)


if __name__ == "__main__":
    main()
