"""Independent AC power-flow reference for the 39-bus fixture.

Solves the bus power balance in rectangular coordinates with
scipy.optimize.root and writes branch end flows (MW / Mvar) to
data/case39/reference_flows.csv. Run once; the output is committed.
"""
import csv
import sys
from pathlib import Path

import numpy as np
from scipy.optimize import root

BASE = 100.0


def read(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def main(case_dir: Path, out: Path):
    buses = read(case_dir / "bus.csv")
    branches = read(case_dir / "branch.csv")
    gens = read(case_dir / "gen.csv")
    ids = [int(b["id"]) for b in buses]
    pos = {b: i for i, b in enumerate(ids)}
    n = len(ids)

    y = np.zeros((n, n), complex)
    for br in branches:
        if int(br["status"]) == 0:
            continue
        f, t = pos[int(br["from"])], pos[int(br["to"])]
        ys = 1.0 / complex(float(br["r_pu"]), float(br["x_pu"]))
        half = 0.5j * float(br["b_ch_pu"])
        y[f, f] += ys + half
        y[t, t] += ys + half
        y[f, t] -= ys
        y[t, f] -= ys
    for i, b in enumerate(buses):
        y[i, i] += complex(float(b["g_sh"]), float(b["b_sh"]))

    p_spec = np.array([-float(b["p_load_mw"]) / BASE for b in buses])
    q_spec = np.array([-float(b["q_load_mvar"]) / BASE for b in buses])
    vset = np.array([float(b["v_mag"]) for b in buses])
    for g in gens:
        i = pos[int(g["bus"])]
        p_spec[i] += float(g["p_mw"]) / BASE
        vset[i] = float(g["v_set"])
    kind = [b["kind"] for b in buses]
    slack = kind.index("slack")

    def residual(x):
        e, f = x[:n], x[n:]
        v = e + 1j * f
        s = v * np.conj(y @ v)
        res = []
        for i in range(n):
            if i == slack:
                res += [e[i] - vset[i], f[i]]
            elif kind[i] == "PV":
                res += [s[i].real - p_spec[i], e[i] ** 2 + f[i] ** 2 - vset[i] ** 2]
            else:
                res += [s[i].real - p_spec[i], s[i].imag - q_spec[i]]
        return np.array(res)

    x0 = np.concatenate([vset * (np.array(kind) != "PQ") + (np.array(kind) == "PQ"), np.zeros(n)])
    sol = root(residual, x0, method="hybr", tol=1e-13)
    assert sol.success, sol.message
    assert np.max(np.abs(residual(sol.x))) < 1e-9
    v = sol.x[:n] + 1j * sol.x[n:]

    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["branch_id", "p_from_mw", "q_from_mvar", "p_to_mw", "q_to_mvar"])
        for br in branches:
            bid = int(br["id"])
            if int(br["status"]) == 0:
                w.writerow([bid, 0, 0, 0, 0])
                continue
            f, t = pos[int(br["from"])], pos[int(br["to"])]
            ys = 1.0 / complex(float(br["r_pu"]), float(br["x_pu"]))
            half = 0.5j * float(br["b_ch_pu"])
            i_f = (v[f] - v[t]) * ys + v[f] * half
            i_t = (v[t] - v[f]) * ys + v[t] * half
            s_f = v[f] * np.conj(i_f) * BASE
            s_t = v[t] * np.conj(i_t) * BASE
            w.writerow([bid, f"{s_f.real:.6f}", f"{s_f.imag:.6f}", f"{s_t.real:.6f}", f"{s_t.imag:.6f}"])


if __name__ == "__main__":
    root_dir = Path(__file__).resolve().parent.parent
    case = Path(sys.argv[1]) if len(sys.argv) > 1 else root_dir / "data" / "case39"
    main(case, case / "reference_flows.csv")
