"""Build the bundled New England 39-bus / 10-generator reduced model.

The reduced network is derived here from the standard power-flow case
(MATPOWER ``case39`` tables, solved operating point) and the commonly
tabulated machine constants (inertia H on a 100 MVA base, transient
reactance x'd).  Steps:

1. bus admittance matrix with tap ratios and line charging;
2. loads converted to constant admittances at the solved voltages;
3. each generator represented by its internal EMF behind x'd;
4. Kron reduction onto the ten internal nodes;
5. lossless approximation ``B_kj = |Y_kj|`` and voltages ``|E'_k|``;
6. mechanical powers chosen so the internal power-flow angles are the
   equilibrium of the lossless model (balanced by construction).

Inertia ``m = 2H / (2 pi 60)`` and damping ``d = m`` (no damping data is
tabulated for this case).

Run: ``python scripts/build_new_england.py`` (rewrites the package data file).
"""

import json
from pathlib import Path

import numpy as np

BASE_MVA = 100.0
OMEGA_S = 2 * np.pi * 60

# bus_i, type, Pd, Qd, Vm, Va(deg)
BUS = np.array([
    [1, 1, 97.6, 44.2, 1.0393836, -13.536602],
    [2, 1, 0, 0, 1.0484941, -9.7852666],
    [3, 1, 322, 2.4, 1.0307077, -12.276384],
    [4, 1, 500, 184, 1.00446, -12.626734],
    [5, 1, 0, 0, 1.0060063, -11.192339],
    [6, 1, 0, 0, 1.0082256, -10.40833],
    [7, 1, 233.8, 84, 0.99839728, -12.755626],
    [8, 1, 522, 176.6, 0.99787232, -13.335844],
    [9, 1, 6.5, -66.6, 1.038332, -14.178442],
    [10, 1, 0, 0, 1.0178431, -8.170875],
    [11, 1, 0, 0, 1.0133858, -8.9369663],
    [12, 1, 8.53, 88, 1.000815, -8.9988236],
    [13, 1, 0, 0, 1.014923, -8.9299272],
    [14, 1, 0, 0, 1.012319, -10.715295],
    [15, 1, 320, 153, 1.0161854, -11.345399],
    [16, 1, 329, 32.3, 1.0325203, -10.033348],
    [17, 1, 0, 0, 1.0342365, -11.116436],
    [18, 1, 158, 30, 1.0315726, -11.986168],
    [19, 1, 0, 0, 1.0501068, -5.4100729],
    [20, 1, 680, 103, 0.99101054, -6.8211783],
    [21, 1, 274, 115, 1.0323192, -7.6287461],
    [22, 1, 0, 0, 1.0501427, -3.1831199],
    [23, 1, 247.5, 84.6, 1.0451451, -3.3812763],
    [24, 1, 308.6, -92.2, 1.038001, -9.9137585],
    [25, 1, 224, 47.2, 1.0576827, -8.3692354],
    [26, 1, 139, 17, 1.0525613, -9.4387696],
    [27, 1, 281, 75.5, 1.0383449, -11.362152],
    [28, 1, 206, 27.6, 1.0503737, -5.9283592],
    [29, 1, 283.5, 26.9, 1.0501149, -3.1698741],
    [30, 2, 0, 0, 1.0499, -7.3704746],
    [31, 3, 9.2, 4.6, 0.982, 0],
    [32, 2, 0, 0, 0.9841, -0.1884374],
    [33, 2, 0, 0, 0.9972, -0.19317445],
    [34, 2, 0, 0, 1.0123, -1.631119],
    [35, 2, 0, 0, 1.0494, 1.7765069],
    [36, 2, 0, 0, 1.0636, 4.4684374],
    [37, 2, 0, 0, 1.0275, -1.5828988],
    [38, 2, 0, 0, 1.0265, 3.8928177],
    [39, 2, 1104, 250, 1.03, -14.535256],
])

# bus, Pg, Qg, Vg
GEN = np.array([
    [30, 250, 161.762, 1.0499],
    [31, 677.871, 221.574, 0.982],
    [32, 650, 206.965, 0.9841],
    [33, 632, 108.293, 0.9972],
    [34, 508, 166.688, 1.0123],
    [35, 650, 210.661, 1.0494],
    [36, 560, 100.165, 1.0636],
    [37, 540, -1.36945, 1.0275],
    [38, 830, 21.7327, 1.0265],
    [39, 1000, 78.4674, 1.03],
])

# fbus, tbus, r, x, b, tap ratio (0 = none)
BRANCH = np.array([
    [1, 2, 0.0035, 0.0411, 0.6987, 0],
    [1, 39, 0.001, 0.025, 0.75, 0],
    [2, 3, 0.0013, 0.0151, 0.2572, 0],
    [2, 25, 0.007, 0.0086, 0.146, 0],
    [2, 30, 0, 0.0181, 0, 1.025],
    [3, 4, 0.0013, 0.0213, 0.2214, 0],
    [3, 18, 0.0011, 0.0133, 0.2138, 0],
    [4, 5, 0.0008, 0.0128, 0.1342, 0],
    [4, 14, 0.0008, 0.0129, 0.1382, 0],
    [5, 6, 0.0002, 0.0026, 0.0434, 0],
    [5, 8, 0.0008, 0.0112, 0.1476, 0],
    [6, 7, 0.0006, 0.0092, 0.113, 0],
    [6, 11, 0.0007, 0.0082, 0.1389, 0],
    [6, 31, 0, 0.025, 0, 1.07],
    [7, 8, 0.0004, 0.0046, 0.078, 0],
    [8, 9, 0.0023, 0.0363, 0.3804, 0],
    [9, 39, 0.001, 0.025, 1.2, 0],
    [10, 11, 0.0004, 0.0043, 0.0729, 0],
    [10, 13, 0.0004, 0.0043, 0.0729, 0],
    [10, 32, 0, 0.02, 0, 1.07],
    [12, 11, 0.0016, 0.0435, 0, 1.006],
    [12, 13, 0.0016, 0.0435, 0, 1.006],
    [13, 14, 0.0009, 0.0101, 0.1723, 0],
    [14, 15, 0.0018, 0.0217, 0.366, 0],
    [15, 16, 0.0009, 0.0094, 0.171, 0],
    [16, 17, 0.0007, 0.0089, 0.1342, 0],
    [16, 19, 0.0016, 0.0195, 0.304, 0],
    [16, 21, 0.0008, 0.0135, 0.2548, 0],
    [16, 24, 0.0003, 0.0059, 0.068, 0],
    [17, 18, 0.0007, 0.0082, 0.1319, 0],
    [17, 27, 0.0013, 0.0173, 0.3216, 0],
    [19, 20, 0.0007, 0.0138, 0, 1.06],
    [19, 33, 0.0007, 0.0142, 0, 1.07],
    [20, 34, 0.0009, 0.018, 0, 1.009],
    [21, 22, 0.0008, 0.014, 0.2565, 0],
    [22, 23, 0.0006, 0.0096, 0.1846, 0],
    [22, 35, 0, 0.0143, 0, 1.025],
    [23, 24, 0.0022, 0.035, 0.361, 0],
    [23, 36, 0.0005, 0.0272, 0, 1],
    [25, 26, 0.0032, 0.0323, 0.531, 0],
    [25, 37, 0.0006, 0.0232, 0, 1.025],
    [26, 27, 0.0014, 0.0147, 0.2396, 0],
    [26, 28, 0.0043, 0.0474, 0.7802, 0],
    [26, 29, 0.0057, 0.0625, 1.029, 0],
    [28, 29, 0.0014, 0.0151, 0.249, 0],
    [29, 38, 0.0008, 0.0156, 0, 1.025],
])

# generator bus, H (s, 100 MVA base), x'd (p.u.)
MACHINES = np.array([
    [30, 42.0, 0.031],
    [31, 30.3, 0.0697],
    [32, 35.8, 0.0531],
    [33, 28.6, 0.0436],
    [34, 26.0, 0.132],
    [35, 34.8, 0.050],
    [36, 26.4, 0.049],
    [37, 24.3, 0.057],
    [38, 34.5, 0.057],
    [39, 500.0, 0.006],
])


def bus_admittance():
    nb = BUS.shape[0]
    y = np.zeros((nb, nb), dtype=complex)
    for f, t, r, x, b, tap in BRANCH:
        f, t = int(f) - 1, int(t) - 1
        ys = 1.0 / complex(r, x)
        tau = tap if tap else 1.0
        y[f, f] += (ys + 0.5j * b) / tau**2
        y[t, t] += ys + 0.5j * b
        y[f, t] -= ys / tau
        y[t, f] -= ys / tau
    vm = BUS[:, 4]
    load = (BUS[:, 2] - 1j * BUS[:, 3]) / BASE_MVA
    y[np.diag_indices(nb)] += load / vm**2
    return y


def reduced_model():
    nb = BUS.shape[0]
    ng = GEN.shape[0]
    v = BUS[:, 4] * np.exp(1j * np.deg2rad(BUS[:, 5]))
    ybus = bus_admittance()
    gen_bus = GEN[:, 0].astype(int) - 1
    assert np.array_equal(gen_bus, MACHINES[:, 0].astype(int) - 1)
    xd = MACHINES[:, 2]
    s = (GEN[:, 1] + 1j * GEN[:, 2]) / BASE_MVA
    emf = v[gen_bus] + 1j * xd * np.conj(s / v[gen_bus])
    full = np.zeros((ng + nb, ng + nb), dtype=complex)
    full[ng:, ng:] = ybus
    for g in range(ng):
        yg = 1.0 / (1j * xd[g])
        b = ng + gen_bus[g]
        full[g, g] += yg
        full[b, b] += yg
        full[g, b] -= yg
        full[b, g] -= yg
    ygg, ygb, ybb = full[:ng, :ng], full[:ng, ng:], full[ng:, ng:]
    yred = ygg - ygb @ np.linalg.solve(ybb, ygb.T)
    return yred, emf


def build():
    yred, emf = reduced_model()
    ng = len(emf)
    bmag = np.abs(yred)
    volt = np.abs(emf)
    theta = np.angle(emf)
    power = np.array([
        sum(bmag[k, j] * volt[k] * volt[j] * np.sin(theta[k] - theta[j]) for j in range(ng) if j != k)
        for k in range(ng)
    ])
    power -= power.mean()  # removes float residue only
    m = 2 * MACHINES[:, 1] / OMEGA_S
    doc = {
        "name": "new_england_39",
        "generators": [
            {"id": k + 1, "m": round(float(m[k]), 8), "d": round(float(m[k]), 8),
             "v": round(float(volt[k]), 8), "p": float(power[k])}
            for k in range(ng)
        ],
        "infinite_bus": None,
        "edges": [
            {"k": k + 1, "j": j + 1, "b": round(float(bmag[k, j]), 8)}
            for k in range(ng) for j in range(k + 1, ng)
        ],
    }
    # keep the rounded powers exactly balanced
    total = sum(g["p"] for g in doc["generators"])
    doc["generators"][-1]["p"] -= total
    return doc


if __name__ == "__main__":
    out = Path(__file__).resolve().parents[1] / "src" / "gridlyap" / "data" / "new_england_39.json"
    out.write_text(json.dumps(build(), indent=1) + "\n")
    print(f"wrote {out}")
