#!/usr/bin/env python3
"""End-to-end smoke test for the qoplab_py bindings.

Builds the extension with cargo, stages the shared object under an
importable name, and drives every exposed entry point once with known
answers. Exits nonzero on the first miss.
"""

import cmath
import json
import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def stage_extension():
    subprocess.run(["cargo", "build", "-p", "qoplab-py"], cwd=ROOT, check=True)
    lib = ROOT / "target" / "debug" / "libqoplab_py.so"
    if not lib.exists():
        lib = ROOT / "target" / "debug" / "libqoplab_py.dylib"
    stage = Path(tempfile.mkdtemp(prefix="qoplab-py-"))
    shutil.copy2(lib, stage / "qoplab_py.so")
    sys.path.insert(0, str(stage))


stage_extension()
import qoplab_py as qp  # noqa: E402

passed = 0


def ok(cond, msg):
    global passed
    if not cond:
        print(f"smoke FAIL: {msg}")
        sys.exit(1)
    passed += 1
    print(f"smoke ok: {msg}")


p = qp.BaxterParams(0.31, 0.77, 1.2 + 0.1j)
ok(abs(p.q - cmath.exp(0.62j)) < 1e-12, "q is exp(2i eta)")
ok(abs(p.z - cmath.exp(-2j * (0.77 + 0.31))) < 1e-12, "z is exp(-2i(v+eta))")
ok(abs(p.s0 - (1.2 + 0.1j)) < 1e-12, "s0 round-trips")
shifted = p.shifted(1)
ok(abs(shifted.v - (p.v - 2 * p.eta)) < 1e-12, "shift moves the spectral angle")

t = qp.transfer_matrix(2, p.q, 1 + 0j, p.z)
ok(t.charges() == [2, 0, -2], "sector charges descend in steps of two")
ok(t.basis(0) == ["+-", "-+"], "neutral basis ordering")
blk = t.scalar_block(0)
ok(len(blk) == 2 and len(blk[0]) == 2, "neutral transfer block is 2x2")

qe = qp.q_explicit(2, p)
qb = qp.baxter_q(2, p)
ok(
    abs(qb.scalar_block(0)[0][0] - cmath.exp(1j * p.v)) < 1e-12,
    "phase matrix diagonal carries exp(i v)",
)
ok(
    abs(qe.scalar_block(2)[0][0] - qb.scalar_block(2)[0][0] / p.s0) < 1e-12,
    "explicit form scales the top sector by s0^(-1)",
)

ok(qp.commutator_residual(t, qe, sectors=[0]) < 1e-9, "transfer and Q commute at charge zero")
qe2 = qp.q_explicit(2, qp.BaxterParams(0.31, -0.4, 0.8 - 0.2j))
ok(qp.commutator_residual(qe, qe2) < 1e-10, "explicit Q pair commutes in every sector")

residual, tol, passed_check = qp.check_tq_explicit(2, p, 0)
ok(passed_check and residual < tol == 1e-9, "two-term functional relation at charge zero")

ok(qp.yang_baxter_residual(1.3 + 0.2j, 0.7 - 0.1j, 1.1 + 0.05j) < 1e-12, "Yang-Baxter residual")

wedge_max, unreachable = qp.wedge_identity(4)
ok(wedge_max == 0 and unreachable == 2, "wedge identity exact with pinned census")

qg = qp.q_generic(2, 1.17 + 0.21j, 1 + 0j, 0.9 + 0.4j, 1.1 + 0.2j, 0.5 - 0.3j, 0.25 + 0.15j)
ok(qg.is_delta(0), "trace-built operator carries delta series")
entries = qg.delta_block(2)
ok(all(isinstance(k, int) for k, _ in entries[0][0]), "delta entries are (power, coeff) pairs")

a, b, fit_residual, order_gap = qp.fusion_fit(2, 1.21 + 0.34j, 1 + 0j, 0.8 + 0.3j)
ok(fit_residual < 1e-8 and order_gap < 1e-8, "fused two-term decomposition fits")
ok(abs(a) > 0 and abs(b) > 0, "both fusion coefficients participate")

report = json.loads(qp.run_suite("wedge", json.dumps({"n_sites": 4}), 7))
ok(report["overall"], "wedge suite report is satisfied")
names = [c["check"] for c in report["checks"]]
ok("wedge-reachability" in names, "suite report lists its checks")

cfg = {
    "n_sites": 2,
    "params": {
        "mode": "explicit",
        "sets": [{"eta": 0.3, "v": 0.7, "s0": [1.0, 0.0]}],
    },
}
dump = json.loads(qp.dump_operator("q-baxter", json.dumps(cfg), 0))
ok(dump["N"] == 2 and len(dump["sectors"]) == 3, "dump has every sector")
neutral = next(s for s in dump["sectors"] if s["n"] == 0)
want = cmath.exp(0.7j)
got = complex(*neutral["entries"][0])
ok(abs(got - want) < 1e-12, "dump entries match the phase matrix")

ok(json.loads(qe.to_json())["N"] == 2, "operator JSON round-trips")

try:
    qp.transfer_matrix(2, 1.1 + 0j, 1 + 0j, (1.1 + 0j) ** -2)
    ok(False, "pole must raise")
except RuntimeError:
    ok(True, "transfer pole raises RuntimeError")

try:
    qp.run_suite("no-such-suite", json.dumps({"n_sites": 2}))
    ok(False, "unknown suite must raise")
except ValueError:
    ok(True, "unknown suite raises ValueError")

print(f"smoke test passed ({passed} checks)")
