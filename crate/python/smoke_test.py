"""Quick check that the extension module imports and agrees with known values."""

import math

import randlsv


def main():
    t = randlsv.LsvMap(0.5)
    assert t(0.25) == 0.25 * (1.0 + math.sqrt(0.5))
    assert abs(t(t.inv_left(0.3)) - 0.3) < 1e-14
    assert t(0.75) == 0.5

    p = randlsv.SystemParams.preset()
    assert (p.alpha, p.beta, p.p1) == (0.5, 0.7, 0.6)
    try:
        randlsv.SystemParams(0.8, 0.7, 0.5)
    except ValueError:
        pass
    else:
        raise AssertionError("alpha >= beta accepted")

    rows = randlsv.simulate(p, 0.3, 100, seed=1)
    assert len(rows) == 101 and rows[0][0] == 0.3

    xs, xps = randlsv.backward_orbit("ABBA", 5, p)
    assert all(a > b for a, b in zip(xs, xs[1:]))
    assert abs(randlsv.expectation_exact(1, p) - 0.5) < 1e-15

    values, se = randlsv.expectation_profile(200, p, samples=2000, seed=3)
    assert len(values) == 200 and se[0] == 0.0

    cells = randlsv.base_partition(2, p)
    assert len(cells) == 6

    h = randlsv.hoeffding(500, 0.3, 0.6)
    assert h["holds"] and h["exact_tail"] <= h["bound"]

    ns = [float(n) for n in range(10, 2000, 10)]
    fit = randlsv.fit_power_law(ns, [n ** -1.5 for n in ns], 50.0, 2000.0)
    assert abs(fit["exponent"] + 1.5) < 1e-9

    br, f, res = randlsv.stationary_density(p, 256)
    mass = sum((b - a) * v for a, b, v in zip(br, br[1:], f))
    assert abs(mass - 1.0) < 1e-12 and res < 1e-9

    cor = randlsv.correlation(p, 256, 10)
    assert len(cor) == 11 and cor[0] > 0.0

    ledger = randlsv.lemma_suite(p, depth=6)
    assert all(ok for _, ok, _, _ in ledger)

    print("smoke test passed:", len(ledger), "ledger rows, E x_200 =", values[-1])


if __name__ == "__main__":
    main()
