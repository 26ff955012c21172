use proptest::prelude::*;

use randlsv::maps::LsvMap;
use randlsv::random_system::{
    cylinder_of, iterate, skew_step, Symbol, SkewPoint, SymbolString, SystemParams,
};
use randlsv::tower::{
    base_partition, bracket_index, first_return, pure_backward, random_backward, return_time,
    x_n, x_prime_n,
};
use randlsv::transfer::{annealed_matrix, product_structure_test, ulam_matrix, PartitionGrid};
use randlsv::verify::{fit_power_law, hoeffding_report};

fn word_strategy(max_len: usize) -> impl Strategy<Value = Vec<Symbol>> {
    prop::collection::vec(prop_oneof![Just(Symbol::A), Just(Symbol::B)], 1..max_len)
}

fn strict_params() -> impl Strategy<Value = SystemParams> {
    (0.05f64..0.9, 0.05f64..0.95, 0.05f64..0.95).prop_map(|(a, gap, p1)| {
        let b = a + gap * (1.0 - a);
        SystemParams::strict(a, b.max(a + 1e-3).min(1.0), p1).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn left_inverse_round_trip(gamma in 0.01f64..4.0, y in 1e-12f64..=1.0) {
        let t = LsvMap::new(gamma).unwrap();
        let x = t.inv_left(y);
        prop_assert!((0.0..=0.5).contains(&x));
        prop_assert!((t.apply(x) - y).abs() <= 1e-12 * y.max(1e-300) + 1e-15);
    }

    #[test]
    fn slower_map_dominates(a in 0.01f64..3.0, d in 1e-3f64..2.0, x in 0.0f64..=1.0) {
        let ta = LsvMap::new(a).unwrap();
        let tb = LsvMap::new(a + d).unwrap();
        prop_assert!(ta.apply(x) >= tb.apply(x) - 1e-15);
        if x <= 0.5 {
            let y = x.max(1e-12);
            prop_assert!(ta.inv_left(y) <= tb.inv_left(y) + 1e-15);
        }
    }

    #[test]
    fn cylinders_split_into_children(p in strict_params(), w in word_strategy(30)) {
        let parent = cylinder_of(&SymbolString::new(w.clone(), &p), &p);
        let mut wa = w.clone();
        wa.push(Symbol::A);
        let mut wb = w;
        wb.push(Symbol::B);
        let ca = cylinder_of(&SymbolString::new(wa, &p), &p);
        let cb = cylinder_of(&SymbolString::new(wb, &p), &p);
        let scale = parent.width().max(1e-300);
        prop_assert!((ca.lo - parent.lo).abs() <= 1e-12 * scale + 1e-15);
        prop_assert!((ca.hi - cb.lo).abs() <= 1e-12 * scale + 1e-15);
        prop_assert!((cb.hi - parent.hi).abs() <= 1e-12 * scale + 1e-15);
    }

    #[test]
    fn ulam_rows_are_stochastic(gamma in 0.05f64..2.0, n in 2usize..300, p1 in 0.05f64..0.95) {
        let grid = PartitionGrid::uniform(n).unwrap();
        let m = ulam_matrix(LsvMap::new(gamma).unwrap(), &grid);
        for s in m.row_sums() {
            prop_assert!((s - 1.0).abs() < 1e-12, "row sum {s}");
        }
        let p = SystemParams::new(gamma, gamma + 0.3, p1).unwrap();
        let ma = annealed_matrix(&p, &grid);
        for s in ma.row_sums() {
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_orbits_decrease(p in strict_params(), seed in any::<u64>(), n in 2usize..400) {
        let word = randlsv::random_system::sample_symbols(seed, n, &p);
        let orbit = random_backward(&word, n, &p).unwrap();
        for k in 2..=n {
            prop_assert!(orbit.x(k) < orbit.x(k - 1));
            prop_assert!(orbit.x(k) > 0.0);
            prop_assert!(orbit.x_prime(k) <= orbit.x_prime(k - 1));
            prop_assert!(orbit.x_prime(k) >= 0.5);
        }
    }

    #[test]
    fn rough_bounds_hold_pathwise(p in strict_params(), w in word_strategy(60)) {
        let n = w.len() + 1;
        let xa = pure_backward(p.alpha(), n);
        let xb = pure_backward(p.beta(), n);
        let x = x_n(&w, n, &p).unwrap();
        prop_assert!(xa[n - 1] <= x * (1.0 + 1e-12) && x <= xb[n - 1] * (1.0 + 1e-12));
    }

    #[test]
    fn return_time_matches_bracket(p in strict_params(), x in 0.5001f64..=1.0, omega in 0.0f64..1.0) {
        let z = SkewPoint::new(x, omega).unwrap();
        let r = return_time(z, &p, 1_000_000).unwrap();
        let word = randlsv::random_system::coding(omega, r + 1, &p).unwrap();
        prop_assert_eq!(bracket_index(x, &word, &p, r + 1).unwrap(), r);
    }

    #[test]
    fn first_return_lands_in_right_half(p in strict_params(), w in word_strategy(12), u in 0.0f64..1.0) {
        let i = w.len();
        let lo = x_prime_n(&w, i, &p).unwrap();
        let hi = x_prime_n(&w, i - 1, &p).unwrap();
        let x = lo + (hi - lo) * (0.05 + 0.9 * u);
        prop_assume!(x > lo && x < hi);
        let (r, y) = first_return(x, &w, &p, i + 1).unwrap();
        prop_assert_eq!(r, i);
        prop_assert!(y > 0.5 && y <= 1.0);
    }

    #[test]
    fn hoeffding_never_violated(n in 1usize..600, a in 0.01f64..0.98, gap in 0.001f64..0.9) {
        let b = a + gap * (0.999 - a);
        prop_assume!(b > a && b < 1.0);
        let r = hoeffding_report(n, a, b).unwrap();
        prop_assert!(r.holds(), "{r:?}");
    }
}

fn rand_distr_normal<R: rand::Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[test]
fn fit_within_three_stderr_on_noisy_data() {
    let ns: Vec<f64> = (0..120).map(|k| 50.0 * 1.05f64.powi(k)).collect();
    for (seed, e) in [-0.5, -1.0, -2.0, -3.0].into_iter().enumerate() {
        let mut rng = randlsv::random_system::stream_rng(seed as u64, 0);
        let ys: Vec<f64> = ns
            .iter()
            .map(|n| 2.0 * n.powf(e) * (1.0 + 0.01 * rand_distr_normal(&mut rng)))
            .collect();
        let fit = fit_power_law(&ns, &ys, None, (50.0, 1e9)).unwrap();
        assert!((fit.exponent - e).abs() <= 3.0 * fit.stderr, "{fit:?} vs {e}");
    }
}

#[test]
fn induced_map_is_onto_on_each_cell() {
    let p = SystemParams::preset();
    for cell in base_partition(8, &p).unwrap() {
        let w = cell.cell.word.symbols();
        let i = cell.cell.i;
        let mut prev = 0.5;
        for k in 1..=16 {
            let x = cell.x_lo + (cell.x_hi - cell.x_lo) * (k as f64 / 17.0);
            let (r, y) = first_return(x, w, &p, i + 1).unwrap();
            assert_eq!(r, i, "cell {} word {}", i, cell.cell.word);
            assert!(y > prev, "return map not increasing on {}", cell.cell.word);
            prev = y;
        }
        let mut z = cell.x_lo;
        let mut z_hi = cell.x_hi;
        for s in &w[..i - 1] {
            z = p.map(*s).apply(z);
            z_hi = p.map(*s).apply(z_hi);
        }
        z = p.map(w[i - 1]).apply(z);
        assert!((z - 0.5).abs() < 1e-9, "{}: lower end maps to {z}", cell.cell.word);
        assert!(i == 1 || (z_hi - 0.5).abs() < 1e-9, "{}: upper end reaches {z_hi}", cell.cell.word);
    }
}

#[test]
fn base_partition_masses_add_up() {
    let p = SystemParams::preset();
    let total: f64 = base_partition(16, &p).unwrap().iter().map(|c| c.measure()).sum();
    let tail = randlsv::tower::expectation_exact(16, &p).unwrap();
    assert!((total + tail / 2.0 - 0.5).abs() < 1e-12, "total {total}");
}

#[test]
fn cell_measures_match_partition() {
    let p = SystemParams::strict(0.4, 0.8, 0.3).unwrap();
    let profile = randlsv::tower::ExpectationProfile::hybrid(13, 0, 0, &p).unwrap();
    let cells = base_partition(12, &p).unwrap();
    for i in 1..=12 {
        let direct: f64 = cells.iter().filter(|c| c.cell.i == i).map(|c| c.measure()).sum();
        assert!((direct - profile.cell_measure(i)).abs() < 1e-13, "i = {i}");
    }
}

#[test]
fn pure_backward_band() {
    for gamma in [0.3, 0.5, 0.9] {
        let xs = pure_backward(LsvMap::new(gamma).unwrap(), 10_000);
        let scaled: Vec<f64> = (100..=10_000)
            .map(|n| xs[n - 1] * (n as f64).powf(1.0 / gamma))
            .collect();
        let hi = scaled.iter().cloned().fold(f64::MIN, f64::max);
        let lo = scaled.iter().cloned().fold(f64::MAX, f64::min);
        assert!(hi / lo < 3.0, "gamma {gamma}: band ratio {}", hi / lo);
    }
}

#[test]
fn skew_orbit_stays_in_square() {
    let p = SystemParams::preset();
    let z0 = SkewPoint::new(0.3, 0.71).unwrap();
    for z in iterate(z0, 2000, &p).unwrap() {
        assert!((0.0..=1.0).contains(&z.x) && (0.0..1.0).contains(&z.omega));
    }
    let z1 = skew_step(z0, &p).unwrap();
    assert_eq!(z1.x, p.map(Symbol::B).apply(0.3));
}

#[test]
fn product_structure_is_flat() {
    let p = SystemParams::preset();
    let r = product_structure_test(&p, 2_000_000, 16, 5).unwrap();
    assert!((r.total_mass - 1.0).abs() < 1e-12);
    assert!(r.omega_marginal_l1 < 5.0 * r.fluctuation_scale, "{r:?}");
    assert!(r.max_slice_l1 < 5.0 * r.slice_fluctuation_scale, "{r:?}");
}
