//! Numerical checks of the lemmas behind the tail and distortion estimates,
//! and the log-log slope fitter.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::LsvMap;
use crate::random_system::{
    all_words, coding, count_a, cylinder_of, stream_rng, word_to_string, ParamsRecord, Symbol,
    SymbolString, SystemParams,
};
use crate::tower::{expectation_exact_profile, pure_backward, separation_time, x_n, x_prime_n, CodedPoint};

/// Contraction rate of the separation-time metric.
pub const THETA: f64 = 0.5;
/// Smallest `n` admitted by default fit windows.
pub const DEFAULT_FIT_MIN_N: f64 = 50.0;
/// Minimum number of points a fit accepts.
pub const MIN_FIT_POINTS: usize = 8;
/// Margin tolerance of the lemma checks.
pub const LEMMA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    pub n_points: usize,
}

impl PowerLawFit {
    /// `|exponent − target| ≤ tol`
    pub fn within(&self, target: f64, tol: f64) -> bool {
        (self.exponent - target).abs() <= tol
    }
}

/// Least-squares slope of `ln y` against `ln n` over points with `n` in
/// `window`. Points with `y ≤ 0` are dropped, and so are points with
/// `y < 3 se` when standard errors are given.
pub fn fit_power_law(ns: &[f64], values: &[f64], se: Option<&[f64]>, window: (f64, f64)) -> Result<PowerLawFit> {
    if ns.len() != values.len() || se.is_some_and(|s| s.len() != ns.len()) {
        return Err(Error::InvalidArgument("series lengths differ".into()));
    }
    if window.0.partial_cmp(&window.1) != Some(std::cmp::Ordering::Less) {
        return Err(Error::InvalidArgument(format!(
            "fit window ({}, {}) is empty",
            window.0, window.1
        )));
    }
    let pts: Vec<(f64, f64)> = (0..ns.len())
        .filter(|&k| ns[k] >= window.0 && ns[k] <= window.1 && ns[k] > 0.0)
        .filter(|&k| values[k] > 0.0 && values[k].is_finite())
        .filter(|&k| se.is_none_or(|s| values[k] >= 3.0 * s[k]))
        .map(|k| (ns[k].ln(), values[k].ln()))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientPoints {
            got: pts.len(),
            need: MIN_FIT_POINTS,
        });
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    Ok(PowerLawFit {
        exponent: slope,
        stderr: (ssr / (m - 2.0) / sxx).sqrt(),
        intercept,
        window,
        r_squared: if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 },
        n_points: pts.len(),
    })
}

/// `ln k!` for `k = 0..=n`.
#[derive(Debug, Clone)]
pub struct LnFactorials(Vec<f64>);

impl LnFactorials {
    pub fn new(n: usize) -> Self {
        let mut t = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        t.push(0.0);
        for k in 1..=n {
            acc += (k as f64).ln();
            t.push(acc);
        }
        LnFactorials(t)
    }

    pub fn ln_choose(&self, n: usize, k: usize) -> f64 {
        self.0[n] - self.0[k] - self.0[n - k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HoeffdingReport {
    pub n: usize,
    pub p0: f64,
    pub p1: f64,
    /// `p0 · n`
    pub k0: f64,
    /// `Pr{#A ≤ K0}` for `#A ~ Bin(n, p1)`
    pub exact_tail: f64,
    /// `exp(−2n(p1 − p0)²)`
    pub bound: f64,
    pub ln_exact_tail: f64,
    pub ln_bound: f64,
}

impl HoeffdingReport {
    /// Compared in log space, where neither side underflows.
    pub fn holds(&self) -> bool {
        self.ln_exact_tail <= self.ln_bound
    }

    /// `ln(bound) − ln(exact_tail)`
    pub fn log_margin(&self) -> f64 {
        self.ln_bound - self.ln_exact_tail
    }
}

/// Exact binomial lower tail next to the Hoeffding bound; needs `0 < p0 < p1 < 1`.
pub fn hoeffding_report(n: usize, p0: f64, p1: f64) -> Result<HoeffdingReport> {
    if !(p0 > 0.0 && p0 < p1 && p1 < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < p0 < p1 < 1, got p0 = {p0}, p1 = {p1}"
        )));
    }
    Ok(hoeffding_unchecked(n, p0, p1, &LnFactorials::new(n)))
}

/// Same as [`hoeffding_report`] without the parameter check (so that
/// `p0 ≥ p1` can serve as a negative control).
pub fn hoeffding_unchecked(n: usize, p0: f64, p1: f64, lf: &LnFactorials) -> HoeffdingReport {
    let p2 = 1.0 - p1;
    let k0 = p0 * n as f64;
    let kmax = ((k0 + 1e-9).floor() as usize).min(n);
    let logs: Vec<f64> = (0..=kmax)
        .map(|k| lf.ln_choose(n, k) + k as f64 * p1.ln() + (n - k) as f64 * p2.ln())
        .collect();
    let lmax = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled = neumaier_sum(logs.iter().map(|l| (l - lmax).exp()));
    let ln_exact_tail = lmax + scaled.ln();
    let ln_bound = -2.0 * n as f64 * (p1 - p0).powi(2);
    HoeffdingReport {
        n,
        p0,
        p1,
        k0,
        exact_tail: ln_exact_tail.exp(),
        bound: ln_bound.exp(),
        ln_exact_tail,
        ln_bound,
    }
}

fn neumaier_sum(it: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in it {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// The 5×5 grid of `(p0, p1)` pairs: `p1 ∈ {0.2, 0.35, 0.5, 0.65, 0.8}`,
/// `p0 = p1 · {0.1, 0.3, 0.5, 0.7, 0.9}`.
pub fn hoeffding_grid() -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(25);
    for p1 in [0.2, 0.35, 0.5, 0.65, 0.8] {
        for r in [0.1, 0.3, 0.5, 0.7, 0.9] {
            out.push((p1 * r, p1));
        }
    }
    out
}

/// Checks every `n ≤ n_max` on every `(p0, p1)` pair.
pub fn hoeffding_sweep(n_max: usize, grid: &[(f64, f64)]) -> LedgerEntry {
    let lf = LnFactorials::new(n_max);
    let reports: Vec<HoeffdingReport> = (1..=n_max)
        .into_par_iter()
        .flat_map_iter(|n| grid.iter().map(move |&(p0, p1)| (n, p0, p1)))
        .map(|(n, p0, p1)| hoeffding_unchecked(n, p0, p1, &lf))
        .collect();
    let worst = reports
        .iter()
        .min_by(|a, b| a.log_margin().total_cmp(&b.log_margin()));
    let violation = reports.iter().find(|r| !r.holds());
    LedgerEntry {
        check: "hoeffding".into(),
        params: None,
        n_cases: reports.len() as u64,
        worst_margin: worst.map_or(f64::INFINITY, HoeffdingReport::log_margin),
        pass: violation.is_none(),
        counterexample: violation.map(|r| format!("{r:?}")),
        note: Some(format!(
            "n = 1..={n_max}, {} (p0, p1) pairs; margin is ln(bound) - ln(exact)",
            grid.len()
        )),
    }
}

/// `DT^R_ω(x)`: product of the branch slopes along the orbit of `x` under
/// the first `word.len()` maps, which must be exactly the return time.
pub fn deriv_chain(word: &[Symbol], x: f64, p: &SystemParams) -> Result<f64> {
    if !(x > 0.5 && x <= 1.0) {
        return Err(Error::Domain {
            what: "x",
            value: x,
            domain: "(1/2, 1]",
        });
    }
    if word.is_empty() {
        return Err(Error::WordTooShort { len: 0, need: 1 });
    }
    let mut y = x;
    let mut d = 1.0;
    for (k, &s) in word.iter().enumerate() {
        if k > 0 && y > 0.5 {
            return Err(Error::InvalidArgument(format!(
                "orbit returned after {k} steps, word has {}",
                word.len()
            )));
        }
        let map = p.map(s);
        d *= map.slope(y);
        y = map.apply(y);
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistortionSample {
    pub i: usize,
    pub word: String,
    pub x1: f64,
    pub x2: f64,
    /// `|DT^R(x1)/DT^R(x2) − 1|`
    pub ratio_minus_1: f64,
    /// separation time of the pair
    pub s: usize,
    /// `θ^{s−1}`, i.e. `θ` to the separation time of the images
    pub theta_pow_s: f64,
    /// `|ln ratio| / |T^R x1 − T^R x2|`
    pub log_ratio_over_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistortionReport {
    pub i_max: usize,
    pub pairs_per_cell: usize,
    pub seed: u64,
    pub samples: Vec<DistortionSample>,
    /// `max |ratio − 1| / θ^{s−1}` over all samples
    pub c_estimate: f64,
    /// the same maximum over the first half of each cell's pairs
    pub c_estimate_half: f64,
    /// `|c_estimate / c_estimate_half − 1|`
    pub c_relative_change: f64,
    /// `max |ln ratio| / |T^R x1 − T^R x2|`
    pub log_ratio_constant: f64,
    /// pairs with `|x1 − x2| > θ^s + 1e−12`
    pub contraction_violations: usize,
    /// largest spread of the ratio over three noise values in the same cylinder
    pub omega_spread: f64,
    /// pairs dropped because the separation time hit its cap
    pub skipped: usize,
}

impl DistortionReport {
    pub fn stable(&self, rel: f64) -> bool {
        self.c_estimate.is_finite() && self.c_relative_change < rel
    }
}

/// Returns at most this many times before a pair counts as inseparable.
pub const SEPARATION_CAP: usize = 200;
const CONTINUATION_LEN: usize = 20_000;

/// `true` when `|x1 − x2| ≤ θ^s` (within `1e−12`).
pub fn contraction_holds(x1: f64, x2: f64, s: usize) -> bool {
    (x1 - x2).abs() <= THETA.powi(s as i32) + 1e-12
}

/// Same-cell pairs across every base cell with return time `i ≤ i_max`.
///
/// Pairs are uniform in the cell's x-interval; the noise coordinate is the
/// cylinder midpoint, whose coding continues with the coding of `1/2`.
pub fn distortion_scan(p: &SystemParams, i_max: usize, pairs_per_cell: usize, seed: u64) -> Result<DistortionReport> {
    if !p.strict_regime() || p.beta().gamma() > 1.0 {
        return Err(Error::InvalidParams(
            "distortion scan needs the strict regime (beta <= 1)".into(),
        ));
    }
    if i_max == 0 || i_max > 20 || pairs_per_cell == 0 {
        return Err(Error::InvalidArgument(
            "need 1 <= i_max <= 20 and pairs_per_cell >= 1".into(),
        ));
    }
    let tail = coding(0.5, CONTINUATION_LEN, p)?;
    let cells: Vec<(usize, Vec<Symbol>)> = (1..=i_max)
        .flat_map(|i| all_words(i).map(move |w| (i, w)))
        .collect();

    struct CellOut {
        samples: Vec<(DistortionSample, bool)>,
        skipped: usize,
        violations: usize,
        spread: f64,
    }

    let outs: Vec<CellOut> = cells
        .par_iter()
        .enumerate()
        .map(|(idx, (i, w))| -> Result<CellOut> {
            let i = *i;
            let lo = x_prime_n(w, i, p)?;
            let hi = x_prime_n(w, i - 1, p)?;
            let mut full = w.clone();
            full.extend_from_slice(&tail);
            let mut rng = stream_rng(seed, idx as u64);
            let mut out = CellOut {
                samples: Vec::with_capacity(pairs_per_cell),
                skipped: 0,
                violations: 0,
                spread: 0.0,
            };
            let cyl = cylinder_of(&SymbolString::new(w.clone(), p), p);
            for k in 0..pairs_per_cell {
                let draw = |r: &mut rand_chacha::ChaCha8Rng| {
                    let u: f64 = r.random();
                    (hi - u * (hi - lo)).clamp(lo.next_up(), hi)
                };
                let x1 = draw(&mut rng);
                let x2 = draw(&mut rng);
                let z1 = CodedPoint { x: x1, word: full.clone() };
                let z2 = CodedPoint { x: x2, word: full.clone() };
                let s = match separation_time(&z1, &z2, p, SEPARATION_CAP) {
                    Ok(s) => s,
                    Err(Error::CapExceeded { .. }) | Err(Error::WordTooShort { .. }) => {
                        out.skipped += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                if s == 0 {
                    // rounding at a cell boundary
                    out.skipped += 1;
                    continue;
                }
                let d1 = deriv_chain(w, x1, p)?;
                let d2 = deriv_chain(w, x2, p)?;
                let ratio = d1 / d2;
                let y1 = w.iter().fold(x1, |y, &s| p.map(s).apply(y));
                let y2 = w.iter().fold(x2, |y, &s| p.map(s).apply(y));
                let gap = (y1 - y2).abs();
                if !contraction_holds(x1, x2, s) {
                    out.violations += 1;
                }
                if k == 0 {
                    for frac in [0.25, 0.75] {
                        let omega = cyl.lo + frac * cyl.width();
                        let wd = coding(omega, i, p)?;
                        let r = deriv_chain(&wd, x1, p)? / deriv_chain(&wd, x2, p)?;
                        out.spread = out.spread.max((r - ratio).abs());
                    }
                }
                let sample = DistortionSample {
                    i,
                    word: word_to_string(w),
                    x1,
                    x2,
                    ratio_minus_1: (ratio - 1.0).abs(),
                    s,
                    theta_pow_s: THETA.powi(s as i32 - 1),
                    log_ratio_over_gap: if gap > 0.0 { ratio.ln().abs() / gap } else { 0.0 },
                };
                out.samples.push((sample, k < pairs_per_cell.div_ceil(2)));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut samples = Vec::new();
    let (mut c_full, mut c_half, mut lrc, mut spread) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut skipped, mut violations) = (0, 0);
    for o in outs {
        skipped += o.skipped;
        violations += o.violations;
        spread = spread.max(o.spread);
        for (s, first_half) in o.samples {
            let c = s.ratio_minus_1 / s.theta_pow_s;
            c_full = c_full.max(c);
            if first_half {
                c_half = c_half.max(c);
            }
            lrc = lrc.max(s.log_ratio_over_gap);
            samples.push(s);
        }
    }
    Ok(DistortionReport {
        i_max,
        pairs_per_cell,
        seed,
        samples,
        c_estimate: c_full,
        c_estimate_half: c_half,
        c_relative_change: if c_half > 0.0 { (c_full / c_half - 1.0).abs() } else { 0.0 },
        log_ratio_constant: lrc,
        contraction_violations: violations,
        omega_spread: spread,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchwarzianReport {
    pub gamma: f64,
    pub n_points: usize,
    pub n_negative: usize,
    pub n_positive: usize,
    pub n_singular: usize,
    /// sign change on the left branch, located by bisection
    pub located_threshold: Option<f64>,
    pub closed_form_threshold: Option<f64>,
    pub right_branch_zero: bool,
    pub pass: bool,
}

/// Sign of the Schwarzian derivative on `n_points` interior grid points of
/// `(0, 1/2)`. For `γ ≤ 1` it must be negative throughout; for `γ > 1` the
/// sign change must sit within `1e−6` of the closed-form threshold.
pub fn schwarzian_scan(map: LsvMap, n_points: usize) -> SchwarzianReport {
    let xs: Vec<f64> = (1..=n_points)
        .map(|k| 0.5 * k as f64 / (n_points + 1) as f64)
        .collect();
    let signs: Vec<Option<f64>> = xs.iter().map(|&x| map.schwarzian(x).ok()).collect();
    let n_negative = signs.iter().filter(|s| s.is_some_and(|v| v < 0.0)).count();
    let n_positive = signs.iter().filter(|s| s.is_some_and(|v| v > 0.0)).count();
    let n_singular = signs.iter().filter(|s| s.is_none()).count();
    let located_threshold = (1..xs.len())
        .find(|&k| match (signs[k - 1], signs[k]) {
            (Some(a), Some(b)) => a > 0.0 && b <= 0.0,
            _ => false,
        })
        .map(|k| {
            let (mut lo, mut hi) = (xs[k - 1], xs[k]);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if map.schwarzian(mid).is_ok_and(|v| v > 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        });
    let closed_form_threshold = map.positive_schwarzian_threshold();
    let right_branch_zero = [0.5001, 0.6, 0.75, 0.9, 1.0]
        .iter()
        .all(|&x| map.schwarzian(x) == Ok(0.0));
    let pass = right_branch_zero
        && n_singular == 0
        && if map.gamma() <= 1.0 {
            n_positive == 0
        } else {
            match (located_threshold, closed_form_threshold) {
                (Some(a), Some(b)) => (a - b).abs() < 1e-6,
                _ => false,
            }
        };
    SchwarzianReport {
        gamma: map.gamma(),
        n_points,
        n_negative,
        n_positive,
        n_singular,
        located_threshold,
        closed_form_threshold,
        right_branch_zero,
        pass,
    }
}

/// One row of the machine-readable ledger.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub check: String,
    pub params: Option<ParamsRecord>,
    pub n_cases: u64,
    /// smallest slack seen; negative beyond the tolerance means a violation
    pub worst_margin: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ledger {
    pub entries: Vec<LedgerEntry>,
}

impl Ledger {
    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn get(&self, check: &str) -> Option<&LedgerEntry> {
        self.entries.iter().find(|e| e.check == check)
    }

    pub fn extend(&mut self, other: Ledger) {
        self.entries.extend(other.entries);
    }
}

#[derive(Default)]
struct Worst {
    n: u64,
    margin: f64,
    example: Option<String>,
}

impl Worst {
    fn new() -> Self {
        Worst {
            n: 0,
            margin: f64::INFINITY,
            example: None,
        }
    }

    fn see(&mut self, margin: f64, describe: impl FnOnce() -> String) {
        self.n += 1;
        if margin < self.margin {
            self.margin = margin;
            if margin < -LEMMA_TOL {
                self.example = Some(describe());
            }
        }
    }

    fn merge(mut self, other: Worst) -> Worst {
        self.n += other.n;
        if other.margin < self.margin {
            self.margin = other.margin;
            if other.example.is_some() {
                self.example = other.example;
            }
        }
        self
    }

    fn entry(self, check: &str, p: &SystemParams, note: Option<String>) -> LedgerEntry {
        LedgerEntry {
            check: check.into(),
            params: Some(p.record()),
            n_cases: self.n,
            worst_margin: self.margin,
            pass: self.margin >= -LEMMA_TOL,
            counterexample: self.example,
            note,
        }
    }
}

/// `T_α(x) ≥ T_β(x)` on `points` grid points of `[0, 1]`.
pub fn check_domination(p: &SystemParams, points: usize) -> LedgerEntry {
    let mut w = Worst::new();
    for k in 0..=points {
        let x = k as f64 / points as f64;
        let m = p.alpha().apply(x) - p.beta().apply(x);
        w.see(m, || format!("x = {x}: T_alpha = {}, T_beta = {}", p.alpha().apply(x), p.beta().apply(x)));
    }
    w.entry("domination", p, None)
}

/// `T_α(y) ≥ T_β(x)` for grid pairs `0 ≤ x ≤ y ≤ 1/2`.
pub fn check_corollary(p: &SystemParams, points: usize) -> LedgerEntry {
    let mut w = Worst::new();
    for j in 0..=points {
        let y = 0.5 * j as f64 / points as f64;
        let ty = p.alpha().apply(y);
        for k in 0..=j {
            let x = 0.5 * k as f64 / points as f64;
            w.see(ty - p.beta().apply(x), || format!("x = {x}, y = {y}"));
        }
    }
    w.entry("corollary", p, None)
}

/// Visits every node of the inverse-branch tree down to depth `depth - 1`;
/// the node at depth `d` reached by `word` is `x_{d+1}(word)` (the word is
/// stored with `s_0` last, which is how the fold applies it).
fn walk_tree(p: &SystemParams, depth: usize, visit: &(dyn Fn(usize, &[Symbol], f64) -> Worst + Sync)) -> Worst {
    fn rec(
        p: &SystemParams,
        depth: usize,
        path: &mut Vec<Symbol>,
        y: f64,
        visit: &(dyn Fn(usize, &[Symbol], f64) -> Worst + Sync),
        acc: Worst,
    ) -> Worst {
        let mut acc = acc.merge(visit(path.len() + 1, path, y));
        if path.len() + 1 < depth {
            for s in [Symbol::A, Symbol::B] {
                path.push(s);
                acc = rec(p, depth, path, p.map(s).inv_left(y), visit, acc);
                path.pop();
            }
        }
        acc
    }
    rec(p, depth, &mut Vec::new(), 0.5, visit, Worst::new())
}

fn word_from_path(path: &[Symbol]) -> Vec<Symbol> {
    path.iter().rev().copied().collect()
}

/// `x_n^α ≤ x_n(ω) ≤ x_n^β` for every word, `n ≤ depth`.
pub fn check_rough_bounds(p: &SystemParams, depth: usize) -> LedgerEntry {
    let xa = pure_backward(p.alpha(), depth.max(1));
    let xb = pure_backward(p.beta(), depth.max(1));
    let w = walk_tree(p, depth, &|n, path, x| {
        let mut w = Worst::new();
        w.see((x - xa[n - 1]).min(xb[n - 1] - x), || {
            format!(
                "n = {n}, word = {}: x_n = {x}, x_n^alpha = {}, x_n^beta = {}",
                word_to_string(&word_from_path(path)),
                xa[n - 1],
                xb[n - 1]
            )
        });
        w
    });
    w.entry("rough_bounds", p, Some(format!("exhaustive, n = 1..={depth}")))
}

/// The rough bounds on `samples` random words at each `n` in `ns`.
pub fn check_rough_bounds_sampled(p: &SystemParams, ns: &[usize], samples: usize, seed: u64) -> LedgerEntry {
    let n_top = ns.iter().copied().max().unwrap_or(1);
    let xa = pure_backward(p.alpha(), n_top);
    let xb = pure_backward(p.beta(), n_top);
    let w = ns
        .par_iter()
        .enumerate()
        .map(|(idx, &n)| {
            let mut rng = stream_rng(seed, idx as u64);
            let mut w = Worst::new();
            for _ in 0..samples {
                let word: Vec<Symbol> = (0..n.saturating_sub(1)).map(|_| p.draw(&mut rng)).collect();
                let x = x_n(&word, n, p).expect("word has n - 1 symbols");
                w.see((x - xa[n - 1]).min(xb[n - 1] - x), || {
                    format!("n = {n}, word = {}: x_n = {x}", word_to_string(&word))
                });
            }
            w
        })
        .reduce(Worst::new, Worst::merge);
    w.entry(
        "rough_bounds_sampled",
        p,
        Some(format!("{samples} words at each n in {ns:?}")),
    )
}

/// For every word of `n − 1` symbols, `n ≤ depth`, and every integer
/// `K0 ∈ [1, n − 1]`: whenever more than `K0` of the `n` symbols
/// `s_0 … s_{n−1}` can be `A` (the last one is unused by `x_n`), then
/// `x_n(ω) ≤ x^α_{K0}`.
pub fn check_k0(p: &SystemParams, depth: usize) -> LedgerEntry {
    check_k0_against(p, p.alpha(), depth)
}

/// [`check_k0`] with the bound taken from the pure orbit of `bound_map`.
pub fn check_k0_against(p: &SystemParams, bound_map: LsvMap, depth: usize) -> LedgerEntry {
    let xa = pure_backward(bound_map, depth.max(1));
    let w = walk_tree(p, depth, &|n, path, x| {
        let mut w = Worst::new();
        let a = count_a(path);
        for k0 in 1..n {
            if a + 1 > k0 {
                w.see(xa[k0 - 1] - x, || {
                    format!(
                        "n = {n}, K0 = {k0}, word = {}: x_n = {x} > x_K0^alpha = {}",
                        word_to_string(&word_from_path(path)),
                        xa[k0 - 1]
                    )
                });
            }
        }
        w
    });
    w.entry("k0", p, Some(format!("exhaustive, n = 1..={depth}, K0 = 1..n-1")))
}

/// Return times 1 and 2 both carry positive measure, so their gcd is 1.
pub fn check_aperiodicity(p: &SystemParams) -> LedgerEntry {
    let prof = expectation_exact_profile(2, p).expect("n = 2 is enumerable");
    let m1: f64 = 0.25;
    let m2 = 0.5 * (prof[0] - prof[1]);
    LedgerEntry {
        check: "aperiodicity".into(),
        params: Some(p.record()),
        n_cases: 2,
        worst_margin: m1.min(m2),
        pass: m1 > 0.0 && m2 > 0.0,
        counterexample: None,
        note: Some("measures of return-time cells i = 1, 2".into()),
    }
}

fn schwarzian_entry(p: &SystemParams, points: usize) -> LedgerEntry {
    let reports = [schwarzian_scan(p.alpha(), points), schwarzian_scan(p.beta(), points)];
    let worst = reports
        .iter()
        .map(|r| match (r.located_threshold, r.closed_form_threshold) {
            (Some(a), Some(b)) => -(a - b).abs(),
            _ => -(r.n_positive as f64),
        })
        .fold(0.0, f64::min);
    let failed = reports.iter().find(|r| !r.pass);
    LedgerEntry {
        check: "schwarzian".into(),
        params: Some(p.record()),
        n_cases: 2 * points as u64,
        worst_margin: worst,
        pass: failed.is_none(),
        counterexample: failed.map(|r| format!("{r:?}")),
        note: None,
    }
}

fn distortion_entry(p: &SystemParams, i_max: usize, pairs: usize, seed: u64) -> LedgerEntry {
    if !p.strict_regime() {
        return LedgerEntry {
            check: "distortion".into(),
            params: Some(p.record()),
            n_cases: 0,
            worst_margin: f64::INFINITY,
            pass: true,
            counterexample: None,
            note: Some("skipped: needs beta <= 1".into()),
        };
    }
    match distortion_scan(p, i_max, pairs, seed) {
        Ok(r) => {
            let pass = r.contraction_violations == 0 && r.stable(0.1);
            LedgerEntry {
                check: "distortion".into(),
                params: Some(p.record()),
                n_cases: r.samples.len() as u64,
                worst_margin: 0.1 - r.c_relative_change,
                pass,
                counterexample: (!pass).then(|| {
                    format!(
                        "C = {}, C(half) = {}, contraction violations = {}",
                        r.c_estimate, r.c_estimate_half, r.contraction_violations
                    )
                }),
                note: Some(format!(
                    "i <= {i_max}, {pairs} pairs per cell, C(F) ~ {:.6e}, skipped {}",
                    r.c_estimate, r.skipped
                )),
            }
        }
        Err(e) => LedgerEntry {
            check: "distortion".into(),
            params: Some(p.record()),
            n_cases: 0,
            worst_margin: f64::NEG_INFINITY,
            pass: false,
            counterexample: Some(e.to_string()),
            note: None,
        },
    }
}

/// Which checks [`run_suite`] performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Domination,
    Bounds,
    K0,
    Hoeffding,
    Distortion,
    Schwarzian,
    All,
}

/// Sizes used by [`run_suite`].
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub depth: usize,
    pub grid_points: usize,
    pub sampled_ns: Vec<usize>,
    pub sampled_words: usize,
    pub hoeffding_n_max: usize,
    pub distortion_i_max: usize,
    pub distortion_pairs: usize,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            depth: 12,
            grid_points: 10_000,
            sampled_ns: vec![16, 32, 64, 128, 256, 512],
            sampled_words: 10_000,
            hoeffding_n_max: 2000,
            distortion_i_max: 10,
            distortion_pairs: 2,
            seed: 0,
        }
    }
}

pub fn run_suite(p: &SystemParams, suite: Suite, cfg: &SuiteConfig) -> Ledger {
    use Suite::*;
    let want = |s: Suite| suite == All || suite == s;
    let mut entries = Vec::new();
    if want(Domination) {
        entries.push(check_domination(p, cfg.grid_points));
        entries.push(check_corollary(p, 200));
    }
    if want(Bounds) {
        entries.push(check_rough_bounds(p, cfg.depth));
        entries.push(check_rough_bounds_sampled(p, &cfg.sampled_ns, cfg.sampled_words, cfg.seed));
    }
    if want(K0) {
        entries.push(check_k0(p, cfg.depth));
    }
    if want(Hoeffding) {
        entries.push(hoeffding_sweep(cfg.hoeffding_n_max, &hoeffding_grid()));
    }
    if want(Distortion) {
        entries.push(distortion_entry(p, cfg.distortion_i_max, cfg.distortion_pairs, cfg.seed));
    }
    if want(Schwarzian) {
        entries.push(schwarzian_entry(p, 1000));
    }
    if suite == All {
        entries.push(check_aperiodicity(p));
    }
    Ledger { entries }
}

/// Domination, corollary, exhaustive rough bounds and `K0` to word length
/// `depth`, sampled rough bounds beyond, and aperiodicity.
pub fn lemma_suite(p: &SystemParams, depth: usize) -> Ledger {
    let cfg = SuiteConfig {
        depth,
        ..SuiteConfig::default()
    };
    let mut ledger = run_suite(p, Suite::Domination, &cfg);
    ledger.extend(run_suite(p, Suite::Bounds, &cfg));
    ledger.extend(run_suite(p, Suite::K0, &cfg));
    ledger.entries.push(check_aperiodicity(p));
    ledger
}
