//! Young tower over the base `Δ0 = (1/2, 1] × [0, 1)`.
//!
//! Backward orbits: `x_1(ω) = 1/2`, `x_n(ω) = T_{α(ω)}|_{[0,1/2]}^{-1}(x_{n-1}(φω))`,
//! so `x_n(ω)` folds the left inverses of the symbols `s_0 … s_{n-2}` over
//! `1/2`, with `s_0` applied last. The right-branch preimages are
//! `x'_0 = 1`, `x'_1 = 3/4` and `x'_n(ω) = (x_n(φω) + 1)/2`, which read the
//! symbols `s_1 … s_{n-1}`. A base point `(x, ω)` with `x ∈ J_i(ω) = (x'_i, x'_{i-1}]`
//! returns to the base after exactly `i` steps.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::LsvMap;
use crate::random_system::{
    all_words, coding, cylinder_of, stream_rng, Cylinder, SkewPoint, Symbol, SymbolString,
    SystemParams,
};

/// Largest `n` for which `E(x_n)` is computed by full enumeration of `2^{n-1}` words.
pub const N_ENUM: usize = 22;
/// Default Monte Carlo sample count beyond [`N_ENUM`].
pub const DEFAULT_MC_SAMPLES: usize = 100_000;

const MC_BATCH: usize = 1024;

#[inline]
fn fold_inverse(symbols: &[Symbol], p: &SystemParams) -> f64 {
    symbols
        .iter()
        .rev()
        .fold(0.5, |y, &s| p.map(s).inv_left(y))
}

/// `x_n(ω)` for the word `ω = s_0 s_1 …` (needs at least `n - 1` symbols).
pub fn x_n(word: &[Symbol], n: usize, p: &SystemParams) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("x_n is defined for n >= 1".into()));
    }
    if word.len() < n - 1 {
        return Err(Error::WordTooShort {
            len: word.len(),
            need: n - 1,
        });
    }
    Ok(fold_inverse(&word[..n - 1], p))
}

/// `x'_n(ω)` (needs at least `n` symbols for `n ≥ 2`).
pub fn x_prime_n(word: &[Symbol], n: usize, p: &SystemParams) -> Result<f64> {
    match n {
        0 => Ok(1.0),
        1 => Ok(0.75),
        _ => {
            if word.len() < n {
                return Err(Error::WordTooShort {
                    len: word.len(),
                    need: n,
                });
            }
            Ok(0.5 * (fold_inverse(&word[1..n], p) + 1.0))
        }
    }
}

/// Non-random backward iterates `x_1^γ, …, x_n^γ` of a single map.
pub fn pure_backward(map: LsvMap, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut x = 0.5;
    for _ in 0..n {
        out.push(x);
        x = map.inv_left(x);
    }
    out
}

/// The sequences `x_1(ω) … x_n(ω)` and `x'_0(ω) … x'_m(ω)` along one word.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardOrbit {
    pub word: SymbolString,
    /// `xs[k-1] = x_k(ω)`
    pub xs: Vec<f64>,
    /// `xps[k] = x'_k(ω)`, available for `k ≤ min(n, word length)`
    pub xps: Vec<f64>,
}

impl BackwardOrbit {
    pub fn x(&self, k: usize) -> f64 {
        self.xs[k - 1]
    }

    pub fn x_prime(&self, k: usize) -> f64 {
        self.xps[k]
    }
}

/// Backward orbit to depth `n`; costs `O(n²)` inversions.
pub fn random_backward(word: &SymbolString, n: usize, p: &SystemParams) -> Result<BackwardOrbit> {
    let w = word.symbols();
    let xs = (1..=n).map(|k| x_n(w, k, p)).collect::<Result<Vec<_>>>()?;
    let m = n.min(w.len()).max(1);
    let xps = (0..=m).map(|k| x_prime_n(w, k, p)).collect::<Result<Vec<_>>>()?;
    Ok(BackwardOrbit {
        word: word.clone(),
        xs,
        xps,
    })
}

/// Exact `E(x_1), …, E(x_{n_max})` by enumerating every word.
///
/// The words are walked as a binary tree rooted at `1/2` whose children apply
/// the two left inverses; since the symbols are i.i.d., the level-`d` nodes
/// carry exactly the law of `x_{d+1}`.
pub fn expectation_exact_profile(n_max: usize, p: &SystemParams) -> Result<Vec<f64>> {
    if n_max > N_ENUM {
        return Err(Error::EnumerationLimit {
            n: n_max,
            limit: N_ENUM,
        });
    }
    if n_max == 0 {
        return Ok(Vec::new());
    }
    const SPLIT: usize = 6;
    let split = SPLIT.min(n_max - 1);
    let partials: Vec<Vec<f64>> = (0..1u64 << split)
        .into_par_iter()
        .map(|idx| {
            let mut sums = vec![0.0; n_max];
            let mut y = 0.5;
            let mut w = 1.0;
            // the root path to this subtree
            for d in 0..split {
                let s = if (idx >> (split - 1 - d)) & 1 == 0 {
                    Symbol::A
                } else {
                    Symbol::B
                };
                y = p.map(s).inv_left(y);
                w *= p.prob(s);
            }
            descend(y, w, split, n_max, p, &mut sums);
            sums
        })
        .collect();
    let mut total = vec![0.0; n_max];
    for part in &partials {
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    // levels above the split are not covered by the subtrees
    let mut level: Vec<(f64, f64)> = vec![(0.5, 1.0)];
    for t in total.iter_mut().take(split) {
        *t = level.iter().map(|(y, w)| y * w).sum();
        level = level
            .iter()
            .flat_map(|&(y, w)| {
                [Symbol::A, Symbol::B].map(|s| (p.map(s).inv_left(y), w * p.prob(s)))
            })
            .collect();
    }
    Ok(total)
}

fn descend(y: f64, w: f64, depth: usize, n_max: usize, p: &SystemParams, sums: &mut [f64]) {
    sums[depth] += w * y;
    if depth + 1 < n_max {
        for s in [Symbol::A, Symbol::B] {
            descend(p.map(s).inv_left(y), w * p.prob(s), depth + 1, n_max, p, sums);
        }
    }
}

/// Exact `E(x_n)`; refuses `n > N_ENUM`.
pub fn expectation_exact(n: usize, p: &SystemParams) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    Ok(expectation_exact_profile(n, p)?[n - 1])
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
}

#[derive(Clone)]
struct Moments {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn merge(&mut self, other: &Moments) {
        let n = self.count + other.count;
        for k in 0..self.mean.len() {
            let delta = other.mean[k] - self.mean[k];
            self.mean[k] += delta * other.count / n;
            self.m2[k] += other.m2[k] + delta * delta * self.count * other.count / n;
        }
        self.count = n;
    }
}

/// Monte Carlo estimates of `E(x_1), …, E(x_{n_max})` from `samples` paths.
///
/// Reversing an i.i.d. word does not change its law, so the forward chain
/// `y_1 = 1/2`, `y_{k+1} = T_{s_k}|^{-1}(y_k)` has `y_k ~ x_k` for every `k`;
/// one pass of `n_max - 1` inversions per path serves the whole profile.
/// Paths are grouped in fixed-size batches with their own random stream and
/// merged in batch order, so the result does not depend on the thread count.
pub fn expectation_mc_profile(
    n_max: usize,
    samples: usize,
    seed: u64,
    p: &SystemParams,
) -> Vec<McEstimate> {
    if n_max == 0 || samples == 0 {
        return Vec::new();
    }
    let batches = samples.div_ceil(MC_BATCH);
    let parts: Vec<Moments> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let size = MC_BATCH.min(samples - b * MC_BATCH);
            let mut rng = stream_rng(seed, b as u64);
            let mut y = vec![0.5; size];
            let mut mean = vec![0.0; n_max];
            let mut m2 = vec![0.0; n_max];
            mean[0] = 0.5;
            for k in 1..n_max {
                for v in y.iter_mut() {
                    *v = p.map(p.draw(&mut rng)).inv_left(*v);
                }
                let mu = y.iter().sum::<f64>() / size as f64;
                mean[k] = mu;
                m2[k] = y.iter().map(|v| (v - mu) * (v - mu)).sum();
            }
            Moments {
                count: size as f64,
                mean,
                m2,
            }
        })
        .collect();
    let mut acc = parts[0].clone();
    for part in &parts[1..] {
        acc.merge(part);
    }
    let n = acc.count;
    acc.mean
        .iter()
        .zip(&acc.m2)
        .map(|(&mean, &m2)| McEstimate {
            mean,
            se: if n > 1.0 {
                (m2 / (n - 1.0) / n).sqrt()
            } else {
                0.0
            },
        })
        .collect()
}

/// Monte Carlo estimate of `E(x_n)`.
pub fn expectation_mc(n: usize, samples: usize, seed: u64, p: &SystemParams) -> Result<McEstimate> {
    if n == 0 || samples == 0 {
        return Err(Error::InvalidArgument("need n >= 1 and samples >= 1".into()));
    }
    Ok(expectation_mc_profile(n, samples, seed, p)[n - 1])
}

/// `E(x_k)` for `k = 1..=n_max`: exact up to [`N_ENUM`], Monte Carlo beyond.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectationProfile {
    values: Vec<f64>,
    se: Vec<f64>,
    exact_upto: usize,
    pub samples: usize,
    pub seed: u64,
}

impl ExpectationProfile {
    pub fn hybrid(n_max: usize, samples: usize, seed: u64, p: &SystemParams) -> Result<Self> {
        let mc = if n_max > N_ENUM {
            expectation_mc_profile(n_max, samples, seed, p)
        } else {
            Vec::new()
        };
        Self::from_mc(n_max, &mc, samples, seed, p)
    }

    /// Combines exact enumeration with an existing Monte Carlo profile
    /// covering at least `n_max` terms (needed only beyond [`N_ENUM`]).
    pub fn from_mc(n_max: usize, mc: &[McEstimate], samples: usize, seed: u64, p: &SystemParams) -> Result<Self> {
        let exact_upto = n_max.min(N_ENUM);
        let mut values = expectation_exact_profile(exact_upto, p)?;
        let mut se = vec![0.0; exact_upto];
        if n_max > N_ENUM {
            if mc.len() < n_max {
                return Err(Error::InvalidArgument(
                    "Monte Carlo profile must be non-empty and cover n_max beyond the enumeration limit".into(),
                ));
            }
            for est in &mc[N_ENUM..n_max] {
                values.push(est.mean);
                se.push(est.se);
            }
        }
        Ok(ExpectationProfile {
            values,
            se,
            exact_upto,
            samples,
            seed,
        })
    }

    /// Largest `n` covered.
    pub fn n_max(&self) -> usize {
        self.values.len()
    }

    pub fn exact_upto(&self) -> usize {
        self.exact_upto
    }

    /// `E(x_n)`, `1 ≤ n ≤ n_max`.
    pub fn e(&self, n: usize) -> f64 {
        self.values[n - 1]
    }

    pub fn se(&self, n: usize) -> f64 {
        self.se[n - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(m × m)(Δ_{0,i}) = ½ [E(x_{i-1}) − E(x_i)]`, and `1/4` for `i = 1`.
    pub fn cell_measure(&self, i: usize) -> f64 {
        match i {
            0 => 0.0,
            1 => 0.25,
            _ => 0.5 * (self.e(i - 1) - self.e(i)),
        }
    }

    /// `Σ_{i ≤ i_max} i · (m × m)(Δ_{0,i})`, the truncated `∫ R d(m × m)`.
    pub fn mean_return_time(&self, i_max: usize) -> f64 {
        (1..=i_max.min(self.n_max()))
            .map(|i| i as f64 * self.cell_measure(i))
            .sum()
    }
}

/// `(m × m)(Δ_{0,i})` using exact expectations (`i ≤ N_ENUM + 1`) or the
/// default Monte Carlo estimator.
pub fn cell_measure(i: usize, p: &SystemParams) -> Result<f64> {
    if i == 0 {
        return Err(Error::InvalidArgument("return times start at 1".into()));
    }
    let profile = ExpectationProfile::hybrid(i.max(1), DEFAULT_MC_SAMPLES, 0, p)?;
    Ok(profile.cell_measure(i))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailMethod {
    ExactEnumeration,
    MonteCarlo,
    Hybrid,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailRow {
    pub n: usize,
    /// `½ Σ_{n < k ≤ k_max} E(x_k)`
    pub value: f64,
    pub k_max: usize,
    /// the stopping rule was met inside the available profile
    pub converged: bool,
    /// `½ Σ_{k > k_max} C k^{-1/β}`, an upper bound on the dropped terms
    pub remainder_bound: f64,
    /// `remainder_bound ≤ 1%` of `value`
    pub certified: bool,
}

/// `(m × m){R̂ > n}` over a grid of `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailTable {
    pub rows: Vec<TailRow>,
    pub method: TailMethod,
}

impl TailTable {
    pub fn ns(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.n as f64).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.value).collect()
    }

    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }
}

/// Relative size of the next term that stops the tail sum.
pub const TAIL_STOP_RATIO: f64 = 1e-4;
/// Minimum truncation point, as a multiple of `n`.
pub const TAIL_MIN_FACTOR: usize = 4;
/// Largest acceptable remainder bound, relative to the sum.
pub const TAIL_CERTIFY_RATIO: f64 = 0.01;

/// Tail table from an existing profile.
///
/// For each `n` the sum `½ Σ_{k>n} E(x_k)` stops at the first `K ≥ 4n` whose
/// next term is below `1e-4` of the running sum. The discarded terms are
/// bounded through `E(x_k) ≤ x_k^β ≤ C k^{-1/β}` with `C` taken from the
/// computed pure-β orbit; when this bound exceeds 1% of the sum the row is
/// marked uncertified (always so for `β ≥ 1`, where the bound diverges).
pub fn tail_from_profile(grid: &[usize], profile: &ExpectationProfile, p: &SystemParams) -> Result<TailTable> {
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("n-grid must be strictly increasing".into()));
    }
    let avail = profile.n_max();
    let beta = p.beta().gamma();
    let xb = pure_backward(p.beta(), avail.max(1));
    let c_beta = xb
        .iter()
        .enumerate()
        .map(|(i, x)| x * ((i + 1) as f64).powf(1.0 / beta))
        .fold(0.0, f64::max);
    let mut rows = Vec::with_capacity(grid.len());
    for &n in grid {
        let mut sum = 0.0;
        let mut k = n + 1;
        let mut converged = false;
        while k <= avail {
            sum += profile.e(k);
            if k >= TAIL_MIN_FACTOR * n && k < avail && profile.e(k + 1) < TAIL_STOP_RATIO * sum {
                converged = true;
                break;
            }
            k += 1;
        }
        let k_max = k.min(avail);
        let value = 0.5 * sum;
        let remainder_bound = if beta < 1.0 {
            0.5 * c_beta * (k_max as f64).powf(1.0 - 1.0 / beta) / (1.0 / beta - 1.0)
        } else {
            f64::INFINITY
        };
        rows.push(TailRow {
            n,
            value,
            k_max,
            converged,
            remainder_bound,
            certified: remainder_bound <= TAIL_CERTIFY_RATIO * value,
        });
    }
    let method = if avail <= profile.exact_upto() {
        TailMethod::ExactEnumeration
    } else if profile.exact_upto() == 0 {
        TailMethod::MonteCarlo
    } else {
        TailMethod::Hybrid
    };
    Ok(TailTable { rows, method })
}

/// `(m × m){R̂ > n}` over `grid`, growing the expectation profile (up to
/// `max_doublings` times from `4 · max(grid)`) until every row meets the
/// stopping rule.
pub fn tail_rhat(
    grid: &[usize],
    p: &SystemParams,
    samples: usize,
    seed: u64,
    max_doublings: u32,
) -> Result<(TailTable, ExpectationProfile)> {
    let top = *grid
        .last()
        .ok_or_else(|| Error::InvalidArgument("empty n-grid".into()))?;
    let mut k_cap = TAIL_MIN_FACTOR * top + 2;
    let mut doublings = 0;
    loop {
        let profile = ExpectationProfile::hybrid(k_cap, samples, seed, p)?;
        let table = tail_from_profile(grid, &profile, p)?;
        if table.all_converged() || doublings >= max_doublings {
            return Ok((table, profile));
        }
        k_cap *= 2;
        doublings += 1;
    }
}

/// A cell `Δ^j_{l,i}` of the tower: return time `i`, itinerary `word`, level `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerCell {
    pub i: usize,
    pub word: SymbolString,
    pub level: usize,
}

/// A base cell `Δ^j_{0,i} = J_i(ω) × cylinder(word)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseCell {
    pub cell: TowerCell,
    pub omega: Cylinder,
    /// `x'_i` (open end)
    pub x_lo: f64,
    /// `x'_{i-1}` (closed end)
    pub x_hi: f64,
}

impl BaseCell {
    pub fn measure(&self) -> f64 {
        self.omega.width() * (self.x_hi - self.x_lo)
    }
}

/// Every base cell with return time `i ≤ i_max`, ordered by `i` and then by
/// word (which is also the order of the ω-intervals).
pub fn base_partition(i_max: usize, p: &SystemParams) -> Result<Vec<BaseCell>> {
    if i_max == 0 || i_max > 24 {
        return Err(Error::InvalidArgument(format!("i_max = {i_max} outside 1..=24")));
    }
    let mut cells = Vec::new();
    for i in 1..=i_max {
        for w in all_words(i) {
            let x_lo = x_prime_n(&w, i, p)?;
            let x_hi = x_prime_n(&w, i - 1, p)?;
            let word = SymbolString::new(w, p);
            let omega = cylinder_of(&word, p);
            cells.push(BaseCell {
                cell: TowerCell { i, word, level: 0 },
                omega,
                x_lo,
                x_hi,
            });
        }
    }
    Ok(cells)
}

/// First return of `x ∈ (1/2, 1]` to `(1/2, 1]` driven by `word`; returns
/// the return time and the landing point.
pub fn first_return(x: f64, word: &[Symbol], p: &SystemParams, cap: usize) -> Result<(usize, f64)> {
    if !(x > 0.5 && x <= 1.0) {
        return Err(Error::Domain {
            what: "x",
            value: x,
            domain: "(1/2, 1]",
        });
    }
    let mut y = x;
    for (n, &s) in word.iter().enumerate().take(cap) {
        y = p.map(s).apply(y);
        if y > 0.5 {
            return Ok((n + 1, y));
        }
    }
    if word.len() < cap {
        Err(Error::WordTooShort {
            len: word.len(),
            need: word.len() + 1,
        })
    } else {
        Err(Error::CapExceeded {
            what: "return time",
            cap,
        })
    }
}

/// Return time of a base point under the floating-point skew map.
pub fn return_time(z: SkewPoint, p: &SystemParams, cap: usize) -> Result<usize> {
    if !(z.x > 0.5 && z.x <= 1.0) {
        return Err(Error::Domain {
            what: "x",
            value: z.x,
            domain: "(1/2, 1]",
        });
    }
    let mut cur = z;
    for n in 1..=cap {
        cur = crate::random_system::skew_step(cur, p)?;
        if cur.x > 0.5 {
            return Ok(n);
        }
    }
    Err(Error::CapExceeded {
        what: "return time",
        cap,
    })
}

/// The `i` with `x ∈ J_i(ω) = (x'_i, x'_{i-1}]`, found from the backward
/// orbit alone (no forward iteration).
pub fn bracket_index(x: f64, word: &[Symbol], p: &SystemParams, cap: usize) -> Result<usize> {
    if !(x > 0.5 && x <= 1.0) {
        return Err(Error::Domain {
            what: "x",
            value: x,
            domain: "(1/2, 1]",
        });
    }
    // x'_i is strictly decreasing in i, so "x'_i < x" is monotone
    let below = |i: usize| -> Result<bool> { Ok(x_prime_n(word, i, p)? < x) };
    if below(1)? {
        return Ok(1);
    }
    let mut lo = 1;
    let mut hi = 2;
    while !below(hi)? {
        lo = hi;
        hi *= 2;
        if hi > cap {
            if below(cap)? {
                hi = cap;
                break;
            }
            return Err(Error::CapExceeded {
                what: "return time",
                cap,
            });
        }
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if below(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// A base point with an explicit coding of its noise coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedPoint {
    pub x: f64,
    pub word: Vec<Symbol>,
}

impl CodedPoint {
    /// Codes `z.omega` to `depth` symbols by iterating `φ`.
    pub fn from_skew(z: SkewPoint, depth: usize, p: &SystemParams) -> Result<Self> {
        Ok(CodedPoint {
            x: z.x,
            word: coding(z.omega, depth, p)?,
        })
    }
}

/// Number of return-map iterations before two base points occupy different
/// cells `Δ^j_{0,i}`.
///
/// Points that stay together through `cap` returns give
/// [`Error::CapExceeded`]; codings that run out give [`Error::WordTooShort`].
pub fn separation_time(z1: &CodedPoint, z2: &CodedPoint, p: &SystemParams, cap: usize) -> Result<usize> {
    let (mut x1, mut x2) = (z1.x, z2.x);
    let (mut o1, mut o2) = (0usize, 0usize);
    for n in 0..cap {
        let w1 = &z1.word[o1.min(z1.word.len())..];
        let w2 = &z2.word[o2.min(z2.word.len())..];
        let (r1, y1) = first_return(x1, w1, p, usize::MAX)?;
        let (r2, y2) = first_return(x2, w2, p, usize::MAX)?;
        if r1 != r2 || w1[..r1] != w2[..r2] {
            return Ok(n);
        }
        x1 = y1;
        x2 = y2;
        o1 += r1;
        o2 += r2;
    }
    Err(Error::CapExceeded {
        what: "separation time",
        cap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random_system::parse_word;

    fn p06() -> SystemParams {
        SystemParams::strict(0.5, 0.7, 0.6).unwrap()
    }

    fn golden() -> f64 {
        (5f64.sqrt() - 1.0) / 4.0
    }

    #[test]
    fn pure_backward_examples() {
        let m1 = LsvMap::new(1.0).unwrap();
        let xs = pure_backward(m1, 2);
        assert_eq!(xs[0], 0.5);
        assert!((xs[1] - golden()).abs() < 1e-15);
        for g in [0.3, 0.9, 2.0] {
            assert_eq!(pure_backward(LsvMap::new(g).unwrap(), 1), vec![0.5]);
        }
        let xs = pure_backward(LsvMap::new(0.5).unwrap(), 200);
        assert!(xs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn random_backward_examples() {
        let p = SystemParams::new(1.0, 1.5, 0.6).unwrap();
        let w = SymbolString::new(parse_word("A").unwrap(), &p);
        let orbit = random_backward(&w, 2, &p).unwrap();
        assert!((orbit.x(2) - golden()).abs() < 1e-15);

        let p = p06();
        let xa = pure_backward(p.alpha(), 6);
        let xb = pure_backward(p.beta(), 6);
        let all_a = SymbolString::new(vec![Symbol::A; 5], &p);
        let all_b = SymbolString::new(vec![Symbol::B; 5], &p);
        assert_eq!(random_backward(&all_a, 6, &p).unwrap().xs, xa);
        assert_eq!(random_backward(&all_b, 6, &p).unwrap().xs, xb);

        let ab = x_n(&parse_word("AB").unwrap(), 3, &p).unwrap();
        let ba = x_n(&parse_word("BA").unwrap(), 3, &p).unwrap();
        assert_ne!(ab, ba);
        for v in [ab, ba] {
            assert!(v >= xa[2] && v <= xb[2]);
        }
        // s_0 is applied last
        let expect_ab = p.alpha().inv_left(p.beta().inv_left(0.5));
        assert_eq!(ab, expect_ab);
    }

    #[test]
    fn backward_orbit_invariants() {
        let p = p06();
        let w = SymbolString::new(parse_word("ABBAB").unwrap(), &p);
        let o = random_backward(&w, 5, &p).unwrap();
        assert_eq!(o.x(1), 0.5);
        assert!(o.xs.windows(2).all(|v| v[1] < v[0]));
        assert_eq!(o.x_prime(0), 1.0);
        assert_eq!(o.x_prime(1), 0.75);
        assert!(o.xps.windows(2).all(|v| v[1] < v[0]));
        let shifted = &w.symbols()[1..];
        for k in 2..=5 {
            let xs = x_n(shifted, k, &p).unwrap();
            assert_eq!(o.x_prime(k), 0.5 * (xs + 1.0));
        }
        assert!(matches!(
            x_n(&parse_word("AB").unwrap(), 5, &p),
            Err(Error::WordTooShort { .. })
        ));
    }

    #[test]
    fn exact_expectation_examples() {
        let p = SystemParams::strict(0.5, 1.0, 0.6).unwrap();
        assert_eq!(expectation_exact(1, &p).unwrap(), 0.5);
        // bisection oracle for the α = 1/2 inverse of 1/2
        let (mut lo, mut hi) = (0.0f64, 0.5f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * (1.0 + (2.0 * mid).sqrt()) < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let expect = 0.6 * lo + 0.4 * golden();
        assert!((expectation_exact(2, &p).unwrap() - expect).abs() < 1e-14);
        assert!(matches!(
            expectation_exact(N_ENUM + 1, &p),
            Err(Error::EnumerationLimit { .. })
        ));
    }

    #[test]
    fn exact_profile_matches_brute_force() {
        let p = p06();
        let prof = expectation_exact_profile(11, &p).unwrap();
        for n in 1..=11 {
            let brute: f64 = all_words(n - 1)
                .map(|w| {
                    let ws = SymbolString::new(w, &p);
                    ws.weight() * x_n(ws.symbols(), n, &p).unwrap()
                })
                .sum();
            assert!((prof[n - 1] - brute).abs() < 1e-14, "n = {n}");
        }
    }

    #[test]
    fn exact_profile_decreases() {
        let prof = expectation_exact_profile(N_ENUM, &p06()).unwrap();
        assert!(prof.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn mc_examples() {
        let p = p06();
        let e1 = expectation_mc(1, 1000, 1, &p).unwrap();
        assert_eq!(e1, McEstimate { mean: 0.5, se: 0.0 });
        let a = expectation_mc(10, 100_000, 5, &p).unwrap();
        let b = expectation_mc(10, 100_000, 5, &p).unwrap();
        assert_eq!(a, b);
        let exact = expectation_exact(10, &p).unwrap();
        assert!((a.mean - exact).abs() < 4.0 * a.se, "{a:?} vs {exact}");
    }

    #[test]
    fn mc_is_thread_count_independent() {
        let p = p06();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = pool.install(|| expectation_mc_profile(40, 5000, 9, &p));
        let b = expectation_mc_profile(40, 5000, 9, &p);
        assert_eq!(a, b);
    }

    #[test]
    fn cell_measures() {
        let p = p06();
        let prof = ExpectationProfile::hybrid(22, 0, 0, &p).unwrap();
        assert_eq!(prof.cell_measure(1), 0.25);
        assert!((prof.cell_measure(2) - 0.5 * (0.5 - prof.e(2))).abs() < 1e-16);
        let total: f64 = (1..=22).map(|i| prof.cell_measure(i)).sum();
        assert!((total - (0.5 - 0.5 * prof.e(22))).abs() < 1e-15);
        assert!(total < 0.5);
        assert_eq!(cell_measure(1, &p).unwrap(), 0.25);
    }

    #[test]
    fn base_partition_level_two() {
        let p = p06();
        let cells = base_partition(2, &p).unwrap();
        assert_eq!(cells.len(), 6);
        let i1: Vec<_> = cells.iter().filter(|c| c.cell.i == 1).collect();
        for c in &i1 {
            assert_eq!((c.x_lo, c.x_hi), (0.75, 1.0));
        }
        let los: Vec<f64> = cells[2..].iter().map(|c| c.omega.lo).collect();
        let his: Vec<f64> = cells[2..].iter().map(|c| c.omega.hi).collect();
        let expect_lo = [0.0, 0.36, 0.6, 0.84];
        let expect_hi = [0.36, 0.6, 0.84, 1.0];
        for k in 0..4 {
            assert!((los[k] - expect_lo[k]).abs() < 1e-15);
            assert!((his[k] - expect_hi[k]).abs() < 1e-15);
        }
        let total: f64 = cells.iter().map(BaseCell::measure).sum();
        assert!(total <= 0.5);
    }

    #[test]
    fn return_time_examples() {
        let p = p06();
        for w in [0.1, 0.5, 0.9] {
            assert_eq!(return_time(SkewPoint::new(0.8, w).unwrap(), &p, 100).unwrap(), 1);
        }
        let aa = parse_word("AA").unwrap();
        let omega = cylinder_of(&SymbolString::new(aa.clone(), &p), &p).midpoint();
        let z = SkewPoint::new(0.7, omega).unwrap();
        let coded = CodedPoint::from_skew(z, 40, &p).unwrap();
        let r = return_time(z, &p, 100).unwrap();
        assert_eq!(r, bracket_index(0.7, &coded.word, &p, 40).unwrap());

        let word = parse_word("BABA").unwrap();
        let x2 = x_prime_n(&word, 2, &p).unwrap();
        assert_eq!(first_return(x2 + 1e-9, &word, &p, 10).unwrap().0, 2);
        assert_eq!(bracket_index(x2 + 1e-9, &word, &p, 4).unwrap(), 2);
        assert!(return_time(SkewPoint::new(0.3, 0.2).unwrap(), &p, 10).is_err());
    }

    #[test]
    fn separation_examples() {
        let p = p06();
        let w = vec![Symbol::A; 40];
        let a = CodedPoint { x: 0.9, word: w.clone() };
        let b = CodedPoint { x: 0.6, word: w.clone() };
        assert_eq!(separation_time(&a, &b, &p, 10).unwrap(), 0);
        // same cell J_1, images 0.8 and 0.6 fall in different cells
        let a = CodedPoint { x: 0.9, word: w.clone() };
        let b = CodedPoint { x: 0.8, word: w.clone() };
        assert_eq!(separation_time(&a, &b, &p, 10).unwrap(), 1);
        let a = CodedPoint { x: 0.9, word: w.clone() };
        assert!(matches!(
            separation_time(&a, &a.clone(), &p, 5),
            Err(Error::CapExceeded { .. })
        ));
    }
}
