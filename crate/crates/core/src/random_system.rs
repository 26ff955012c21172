//! The random map `{T_α, T_β; p1, p2}` and its skew-product representation
//! `S(x, ω) = (T_{α(ω)}(x), φ(ω))`.
//!
//! The noise coordinate `ω ∈ [0, 1)` is the real form of an i.i.d. word over
//! `{A, B}`: `A` is read on `[0, p1)` and selects `T_α`, `B` on `[p1, 1)`
//! selects `T_β`, and `φ` shifts the word.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::LsvMap;

/// Identifier of the random generator, written into every output file.
pub const RNG_ALGORITHM: &str = "chacha8/rand_chacha-0.9/seed_from_u64+set_stream";

/// A ChaCha8 stream: counter-based, so `(seed, stream)` fully determines it.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    alpha: LsvMap,
    beta: LsvMap,
    p1: f64,
    p2: f64,
    strict_regime: bool,
}

/// Plain-data view of [`SystemParams`] for serialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamsRecord {
    pub alpha: f64,
    pub beta: f64,
    pub p1: f64,
    pub p2: f64,
    pub strict_regime: bool,
}

impl SystemParams {
    /// Parameters for the probabilistic analysis: `0 < α < β < ∞`.
    pub fn new(alpha: f64, beta: f64, p1: f64) -> Result<Self> {
        Self::build(alpha, beta, p1, false)
    }

    /// Parameters with `0 < α < β ≤ 1`, where the correlation bounds apply.
    pub fn strict(alpha: f64, beta: f64, p1: f64) -> Result<Self> {
        Self::build(alpha, beta, p1, true)
    }

    /// `α = 0.5, β = 0.7, p1 = 0.6`.
    pub fn preset() -> Self {
        Self::strict(0.5, 0.7, 0.6).expect("preset parameters are valid")
    }

    fn build(alpha: f64, beta: f64, p1: f64, strict_regime: bool) -> Result<Self> {
        let a = LsvMap::new(alpha)?;
        let b = LsvMap::new(beta)?;
        if alpha >= beta {
            return Err(Error::InvalidParams(format!(
                "need alpha < beta, got alpha = {alpha}, beta = {beta}"
            )));
        }
        if strict_regime && beta > 1.0 {
            return Err(Error::InvalidParams(format!(
                "strict regime needs beta <= 1, got {beta}"
            )));
        }
        if !(p1 > 0.0 && p1 < 1.0) {
            return Err(Error::InvalidParams(format!("need p1 in (0, 1), got {p1}")));
        }
        Ok(SystemParams {
            alpha: a,
            beta: b,
            p1,
            p2: 1.0 - p1,
            strict_regime,
        })
    }

    /// The same system with the two maps exchanged, so that `A` selects the
    /// slower map. Breaks `α < β`; meant for negative controls only.
    pub fn swapped(&self) -> Self {
        SystemParams {
            alpha: self.beta,
            beta: self.alpha,
            ..*self
        }
    }

    pub fn alpha(&self) -> LsvMap {
        self.alpha
    }

    pub fn beta(&self) -> LsvMap {
        self.beta
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn p2(&self) -> f64 {
        self.p2
    }

    pub fn strict_regime(&self) -> bool {
        self.strict_regime
    }

    pub fn record(&self) -> ParamsRecord {
        ParamsRecord {
            alpha: self.alpha.gamma(),
            beta: self.beta.gamma(),
            p1: self.p1,
            p2: self.p2,
            strict_regime: self.strict_regime,
        }
    }

    /// Map selected by a symbol.
    #[inline]
    pub fn map(&self, s: Symbol) -> LsvMap {
        match s {
            Symbol::A => self.alpha,
            Symbol::B => self.beta,
        }
    }

    /// Probability of a symbol.
    #[inline]
    pub fn prob(&self, s: Symbol) -> f64 {
        match s {
            Symbol::A => self.p1,
            Symbol::B => self.p2,
        }
    }

    /// Draws one symbol: `A` with probability `p1`.
    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Symbol {
        if rng.random::<f64>() < self.p1 {
            Symbol::A
        } else {
            Symbol::B
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    /// apply `T_α`
    A,
    /// apply `T_β`
    B,
}

impl Symbol {
    pub fn as_char(self) -> char {
        match self {
            Symbol::A => 'A',
            Symbol::B => 'B',
        }
    }
}

/// Parses a word such as `"ABBA"`.
pub fn parse_word(s: &str) -> Result<Vec<Symbol>> {
    s.chars()
        .map(|c| match c {
            'A' | 'a' => Ok(Symbol::A),
            'B' | 'b' => Ok(Symbol::B),
            other => Err(Error::InvalidArgument(format!("bad symbol {other:?}"))),
        })
        .collect()
}

pub fn word_to_string(word: &[Symbol]) -> String {
    word.iter().map(|s| s.as_char()).collect()
}

/// Number of `A` symbols.
pub fn count_a(word: &[Symbol]) -> usize {
    word.iter().filter(|&&s| s == Symbol::A).count()
}

/// The `index`-th word of length `len` in lexicographic order (`A < B`).
pub fn word_from_index(index: u64, len: usize) -> Vec<Symbol> {
    (0..len)
        .map(|k| {
            if (index >> (len - 1 - k)) & 1 == 0 {
                Symbol::A
            } else {
                Symbol::B
            }
        })
        .collect()
}

/// All `2^len` words of length `len`, lexicographically.
pub fn all_words(len: usize) -> impl Iterator<Item = Vec<Symbol>> {
    assert!(len < 64, "word length {len} too large to enumerate");
    (0..1u64 << len).map(move |i| word_from_index(i, len))
}

/// A finite word with its probability `P^n_ω = p1^{#A} p2^{#B}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolString {
    symbols: Vec<Symbol>,
    weight: f64,
}

impl SymbolString {
    pub fn new(symbols: Vec<Symbol>, p: &SystemParams) -> Self {
        let a = count_a(&symbols);
        let b = symbols.len() - a;
        let weight = p.p1.powi(a as i32) * p.p2.powi(b as i32);
        SymbolString { symbols, weight }
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn count_a(&self) -> usize {
        count_a(&self.symbols)
    }
}

impl std::fmt::Display for SymbolString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&word_to_string(&self.symbols))
    }
}

/// A point of the skew-product space `[0, 1] × [0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SkewPoint {
    pub x: f64,
    pub omega: f64,
}

impl SkewPoint {
    pub fn new(x: f64, omega: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain {
                what: "x",
                value: x,
                domain: "[0, 1]",
            });
        }
        check_omega(omega)?;
        Ok(SkewPoint { x, omega })
    }
}

fn check_omega(omega: f64) -> Result<()> {
    if (0.0..1.0).contains(&omega) {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "omega",
            value: omega,
            domain: "[0, 1)",
        })
    }
}

/// `α(ω)` as a symbol; `ω = p1` belongs to `B`.
pub fn symbol_of(omega: f64, p: &SystemParams) -> Result<Symbol> {
    check_omega(omega)?;
    Ok(if omega < p.p1 { Symbol::A } else { Symbol::B })
}

/// The noise map `φ`: `ω/p1` on `[0, p1)`, `(ω - p1)/p2` on `[p1, 1)`.
pub fn noise_step(omega: f64, p: &SystemParams) -> Result<f64> {
    check_omega(omega)?;
    let next = if omega < p.p1 {
        omega / p.p1
    } else {
        (omega - p.p1) / p.p2
    };
    // rounding can push the image onto 1.0
    Ok(if next >= 1.0 { prev_below_one() } else { next })
}

fn prev_below_one() -> f64 {
    1.0 - f64::EPSILON / 2.0
}

/// One step of the skew product.
pub fn skew_step(z: SkewPoint, p: &SystemParams) -> Result<SkewPoint> {
    let s = symbol_of(z.omega, p)?;
    let x = p.map(s).eval(z.x)?;
    Ok(SkewPoint {
        x,
        omega: noise_step(z.omega, p)?,
    })
}

/// The orbit `z, S z, …, S^n z` under the literal floating-point skew map.
///
/// `φ` is expanding, so after a few dozen steps the ω-coordinate no longer
/// follows the true orbit of the initial ω; use [`symbolic_orbit`] for long
/// runs.
pub fn iterate(z: SkewPoint, n: usize, p: &SystemParams) -> Result<Vec<SkewPoint>> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(z);
    let mut cur = z;
    for _ in 0..n {
        cur = skew_step(cur, p)?;
        out.push(cur);
    }
    Ok(out)
}

/// Half-open interval `[lo, hi)` of the noise space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cylinder {
    pub lo: f64,
    pub hi: f64,
}

impl Cylinder {
    pub fn contains(&self, omega: f64) -> bool {
        omega >= self.lo && omega < self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Set of `ω` whose coding starts with `word`.
pub fn cylinder_of(word: &SymbolString, p: &SystemParams) -> Cylinder {
    let mut lo = 0.0;
    let mut width = 1.0;
    for &s in word.symbols() {
        if s == Symbol::B {
            lo += width * p.p1;
        }
        width *= p.prob(s);
    }
    Cylinder {
        lo,
        hi: lo + word.weight(),
    }
}

/// First `len` symbols of `ω`, read off by iterating `φ`.
pub fn coding(omega: f64, len: usize, p: &SystemParams) -> Result<Vec<Symbol>> {
    let mut out = Vec::with_capacity(len);
    let mut w = omega;
    for _ in 0..len {
        out.push(symbol_of(w, p)?);
        w = noise_step(w, p)?;
    }
    Ok(out)
}

/// An i.i.d. word of length `n`; reproducible for a fixed seed.
pub fn sample_symbols(seed: u64, n: usize, p: &SystemParams) -> SymbolString {
    let mut rng = stream_rng(seed, 0);
    let symbols = (0..n).map(|_| p.draw(&mut rng)).collect();
    SymbolString::new(symbols, p)
}

/// One row of a simulated skew orbit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitRow {
    pub x: f64,
    pub omega: f64,
    /// symbol read at this time, i.e. the map applied to reach the next row
    pub symbol: Symbol,
}

/// Skew orbit of length `steps + 1` driven by an i.i.d. symbol stream.
///
/// The symbols are drawn first; when `omega0` is given, the leading symbols
/// are its coding (as deep as double precision resolves it) and the ω-column
/// starts exactly at `omega0`. The remaining ω values are rebuilt backwards
/// through `ω_t = lo(s_t) + p(s_t) ω_{t+1}` from a uniform terminal value,
/// which is contracting and therefore stable, unlike forward iteration of `φ`.
pub fn symbolic_orbit(
    x0: f64,
    omega0: Option<f64>,
    steps: usize,
    seed: u64,
    p: &SystemParams,
) -> Result<Vec<OrbitRow>> {
    if !(0.0..=1.0).contains(&x0) {
        return Err(Error::Domain {
            what: "x0",
            value: x0,
            domain: "[0, 1]",
        });
    }
    let mut rng = stream_rng(seed, 0);
    let mut symbols = Vec::with_capacity(steps + 1);
    if let Some(w0) = omega0 {
        check_omega(w0)?;
        let mut w = w0;
        let mut width = 1.0f64;
        while symbols.len() < steps + 1 && width > f64::EPSILON {
            let s = symbol_of(w, p)?;
            width *= p.prob(s);
            symbols.push(s);
            w = noise_step(w, p)?;
        }
    }
    while symbols.len() < steps + 1 {
        symbols.push(p.draw(&mut rng));
    }
    let mut omegas = vec![0.0; steps + 1];
    let mut next: f64 = rng.random();
    for t in (0..=steps).rev() {
        let s = symbols[t];
        let (lo, hi) = match s {
            Symbol::A => (0.0, p.p1),
            Symbol::B => (p.p1, 1.0),
        };
        next = (lo + p.prob(s) * next).max(lo);
        if next >= hi {
            next = hi.next_down();
        }
        omegas[t] = next;
    }
    if let Some(w0) = omega0 {
        omegas[0] = w0;
    }
    let mut rows = Vec::with_capacity(steps + 1);
    let mut x = x0;
    for t in 0..=steps {
        rows.push(OrbitRow {
            x,
            omega: omegas[t],
            symbol: symbols[t],
        });
        x = p.map(symbols[t]).apply(x);
    }
    Ok(rows)
}
