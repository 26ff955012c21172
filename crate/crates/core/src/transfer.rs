//! Ulam discretization of the annealed transfer operator
//! `P_T = p1 P_{T_α} + p2 P_{T_β}`, its stationary density, correlation
//! sequences and the product-structure test for the skew-product density.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::LsvMap;
use crate::random_system::{stream_rng, Symbol, SystemParams};
use crate::tower::McEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Uniform,
    Geometric,
}

impl fmt::Display for GridKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridKind::Uniform => f.write_str("uniform"),
            GridKind::Geometric => f.write_str("geometric"),
        }
    }
}

/// Bins `B_k = [b_k, b_{k+1})` of `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionGrid {
    pub kind: GridKind,
    breakpoints: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
}

impl PartitionGrid {
    pub fn uniform(n_bins: usize) -> Result<Self> {
        if n_bins == 0 {
            return Err(Error::InvalidArgument("grid needs at least one bin".into()));
        }
        let breakpoints = (0..=n_bins).map(|k| k as f64 / n_bins as f64).collect();
        Ok(PartitionGrid {
            kind: GridKind::Uniform,
            breakpoints,
            exponent: None,
        })
    }

    /// `b_k = (k/N)^q`, refining towards the neutral fixed point.
    pub fn geometric(n_bins: usize, q: f64) -> Result<Self> {
        if n_bins == 0 {
            return Err(Error::InvalidArgument("grid needs at least one bin".into()));
        }
        if !(q >= 1.0 && q.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid exponent {q} must be >= 1")));
        }
        let mut breakpoints: Vec<f64> = (0..=n_bins)
            .map(|k| (k as f64 / n_bins as f64).powf(q))
            .collect();
        breakpoints[n_bins] = 1.0;
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "geometric grid too fine for double precision".into(),
            ));
        }
        Ok(PartitionGrid {
            kind: GridKind::Geometric,
            breakpoints,
            exponent: Some(q),
        })
    }

    /// Geometric grid with the exponent `max(2, 1/α)`.
    pub fn geometric_for(n_bins: usize, alpha: f64) -> Result<Self> {
        Self::geometric(n_bins, (1.0 / alpha).max(2.0))
    }

    pub fn n_bins(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn bin(&self, k: usize) -> (f64, f64) {
        (self.breakpoints[k], self.breakpoints[k + 1])
    }

    pub fn width(&self, k: usize) -> f64 {
        self.breakpoints[k + 1] - self.breakpoints[k]
    }

    pub fn widths(&self) -> Vec<f64> {
        self.breakpoints.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Index of the bin containing `x` (the last bin is closed).
    pub fn locate(&self, x: f64) -> usize {
        let k = self.breakpoints.partition_point(|&b| b <= x);
        k.saturating_sub(1).min(self.n_bins() - 1)
    }
}

/// Sparse row-stochastic matrix in CSR form, with its transpose for
/// gather-style products `m ↦ m M`.
#[derive(Debug, Clone, PartialEq)]
pub struct UlamMatrix {
    grid: PartitionGrid,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    t_ptr: Vec<usize>,
    t_rows: Vec<usize>,
    t_vals: Vec<f64>,
}

impl UlamMatrix {
    fn from_rows(grid: PartitionGrid, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        let mut counts = vec![0usize; n];
        for row in &rows {
            for &(j, v) in row {
                cols.push(j);
                vals.push(v);
                counts[j] += 1;
            }
            row_ptr.push(cols.len());
        }
        let mut t_ptr = vec![0usize; n + 1];
        for j in 0..n {
            t_ptr[j + 1] = t_ptr[j] + counts[j];
        }
        let mut fill = t_ptr.clone();
        let mut t_rows = vec![0usize; cols.len()];
        let mut t_vals = vec![0.0; cols.len()];
        for (i, row) in rows.iter().enumerate() {
            for &(j, v) in row {
                t_rows[fill[j]] = i;
                t_vals[fill[j]] = v;
                fill[j] += 1;
            }
        }
        UlamMatrix {
            grid,
            row_ptr,
            cols,
            vals,
            t_ptr,
            t_rows,
            t_vals,
        }
    }

    pub fn grid(&self) -> &PartitionGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Nonzero entries `(j, M_ij)` of row `i`, sorted by `j`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// `m ↦ m M` for a row vector of bin masses.
    pub fn push_forward(&self, m: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        self.push_forward_into(m, &mut out);
        out
    }

    fn push_forward_into(&self, m: &[f64], out: &mut [f64]) {
        out.par_iter_mut().with_min_len(512).enumerate().for_each(|(j, o)| {
            let r = self.t_ptr[j]..self.t_ptr[j + 1];
            *o = self.t_rows[r.clone()]
                .iter()
                .zip(&self.t_vals[r])
                .map(|(&i, &v)| m[i] * v)
                .sum();
        });
    }

    /// Dense copy, for small grids.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut d = vec![vec![0.0; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }
}

fn preimage_breakpoints(map: LsvMap, grid: &PartitionGrid) -> (Vec<f64>, Vec<f64>) {
    let b = grid.breakpoints();
    let left: Vec<f64> = b
        .par_iter()
        .map(|&y| if y == 0.0 { 0.0 } else { map.inv_left(y) })
        .collect();
    let right: Vec<f64> = b.iter().map(|&y| 0.5 * (y + 1.0)).collect();
    (left, right)
}

/// Adds `|[lo, hi] ∩ [pre_j, pre_{j+1}]|` to `acc[j]` for every `j`.
fn intersect_preimages(lo: f64, hi: f64, pre: &[f64], acc: &mut Vec<(usize, f64)>) {
    if hi <= lo {
        return;
    }
    let n = pre.len() - 1;
    let mut j = pre.partition_point(|&b| b <= lo).saturating_sub(1).min(n - 1);
    while j < n && pre[j] < hi {
        let len = hi.min(pre[j + 1]) - lo.max(pre[j]);
        if len > 0.0 {
            acc.push((j, len));
        }
        j += 1;
    }
}

fn merge_sorted(mut entries: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    entries.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
    for (j, v) in entries {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += v,
            _ => out.push((j, v)),
        }
    }
    out
}

fn ulam_rows(map: LsvMap, grid: &PartitionGrid) -> Vec<Vec<(usize, f64)>> {
    let (left, right) = preimage_breakpoints(map, grid);
    (0..grid.n_bins())
        .into_par_iter()
        .map(|i| {
            let (a, b) = grid.bin(i);
            let w = b - a;
            let mut acc = Vec::new();
            intersect_preimages(a, b.min(0.5), &left, &mut acc);
            intersect_preimages(a.max(0.5), b, &right, &mut acc);
            merge_sorted(acc)
                .into_iter()
                .map(|(j, len)| (j, len / w))
                .collect()
        })
        .collect()
}

/// Ulam matrix of a single map: `M_ij = m(B_i ∩ T_γ^{-1} B_j) / m(B_i)`,
/// from the exact preimages of the breakpoints under both branches.
pub fn ulam_matrix(map: LsvMap, grid: &PartitionGrid) -> UlamMatrix {
    UlamMatrix::from_rows(grid.clone(), ulam_rows(map, grid))
}

/// `p1 M_α + p2 M_β`.
pub fn annealed_matrix(p: &SystemParams, grid: &PartitionGrid) -> UlamMatrix {
    let ra = ulam_rows(p.alpha(), grid);
    let rb = ulam_rows(p.beta(), grid);
    let rows = ra
        .into_par_iter()
        .zip(rb)
        .map(|(a, b)| {
            let mut e: Vec<(usize, f64)> = a.into_iter().map(|(j, v)| (j, p.p1() * v)).collect();
            e.extend(b.into_iter().map(|(j, v)| (j, p.p2() * v)));
            merge_sorted(e)
        })
        .collect();
    UlamMatrix::from_rows(grid.clone(), rows)
}

/// Piecewise-constant density on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityVector {
    pub grid: PartitionGrid,
    pub values: Vec<f64>,
    /// `‖f M − f‖₁` at exit
    pub residual: f64,
    pub iterations: usize,
}

impl DensityVector {
    pub fn from_masses(grid: PartitionGrid, masses: &[f64]) -> Self {
        let total: f64 = masses.iter().sum();
        let values = masses
            .iter()
            .zip(grid.widths())
            .map(|(m, w)| m / total / w)
            .collect();
        DensityVector {
            grid,
            values,
            residual: f64::NAN,
            iterations: 0,
        }
    }

    pub fn masses(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(self.grid.widths())
            .map(|(f, w)| f * w)
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses().iter().sum()
    }

    /// `∫_0^eps f dm`, prorating the bin that straddles `eps`.
    pub fn mass_below(&self, eps: f64) -> f64 {
        (0..self.grid.n_bins())
            .map(|k| {
                let (a, b) = self.grid.bin(k);
                (eps.min(b) - a).max(0.0) * self.values[k]
            })
            .sum()
    }

    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        self.mass_below(hi) - self.mass_below(lo)
    }

    /// `∫ |f − g| dm` for densities on possibly different grids.
    pub fn l1_distance(&self, other: &DensityVector) -> f64 {
        let mut cuts: Vec<f64> = self
            .grid
            .breakpoints()
            .iter()
            .chain(other.grid.breakpoints())
            .copied()
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts.windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                let f = self.values[self.grid.locate(mid)];
                let g = other.values[other.grid.locate(mid)];
                (f - g).abs() * (w[1] - w[0])
            })
            .sum()
    }
}

/// Default fixed-point tolerance for [`stationary_density`].
pub const DEFAULT_DENSITY_TOL: f64 = 1e-10;
/// Default iteration cap for [`stationary_density`].
pub const DEFAULT_DENSITY_MAX_ITER: usize = 2_000_000;

/// Power iteration from the uniform density until `‖f M − f‖₁ < tol`.
pub fn stationary_density(m: &UlamMatrix, tol: f64, max_iter: usize) -> Result<DensityVector> {
    let grid = m.grid().clone();
    let mut mass = grid.widths();
    let mut next = vec![0.0; m.n()];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        m.push_forward_into(&mass, &mut next);
        let total: f64 = next.iter().sum();
        residual = next
            .iter()
            .zip(&mass)
            .map(|(a, b)| (a / total - b).abs())
            .sum();
        for (dst, v) in mass.iter_mut().zip(&next) {
            *dst = v / total;
        }
        if residual < tol {
            let mut d = DensityVector::from_masses(grid, &mass);
            d.residual = residual;
            d.iterations = it;
            return Ok(d);
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Regularity {
    Bounded,
    Holder { exponent: f64, constant: f64 },
}

type PointFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type BinFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A bounded observable on `[0, 1]` with its bin averages.
#[derive(Clone)]
pub struct Observable {
    name: String,
    eval: PointFn,
    average: BinFn,
    regularity: Regularity,
    sup_norm: f64,
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observable")
            .field("name", &self.name)
            .field("regularity", &self.regularity)
            .field("sup_norm", &self.sup_norm)
            .finish()
    }
}

impl Observable {
    /// `x ↦ x`
    pub fn identity() -> Self {
        Observable {
            name: "x".into(),
            eval: Arc::new(|x| x),
            average: Arc::new(|a, b| 0.5 * (a + b)),
            regularity: Regularity::Holder {
                exponent: 1.0,
                constant: 1.0,
            },
            sup_norm: 1.0,
        }
    }

    /// `x ↦ 1[1/2, 1](x)`
    pub fn indicator_right_half() -> Self {
        Observable {
            name: "indicator_right_half".into(),
            eval: Arc::new(|x| if x >= 0.5 { 1.0 } else { 0.0 }),
            average: Arc::new(|a, b| ((b - a.max(0.5)).max(0.0)) / (b - a)),
            regularity: Regularity::Bounded,
            sup_norm: 1.0,
        }
    }

    /// `x ↦ cos(2πx)`
    pub fn cos_2pi() -> Self {
        let tau = std::f64::consts::TAU;
        Observable {
            name: "cos2pi".into(),
            eval: Arc::new(move |x| (tau * x).cos()),
            average: Arc::new(move |a, b| ((tau * b).sin() - (tau * a).sin()) / (tau * (b - a))),
            regularity: Regularity::Holder {
                exponent: 1.0,
                constant: tau,
            },
            sup_norm: 1.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        Observable {
            name: format!("const({c})"),
            eval: Arc::new(move |_| c),
            average: Arc::new(move |_, _| c),
            regularity: Regularity::Holder {
                exponent: 1.0,
                constant: 0.0,
            },
            sup_norm: c.abs(),
        }
    }

    /// A user observable; bin averages use 3-point Gauss–Legendre.
    pub fn custom<F>(name: &str, f: F, regularity: Regularity, sup_norm: f64) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let f: PointFn = Arc::new(f);
        let g = f.clone();
        let average: BinFn = Arc::new(move |a, b| {
            let h = 0.5 * (b - a);
            let c = 0.5 * (a + b);
            let t = (0.6f64).sqrt() * h;
            (5.0 * g(c - t) + 8.0 * g(c) + 5.0 * g(c + t)) / 18.0
        });
        Observable {
            name: name.into(),
            eval: f,
            average,
            regularity,
            sup_norm,
        }
    }

    /// Built-in observable by name (`x`, `cos2pi`, `indicator_right_half`, `one`).
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "x" | "identity" => Ok(Self::identity()),
            "cos2pi" => Ok(Self::cos_2pi()),
            "indicator_right_half" | "indicator" => Ok(Self::indicator_right_half()),
            "one" | "const" => Ok(Self::constant(1.0)),
            _ => Err(Error::InvalidArgument(format!("unknown observable {name:?}"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn regularity(&self) -> Regularity {
        self.regularity
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn is_holder(&self) -> bool {
        matches!(self.regularity, Regularity::Holder { .. })
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn bin_average(&self, a: f64, b: f64) -> f64 {
        (self.average)(a, b)
    }

    pub fn bin_averages(&self, grid: &PartitionGrid) -> Vec<f64> {
        (0..grid.n_bins())
            .map(|k| {
                let (a, b) = grid.bin(k);
                self.bin_average(a, b)
            })
            .collect()
    }
}

/// `Cor_n = ⟨φ, Mⁿ(ψ f*)⟩ − ⟨φ, f*⟩⟨ψ, f*⟩` for `n = 0..=n_max`.
///
/// `ψ` must be Hölder unless `allow_irregular_psi` is set.
pub fn correlation_operator(
    m: &UlamMatrix,
    density: &DensityVector,
    phi: &Observable,
    psi: &Observable,
    n_max: usize,
    allow_irregular_psi: bool,
) -> Result<Vec<f64>> {
    if !psi.is_holder() && !allow_irregular_psi {
        return Err(Error::ObservableRejected(psi.name().into()));
    }
    if density.grid != *m.grid() {
        return Err(Error::InvalidArgument("density and matrix grids differ".into()));
    }
    let grid = m.grid();
    let mass = density.masses();
    let phi_bar = phi.bin_averages(grid);
    let psi_bar = psi.bin_averages(grid);
    let mean_phi: f64 = phi_bar.iter().zip(&mass).map(|(a, b)| a * b).sum();
    let mean_psi: f64 = psi_bar.iter().zip(&mass).map(|(a, b)| a * b).sum();
    let mut v: Vec<f64> = psi_bar.iter().zip(&mass).map(|(a, b)| a * b).collect();
    let mut next = vec![0.0; v.len()];
    let mut out = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            m.push_forward_into(&v, &mut next);
            std::mem::swap(&mut v, &mut next);
        }
        let pair: f64 = phi_bar.iter().zip(&v).map(|(a, b)| a * b).sum();
        out.push(pair - mean_phi * mean_psi);
    }
    Ok(out)
}

/// Settings of the Monte Carlo correlation estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McCorrelationConfig {
    pub chains: usize,
    pub pairs_per_chain: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for McCorrelationConfig {
    fn default() -> Self {
        McCorrelationConfig {
            chains: 64,
            pairs_per_chain: 100_000,
            burn_in: 10_000,
            seed: 0,
        }
    }
}

/// Annealed correlations from simulated random orbits.
///
/// Each chain starts from a uniform point, discards `burn_in` steps, then
/// collects `pairs_per_chain` lagged pairs `(ψ(x_t), φ(x_{t+n}))` along fresh
/// i.i.d. symbols. The means of `ψ(x_t)` and `φ(x_{t+n})` are pooled over all
/// chains, separately for each lag; the standard error treats chains as
/// independent replicates of the influence values `a_c − Ψ φ_c − Φ ψ_c`.
pub fn correlation_mc(
    p: &SystemParams,
    phi: &Observable,
    psi: &Observable,
    n_max: usize,
    cfg: &McCorrelationConfig,
) -> Result<Vec<McEstimate>> {
    if cfg.chains < 2 || cfg.pairs_per_chain == 0 {
        return Err(Error::InvalidArgument(
            "need at least 2 chains and 1 pair per chain".into(),
        ));
    }
    struct Chain {
        cross: Vec<f64>,
        phi: Vec<f64>,
        psi: f64,
    }
    let chains: Vec<Chain> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(cfg.seed, c as u64);
            let mut x: f64 = rng.random();
            for _ in 0..cfg.burn_in {
                x = p.map(p.draw(&mut rng)).apply(x);
            }
            let len = cfg.pairs_per_chain + n_max;
            let mut ring_psi = vec![0.0; n_max + 1];
            let mut cross = vec![0.0; n_max + 1];
            let mut s_phi = vec![0.0; n_max + 1];
            let mut s_psi = 0.0;
            for t in 0..len {
                let ph = phi.eval(x);
                let ps = psi.eval(x);
                if t < cfg.pairs_per_chain {
                    s_psi += ps;
                }
                ring_psi[t % (n_max + 1)] = ps;
                for n in 0..=n_max {
                    if t >= n && t - n < cfg.pairs_per_chain {
                        cross[n] += ph * ring_psi[(t - n) % (n_max + 1)];
                        s_phi[n] += ph;
                    }
                }
                x = p.map(p.draw(&mut rng)).apply(x);
            }
            let k = cfg.pairs_per_chain as f64;
            Chain {
                cross: cross.into_iter().map(|v| v / k).collect(),
                phi: s_phi.into_iter().map(|v| v / k).collect(),
                psi: s_psi / k,
            }
        })
        .collect();
    let nc = chains.len() as f64;
    let mean_psi = chains.iter().map(|c| c.psi).sum::<f64>() / nc;
    Ok((0..=n_max)
        .map(|n| {
            let mean_phi = chains.iter().map(|c| c.phi[n]).sum::<f64>() / nc;
            let a = chains.iter().map(|c| c.cross[n]).sum::<f64>() / nc;
            let infl: Vec<f64> = chains
                .iter()
                .map(|c| c.cross[n] - mean_psi * c.phi[n] - mean_phi * c.psi)
                .collect();
            let mu = infl.iter().sum::<f64>() / nc;
            let var = infl.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (nc - 1.0);
            McEstimate {
                mean: a - mean_phi * mean_psi,
                se: (var / nc).sqrt(),
            }
        })
        .collect())
}

/// Steps discarded before the product-structure histogram starts.
pub const PRODUCT_BURN_IN: usize = 10_000;

/// Summary of a 2-D `(x, ω)` histogram of one long skew-product orbit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductReport {
    pub orbit_len: usize,
    pub bins: usize,
    pub seed: u64,
    /// `Σ_k |h_ω(k) − 1/bins|`
    pub omega_marginal_l1: f64,
    /// max over ω-slices of the L¹ distance between the slice's conditional
    /// x-distribution and the pooled x-distribution
    pub max_slice_l1: f64,
    /// `1/√(orbit_len/bins)`
    pub fluctuation_scale: f64,
    /// `bins/√orbit_len`, the noise level of an L¹ distance between
    /// `bins`-bin histograms of `orbit_len/bins` points
    pub slice_fluctuation_scale: f64,
    pub total_mass: f64,
}

/// 2-D histogram of the skew orbit `(x_t, ω_t)`.
///
/// The x-coordinates are iterated forward from a uniform start; the noise
/// coordinates are rebuilt from the same symbol stream backwards,
/// `ω_t = lo(s_t) + p(s_t) ω_{t+1}`, so each `ω_t` carries the symbols
/// `s_t s_{t+1} …` exactly rather than a rounded forward iterate of `φ`.
pub fn product_structure_test(p: &SystemParams, orbit_len: usize, bins: usize, seed: u64) -> Result<ProductReport> {
    if orbit_len == 0 || bins == 0 {
        return Err(Error::InvalidArgument("orbit_len and bins must be positive".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let mut x: f64 = rng.random();
    for _ in 0..PRODUCT_BURN_IN {
        x = p.map(p.draw(&mut rng)).apply(x);
    }
    let mut symbols = Vec::with_capacity(orbit_len);
    let mut xbin = Vec::with_capacity(orbit_len);
    for _ in 0..orbit_len {
        let s = p.draw(&mut rng);
        symbols.push(s);
        xbin.push(((x * bins as f64) as usize).min(bins - 1) as u32);
        x = p.map(s).apply(x);
    }
    let mut hist = vec![0u64; bins * bins];
    let mut omega: f64 = rng.random();
    for t in (0..orbit_len).rev() {
        let (lo, hi) = match symbols[t] {
            Symbol::A => (0.0, p.p1()),
            Symbol::B => (p.p1(), 1.0),
        };
        omega = (lo + p.prob(symbols[t]) * omega).max(lo);
        if omega >= hi {
            omega = hi.next_down();
        }
        let ob = ((omega * bins as f64) as usize).min(bins - 1);
        hist[ob * bins + xbin[t] as usize] += 1;
    }
    let total = orbit_len as f64;
    let row_sums: Vec<f64> = hist
        .chunks(bins)
        .map(|r| r.iter().sum::<u64>() as f64)
        .collect();
    let mut pooled = vec![0.0; bins];
    for r in hist.chunks(bins) {
        for (acc, &c) in pooled.iter_mut().zip(r) {
            *acc += c as f64 / total;
        }
    }
    let omega_marginal_l1 = row_sums
        .iter()
        .map(|c| (c / total - 1.0 / bins as f64).abs())
        .sum();
    let max_slice_l1 = hist
        .chunks(bins)
        .zip(&row_sums)
        .filter(|(_, &n)| n > 0.0)
        .map(|(r, &n)| {
            r.iter()
                .zip(&pooled)
                .map(|(&c, q)| (c as f64 / n - q).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    Ok(ProductReport {
        orbit_len,
        bins,
        seed,
        omega_marginal_l1,
        max_slice_l1,
        fluctuation_scale: (bins as f64 / total).sqrt(),
        slice_fluctuation_scale: bins as f64 / total.sqrt(),
        total_mass: hist.iter().sum::<u64>() as f64 / total,
    })
}

/// Fitted exponent `a` of `f*(x) ≈ c x^{-a}` over bins inside `[x_lo, x_hi]`.
pub fn local_exponent_near_zero(density: &DensityVector, x_lo: f64, x_hi: f64) -> Result<crate::verify::PowerLawFit> {
    let grid = &density.grid;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 0..grid.n_bins() {
        let (a, b) = grid.bin(k);
        if a > 0.0 && a >= x_lo && b <= x_hi {
            xs.push((a * b).sqrt());
            ys.push(density.values[k]);
        }
    }
    crate::verify::fit_power_law(&xs, &ys, None, (x_lo, x_hi))
}
