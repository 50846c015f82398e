//! Kinetic equations on a truncated uniform energy grid.
//!
//! Densities live at cell centers `x_k = (k + ½)h`. Sums of two centers fall
//! on `s_m = (m + 1)h`, so the self-convolution is evaluated there and the
//! gain integral `∫_x^∞ C(s)/s ds` becomes a tail sum over `m >= k`. With
//! this layout the discrete gain conserves mass and energy exactly up to
//! truncation at `x_max`.

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::density::DensityFamily;
use crate::error::{Error, Result};
use crate::kernel::EnergySplit;
use crate::kinetics::{TypeId, TypeTable};
use crate::network::ReactionNetwork;
use crate::par::Execution;

/// Grids at least this large use the FFT under [`ConvolutionMethod::Auto`].
pub const FFT_THRESHOLD: usize = 256;

/// Cumulative clipped mass beyond which [`integrate`] gives up.
pub const CLIP_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub x_max: f64,
    pub n_cells: usize,
    /// One array of `n_cells` cell densities per type.
    pub values: Vec<Vec<f64>>,
}

impl DensityGrid {
    pub fn zeros(x_max: f64, n_cells: usize, types: usize) -> Result<Self> {
        if !(x_max > 0.0 && x_max.is_finite()) {
            return Err(Error::invalid("grid.x_max", "must be finite and > 0"));
        }
        if n_cells < 2 {
            return Err(Error::invalid("grid.n_cells", "must be >= 2"));
        }
        if types == 0 {
            return Err(Error::invalid("grid", "needs at least one type"));
        }
        Ok(DensityGrid {
            x_max,
            n_cells,
            values: vec![vec![0.0; n_cells]; types],
        })
    }

    /// Cell averages of `weight · density` per type, from CDF differences.
    /// `None` leaves a type empty.
    pub fn from_families(x_max: f64, n_cells: usize, species: &[Option<(f64, DensityFamily)>]) -> Result<Self> {
        let mut grid = DensityGrid::zeros(x_max, n_cells, species.len())?;
        let h = grid.h();
        for (v, sp) in species.iter().enumerate() {
            let Some((weight, family)) = sp else { continue };
            family.validate(&format!("grid.species[{v}]"))?;
            let mut lo = family.cdf(0.0);
            for k in 0..n_cells {
                let hi = family.cdf((k + 1) as f64 * h);
                grid.values[v][k] = weight * (hi - lo).max(0.0) / h;
                lo = hi;
            }
        }
        Ok(grid)
    }

    /// Point values `f(v, x_k)`.
    pub fn from_fn<F: Fn(usize, f64) -> f64>(x_max: f64, n_cells: usize, types: usize, f: F) -> Result<Self> {
        let mut grid = DensityGrid::zeros(x_max, n_cells, types)?;
        for v in 0..types {
            for k in 0..n_cells {
                grid.values[v][k] = f(v, grid.center(k));
            }
        }
        Ok(grid)
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.x_max / self.n_cells as f64
    }

    #[inline]
    pub fn center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.h()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|k| self.center(k)).collect()
    }

    pub fn types(&self) -> usize {
        self.values.len()
    }

    pub fn mass_of(&self, v: usize) -> f64 {
        self.values[v].iter().sum::<f64>() * self.h()
    }

    pub fn scale(&mut self, factor: f64) {
        for row in &mut self.values {
            for x in row {
                *x *= factor;
            }
        }
    }

    /// Piecewise-constant density of type index `v`, scaled to unit mass.
    pub fn family(&self, v: usize) -> Result<DensityFamily> {
        DensityFamily::tabulated_normalized(self.x_max, self.values[v].clone())
    }

    pub fn max_abs_diff(&self, other: &DensityGrid) -> f64 {
        self.values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if self.values.iter().any(|row| row.len() != self.n_cells) {
            return Err(Error::invalid(field, "every type needs n_cells values"));
        }
        if self.values.iter().flatten().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::invalid(field, "densities must be finite and >= 0"));
        }
        Ok(())
    }
}

/// `Σ_v Σ_k ρ_v(x_k) h`.
pub fn mass(grid: &DensityGrid) -> f64 {
    (0..grid.types()).map(|v| grid.mass_of(v)).sum()
}

/// `Σ_v Σ_k (I_v + x_k) ρ_v(x_k) h`.
pub fn mean_energy(grid: &DensityGrid, types: &TypeTable) -> f64 {
    let h = grid.h();
    grid.values
        .iter()
        .enumerate()
        .map(|(v, row)| {
            let internal = types.energy(TypeId::from_index(v));
            row.iter()
                .enumerate()
                .map(|(k, rho)| (internal + grid.center(k)) * rho * h)
                .sum::<f64>()
        })
        .sum()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvolutionMethod {
    #[default]
    Auto,
    Direct,
    Fft,
}

/// How reactant losses are computed in [`rhs_multitype`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossTerm {
    /// Only pairs with at least one feasible outcome are lost; matches the
    /// gain exactly, so mass is conserved.
    #[default]
    Explicit,
    /// Every encounter is lost, as if the kernel always fired.
    Collapsed,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RhsOptions {
    pub convolution: ConvolutionMethod,
    pub loss: LossTerm,
    pub execution: Execution,
    /// Put gain that lands beyond `x_max` into the last cell.
    pub keep_leak: bool,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// `C_m = h Σ_{j+l=m} a_j b_l` for `m = 0..a.len()+b.len()-1`.
pub fn convolve(a: &[f64], b: &[f64], h: f64, method: ConvolutionMethod, exec: Execution) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let use_fft = match method {
        ConvolutionMethod::Fft => true,
        ConvolutionMethod::Direct => false,
        ConvolutionMethod::Auto => a.len().min(b.len()) >= FFT_THRESHOLD,
    };
    if use_fft {
        fft_convolve(a, b, h)
    } else {
        direct_convolve(a, b, h, exec)
    }
}

fn direct_convolve(a: &[f64], b: &[f64], h: f64, exec: Execution) -> Vec<f64> {
    let len = a.len() + b.len() - 1;
    exec.map_range(len, |m| {
        let lo = m.saturating_sub(b.len() - 1);
        let hi = m.min(a.len() - 1);
        h * (lo..=hi).map(|j| a[j] * b[m - j]).sum::<f64>()
    })
}

fn fft_convolve(a: &[f64], b: &[f64], h: f64) -> Vec<f64> {
    let len = a.len() + b.len() - 1;
    let size = len.next_power_of_two();
    let (fwd, inv) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(size), p.plan_fft_inverse(size))
    });
    let pad = |x: &[f64]| {
        let mut v: Vec<Complex<f64>> = x.iter().map(|&r| Complex::new(r, 0.0)).collect();
        v.resize(size, Complex::new(0.0, 0.0));
        v
    };
    let mut fa = pad(a);
    fwd.process(&mut fa);
    if std::ptr::eq(a, b) {
        for z in &mut fa {
            *z = *z * *z;
        }
    } else {
        let mut fb = pad(b);
        fwd.process(&mut fb);
        for (z, w) in fa.iter_mut().zip(&fb) {
            *z *= w;
        }
    }
    inv.process(&mut fa);
    let scale = h / size as f64;
    // round-off can leave tiny negatives where the true value is zero
    fa[..len].iter().map(|z| (z.re * scale).max(0.0)).collect()
}

fn single_row(grid: &DensityGrid) -> Result<&[f64]> {
    if grid.types() != 1 {
        return Err(Error::invalid("grid", "expected a single-type grid"));
    }
    Ok(&grid.values[0])
}

/// Gain term `∫_x^∞ (1/s) ∫_0^s ρ(u) ρ(s-u) du ds` at every cell center.
pub fn gain_one_type(grid: &DensityGrid) -> Result<Vec<f64>> {
    gain_one_type_with(grid, ConvolutionMethod::Auto, Execution::default())
}

pub fn gain_one_type_with(grid: &DensityGrid, method: ConvolutionMethod, exec: Execution) -> Result<Vec<f64>> {
    let rho = single_row(grid)?;
    let h = grid.h();
    let conv = convolve(rho, rho, h, method, exec);
    let n = grid.n_cells;
    let mut gain = vec![0.0; n];
    // contributions from sums past the grid enter every cell
    let mut tail: f64 = conv[n..]
        .iter()
        .enumerate()
        .map(|(i, c)| c / ((n + i + 1) as f64 * h))
        .sum::<f64>()
        * h;
    for k in (0..n).rev() {
        tail += conv[k] / ((k + 1) as f64 * h) * h;
        gain[k] = tail;
    }
    Ok(gain)
}

/// `α (gain - ρ)` for a single type with uniform scattering.
pub fn rhs_one_type(grid: &DensityGrid, alpha: f64) -> Result<Vec<f64>> {
    rhs_one_type_with(grid, alpha, ConvolutionMethod::Auto, Execution::default())
}

pub fn rhs_one_type_with(
    grid: &DensityGrid,
    alpha: f64,
    method: ConvolutionMethod,
    exec: Execution,
) -> Result<Vec<f64>> {
    if !(alpha >= 0.0) {
        return Err(Error::invalid("alpha", "must be >= 0"));
    }
    if alpha == 0.0 {
        return Ok(vec![0.0; grid.n_cells]);
    }
    let gain = gain_one_type_with(grid, method, exec)?;
    Ok(gain
        .iter()
        .zip(single_row(grid)?)
        .map(|(g, r)| alpha * (g - r))
        .collect())
}

/// Full right-hand side for every type: binary gains minus losses plus
/// unary transfers.
pub fn rhs_multitype(grid: &DensityGrid, network: &ReactionNetwork) -> Result<Vec<Vec<f64>>> {
    rhs_multitype_with(grid, network, &RhsOptions::default())
}

pub fn rhs_multitype_with(grid: &DensityGrid, network: &ReactionNetwork, opts: &RhsOptions) -> Result<Vec<Vec<f64>>> {
    let types = network.types();
    if grid.types() != types.count() {
        return Err(Error::invalid(
            "grid",
            format!("has {} types, network has {}", grid.types(), types.count()),
        ));
    }
    let n = grid.n_cells;
    let h = grid.h();
    let mut out = vec![vec![0.0; n]; grid.types()];
    let mut gains = Deposits::new(grid.types(), n, h);
    let energy = |v: TypeId| types.energy(v);

    for ch in network.binary_channels() {
        let (a, b) = ch.reactants;
        let (ra, rb) = (&grid.values[a.index()], &grid.values[b.index()]);
        let half = if a == b { 0.5 } else { 1.0 };
        let constant = ch.rate.constant_value();
        if constant == Some(0.0) {
            continue;
        }
        // F_m = h Σ_{j+l=m} α(x_j, x_l) ρ_a(x_j) ρ_b(x_l)
        let encounters = match constant {
            Some(alpha) => {
                let mut c = if a == b {
                    convolve(ra, ra, h, opts.convolution, opts.execution)
                } else {
                    convolve(ra, rb, h, opts.convolution, opts.execution)
                };
                c.iter_mut().for_each(|x| *x *= alpha);
                c
            }
            None => opts.execution.map_range(2 * n - 1, |m| {
                let lo = m.saturating_sub(n - 1);
                let hi = m.min(n - 1);
                h * (lo..=hi)
                    .map(|j| ch.rate.eval(grid.center(j), grid.center(m - j)) * ra[j] * rb[m - j])
                    .sum::<f64>()
            }),
        };

        let inputs = energy(a) + energy(b);
        let outcomes = &ch.kernel.outcomes;
        let available = |o: usize, m: usize| {
            let p = outcomes[o].products;
            inputs + (m + 1) as f64 * h - energy(p[0]) - energy(p[1])
        };
        let feasible = |o: usize, m: usize| outcomes[o].weight > 0.0 && available(o, m) >= 0.0;
        let mut first_feasible = encounters.len();
        for (m, &f) in encounters.iter().enumerate() {
            let total_weight: f64 = (0..outcomes.len())
                .filter(|&o| feasible(o, m))
                .map(|o| outcomes[o].weight)
                .sum();
            if total_weight == 0.0 {
                continue;
            }
            first_feasible = first_feasible.min(m);
            if f == 0.0 {
                continue;
            }
            for o in (0..outcomes.len()).filter(|&o| feasible(o, m)) {
                let outcome = &outcomes[o];
                let collisions = half * f * h * outcome.weight / total_weight;
                let s = available(o, m);
                let [p1, p2] = outcome.products;
                gains.add(p1.index(), &outcome.split, s, collisions, false)?;
                gains.add(p2.index(), &outcome.split, s, collisions, true)?;
            }
        }

        // loss: pairs with sum index m >= first_feasible, or all pairs
        let m0 = match opts.loss {
            LossTerm::Explicit => first_feasible,
            LossTerm::Collapsed => 0,
        };
        if m0 >= encounters.len() {
            continue;
        }
        let (loss_a, loss_b): (Vec<f64>, Vec<f64>) = match constant {
            Some(alpha) => {
                // partner mass with index >= m0 - j, as suffix sums
                let suffix = |r: &[f64]| {
                    let mut s = vec![0.0; n + 1];
                    for l in (0..n).rev() {
                        s[l] = s[l + 1] + r[l];
                    }
                    s
                };
                let (sa, sb) = (suffix(ra), suffix(rb));
                (
                    (0..n)
                        .map(|j| alpha * h * ra[j] * sb[m0.saturating_sub(j).min(n)])
                        .collect(),
                    (0..n)
                        .map(|l| alpha * h * rb[l] * sa[m0.saturating_sub(l).min(n)])
                        .collect(),
                )
            }
            None => (
                opts.execution.map_range(n, |j| {
                    let from = m0.saturating_sub(j).min(n);
                    h * ra[j]
                        * (from..n)
                            .map(|l| ch.rate.eval(grid.center(j), grid.center(l)) * rb[l])
                            .sum::<f64>()
                }),
                opts.execution.map_range(n, |l| {
                    let from = m0.saturating_sub(l).min(n);
                    h * rb[l]
                        * (from..n)
                            .map(|j| ch.rate.eval(grid.center(j), grid.center(l)) * ra[j])
                            .sum::<f64>()
                }),
            ),
        };
        for k in 0..n {
            out[a.index()][k] -= loss_a[k];
        }
        if a != b {
            for k in 0..n {
                out[b.index()][k] -= loss_b[k];
            }
        }
    }

    for ch in network.unary_channels() {
        let (v, w) = (ch.from, ch.to);
        let (iv, iw) = (energy(v), energy(w));
        for k in 0..n {
            let rho = grid.values[v.index()][k];
            if rho == 0.0 {
                continue;
            }
            let x = grid.center(k);
            let rate = ch.rate.eval(iv + x, iw);
            if rate == 0.0 {
                continue;
            }
            let flux = rate * rho;
            out[v.index()][k] -= flux;
            // linear split between the two nearest centers keeps mass
            let pos = (x + iv - iw) / h - 0.5;
            let wi = w.index();
            if pos <= 0.0 {
                gains.direct[wi][0] += flux;
                continue;
            }
            let i0 = pos.floor() as usize;
            let frac = pos - i0 as f64;
            for (i, part) in [(i0, flux * (1.0 - frac)), (i0 + 1, flux * frac)] {
                if i < n {
                    gains.direct[wi][i] += part;
                } else {
                    gains.leak[wi] += part * h;
                }
            }
        }
    }

    gains.finish(&mut out, opts.keep_leak);
    Ok(out)
}

/// Gain accumulator. Uniform splits go through a difference array so each
/// deposit costs `O(1)`.
struct Deposits {
    h: f64,
    diff: Vec<Vec<f64>>,
    direct: Vec<Vec<f64>>,
    /// Mass per type that landed beyond `x_max`.
    leak: Vec<f64>,
}

impl Deposits {
    fn new(types: usize, n: usize, h: f64) -> Self {
        Deposits {
            h,
            diff: vec![vec![0.0; n + 1]; types],
            direct: vec![vec![0.0; n]; types],
            leak: vec![0.0; types],
        }
    }

    /// Add `collisions · density(split)` on `[0, s]` to type `v`. The second
    /// product takes `s - U`, so its density at `x` is the split's at `s - x`.
    fn add(&mut self, v: usize, split: &EnergySplit, s: f64, collisions: f64, second: bool) -> Result<()> {
        let h = self.h;
        let n = self.direct[v].len();
        // cells whose center lies below s
        let reach = (s / h - 0.5).ceil().max(0.0) as usize;
        if reach == 0 || s <= 0.0 {
            self.direct[v][0] += collisions / h;
            return Ok(());
        }
        let count = reach.min(n);
        let uniform = matches!(split, EnergySplit::Uniform)
            || matches!(split, EnergySplit::Canonical { first, second } if split_is_uniform(first, second));
        if uniform {
            let value = collisions / s;
            self.diff[v][0] += value;
            self.diff[v][count] -= value;
            self.leak[v] += value * (reach - count) as f64 * h;
            return Ok(());
        }
        let z = split.normalizer(s)?;
        let density = |k: usize| {
            let u = (k as f64 + 0.5) * h;
            let d = if second {
                split.density_with(s - u, s, z)
            } else {
                split.density_with(u, s, z)
            };
            if d.is_finite() {
                d
            } else {
                0.0
            }
        };
        for k in 0..count {
            self.direct[v][k] += collisions * density(k);
        }
        self.leak[v] += (count..reach).map(|k| collisions * density(k) * h).sum::<f64>();
        Ok(())
    }

    fn finish(self, out: &mut [Vec<f64>], keep_leak: bool) {
        for (v, row) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            let n = row.len();
            for k in 0..n {
                acc += self.diff[v][k];
                row[k] += acc + self.direct[v][k];
            }
            if keep_leak {
                row[n - 1] += self.leak[v] / self.h;
            }
        }
    }
}

fn split_is_uniform(first: &DensityFamily, second: &DensityFamily) -> bool {
    matches!((first, second), (DensityFamily::Exponential { rate: r1 }, DensityFamily::Exponential { rate: r2 }) if r1 == r2)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Euler,
    #[default]
    Rk4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Keep leaked gain in the last cell and rescale to the initial mass
    /// after every step.
    #[serde(default)]
    pub renormalize_mass: bool,
    /// Record a snapshot every this many steps, in addition to `t = 0` and
    /// `t_end`.
    #[serde(default)]
    pub snapshot_every: Option<usize>,
    /// Extra snapshot times, rounded up to the next step.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub convolution: ConvolutionMethod,
    #[serde(default)]
    pub loss: LossTerm,
    #[serde(default)]
    pub execution: Execution,
}

impl SolverConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        SolverConfig {
            dt,
            t_end,
            scheme: Scheme::Rk4,
            renormalize_mass: false,
            snapshot_every: None,
            snapshot_times: Vec::new(),
            convolution: ConvolutionMethod::Auto,
            loss: LossTerm::Explicit,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("solver.dt", "must be finite and > 0"));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::invalid("solver.t_end", "must be finite and >= 0"));
        }
        if self.snapshot_every == Some(0) {
            return Err(Error::invalid("solver.snapshot_every", "must be >= 1"));
        }
        if self.snapshot_times.iter().any(|t| !(*t >= 0.0 && *t <= self.t_end)) {
            return Err(Error::invalid("solver.snapshot_times", "times must lie in [0, t_end]"));
        }
        Ok(())
    }

    fn rhs_options(&self) -> RhsOptions {
        RhsOptions {
            convolution: self.convolution,
            loss: self.loss,
            execution: self.execution,
            keep_leak: self.renormalize_mass,
        }
    }
}

/// Heuristic explicit-step bound: the fastest per-cell loss rate sets the
/// stiffness; RK4 is stable to about `2.7 / rate`, Euler to `2 / rate`.
pub fn suggested_dt(grid: &DensityGrid, network: &ReactionNetwork, scheme: Scheme) -> Result<f64> {
    let rhs = rhs_multitype(grid, network)?;
    let mut fastest: f64 = 0.0;
    for (row, r) in grid.values.iter().zip(&rhs) {
        for (rho, d) in row.iter().zip(r) {
            if *rho > 1e-12 && *d < 0.0 {
                fastest = fastest.max(-d / rho);
            }
        }
    }
    let limit = match scheme {
        Scheme::Euler => 2.0,
        Scheme::Rk4 => 2.7,
    };
    Ok(if fastest > 0.0 { limit / fastest } else { f64::INFINITY })
}

fn axpy(base: &[Vec<f64>], k: &[Vec<f64>], c: f64) -> Vec<Vec<f64>> {
    base.iter()
        .zip(k)
        .map(|(b, d)| b.iter().zip(d).map(|(x, y)| x + c * y).collect())
        .collect()
}

/// Fixed-step time integration. Always records `t = 0` and `t_end`.
pub fn integrate(
    grid0: &DensityGrid,
    network: &ReactionNetwork,
    config: &SolverConfig,
) -> Result<Vec<(f64, DensityGrid)>> {
    config.validate()?;
    grid0.validate("grid")?;
    if grid0.types() != network.types().count() {
        return Err(Error::invalid("grid", "type count differs from the network"));
    }
    let opts = config.rhs_options();
    let mass0 = mass(grid0);
    let steps = if config.t_end == 0.0 {
        0
    } else {
        ((config.t_end / config.dt) - 1e-9).ceil().max(1.0) as usize
    };
    let mut wanted: Vec<usize> = config
        .snapshot_times
        .iter()
        .map(|t| ((t / config.dt) - 1e-9).ceil().max(0.0) as usize)
        .collect();
    wanted.sort_unstable();
    let mut next_wanted = 0;
    let mut out = vec![(0.0, grid0.clone())];
    while next_wanted < wanted.len() && wanted[next_wanted] == 0 {
        next_wanted += 1;
    }
    let mut grid = grid0.clone();
    let mut t = 0.0;
    let mut clipped = 0.0;
    let rhs = |g: &DensityGrid, y: Vec<Vec<f64>>| -> Result<Vec<Vec<f64>>> {
        let tmp = DensityGrid {
            x_max: g.x_max,
            n_cells: g.n_cells,
            values: y,
        };
        rhs_multitype_with(&tmp, network, &opts)
    };
    for step in 1..=steps {
        let dt = if step == steps { config.t_end - t } else { config.dt };
        let y = grid.values.clone();
        let next = match config.scheme {
            Scheme::Euler => {
                let k1 = rhs(&grid, y.clone())?;
                axpy(&y, &k1, dt)
            }
            Scheme::Rk4 => {
                let k1 = rhs(&grid, y.clone())?;
                let k2 = rhs(&grid, axpy(&y, &k1, 0.5 * dt))?;
                let k3 = rhs(&grid, axpy(&y, &k2, 0.5 * dt))?;
                let k4 = rhs(&grid, axpy(&y, &k3, dt))?;
                y.iter()
                    .enumerate()
                    .map(|(v, row)| {
                        row.iter()
                            .enumerate()
                            .map(|(k, x)| x + dt / 6.0 * (k1[v][k] + 2.0 * k2[v][k] + 2.0 * k3[v][k] + k4[v][k]))
                            .collect()
                    })
                    .collect()
            }
        };
        grid.values = next;
        t = if step == steps {
            config.t_end
        } else {
            step as f64 * config.dt
        };
        let h = grid.h();
        for x in grid.values.iter_mut().flatten() {
            if !x.is_finite() {
                return Err(Error::BlowUp {
                    step,
                    time: t,
                    reason: format!("non-finite density; reduce dt below {}", config.dt / 2.0),
                });
            }
            if *x < 0.0 {
                clipped += -*x * h;
                *x = 0.0;
            }
        }
        if clipped > CLIP_TOLERANCE {
            return Err(Error::BlowUp {
                step,
                time: t,
                reason: format!(
                    "clipped negative mass {clipped:e} exceeds {CLIP_TOLERANCE:e}; reduce dt below {}",
                    config.dt / 2.0
                ),
            });
        }
        if config.renormalize_mass {
            let m = mass(&grid);
            if m > 0.0 {
                grid.scale(mass0 / m);
            }
        }
        let mut record = step == steps || config.snapshot_every.is_some_and(|e| step % e == 0);
        while next_wanted < wanted.len() && wanted[next_wanted] <= step {
            record = true;
            next_wanted += 1;
        }
        if record {
            out.push((t, grid.clone()));
        }
    }
    Ok(out)
}
