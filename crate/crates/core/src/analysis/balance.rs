//! Balance residuals over energy-conserving quadruples
//! `(γ, γ₁) <-> (γ', γ₁')`.
//!
//! `w(γ, γ₁ | γ', γ₁')` is the rate density that the pair `(γ', γ₁')`
//! produces `(γ, γ₁)`, with the energy delta removed: the second output
//! energy is always fixed by conservation.

use serde::{Deserialize, Serialize};

use super::{halton, Phase, PhaseDensity};
use crate::error::{Error, Result};
use crate::kinetics::{TypeId, TypeTable};
use crate::network::ReactionNetwork;
use crate::par::Execution;
use crate::quad::{integrate, integrate_clustered};

pub trait TransitionDensity: Sync {
    fn type_table(&self) -> &TypeTable;
    /// `w(out | inp)` without the delta.
    fn w(&self, out: [Phase; 2], inp: [Phase; 2]) -> Result<f64>;
}

impl TransitionDensity for ReactionNetwork {
    fn type_table(&self) -> &TypeTable {
        self.types()
    }

    fn w(&self, out: [Phase; 2], inp: [Phase; 2]) -> Result<f64> {
        let rate = self.binary_rate(inp[0].0, inp[0].1, inp[1].0, inp[1].1);
        if rate == 0.0 {
            return Ok(0.0);
        }
        // the output sits on the conservation shell up to rounding; an ulp of
        // overshoot must not push it off the kernel's support
        let avail = crate::kinetics::available_kinetic(self.types(), inp[0], inp[1], (out[0].0, out[1].0));
        let mut u = out[0].1;
        if u > avail && avail >= 0.0 && u - avail <= 1e-12 * u.max(1.0) {
            u = avail;
        }
        Ok(rate * self.kernel_density(inp[0], inp[1], out[0].0, u, out[1].0)?)
    }
}

/// `w ≡ 0`.
pub struct NoTransitions(pub TypeTable);

impl TransitionDensity for NoTransitions {
    fn type_table(&self) -> &TypeTable {
        &self.0
    }

    fn w(&self, _: [Phase; 2], _: [Phase; 2]) -> Result<f64> {
        Ok(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceConfig {
    pub samples: usize,
    /// Input energies are drawn from `[0, energy_scale]`.
    pub energy_scale: f64,
    /// Panels for the inner integral over `x'`.
    pub panels: usize,
    /// Upper limit of the outer integral over `x₁` in the fixed-point check.
    pub outer_limit: f64,
    pub outer_panels: usize,
    pub execution: Execution,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        BalanceConfig {
            samples: 1000,
            energy_scale: 10.0,
            panels: 8,
            outer_limit: 40.0,
            outer_panels: 32,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadruple {
    pub out: [Phase; 2],
    pub inp: [Phase; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub max: f64,
    pub samples: usize,
    /// Draws whose type tuple cannot conserve energy; `w = 0` there.
    pub skipped: usize,
}

fn type_tuples(v: usize) -> Vec<[TypeId; 4]> {
    let mut out = Vec::with_capacity(v.pow(4));
    for a in 0..v {
        for b in 0..v {
            for c in 0..v {
                for d in 0..v {
                    out.push([a, b, c, d].map(TypeId::from_index));
                }
            }
        }
    }
    out
}

/// Energy-conserving quadruples from Halton points, preceded by corner cases
/// (zero energies and the ends of the output interval). Returns the
/// quadruples and the number of draws skipped because the output types
/// cannot carry the input energy.
pub fn energy_quadruples(types: &TypeTable, count: usize, energy_scale: f64) -> (Vec<Quadruple>, usize) {
    let tuples = type_tuples(types.count());
    let mut out = Vec::with_capacity(count);
    let mut skipped = 0;
    let corners = [
        (0.0, 0.0, 0.0),
        (0.0, 1.0, 0.0),
        (1.0, 0.0, 1.0),
        (0.5, 0.5, 1.0),
        (1.0, 1.0, 0.5),
    ];
    let mut i = 0u64;
    while out.len() < count {
        let tuple = tuples[i as usize % tuples.len()];
        let (ux, ux1, uout) = if (i as usize) < corners.len() * tuples.len() {
            corners[i as usize / tuples.len()]
        } else {
            (halton(i, 2), halton(i, 3), halton(i, 5))
        };
        i += 1;
        let [v, v1, w, w1] = tuple;
        let (x, x1) = (ux * energy_scale, ux1 * energy_scale);
        let total = types.energy(v) + x + types.energy(v1) + x1;
        let room = total - types.energy(w) - types.energy(w1);
        if room < 0.0 {
            skipped += 1;
            if skipped > 100 * count.max(1) {
                break;
            }
            continue;
        }
        let y = uout * room;
        out.push(Quadruple {
            out: [(v, x), (v1, x1)],
            inp: [(w, y), (w1, room - y)],
        });
    }
    (out, skipped)
}

fn fv(f: &dyn PhaseDensity, p: Phase) -> f64 {
    f.value(p.0, p.1)
}

/// `w(γ,γ₁|γ',γ₁') f(γ') f(γ₁') - w(γ',γ₁'|γ,γ₁) f(γ) f(γ₁)`.
pub fn balance_defect(w: &dyn TransitionDensity, f: &dyn PhaseDensity, q: &Quadruple) -> Result<f64> {
    let forward = w.w(q.out, q.inp)?;
    let backward = w.w(q.inp, q.out)?;
    let a = if forward == 0.0 {
        0.0
    } else {
        forward * fv(f, q.inp[0]) * fv(f, q.inp[1])
    };
    let b = if backward == 0.0 {
        0.0
    } else {
        backward * fv(f, q.out[0]) * fv(f, q.out[1])
    };
    Ok(a - b)
}

fn max_abs(exec: Execution, n: usize, f: impl Fn(usize) -> Result<f64> + Sync + Send) -> Result<f64> {
    let values = exec.map_range(n, f);
    let mut worst: f64 = 0.0;
    for v in values {
        let v = v?;
        if v.is_nan() {
            return Err(Error::Undefined("balance residual is NaN".into()));
        }
        worst = worst.max(v.abs());
    }
    Ok(worst)
}

/// Largest detailed-balance defect over the configured quadruples.
pub fn detailed_balance_residual(
    w: &dyn TransitionDensity,
    f0: &dyn PhaseDensity,
    config: &BalanceConfig,
) -> Result<ResidualReport> {
    let (quads, skipped) = energy_quadruples(w.type_table(), config.samples, config.energy_scale);
    detailed_balance_on(w, f0, &quads, skipped, config.execution)
}

pub fn detailed_balance_on(
    w: &dyn TransitionDensity,
    f0: &dyn PhaseDensity,
    quads: &[Quadruple],
    skipped: usize,
    exec: Execution,
) -> Result<ResidualReport> {
    let max = max_abs(exec, quads.len(), |i| balance_defect(w, f0, &quads[i]))?;
    Ok(ResidualReport {
        max,
        samples: quads.len(),
        skipped,
    })
}

/// The local-equilibrium bracket at `(γ, γ₁)`: the defect integrated over
/// every output type pair and the free output energy.
pub fn local_equilibrium_bracket(
    w: &dyn TransitionDensity,
    f: &dyn PhaseDensity,
    out: [Phase; 2],
    panels: usize,
) -> Result<f64> {
    let types = w.type_table();
    let total = types.energy(out[0].0) + out[0].1 + types.energy(out[1].0) + out[1].1;
    let mut sum = 0.0;
    for a in types.ids() {
        for b in types.ids() {
            let room = total - types.energy(a) - types.energy(b);
            if room <= 0.0 {
                continue;
            }
            let err = std::cell::Cell::new(None);
            let value = integrate_clustered(
                |y| {
                    let q = Quadruple {
                        out,
                        inp: [(a, y), (b, room - y)],
                    };
                    match balance_defect(w, f, &q) {
                        Ok(d) if d.is_finite() => d,
                        Ok(_) => 0.0,
                        Err(e) => {
                            err.set(Some(e));
                            0.0
                        }
                    }
                },
                0.0,
                room,
                panels,
            );
            if let Some(e) = err.into_inner() {
                return Err(e);
            }
            sum += value;
        }
    }
    Ok(sum)
}

fn sample_pairs(types: &TypeTable, count: usize, scale: f64) -> Vec<[Phase; 2]> {
    let v = types.count();
    let corners = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (0.5, 0.5)];
    (0..count)
        .map(|i| {
            let (a, b) = (TypeId::from_index(i % v), TypeId::from_index((i / v) % v));
            let (ux, uy) = if i < corners.len() * v * v {
                corners[i / (v * v)]
            } else {
                (halton(i as u64, 2), halton(i as u64, 3))
            };
            [(a, ux * scale), (b, uy * scale)]
        })
        .collect()
}

/// Largest local-equilibrium bracket over sampled `(γ, γ₁)`.
pub fn local_equilibrium_residual(
    w: &dyn TransitionDensity,
    f: &dyn PhaseDensity,
    config: &BalanceConfig,
) -> Result<ResidualReport> {
    let pairs = sample_pairs(w.type_table(), config.samples, config.energy_scale);
    let max = max_abs(config.execution, pairs.len(), |i| {
        local_equilibrium_bracket(w, f, pairs[i], config.panels)
    })?;
    Ok(ResidualReport {
        max,
        samples: pairs.len(),
        skipped: 0,
    })
}

/// Largest fixed-point defect over sampled `γ`: the local-equilibrium
/// bracket integrated over `γ₁` on `[0, outer_limit]`.
pub fn fixed_point_residual(
    w: &dyn TransitionDensity,
    f: &dyn PhaseDensity,
    config: &BalanceConfig,
) -> Result<ResidualReport> {
    let types = w.type_table();
    let v = types.count();
    let points: Vec<Phase> = (0..config.samples)
        .map(|i| {
            let u = if i < v { 0.0 } else { halton(i as u64, 2) };
            (TypeId::from_index(i % v), u * config.energy_scale)
        })
        .collect();
    let max = max_abs(config.execution, points.len(), |i| {
        let mut total = 0.0;
        for b in types.ids() {
            let err = std::cell::Cell::new(None);
            total += integrate(
                |x1| match local_equilibrium_bracket(w, f, [points[i], (b, x1)], config.panels) {
                    Ok(d) => d,
                    Err(e) => {
                        err.set(Some(e));
                        0.0
                    }
                },
                0.0,
                config.outer_limit,
                config.outer_panels,
            );
            if let Some(e) = err.into_inner() {
                return Err(e);
            }
        }
        Ok(total)
    })?;
    Ok(ResidualReport {
        max,
        samples: points.len(),
        skipped: 0,
    })
}

/// Largest `|log f(γ') + log f(γ₁') - log f(γ) - log f(γ₁) - (same for f0)|`
/// over quadruples with `w > 0` in at least one direction.
pub fn additive_conservation_residual(
    w: &dyn TransitionDensity,
    f: &dyn PhaseDensity,
    f0: &dyn PhaseDensity,
    config: &BalanceConfig,
) -> Result<ResidualReport> {
    let (quads, skipped) = energy_quadruples(w.type_table(), config.samples, config.energy_scale);
    let mut support = Vec::with_capacity(quads.len());
    for q in quads {
        if w.w(q.out, q.inp)? > 0.0 || w.w(q.inp, q.out)? > 0.0 {
            support.push(q);
        }
    }
    let log_ratio = |d: &dyn PhaseDensity, q: &Quadruple| -> Result<f64> {
        let mut acc = 0.0;
        for (p, sign) in [(q.inp[0], 1.0), (q.inp[1], 1.0), (q.out[0], -1.0), (q.out[1], -1.0)] {
            let value = fv(d, p);
            if !(value > 0.0) {
                return Err(Error::Undefined(format!(
                    "log of nonpositive density {value} at type {}, x = {}",
                    p.0, p.1
                )));
            }
            acc += sign * value.ln();
        }
        Ok(acc)
    };
    let max = max_abs(config.execution, support.len(), |i| {
        Ok(log_ratio(f, &support[i])? - log_ratio(f0, &support[i])?)
    })?;
    Ok(ResidualReport {
        max,
        samples: support.len(),
        skipped,
    })
}
