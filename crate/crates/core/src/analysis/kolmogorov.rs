//! Kolmogorov's cycle criterion for finite continuous-time chains.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_CYCLE_LEN: usize = 6;
pub const DEFAULT_MAX_CYCLES: usize = 100_000;
pub const CYCLE_TOLERANCE: f64 = 1e-10;

/// Rates `λ_ij` of a finite chain, zero on the diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteChainSpec {
    pub rates: Vec<Vec<f64>>,
    #[serde(default)]
    pub stationary: Option<Vec<f64>>,
}

impl DiscreteChainSpec {
    pub fn new(rates: Vec<Vec<f64>>) -> Result<Self> {
        let spec = DiscreteChainSpec {
            rates,
            stationary: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `λ_vw = b_vw` with weights `p`, as used by the unary models.
    pub fn with_stationary(rates: Vec<Vec<f64>>, p: Vec<f64>) -> Result<Self> {
        let spec = DiscreteChainSpec {
            rates,
            stationary: Some(p),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn states(&self) -> usize {
        self.rates.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.rates.len();
        for (i, row) in self.rates.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!("rates[{i}]"), "rate matrix must be square"));
            }
            if row[i] != 0.0 {
                return Err(Error::invalid(format!("rates[{i}][{i}]"), "diagonal must be zero"));
            }
            if let Some(j) = row.iter().position(|x| !(*x >= 0.0 && x.is_finite())) {
                return Err(Error::invalid(
                    format!("rates[{i}][{j}]"),
                    "rates must be finite and >= 0",
                ));
            }
        }
        if let Some(p) = &self.stationary {
            if p.len() != n || p.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                return Err(Error::invalid("stationary", "need one finite weight >= 0 per state"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub pass: bool,
    /// Worst cycle as a list of 0-based states; the cycle closes back to the
    /// first entry.
    pub worst_cycle: Option<Vec<usize>>,
    /// `max(forward/backward, backward/forward)` on the worst cycle;
    /// infinite when only one direction has a nonzero product.
    pub ratio: f64,
    pub cycles: usize,
    /// Enumeration stopped at the cycle cap.
    pub truncated: bool,
}

/// Enumerate simple cycles of length `3..=max_len` in the support graph and
/// compare forward and backward rate products. Edges used in one direction
/// only fail outright.
pub fn kolmogorov_cycle_check(chain: &DiscreteChainSpec, max_len: usize) -> Result<CycleReport> {
    kolmogorov_cycle_check_capped(chain, max_len, DEFAULT_MAX_CYCLES)
}

pub fn kolmogorov_cycle_check_capped(
    chain: &DiscreteChainSpec,
    max_len: usize,
    max_cycles: usize,
) -> Result<CycleReport> {
    chain.validate()?;
    if max_len < 3 {
        return Err(Error::invalid("max_cycle_len", "must be >= 3"));
    }
    let n = chain.states();
    let r = &chain.rates;
    let adjacent: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && (r[i][j] > 0.0 || r[j][i] > 0.0)).collect())
        .collect();
    let mut state = Search {
        rates: r,
        report: CycleReport {
            pass: true,
            worst_cycle: None,
            ratio: 1.0,
            cycles: 0,
            truncated: false,
        },
        max_cycles,
    };
    // a one-way edge already breaks reversibility
    for i in 0..n {
        for &j in adjacent[i].iter().filter(|&&j| j > i) {
            if (r[i][j] > 0.0) != (r[j][i] > 0.0) && state.report.ratio.is_finite() {
                state.report.pass = false;
                state.report.ratio = f64::INFINITY;
                state.report.worst_cycle = Some(vec![i, j]);
            }
        }
    }
    let mut path = Vec::with_capacity(max_len);
    let mut on_path = vec![false; n];
    for start in 0..n {
        path.push(start);
        on_path[start] = true;
        extend(&adjacent, start, max_len, &mut path, &mut on_path, &mut state);
        on_path[start] = false;
        path.pop();
        if state.report.truncated {
            break;
        }
    }
    Ok(state.report)
}

struct Search<'a> {
    rates: &'a [Vec<f64>],
    report: CycleReport,
    max_cycles: usize,
}

impl Search<'_> {
    fn score(&mut self, cycle: &[usize]) {
        if self.report.cycles >= self.max_cycles {
            self.report.truncated = true;
            return;
        }
        self.report.cycles += 1;
        let k = cycle.len();
        let (mut fwd, mut bwd) = (1.0, 1.0);
        for i in 0..k {
            let (a, b) = (cycle[i], cycle[(i + 1) % k]);
            fwd *= self.rates[a][b];
            bwd *= self.rates[b][a];
        }
        if fwd == 0.0 && bwd == 0.0 {
            return;
        }
        let ratio = if fwd == 0.0 || bwd == 0.0 {
            f64::INFINITY
        } else {
            (fwd / bwd).max(bwd / fwd)
        };
        if (fwd - bwd).abs() > CYCLE_TOLERANCE * fwd.max(bwd) {
            self.report.pass = false;
        }
        if ratio > self.report.ratio || (self.report.worst_cycle.is_none() && !self.report.pass) {
            self.report.ratio = ratio;
            self.report.worst_cycle = Some(cycle.to_vec());
        }
    }
}

/// Depth-first extension of `path`, whose first entry is the smallest state
/// on the cycle. Each undirected cycle is reported once by requiring the
/// second state to be smaller than the last.
fn extend(
    adjacent: &[Vec<usize>],
    start: usize,
    max_len: usize,
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    state: &mut Search,
) {
    if state.report.truncated {
        return;
    }
    let last = *path.last().expect("path holds the start");
    for &next in &adjacent[last] {
        if next == start && path.len() >= 3 && path[1] < last {
            state.score(path);
            continue;
        }
        if next <= start || on_path[next] || path.len() >= max_len {
            continue;
        }
        path.push(next);
        on_path[next] = true;
        extend(adjacent, start, max_len, path, on_path, state);
        on_path[next] = false;
        path.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_chain_passes() {
        let rates = vec![
            vec![0.0, 1.0, 2.0, 0.5],
            vec![1.0, 0.0, 3.0, 1.0],
            vec![2.0, 3.0, 0.0, 0.7],
            vec![0.5, 1.0, 0.7, 0.0],
        ];
        let r = kolmogorov_cycle_check(&DiscreteChainSpec::new(rates).unwrap(), 6).unwrap();
        assert!(r.pass);
        // K4 has 4 triangles and 3 four-cycles
        assert_eq!(r.cycles, 7);
        assert_eq!(r.ratio, 1.0);
    }

    #[test]
    fn planted_violation() {
        let rates = vec![vec![0.0, 1.0, 1.0], vec![2.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]];
        let r = kolmogorov_cycle_check(&DiscreteChainSpec::new(rates).unwrap(), 6).unwrap();
        assert!(!r.pass);
        assert!((r.ratio - 2.0).abs() < 1e-15);
        assert_eq!(r.worst_cycle, Some(vec![0, 1, 2]));
    }

    #[test]
    fn one_way_edge_fails_with_infinite_ratio() {
        let rates = vec![vec![0.0, 1.0], vec![0.0, 0.0]];
        let r = kolmogorov_cycle_check(&DiscreteChainSpec::new(rates).unwrap(), 3).unwrap();
        assert!(!r.pass);
        assert_eq!(r.ratio, f64::INFINITY);
    }

    #[test]
    fn cap_truncates() {
        let n = 9;
        let rates: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
            .collect();
        let r = kolmogorov_cycle_check_capped(&DiscreteChainSpec::new(rates).unwrap(), 6, 100).unwrap();
        assert!(r.truncated);
        assert_eq!(r.cycles, 100);
    }

    #[test]
    fn validation() {
        assert!(DiscreteChainSpec::new(vec![vec![1.0]]).is_err());
        assert!(DiscreteChainSpec::new(vec![vec![0.0, -1.0], vec![1.0, 0.0]]).is_err());
        assert!(kolmogorov_cycle_check(&DiscreteChainSpec::new(vec![vec![0.0]]).unwrap(), 2).is_err());
    }
}
