//! Reaction networks: binary collision channels and unary type changes over
//! a [`TypeTable`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::ScatteringKernel;
use crate::kinetics::{TypeId, TypeTable};
use crate::rates::{BinaryRate, UnaryRate};

/// Samples used by the kernel normalization spot-check.
pub const NORMALIZATION_SAMPLES: usize = 1000;
/// Accepted defect of the kernel normalization spot-check.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct BinaryChannel {
    pub reactants: (TypeId, TypeId),
    pub rate: BinaryRate,
    pub kernel: ScatteringKernel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnaryChannel {
    pub from: TypeId,
    pub to: TypeId,
    pub rate: UnaryRate,
}

#[derive(Clone, Debug)]
pub struct ReactionNetwork {
    types: TypeTable,
    binary: Vec<BinaryChannel>,
    unary: Vec<UnaryChannel>,
    /// `pair[v][w]`: channel index for the unordered type pair, and whether
    /// `(v, w)` is the declared orientation.
    pair: Vec<Vec<Option<(usize, bool)>>>,
    /// Unary channels leaving each type.
    leaving: Vec<Vec<usize>>,
}

impl ReactionNetwork {
    /// Build and validate. Rejects unknown type ids, duplicate or asymmetric
    /// pair declarations, negative rates, malformed kernels and kernels that
    /// fail the normalization spot-check.
    pub fn new(types: TypeTable, binary: Vec<BinaryChannel>, unary: Vec<UnaryChannel>) -> Result<Self> {
        let v = types.count();
        let mut pair = vec![vec![None; v]; v];
        for (k, ch) in binary.iter().enumerate() {
            let field = format!("binary_channels[{k}]");
            let (a, b) = ch.reactants;
            types.check(a, &format!("{field}.reactants"))?;
            types.check(b, &format!("{field}.reactants"))?;
            ch.rate.validate(&format!("{field}.rate"))?;
            ch.kernel.validate(&types, &format!("{field}.kernel"))?;
            if let Some((other, _)) = pair[a.index()][b.index()] {
                let prev: &BinaryChannel = &binary[other];
                let rule = if symmetric_pair(prev, ch) {
                    format!("duplicate declaration of reactant pair ({a}, {b})")
                } else {
                    format!("α_{{{a}{b}}}(T, T') differs from α_{{{b}{a}}}(T', T): rates must be symmetric")
                };
                return Err(Error::invalid(field, rule));
            }
            if a == b && !rate_is_swap_symmetric(&ch.rate) {
                return Err(Error::invalid(
                    format!("{field}.rate"),
                    format!("α_{{{a}{a}}}(T, T') differs from α_{{{a}{a}}}(T', T): rates must be symmetric"),
                ));
            }
            pair[a.index()][b.index()] = Some((k, true));
            if a != b {
                pair[b.index()][a.index()] = Some((k, false));
            }
        }
        let mut leaving = vec![Vec::new(); v];
        for (k, ch) in unary.iter().enumerate() {
            let field = format!("unary_channels[{k}]");
            types.check(ch.from, &format!("{field}.from"))?;
            types.check(ch.to, &format!("{field}.to"))?;
            if ch.from == ch.to {
                return Err(Error::invalid(field, "unary reaction must change the type"));
            }
            ch.rate.validate(&format!("{field}.rate"))?;
            leaving[ch.from.index()].push(k);
        }
        let net = ReactionNetwork {
            types,
            binary,
            unary,
            pair,
            leaving,
        };
        net.check_normalization(NORMALIZATION_SAMPLES)?;
        Ok(net)
    }

    /// One type, constant rate `alpha`, uniform kernel.
    pub fn one_type_uniform(alpha: f64) -> Result<Self> {
        let t = TypeId(1);
        ReactionNetwork::new(
            TypeTable::single(),
            vec![BinaryChannel {
                reactants: (t, t),
                rate: BinaryRate::constant(alpha),
                kernel: ScatteringKernel::uniform(t, t),
            }],
            vec![],
        )
    }

    pub fn types(&self) -> &TypeTable {
        &self.types
    }

    pub fn binary_channels(&self) -> &[BinaryChannel] {
        &self.binary
    }

    pub fn unary_channels(&self) -> &[UnaryChannel] {
        &self.unary
    }

    pub fn has_binary(&self) -> bool {
        !self.binary.is_empty()
    }

    /// Channel for the pair `(v, w)` and whether `(v, w)` matches its
    /// declared orientation.
    #[inline]
    pub fn channel(&self, v: TypeId, w: TypeId) -> Option<(&BinaryChannel, bool)> {
        self.pair[v.index()][w.index()].map(|(k, fwd)| (&self.binary[k], fwd))
    }

    /// `α_{vw}(t, u)`; zero when the pair has no channel.
    #[inline]
    pub fn binary_rate(&self, v: TypeId, t: f64, w: TypeId, u: f64) -> f64 {
        match self.pair[v.index()][w.index()] {
            Some((k, true)) => self.binary[k].rate.eval(t, u),
            Some((k, false)) => self.binary[k].rate.eval(u, t),
            None => 0.0,
        }
    }

    pub fn unary_from(&self, v: TypeId) -> impl Iterator<Item = &UnaryChannel> {
        self.leaving[v.index()].iter().map(move |&k| &self.unary[k])
    }

    /// Total unary rate of a particle of type `v` with kinetic energy `t`.
    pub fn unary_total(&self, v: TypeId, t: f64) -> f64 {
        let full = self.types.energy(v) + t;
        self.unary_from(v)
            .map(|ch| ch.rate.eval(full, self.types.energy(ch.to)))
            .sum()
    }

    /// True when every binary channel maps each reactant type to itself, so
    /// per-type counts never change through collisions.
    pub fn type_preserving(&self) -> bool {
        self.unary.is_empty()
            && self.binary.iter().all(|ch| {
                let (a, b) = ch.reactants;
                ch.kernel
                    .outcomes
                    .iter()
                    .all(|o| o.products == [a, b] || o.products == [b, a])
            })
    }

    /// `P((first, u), second | (v, t), (w, s))`, respecting the channel's
    /// declared orientation. Zero when the pair has no channel.
    pub fn kernel_density(
        &self,
        (v, t): (TypeId, f64),
        (w, s): (TypeId, f64),
        first: TypeId,
        u: f64,
        second: TypeId,
    ) -> Result<f64> {
        let Some((ch, forward)) = self.channel(v, w) else {
            return Ok(0.0);
        };
        if forward {
            ch.kernel.density(&self.types, (v, t), (w, s), first, u, second)
        } else {
            // The caller's first slot holds the channel's second reactant,
            // which receives the channel's second product with energy S - U.
            let avail = crate::kinetics::available_kinetic(&self.types, (v, t), (w, s), (first, second));
            if avail < 0.0 {
                return Ok(0.0);
            }
            ch.kernel.density(&self.types, (w, s), (v, t), second, avail - u, first)
        }
    }

    /// Stochastic spot-check that every kernel integrates to one.
    pub fn check_normalization(&self, samples: usize) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x6b65726e);
        for (k, ch) in self.binary.iter().enumerate() {
            let defect = ch
                .kernel
                .normalization_defect(&self.types, ch.reactants, samples, &mut rng)?;
            if defect > NORMALIZATION_TOLERANCE {
                return Err(Error::invalid(
                    format!("binary_channels[{k}].kernel"),
                    format!("kernel not normalized: defect {defect:.3e} > {NORMALIZATION_TOLERANCE:e}"),
                ));
            }
        }
        Ok(())
    }
}

fn rate_is_swap_symmetric(rate: &BinaryRate) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(0x73796d);
    (0..64).all(|_| {
        let (t, u) = (10.0 * rng.random::<f64>(), 10.0 * rng.random::<f64>());
        let (x, y) = (rate.eval(t, u), rate.eval(u, t));
        (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0)
    })
}

/// Whether a second declaration of the same unordered pair agrees with the
/// first under the swap `(v, T) <-> (w, T')`.
fn symmetric_pair(a: &BinaryChannel, b: &BinaryChannel) -> bool {
    let swapped = a.reactants.0 == b.reactants.1 && a.reactants.1 == b.reactants.0;
    let mut rng = ChaCha8Rng::seed_from_u64(0x70616972);
    (0..64).all(|_| {
        let (t, u) = (10.0 * rng.random::<f64>(), 10.0 * rng.random::<f64>());
        let x = a.rate.eval(t, u);
        let y = if swapped { b.rate.eval(u, t) } else { b.rate.eval(t, u) };
        (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensityFamily;
    use crate::kernel::{EnergySplit, KernelOutcome};

    fn two_types() -> TypeTable {
        TypeTable::new(vec![0.0, 1.0]).unwrap()
    }

    #[test]
    fn asymmetric_declarations_are_rejected_by_name() {
        let (a, b) = (TypeId(1), TypeId(2));
        let channels = vec![
            BinaryChannel {
                reactants: (a, b),
                rate: BinaryRate::constant(1.0),
                kernel: ScatteringKernel::uniform(a, b),
            },
            BinaryChannel {
                reactants: (b, a),
                rate: BinaryRate::constant(2.0),
                kernel: ScatteringKernel::uniform(b, a),
            },
        ];
        let err = ReactionNetwork::new(two_types(), channels, vec![]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("binary_channels[1]") && msg.contains("α_{12}"), "{msg}");
    }

    #[test]
    fn same_type_rate_must_be_swap_symmetric() {
        let a = TypeId(1);
        let ch = BinaryChannel {
            reactants: (a, a),
            rate: BinaryRate::Affine {
                base: 0.0,
                first: 1.0,
                second: 0.0,
                cap: 5.0,
            },
            kernel: ScatteringKernel::uniform(a, a),
        };
        assert!(ReactionNetwork::new(TypeTable::single(), vec![ch], vec![]).is_err());
    }

    #[test]
    fn orientation_of_rates_and_kernels() {
        let (a, b) = (TypeId(1), TypeId(2));
        let ch = BinaryChannel {
            reactants: (a, b),
            rate: BinaryRate::Affine {
                base: 0.0,
                first: 1.0,
                second: 0.0,
                cap: 10.0,
            },
            kernel: ScatteringKernel {
                outcomes: vec![KernelOutcome {
                    products: [a, b],
                    weight: 1.0,
                    split: EnergySplit::canonical(DensityFamily::gamma(2.0, 1.0), DensityFamily::exponential(1.0)),
                }],
            },
        };
        let net = ReactionNetwork::new(two_types(), vec![ch], vec![]).unwrap();
        assert_eq!(net.binary_rate(a, 3.0, b, 1.0), 3.0);
        assert_eq!(net.binary_rate(b, 1.0, a, 3.0), 3.0);
        // S = 0 + 1 + 1 + 1 - 0 - 1 = 2; first product (type 1) density is Beta(2,1) scaled
        let fwd = net.kernel_density((a, 1.0), (b, 1.0), a, 0.5, b).unwrap();
        let rev = net.kernel_density((b, 1.0), (a, 1.0), b, 1.5, a).unwrap();
        assert!((fwd - 0.25).abs() < 1e-12);
        assert!((fwd - rev).abs() < 1e-12);
        assert_eq!(net.binary_rate(a, 1.0, a, 1.0), 0.0);
    }

    #[test]
    fn unary_totals_gate_on_feasibility() {
        let net = ReactionNetwork::new(
            two_types(),
            vec![],
            vec![
                UnaryChannel {
                    from: TypeId(1),
                    to: TypeId(2),
                    rate: UnaryRate::constant(2.0),
                },
                UnaryChannel {
                    from: TypeId(2),
                    to: TypeId(1),
                    rate: UnaryRate::constant(1.0),
                },
            ],
        )
        .unwrap();
        assert_eq!(net.unary_total(TypeId(1), 0.5), 0.0);
        assert_eq!(net.unary_total(TypeId(1), 1.5), 2.0);
        assert_eq!(net.unary_total(TypeId(2), 0.0), 1.0);
        assert!(!net.type_preserving());
    }

    #[test]
    fn unnormalized_table_is_rejected() {
        let a = TypeId(1);
        let ch = BinaryChannel {
            reactants: (a, a),
            rate: BinaryRate::constant(1.0),
            kernel: ScatteringKernel {
                outcomes: vec![KernelOutcome {
                    products: [a, a],
                    weight: 1.0,
                    split: EnergySplit::Table { values: vec![0.5, 0.5] },
                }],
            },
        };
        assert!(ReactionNetwork::new(TypeTable::single(), vec![ch], vec![]).is_err());
    }
}
