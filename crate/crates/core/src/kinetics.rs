//! Molecule types, particles and the energy bookkeeping shared by the
//! simulator, the solver and the equilibrium checks.
//!
//! A particle is a pair (type, kinetic energy); its full energy is the
//! internal energy of its type plus its kinetic energy. Binary collisions and
//! unary type changes conserve the sum of full energies exactly in real
//! arithmetic; here the outgoing kinetic energy of the second product is
//! always computed from the conservation identity, so only rounding drifts.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 1-based molecule type id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeId(pub usize);

impl TypeId {
    /// Zero-based slot for array indexing.
    #[inline]
    pub fn index(self) -> usize {
        self.0 - 1
    }

    #[inline]
    pub fn from_index(i: usize) -> Self {
        TypeId(i + 1)
    }
}

impl fmt::Display for TypeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TypeTable {
    internal_energy: Vec<f64>,
    labels: Vec<Option<String>>,
}

impl TypeTable {
    pub fn new(internal_energy: Vec<f64>) -> Result<Self> {
        let n = internal_energy.len();
        Self::with_labels(internal_energy, vec![None; n])
    }

    pub fn with_labels(internal_energy: Vec<f64>, labels: Vec<Option<String>>) -> Result<Self> {
        if internal_energy.is_empty() {
            return Err(Error::invalid("types", "at least one molecule type is required"));
        }
        if labels.len() != internal_energy.len() {
            return Err(Error::invalid("types.label", "one label slot per type"));
        }
        for (i, &e) in internal_energy.iter().enumerate() {
            if !e.is_finite() || e < 0.0 {
                return Err(Error::invalid(
                    format!("types[{}].internal_energy", i + 1),
                    format!("must be finite and >= 0, got {e}"),
                ));
            }
        }
        Ok(TypeTable {
            internal_energy,
            labels,
        })
    }

    /// A single type with zero internal energy.
    pub fn single() -> Self {
        TypeTable::new(vec![0.0]).expect("valid")
    }

    pub fn count(&self) -> usize {
        self.internal_energy.len()
    }

    pub fn contains(&self, v: TypeId) -> bool {
        v.0 >= 1 && v.0 <= self.count()
    }

    /// Internal energy of `v`. Panics on an id outside `1..=V`; use
    /// [`TypeTable::check`] on untrusted ids first.
    #[inline]
    pub fn energy(&self, v: TypeId) -> f64 {
        self.internal_energy[v.index()]
    }

    pub fn energies(&self) -> &[f64] {
        &self.internal_energy
    }

    pub fn label(&self, v: TypeId) -> Option<&str> {
        self.labels.get(v.index()).and_then(|l| l.as_deref())
    }

    pub fn ids(&self) -> impl Iterator<Item = TypeId> + '_ {
        (1..=self.count()).map(TypeId)
    }

    pub fn check(&self, v: TypeId, field: &str) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(Error::invalid(
                field,
                format!("type id {v} outside 1..={}", self.count()),
            ))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub type_id: TypeId,
    pub kinetic_energy: f64,
}

impl Particle {
    pub fn new(type_id: usize, kinetic_energy: f64) -> Self {
        Particle {
            type_id: TypeId(type_id),
            kinetic_energy,
        }
    }

    pub fn full_energy(&self, types: &TypeTable) -> f64 {
        types.energy(self.type_id) + self.kinetic_energy
    }
}

/// Outcome of a binary collision: product types and the kinetic energy of the
/// first product. The second product's energy is fixed by conservation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollisionOutcome {
    pub first: TypeId,
    pub energy: f64,
    pub second: TypeId,
}

/// State of the finite-particle chain: an unordered multiset of particles.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParticleSystem {
    pub particles: Vec<Particle>,
    pub time: f64,
}

impl ParticleSystem {
    pub fn new(particles: Vec<Particle>) -> Self {
        ParticleSystem { particles, time: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn validate(&self, types: &TypeTable) -> Result<()> {
        for (index, p) in self.particles.iter().enumerate() {
            if !types.contains(p.type_id) {
                return Err(Error::UnknownType {
                    index,
                    type_id: p.type_id.0,
                });
            }
            if !(p.kinetic_energy >= 0.0 && p.kinetic_energy.is_finite()) {
                return Err(Error::invalid(
                    format!("particles[{index}].kinetic_energy"),
                    format!("must be finite and >= 0, got {}", p.kinetic_energy),
                ));
            }
        }
        Ok(())
    }

    /// Per-type counts `n_v`, indexed by `TypeId::index`.
    pub fn counts(&self, types: &TypeTable) -> Vec<usize> {
        let mut n = vec![0; types.count()];
        for p in &self.particles {
            n[p.type_id.index()] += 1;
        }
        n
    }

    /// Kinetic energies of all particles of type `v`.
    pub fn energies_of(&self, v: TypeId) -> Vec<f64> {
        self.particles
            .iter()
            .filter(|p| p.type_id == v)
            .map(|p| p.kinetic_energy)
            .collect()
    }

    /// Particles sorted by (type, energy); the canonical multiset form.
    pub fn canonical(&self) -> Vec<Particle> {
        let mut v = self.particles.clone();
        v.sort_by(|a, b| {
            a.type_id
                .cmp(&b.type_id)
                .then(a.kinetic_energy.total_cmp(&b.kinetic_energy))
        });
        v
    }

    /// In-place collision of particles `i` and `j`.
    pub fn collide(&mut self, i: usize, j: usize, outcome: CollisionOutcome, types: &TypeTable) -> Result<()> {
        let len = self.len();
        if i == j || i >= len || j >= len {
            return Err(Error::BadPair { i, j, len });
        }
        let (a, b) = (self.particles[i], self.particles[j]);
        let available = available_kinetic(
            types,
            (a.type_id, a.kinetic_energy),
            (b.type_id, b.kinetic_energy),
            (outcome.first, outcome.second),
        );
        if available < 0.0 {
            return Err(Error::InfeasibleCollision {
                available: a.full_energy(types) + b.full_energy(types),
                required: types.energy(outcome.first) + types.energy(outcome.second),
            });
        }
        if !(outcome.energy >= 0.0 && outcome.energy <= available) {
            return Err(Error::EnergyOutOfRange {
                value: outcome.energy,
                max: available,
            });
        }
        self.particles[i] = Particle {
            type_id: outcome.first,
            kinetic_energy: outcome.energy,
        };
        self.particles[j] = Particle {
            type_id: outcome.second,
            kinetic_energy: available - outcome.energy,
        };
        Ok(())
    }

    /// In-place unary reaction turning particle `i` into type `to`.
    pub fn transform(&mut self, i: usize, to: TypeId, types: &TypeTable) -> Result<()> {
        let len = self.len();
        let p = *self.particles.get(i).ok_or(Error::BadPair { i, j: i, len })?;
        let kinetic = unary_kinetic(types, p.type_id, p.kinetic_energy, to);
        if kinetic < 0.0 {
            return Err(Error::InfeasibleUnary {
                from: p.type_id.0,
                to: to.0,
                kinetic,
            });
        }
        self.particles[i] = Particle {
            type_id: to,
            kinetic_energy: kinetic,
        };
        Ok(())
    }

    /// Rescale kinetic energies so the total energy equals `target`. Removes
    /// accumulated rounding drift; a no-op when there is no kinetic energy.
    pub fn renormalize_energy(&mut self, target: f64, types: &TypeTable) {
        let internal: f64 = self.particles.iter().map(|p| types.energy(p.type_id)).sum();
        let kinetic: f64 = self.particles.iter().map(|p| p.kinetic_energy).sum();
        if kinetic > 0.0 {
            let scale = ((target - internal) / kinetic).max(0.0);
            for p in &mut self.particles {
                p.kinetic_energy *= scale;
            }
        }
    }
}

/// Sum over particles of internal plus kinetic energy.
pub fn total_energy(system: &ParticleSystem, types: &TypeTable) -> Result<f64> {
    let mut sum = 0.0;
    for (index, p) in system.particles.iter().enumerate() {
        if !types.contains(p.type_id) {
            return Err(Error::UnknownType {
                index,
                type_id: p.type_id.0,
            });
        }
        sum += types.energy(p.type_id) + p.kinetic_energy;
    }
    Ok(sum)
}

/// Kinetic energy left for the products of `(v, t) + (w, u) -> products`.
/// Negative when the reaction is infeasible.
#[inline]
pub fn available_kinetic(
    types: &TypeTable,
    (v, t): (TypeId, f64),
    (w, u): (TypeId, f64),
    (p1, p2): (TypeId, TypeId),
) -> f64 {
    (types.energy(v) + t + types.energy(w) + u) - (types.energy(p1) + types.energy(p2))
}

/// Whether `(v, t) + (w, u) -> (v1, ·) + (w1, ·)` conserves energy with
/// nonnegative product kinetic energies. Equality counts as feasible.
pub fn collision_feasible(v: TypeId, t: f64, w: TypeId, u: f64, v1: TypeId, w1: TypeId, types: &TypeTable) -> bool {
    available_kinetic(types, (v, t), (w, u), (v1, w1)) >= 0.0
}

/// Kinetic energy after `from -> to` at kinetic energy `t`.
#[inline]
pub fn unary_kinetic(types: &TypeTable, from: TypeId, t: f64, to: TypeId) -> f64 {
    (t + types.energy(from)) - types.energy(to)
}

pub fn apply_collision(
    system: &ParticleSystem,
    i: usize,
    j: usize,
    outcome: CollisionOutcome,
    types: &TypeTable,
) -> Result<ParticleSystem> {
    let mut next = system.clone();
    next.collide(i, j, outcome, types)?;
    Ok(next)
}

pub fn apply_unary(system: &ParticleSystem, i: usize, to: TypeId, types: &TypeTable) -> Result<ParticleSystem> {
    let mut next = system.clone();
    next.transform(i, to, types)?;
    Ok(next)
}
