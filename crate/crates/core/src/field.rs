//! The random environment.
//!
//! Every lattice vertex carries a uniform value in `[0, 1)`. Instead of
//! drawing these on demand, the value is a pure function of `(seed, vertex)`:
//! a chain of splitmix64 finalizer rounds absorbs the seed and then each
//! coordinate in turn. Because every round is a bijection on `u64`, changing a
//! single coordinate always changes the output. The top 53 bits of the final
//! word give the uniform value `m * 2^-53`, which is exactly representable as
//! an `f64` and strictly below one.
//!
//! A vertex is open when its uniform value is `< p`.

use std::fmt;
use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

const FIELD_DOMAIN: u64 = 0x6a09_e667_f3bc_c908;
const AUX_DOMAIN: u64 = 0xbb67_ae85_84ca_a73b;
const REPLICA_DOMAIN: u64 = 0x3c6e_f372_fe94_f82b;
const COORD_MULT: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 output finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the environment used by replica `replica` of a run seeded with `seed`.
pub fn replica_seed(seed: u64, replica: u64) -> u64 {
    mix64(mix64(seed ^ REPLICA_DOMAIN) ^ replica.wrapping_mul(COORD_MULT))
}

/// 53-bit uniform value carried by the word `bits`.
#[inline]
pub fn bits_to_unit(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Lattice point of `Z^d`. The last coordinate is the level ("time").
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Vertex(SmallVec<[i64; 4]>);

impl Vertex {
    pub fn new(coords: &[i64]) -> Self {
        Vertex(SmallVec::from_slice(coords))
    }

    pub fn origin(d: usize) -> Self {
        Vertex(SmallVec::from_elem(0, d))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn level(&self) -> i64 {
        *self.0.last().expect("vertex has at least one coordinate")
    }

    /// The first `d - 1` coordinates.
    pub fn spatial(&self) -> &[i64] {
        &self.0[..self.0.len() - 1]
    }

    pub fn l1(&self, other: &Vertex) -> u64 {
        l1_distance(&self.0, &other.0)
    }

    /// `self` moved `m` levels straight up.
    pub fn raised(&self, m: i64) -> Vertex {
        let mut v = self.clone();
        *v.0.last_mut().unwrap() += m;
        v
    }
}

impl Deref for Vertex {
    type Target = [i64];
    fn deref(&self) -> &[i64] {
        &self.0
    }
}

impl DerefMut for Vertex {
    fn deref_mut(&mut self) -> &mut [i64] {
        &mut self.0
    }
}

impl From<Vec<i64>> for Vertex {
    fn from(v: Vec<i64>) -> Self {
        Vertex(SmallVec::from_vec(v))
    }
}

impl<const N: usize> From<[i64; N]> for Vertex {
    fn from(v: [i64; N]) -> Self {
        Vertex::new(&v)
    }
}

impl fmt::Debug for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub(crate) fn l1_distance(a: &[i64], b: &[i64]) -> u64 {
    a.iter().zip(b).map(|(x, y)| x.abs_diff(*y)).sum()
}

/// Dimension, openness probability and seed of one realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    pub d: usize,
    pub p: f64,
    pub seed: u64,
}

impl FieldParams {
    pub fn new(d: usize, p: f64, seed: u64) -> Result<Self> {
        if d < 2 {
            return Err(Error::invalid(format!("dimension must be >= 2, got {d}")));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!("p must lie in (0,1), got {p}")));
        }
        Ok(FieldParams { d, p, seed })
    }

    pub fn with_seed(self, seed: u64) -> Self {
        FieldParams { seed, ..self }
    }

    /// Parameters of replica `replica`; distinct replicas see independent environments.
    pub fn for_replica(self, replica: u64) -> Self {
        self.with_seed(replica_seed(self.seed, replica))
    }

    pub fn check_vertex(&self, v: &[i64]) -> Result<()> {
        if v.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// Anything that assigns a uniform value to every vertex.
///
/// Walkers only ever ask for `uniform_bits`; the default methods derive
/// everything else from it.
pub trait Environment: Sync {
    fn params(&self) -> &FieldParams;

    /// Raw 64-bit word behind the uniform value of `v`. Callers guarantee
    /// `v.len() == self.params().d`.
    fn uniform_bits(&self, v: &[i64]) -> u64;

    fn dim(&self) -> usize {
        self.params().d
    }

    fn p(&self) -> f64 {
        self.params().p
    }

    #[inline]
    fn uniform(&self, v: &[i64]) -> f64 {
        bits_to_unit(self.uniform_bits(v))
    }

    #[inline]
    fn open(&self, v: &[i64]) -> bool {
        self.uniform(v) < self.p()
    }

    /// `m` such that `v + m e_d` is the first open vertex straight above `v`.
    fn first_open_above(&self, v: &[i64]) -> u64 {
        let mut w: SmallVec<[i64; 4]> = SmallVec::from_slice(v);
        let last = w.len() - 1;
        let mut m = 0;
        loop {
            m += 1;
            w[last] += 1;
            if self.open(&w) {
                return m;
            }
        }
    }
}

/// The keyed-hash environment.
#[derive(Debug, Clone, Copy)]
pub struct Field {
    params: FieldParams,
    key: u64,
}

impl Field {
    pub fn new(params: FieldParams) -> Self {
        Field {
            params,
            key: mix64(params.seed ^ FIELD_DOMAIN),
        }
    }

    pub fn from_parts(d: usize, p: f64, seed: u64) -> Result<Self> {
        Ok(Field::new(FieldParams::new(d, p, seed)?))
    }

    /// Checked uniform value of `v`.
    pub fn uniform_at(&self, v: &[i64]) -> Result<f64> {
        self.params.check_vertex(v)?;
        Ok(self.uniform(v))
    }

    /// Checked openness of `v`.
    pub fn is_open(&self, v: &[i64]) -> Result<bool> {
        self.params.check_vertex(v)?;
        Ok(self.open(v))
    }
}

impl Environment for Field {
    fn params(&self) -> &FieldParams {
        &self.params
    }

    #[inline]
    fn uniform_bits(&self, v: &[i64]) -> u64 {
        let mut h = self.key;
        for &c in v {
            h = mix64(h ^ (c as u64).wrapping_mul(COORD_MULT));
        }
        h
    }
}

/// `inner` reflected through the hyperplane `x(1) = 0`.
#[derive(Debug, Clone, Copy)]
pub struct Mirrored<E> {
    pub inner: E,
}

impl<E: Environment> Environment for Mirrored<E> {
    fn params(&self) -> &FieldParams {
        self.inner.params()
    }

    fn uniform_bits(&self, v: &[i64]) -> u64 {
        let mut w: SmallVec<[i64; 4]> = SmallVec::from_slice(v);
        w[0] = -w[0];
        self.inner.uniform_bits(&w)
    }
}

impl<E: Environment> Environment for &E {
    fn params(&self) -> &FieldParams {
        (**self).params()
    }

    #[inline]
    fn uniform_bits(&self, v: &[i64]) -> u64 {
        (**self).uniform_bits(v)
    }
}

/// Stream of i.i.d. geometric variables independent of the vertex field,
/// keyed by `(seed, index)`.
#[derive(Debug, Clone, Copy)]
pub struct AuxGeometric {
    key: u64,
    p: f64,
}

impl AuxGeometric {
    pub fn new(params: &FieldParams) -> Self {
        AuxGeometric {
            key: mix64(params.seed ^ AUX_DOMAIN),
            p: params.p,
        }
    }

    /// Number of Bernoulli(p) trials up to and including the first success.
    pub fn draw(&self, index: u64) -> u64 {
        let mut m = 0u64;
        loop {
            m += 1;
            let bits = mix64(mix64(self.key ^ index.wrapping_mul(COORD_MULT)) ^ m);
            if bits_to_unit(bits) < self.p {
                return m;
            }
        }
    }
}
