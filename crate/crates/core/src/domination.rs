//! Comparison chain for the history height.
//!
//! The height `L_n` of the joint history is dominated pathwise by an integer
//! chain `M_n` driven by geometric variables `J_n` read off the environment:
//! the height of the first open vertex straight above each mover. When only
//! one walker moves, or the two coincide, the missing geometric is drawn
//! from an auxiliary stream independent of the field. `M_n` is in turn
//! dominated by a left-continuous random walk with increments in
//! `{-1, 0, 1, ...}` whose drift is negative once `l0` is large enough.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exploration::JointState;
use crate::field::{AuxGeometric, Environment, Vertex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominationParams {
    pub p: f64,
    pub l0: u64,
}

impl DominationParams {
    pub fn new(p: f64, l0: u64) -> Result<Self> {
        check_p(p)?;
        if l0 < 1 {
            return Err(Error::invalid("l0 must be >= 1"));
        }
        Ok(DominationParams { p, l0 })
    }

    /// Uses the smallest `l0` with negative walk drift.
    pub fn minimal(p: f64) -> Result<Self> {
        Ok(DominationParams {
            p,
            l0: minimal_l0(p)?,
        })
    }

    pub fn has_negative_drift(&self) -> bool {
        z_walk_drift(self) < 0.0
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("p must lie in (0,1), got {p}")));
    }
    Ok(())
}

fn drift_at(p: f64, l0: u64) -> f64 {
    2.0 * (1.0 - p).powf(l0 as f64 + 1.0) / p - p * p
}

/// Smallest `l0 >= 1` with `2(1-p)^(l0+1)/p < p^2`.
pub fn minimal_l0(p: f64) -> Result<u64> {
    check_p(p)?;
    let mut l0 = 1u64;
    while drift_at(p, l0) >= 0.0 {
        l0 += 1;
    }
    Ok(l0)
}

/// Law of one increment of the dominating walk.
pub fn z_walk_pmf(params: &DominationParams, k: i64) -> f64 {
    let q = 1.0 - params.p;
    let l0 = params.l0 as f64;
    match k {
        -1 => params.p * params.p,
        0 => 1.0 - params.p * params.p - 2.0 * q.powf(l0 + 1.0),
        k if k >= 1 => 2.0 * params.p * q.powf(l0 + k as f64),
        _ => 0.0,
    }
}

/// Mean increment of the dominating walk.
pub fn z_walk_drift(params: &DominationParams) -> f64 {
    drift_at(params.p, params.l0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MChainState {
    pub m: u64,
    pub n: u64,
}

/// One step of the comparison chain driven by `j`.
pub fn m_chain_step(state: MChainState, j: u64, l0: u64) -> Result<MChainState> {
    if j < 1 {
        return Err(Error::invalid("J must be >= 1"));
    }
    let m = state.m;
    let next = if j == 1 {
        m.saturating_sub(1)
    } else if j <= m && m >= l0 {
        m
    } else if j > m && m >= l0 {
        j
    } else {
        l0 + j
    };
    Ok(MChainState {
        m: next,
        n: state.n + 1,
    })
}

/// Trajectories of a coupled run; index `n` holds the values after `n` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationTrace {
    pub heights: Vec<u64>,
    pub m_values: Vec<u64>,
    /// Driving variable used for step `n -> n+1`.
    pub drivers: Vec<u64>,
    /// Whether both walkers were distinct and level-aligned before the step.
    pub both_moved: Vec<bool>,
}

impl DominationTrace {
    pub fn violations(&self) -> usize {
        self.heights
            .iter()
            .zip(&self.m_values)
            .filter(|(l, m)| l > m)
            .count()
    }

    /// First `n >= 1` with empty history.
    pub fn tau(&self) -> Option<usize> {
        (1..self.heights.len()).find(|&n| self.heights[n] == 0)
    }

    /// First `n >= 1` with `M_n = 0`.
    pub fn tau_m(&self) -> Option<usize> {
        (1..self.m_values.len()).find(|&n| self.m_values[n] == 0)
    }
}

/// Runs the two-walker exploration for `n_steps` alongside the comparison chain.
pub fn coupled_domination_run<E: Environment>(
    env: &E,
    starts: &[Vertex; 2],
    l0: u64,
    n_steps: usize,
) -> Result<DominationTrace> {
    if l0 < 1 {
        return Err(Error::invalid("l0 must be >= 1"));
    }
    for s in starts {
        env.params().check_vertex(s)?;
    }
    let aux = AuxGeometric::new(env.params());
    let mut state = JointState::init(&starts[..])?;
    let mut m = MChainState::default();
    let mut trace = DominationTrace {
        heights: vec![0],
        m_values: vec![0],
        drivers: Vec::with_capacity(n_steps),
        both_moved: Vec::with_capacity(n_steps),
    };
    for n in 0..n_steps {
        let [u, v] = [&state.positions()[0], &state.positions()[1]];
        let (j, both) = if u == v {
            (env.first_open_above(u).max(aux.draw(n as u64)), false)
        } else if u.level() == v.level() {
            (env.first_open_above(u).max(env.first_open_above(v)), true)
        } else {
            let lower = if u.level() < v.level() { u } else { v };
            (env.first_open_above(lower).max(aux.draw(n as u64)), false)
        };
        state.step_joint(env)?;
        m = m_chain_step(m, j, l0)?;
        trace.heights.push(state.height());
        trace.m_values.push(m.m);
        trace.drivers.push(j);
        trace.both_moved.push(both);
    }
    Ok(trace)
}

/// Mean of the excursion bound used for the regeneration-time tail:
/// `(p^{-2(l0-1)} - 1)(E[first passage] + l0) + l0`, where the first passage
/// of the walk from `l0 + max(G1, G2)` down to `l0 - 1` has mean
/// `(1 + E[max(G1, G2)]) / |drift|`. Documentation aid only.
pub fn gamma_rw_mean(params: &DominationParams) -> Result<f64> {
    let drift = z_walk_drift(params);
    if drift >= 0.0 {
        return Err(Error::invalid("walk drift is not negative"));
    }
    let p = params.p;
    let q = 1.0 - p;
    let mean_max = 2.0 / p - 1.0 / (1.0 - q * q);
    let passage = (1.0 + mean_max) / drift.abs();
    let l0 = params.l0 as f64;
    let excursions = p.powf(-2.0 * (l0 - 1.0)) - 1.0;
    Ok(excursions * (passage + l0) + l0)
}
