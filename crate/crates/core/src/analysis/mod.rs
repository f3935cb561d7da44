//! Experiment drivers: coalescence, forest census, martingale and Lyapunov
//! drift, independent pairs and point density.
//!
//! Every driver taking a [`FieldParams`] runs `replicas` independent
//! environments keyed by `(seed, replica id)`, so results are reproducible and
//! independent of the worker count.

pub mod tail;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exploration::{JointState, DEFAULT_STEP_CAP};
use crate::field::{Environment, Field, FieldParams, Vertex};
use crate::flow::Flow;
use crate::replicas::run_replicas;
use crate::stats::{proportion, MeanSe, Z99};

pub use tail::{
    exp_tail_fit, exp_tail_fit_censored, log_grid, power_tail_fit, power_tail_fit_censored,
    power_tail_fit_on_grid, KaplanMeier, Observation, TailFit,
};

fn collect<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

fn axis_start(d: usize, x: i64) -> Vertex {
    let mut v = vec![0i64; d];
    v[0] = x;
    Vertex::from(v)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoalescenceSample {
    pub separation: Vec<i64>,
    /// Level of the first regeneration with both walkers on one vertex, or the cap.
    pub t_nu: i64,
    /// Index of that regeneration; regenerations seen so far when censored.
    pub nu: u64,
    pub censored: bool,
}

impl CoalescenceSample {
    pub fn observation(&self) -> Observation {
        Observation {
            value: self.t_nu as u64,
            censored: self.censored,
        }
    }
}

/// Two walkers from the origin and `separation * e_1` on level 0, run until
/// they share a vertex at a regeneration or pass `level_cap`.
pub fn coalescence_run<E: Environment>(
    env: &E,
    separation: i64,
    level_cap: i64,
) -> Result<CoalescenceSample> {
    let d = env.dim();
    let mut sep = vec![0i64; d - 1];
    sep[0] = separation;
    if separation == 0 {
        return Ok(CoalescenceSample {
            separation: sep,
            t_nu: 0,
            nu: 0,
            censored: false,
        });
    }
    let mut state = JointState::init(&[axis_start(d, 0), axis_start(d, separation)])?;
    loop {
        let out = state.step_joint(env)?;
        if state.min_level() > level_cap {
            return Ok(CoalescenceSample {
                separation: sep,
                t_nu: level_cap,
                nu: state.regenerations(),
                censored: true,
            });
        }
        if let Some(rec) = out.regeneration {
            if rec.positions[0] == rec.positions[1] {
                return Ok(CoalescenceSample {
                    separation: sep,
                    t_nu: rec.t_time,
                    nu: rec.index,
                    censored: false,
                });
            }
        }
    }
}

pub fn coalescence_experiment(
    params: FieldParams,
    separation: i64,
    replicas: u64,
    level_cap: i64,
) -> Result<Vec<CoalescenceSample>> {
    if !(2..=3).contains(&params.d) {
        return Err(Error::invalid("coalescence experiment needs d = 2 or 3"));
    }
    if separation < 0 || level_cap < 0 {
        return Err(Error::invalid("separation and level cap must be >= 0"));
    }
    collect(run_replicas(replicas, |r| {
        coalescence_run(&Field::new(params.for_replica(r)), separation, level_cap)
    }))
}

/// Kaplan–Meier log-log fit of `P(T > t)` over `[t_min, t_max]`.
pub fn coalescence_tail_fit(
    samples: &[CoalescenceSample],
    t_min: u64,
    t_max: u64,
) -> Result<TailFit> {
    let obs: Vec<Observation> = samples.iter().map(|s| s.observation()).collect();
    power_tail_fit_censored(&obs, t_min, t_max)
}

/// Upper bound `1 - (1-p)^6 p^3` on the probability that the two-walker
/// difference keeps its value across one regeneration.
pub fn stay_bound(p: f64) -> f64 {
    1.0 - (1.0 - p).powi(6) * p.powi(3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayEstimate {
    pub m: i64,
    pub empirical: MeanSe,
    pub bound: f64,
}

/// Fraction of replicas whose difference after one regeneration is still `m`.
pub fn stay_probability_bound_check(
    params: FieldParams,
    m: i64,
    replicas: u64,
) -> Result<StayEstimate> {
    if params.d != 2 || m < 1 {
        return Err(Error::invalid("stay probability needs d = 2 and m >= 1"));
    }
    let stays = collect(run_replicas(replicas, |r| {
        let field = Field::new(params.for_replica(r));
        let mut state = JointState::init(&[axis_start(2, 0), axis_start(2, m)])?;
        let rec =
            state
                .next_regeneration(&field, DEFAULT_STEP_CAP)?
                .ok_or(Error::BudgetExhausted {
                    step_cap: DEFAULT_STEP_CAP,
                    partial: vec![],
                })?;
        Ok(rec.positions[1][0] - rec.positions[0][0] == m)
    }))?;
    Ok(StayEstimate {
        m,
        empirical: proportion(stays.iter().filter(|&&s| s).count(), stays.len()),
        bound: stay_bound(params.p),
    })
}

/// First-coordinate increments of walker 0 between consecutive regenerations.
pub fn regeneration_increments<E: Environment>(
    env: &E,
    starts: &[Vertex],
    j_max: u64,
    step_cap: u64,
) -> Result<Vec<i64>> {
    let mut state = JointState::init(starts)?;
    let mut last = starts[0][0];
    let mut out = Vec::with_capacity(j_max as usize);
    for _ in 0..j_max {
        let rec = state
            .next_regeneration(env, step_cap)?
            .ok_or(Error::BudgetExhausted {
                step_cap,
                partial: vec![],
            })?;
        out.push(rec.positions[0][0] - last);
        last = rec.positions[0][0];
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub j: u64,
    pub increment: MeanSe,
}

impl DriftRow {
    pub fn within(&self, k_se: f64) -> bool {
        self.increment.mean.abs() < k_se * self.increment.se
    }
}

/// Per-`j` mean increment of the first walker's first coordinate. With
/// `separation == 0` a single walker is run.
pub fn martingale_drift_test(
    params: FieldParams,
    separation: i64,
    j_max: u64,
    replicas: u64,
) -> Result<Vec<DriftRow>> {
    if params.d != 2 || j_max < 1 {
        return Err(Error::invalid("martingale test needs d = 2 and j_max >= 1"));
    }
    let starts = if separation == 0 {
        vec![axis_start(2, 0)]
    } else {
        vec![axis_start(2, 0), axis_start(2, separation)]
    };
    let runs = collect(run_replicas(replicas, |r| {
        regeneration_increments(
            &Field::new(params.for_replica(r)),
            &starts,
            j_max,
            DEFAULT_STEP_CAP,
        )
    }))?;
    Ok((0..j_max as usize)
        .map(|j| {
            let xs: Vec<f64> = runs.iter().map(|inc| inc[j] as f64).collect();
            DriftRow {
                j: j as u64 + 1,
                increment: MeanSe::of(&xs),
            }
        })
        .collect())
}

/// `sqrt(ln(1 + |x|^2))`.
pub fn lyapunov_f(x: &[f64]) -> f64 {
    (1.0 + x.iter().map(|c| c * c).sum::<f64>()).ln().sqrt()
}

/// Gradient of [`lyapunov_f`]; zero at the origin.
pub fn lyapunov_gradient(x: &[f64]) -> Vec<f64> {
    let r2: f64 = x.iter().map(|c| c * c).sum();
    if r2 == 0.0 {
        return vec![0.0; x.len()];
    }
    let scale = 1.0 / ((1.0 + r2) * (1.0 + r2).ln().sqrt());
    x.iter().map(|c| c * scale).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub x: Vec<i64>,
    pub confidence: f64,
    /// Plain average of `f(Z_1) - f(x)`.
    pub raw: MeanSe,
    pub raw_interval: (f64, f64),
    /// Average of `f(Z_1) - f(x) - grad f(x) . (Z_1 - x)`; same expectation,
    /// since each walker's first regeneration displacement has mean zero.
    pub adjusted: MeanSe,
    pub adjusted_interval: (f64, f64),
}

/// Change of the Lyapunov function over one regeneration of two walkers
/// started `x` apart in the first two coordinates (d = 3).
pub fn lyapunov_drift_test(
    params: FieldParams,
    x: [i64; 2],
    replicas: u64,
) -> Result<LyapunovEstimate> {
    if params.d != 3 {
        return Err(Error::invalid("Lyapunov test needs d = 3"));
    }
    if x == [0, 0] {
        return Err(Error::invalid("start separation must be non-zero"));
    }
    let xf = [x[0] as f64, x[1] as f64];
    let f0 = lyapunov_f(&xf);
    let grad = lyapunov_gradient(&xf);
    let pairs = collect(run_replicas(replicas, |r| {
        let field = Field::new(params.for_replica(r));
        let mut state =
            JointState::init(&[Vertex::from([0, 0, 0]), Vertex::from([x[0], x[1], 0])])?;
        let rec =
            state
                .next_regeneration(&field, DEFAULT_STEP_CAP)?
                .ok_or(Error::BudgetExhausted {
                    step_cap: DEFAULT_STEP_CAP,
                    partial: vec![],
                })?;
        let (a, b) = (&rec.positions[0], &rec.positions[1]);
        let z = [(b[0] - a[0]) as f64, (b[1] - a[1]) as f64];
        let raw = lyapunov_f(&z) - f0;
        let lin = grad[0] * (z[0] - xf[0]) + grad[1] * (z[1] - xf[1]);
        Ok((raw, raw - lin))
    }))?;
    let raw = MeanSe::of(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let adjusted = MeanSe::of(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    Ok(LyapunovEstimate {
        x: x.to_vec(),
        confidence: 0.99,
        raw,
        raw_interval: raw.interval(Z99),
        adjusted,
        adjusted_interval: adjusted.interval(Z99),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusPoint {
    pub level: i64,
    pub components: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestCensus {
    pub d: usize,
    pub starts: Vec<Vertex>,
    pub horizon: i64,
    pub checkpoints: Vec<CensusPoint>,
}

impl ForestCensus {
    pub fn final_components(&self) -> usize {
        self.checkpoints
            .last()
            .map_or(self.starts.len(), |c| c.components)
    }
}

/// `count` starts on level 0 along the first axis, `width / count` apart.
pub fn spaced_starts(d: usize, count: usize, width: i64) -> Vec<Vertex> {
    let step = (width / count as i64).max(1);
    (0..count as i64).map(|i| axis_start(d, i * step)).collect()
}

/// Every open vertex of `[0, extent)^(d-1) x {0}`.
pub fn open_box_starts<E: Environment>(env: &E, extent: i64) -> Vec<Vertex> {
    let d = env.dim();
    let mut out = Vec::new();
    let mut x = vec![0i64; d];
    loop {
        if env.open(&x) {
            out.push(Vertex::from(x.clone()));
        }
        let mut i = 0;
        loop {
            if i == d - 1 {
                return out;
            }
            x[i] += 1;
            if x[i] < extent {
                break;
            }
            x[i] = 0;
            i += 1;
        }
    }
}

/// Log-spaced checkpoint levels ending at `horizon`.
pub fn census_checkpoints(horizon: i64) -> Vec<i64> {
    if horizon < 1 {
        return vec![0];
    }
    let mut levels = vec![0];
    levels.extend(
        log_grid(1, horizon as u64, 30)
            .into_iter()
            .map(|l| l as i64),
    );
    levels.dedup();
    levels
}

/// Number of distinct walker positions at each checkpoint.
pub fn forest_census<E: Environment>(
    env: &E,
    starts: &[Vertex],
    horizon: i64,
    checkpoints: &[i64],
) -> Result<ForestCensus> {
    if starts.is_empty() {
        return Err(Error::invalid("census needs at least one start"));
    }
    let mut flow = Flow::new(env, starts)?;
    let mut levels: Vec<i64> = checkpoints
        .iter()
        .copied()
        .filter(|&l| l <= horizon)
        .collect();
    levels.push(horizon);
    levels.sort_unstable();
    levels.dedup();
    let mut out = Vec::with_capacity(levels.len());
    for level in levels {
        flow.advance_to(level)?;
        out.push(CensusPoint {
            level,
            components: flow.occupied_count(),
        });
    }
    Ok(ForestCensus {
        d: env.dim(),
        starts: starts.to_vec(),
        horizon,
        checkpoints: out,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndependentPairRun {
    /// `v - u` projected, for `j = 0..=j_max`.
    pub differences: Vec<Vec<i64>>,
    /// Projected displacement of each walker between joint regenerations.
    pub increments_a: Vec<Vec<i64>>,
    pub increments_b: Vec<Vec<i64>>,
}

/// One walker in each of two environments, moved in tandem; samples are taken
/// whenever both histories are empty.
pub fn independent_pair_walk(
    params_a: FieldParams,
    params_b: FieldParams,
    u: &Vertex,
    v: &Vertex,
    j_max: u64,
    step_cap: u64,
) -> Result<IndependentPairRun> {
    if params_a.d != params_b.d {
        return Err(Error::invalid("environments must share a dimension"));
    }
    params_a.check_vertex(u)?;
    params_b.check_vertex(v)?;
    let envs = [Field::new(params_a), Field::new(params_b)];
    let mut state = JointState::init_with_envs(&[u.clone(), v.clone()], &[0, 1])?;
    let diff = |a: &Vertex, b: &Vertex| -> Vec<i64> {
        a.spatial()
            .iter()
            .zip(b.spatial())
            .map(|(x, y)| y - x)
            .collect()
    };
    let mut run = IndependentPairRun {
        differences: vec![diff(u, v)],
        increments_a: Vec::new(),
        increments_b: Vec::new(),
    };
    let (mut last_a, mut last_b) = (u.clone(), v.clone());
    for _ in 0..j_max {
        let rec =
            state
                .next_regeneration_multi(&envs, step_cap)?
                .ok_or(Error::BudgetExhausted {
                    step_cap,
                    partial: vec![],
                })?;
        let (a, b) = (&rec.positions[0], &rec.positions[1]);
        run.differences.push(diff(a, b));
        run.increments_a.push(diff(&last_a, a));
        run.increments_b.push(diff(&last_b, b));
        last_a = a.clone();
        last_b = b.clone();
    }
    Ok(run)
}

/// Distinct path positions at each level per start, for paths from every
/// vertex of `[-half_width, half_width] x {0}` (d = 2).
pub fn point_density_curve<E: Environment>(
    env: &E,
    half_width: i64,
    levels: &[i64],
) -> Result<Vec<f64>> {
    if env.dim() != 2 || half_width < 0 {
        return Err(Error::invalid(
            "point density needs d = 2 and half_width >= 0",
        ));
    }
    let starts: Vec<Vertex> = (-half_width..=half_width)
        .map(|x| Vertex::from([x, 0]))
        .collect();
    let mut flow = Flow::new(env, &starts)?;
    let mut order: Vec<usize> = (0..levels.len()).collect();
    order.sort_by_key(|&i| levels[i]);
    let mut out = vec![0.0; levels.len()];
    for i in order {
        if levels[i] < 0 {
            return Err(Error::invalid("levels must be >= 0"));
        }
        flow.advance_to(levels[i])?;
        out[i] = flow.points_at(levels[i]).len() as f64 / starts.len() as f64;
    }
    Ok(out)
}

pub fn point_density<E: Environment>(env: &E, half_width: i64, t: i64) -> Result<f64> {
    Ok(point_density_curve(env, half_width, &[t])?[0])
}
