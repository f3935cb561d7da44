//! Diffusive rescaling and Brownian-web counting diagnostics.
//!
//! A lattice point `(x, l)` maps to `(x / (n sigma0), l / (n^2 gamma0))`,
//! where `gamma0` is the mean number of levels between single-path
//! regenerations and `sigma0` the standard deviation of the horizontal
//! displacement over one regeneration. Query times in scaled units snap to
//! the nearest lattice level; positions at lattice levels are exact
//! rationals, so counts of distinct points involve no float comparison.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exploration::{JointState, DEFAULT_STEP_CAP};
use crate::field::{Environment, Field, FieldParams, Vertex};
use crate::flow::{Flow, LevelPoint};
use crate::replicas::run_replicas;
use crate::stats::MeanSe;
use crate::successor::{successor_jump, PathRecord};

/// Minimum number of increments accepted by [`estimate_constants`].
pub const MIN_CONSTANT_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingConstants {
    pub gamma0: f64,
    pub sigma0: f64,
    pub gamma0_se: f64,
    pub sigma0_se: f64,
    /// Mean horizontal increment; zero in expectation.
    pub drift: MeanSe,
    pub p: f64,
    pub d: usize,
    pub samples: usize,
}

impl ScalingConstants {
    /// Constants given directly rather than estimated.
    pub fn fixed(gamma0: f64, sigma0: f64, p: f64) -> Self {
        ScalingConstants {
            gamma0,
            sigma0,
            gamma0_se: 0.0,
            sigma0_se: 0.0,
            drift: MeanSe {
                mean: 0.0,
                se: 0.0,
                n: 0,
            },
            p,
            d: 2,
            samples: 0,
        }
    }
}

/// Single-walker regeneration increments from the origin, `j_per_replica`
/// per replica.
pub fn estimate_constants(
    params: FieldParams,
    replicas: u64,
    j_per_replica: u64,
) -> Result<ScalingConstants> {
    if params.d != 2 {
        return Err(Error::invalid("scaling constants need d = 2"));
    }
    let total = (replicas * j_per_replica) as usize;
    if total < MIN_CONSTANT_SAMPLES {
        return Err(Error::invalid(format!(
            "need at least {MIN_CONSTANT_SAMPLES} increments, got {total}"
        )));
    }
    let runs: Result<Vec<Vec<(i64, i64)>>> = run_replicas(replicas, |r| {
        let field = Field::new(params.for_replica(r));
        let mut state = JointState::init(&[Vertex::from([0, 0])])?;
        let (mut t, mut x) = (0, 0);
        let mut out = Vec::with_capacity(j_per_replica as usize);
        for _ in 0..j_per_replica {
            let rec = state.next_regeneration(&field, DEFAULT_STEP_CAP)?.ok_or(
                Error::BudgetExhausted {
                    step_cap: DEFAULT_STEP_CAP,
                    partial: vec![],
                },
            )?;
            let pos = &rec.positions[0];
            out.push((rec.t_time - t, pos[0] - x));
            t = rec.t_time;
            x = pos[0];
        }
        Ok(out)
    })
    .into_iter()
    .collect();
    let incs: Vec<(i64, i64)> = runs?.into_iter().flatten().collect();
    let dt: Vec<f64> = incs.iter().map(|p| p.0 as f64).collect();
    let dx: Vec<f64> = incs.iter().map(|p| p.1 as f64).collect();
    let gamma = MeanSe::of(&dt);
    let drift = MeanSe::of(&dx);
    let n = dx.len() as f64;
    let var = dx.iter().map(|v| (v - drift.mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sigma0 = var.sqrt();
    let sq: Vec<f64> = dx.iter().map(|v| (v - drift.mean).powi(2)).collect();
    // delta method: se(s) = se(s^2) / (2 s)
    let sigma0_se = MeanSe::of(&sq).se / (2.0 * sigma0);
    Ok(ScalingConstants {
        gamma0: gamma.mean,
        sigma0,
        gamma0_se: gamma.se,
        sigma0_se,
        drift,
        p: params.p,
        d: 2,
        samples: incs.len(),
    })
}

/// The map between lattice and scaled coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub n: f64,
    pub gamma: f64,
    pub sigma: f64,
}

impl Scale {
    pub fn new(n: f64, constants: &ScalingConstants) -> Result<Self> {
        if !(n >= 1.0) || !(constants.gamma0 > 0.0) || !(constants.sigma0 > 0.0) {
            return Err(Error::invalid("need n >= 1 and positive constants"));
        }
        Ok(Scale {
            n,
            gamma: constants.gamma0,
            sigma: constants.sigma0,
        })
    }

    pub fn space(&self, x: f64) -> f64 {
        x / (self.n * self.sigma)
    }

    pub fn time(&self, level: f64) -> f64 {
        level / (self.n * self.n * self.gamma)
    }

    /// Nearest lattice level to a scaled time.
    pub fn level(&self, t: f64) -> i64 {
        (t * self.n * self.n * self.gamma).round() as i64
    }

    /// Lattice abscissa of a scaled position.
    pub fn lattice_x(&self, a: f64) -> f64 {
        a * self.n * self.sigma
    }

    pub fn point(&self, p: &LevelPoint) -> f64 {
        self.space(p.coord(0))
    }
}

/// A piecewise-linear path in scaled coordinates, held constant before its
/// first and after its last knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledPath {
    /// `(time, position)` with strictly increasing times.
    pub knots: Vec<(f64, f64)>,
    /// Lattice vertices behind the knots; empty for synthetic paths.
    pub lattice: Vec<Vertex>,
}

impl ScaledPath {
    pub fn from_knots(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::invalid("a path needs at least one knot"));
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::invalid("knot times must increase strictly"));
        }
        Ok(ScaledPath {
            knots,
            lattice: Vec::new(),
        })
    }

    pub fn from_lattice(path: &PathRecord, scale: &Scale) -> Self {
        ScaledPath {
            knots: path
                .steps
                .iter()
                .map(|v| (scale.time(v.level() as f64), scale.space(v[0] as f64)))
                .collect(),
            lattice: path.steps.clone(),
        }
    }

    pub fn start_time(&self) -> f64 {
        self.knots[0].0
    }

    pub fn end_time(&self) -> f64 {
        self.knots.last().unwrap().0
    }

    /// `pi(t v start)`, constant after the last knot.
    pub fn value_at(&self, t: f64) -> f64 {
        let k = &self.knots;
        if t <= k[0].0 {
            return k[0].1;
        }
        let i = k.partition_point(|&(s, _)| s <= t);
        if i == k.len() {
            return k[i - 1].1;
        }
        let (t0, x0) = k[i - 1];
        let (t1, x1) = k[i];
        x0 + (x1 - x0) * (t - t0) / (t1 - t0)
    }

    /// Exact position at a lattice level, for lattice-backed paths.
    pub fn point_at_level(&self, level: i64) -> Option<LevelPoint> {
        let l = &self.lattice;
        if l.is_empty() {
            return None;
        }
        if level <= l[0].level() {
            return Some(LevelPoint::at_vertex(&l[0]));
        }
        let i = l.partition_point(|v| v.level() <= level);
        if i == l.len() {
            return Some(LevelPoint::at_vertex(&l[i - 1]));
        }
        if l[i - 1].level() == level {
            return Some(LevelPoint::at_vertex(&l[i - 1]));
        }
        Some(LevelPoint::on_edge(&l[i - 1], &l[i], level))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledEnsemble {
    pub scale: Scale,
    pub paths: Vec<ScaledPath>,
}

/// Interpolates each lattice path and maps it to scaled coordinates.
pub fn rescale(
    paths: &[PathRecord],
    n: f64,
    constants: &ScalingConstants,
) -> Result<ScaledEnsemble> {
    let scale = Scale::new(n, constants)?;
    Ok(ScaledEnsemble {
        scale,
        paths: paths
            .iter()
            .map(|p| ScaledPath::from_lattice(p, &scale))
            .collect(),
    })
}

/// Tolerance for synthetic paths, which carry no lattice knots.
pub const FLOAT_TOLERANCE: f64 = 1e-12;

fn count_distinct_f64(mut xs: Vec<f64>) -> usize {
    xs.sort_by(f64::total_cmp);
    let mut count = 0;
    let mut last = f64::NEG_INFINITY;
    for x in xs {
        if count == 0 || x - last > FLOAT_TOLERANCE {
            count += 1;
            last = x;
        }
    }
    count
}

impl ScaledEnsemble {
    fn exact(&self) -> bool {
        self.paths.iter().all(|p| !p.lattice.is_empty())
    }

    /// Paths born at or before `t0` with their positions at `t0` and `t0 + t`.
    fn born_before(
        &self,
        t0: f64,
        t: f64,
    ) -> Vec<(f64, Option<LevelPoint>, f64, Option<LevelPoint>)> {
        let exact = self.exact();
        let (l0, l1) = (self.scale.level(t0), self.scale.level(t0 + t));
        self.paths
            .iter()
            .filter(|p| {
                if exact {
                    p.lattice[0].level() <= l0
                } else {
                    p.start_time() <= t0
                }
            })
            .map(|p| {
                if exact {
                    let (a, b) = (p.point_at_level(l0).unwrap(), p.point_at_level(l1).unwrap());
                    (self.scale.point(&a), Some(a), self.scale.point(&b), Some(b))
                } else {
                    (p.value_at(t0), None, p.value_at(t0 + t), None)
                }
            })
            .collect()
    }

    fn distinct(&self, ends: Vec<(f64, Option<LevelPoint>)>) -> usize {
        if self.exact() {
            ends.into_iter()
                .filter_map(|e| e.1)
                .collect::<BTreeSet<_>>()
                .len()
        } else {
            count_distinct_f64(ends.into_iter().map(|e| e.0).collect())
        }
    }

    /// Distinct positions at `t0 + t` of paths born by `t0` that are in `[a, b]` at `t0`.
    pub fn eta_count(&self, t0: f64, t: f64, a: f64, b: f64) -> usize {
        let ends = self
            .born_before(t0, t)
            .into_iter()
            .filter(|(x0, ..)| a <= *x0 && *x0 <= b)
            .map(|(_, _, x1, p1)| (x1, p1))
            .collect();
        self.distinct(ends)
    }

    /// Distinct positions in `(a, b)` at `t0 + t` of paths born by `t0`.
    pub fn eta_hat_count(&self, t0: f64, t: f64, a: f64, b: f64) -> usize {
        let ends = self
            .born_before(t0, t)
            .into_iter()
            .filter(|(_, _, x1, _)| a < *x1 && *x1 < b)
            .map(|(_, _, x1, p1)| (x1, p1))
            .collect();
        self.distinct(ends)
    }
}

pub fn eta_count(ensemble: &ScaledEnsemble, t0: f64, t: f64, a: f64, b: f64) -> usize {
    ensemble.eta_count(t0, t, a, b)
}

pub fn eta_hat_count(ensemble: &ScaledEnsemble, t0: f64, t: f64, a: f64, b: f64) -> usize {
    ensemble.eta_hat_count(t0, t, a, b)
}

fn metric_term(p1: &ScaledPath, p2: &ScaledPath, t: f64) -> f64 {
    let s1 = p1.start_time();
    let s2 = p2.start_time();
    ((p1.value_at(t.max(s1))).tanh() - (p2.value_at(t.max(s2))).tanh()).abs() / (1.0 + t.abs())
}

const SEGMENT_SAMPLES: usize = 33;

/// `|tanh s1 - tanh s2|` joined with the sup over `t >= min(s1, s2)` of the
/// compactified position gap. Each piece between breakpoints is sampled and
/// the best sample refined by golden-section search.
pub fn path_distance(p1: &ScaledPath, p2: &ScaledPath) -> f64 {
    let start = p1.start_time().min(p2.start_time());
    let mut breaks: Vec<f64> = p1
        .knots
        .iter()
        .chain(&p2.knots)
        .map(|k| k.0)
        .chain([0.0])
        .filter(|&t| t >= start)
        .collect();
    breaks.push(start);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let g = |t: f64| metric_term(p1, p2, t);
    let mut best = breaks.iter().map(|&t| g(t)).fold(0.0, f64::max);
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let h = (hi - lo) / (SEGMENT_SAMPLES - 1) as f64;
        let (mut arg, mut val) = (lo, g(lo));
        for i in 1..SEGMENT_SAMPLES {
            let t = lo + h * i as f64;
            let v = g(t);
            if v > val {
                (arg, val) = (t, v);
            }
        }
        best = best.max(golden_max(&g, (arg - h).max(lo), (arg + h).min(hi)));
    }
    (p1.start_time().tanh() - p2.start_time().tanh())
        .abs()
        .max(best)
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut best = f(a).max(f(b));
    for _ in 0..60 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        let (fc, fd) = (f(c), f(d));
        best = best.max(fc).max(fd);
        if fc >= fd {
            b = d;
        } else {
            a = c;
        }
        if b - a < 1e-14 {
            break;
        }
    }
    best
}

/// Depth of the band below a level searched for edges crossing it: a
/// jump longer than `k` needs the `k^2` vertices of the forward ball of
/// radius `k` all closed.
pub fn crossing_band_depth(p: f64) -> i64 {
    let mut k = 1i64;
    while (1.0 - p).powf((k * k) as f64) >= 1e-15 {
        k += 1;
    }
    k
}

/// Open vertices `u` with `u(2) <= level < h(u)(2)` and `x_lo <= u(1) <= x_hi`,
/// searched `depth` levels below `level` (d = 2).
pub fn crossers<E: Environment>(
    env: &E,
    level: i64,
    x_lo: i64,
    x_hi: i64,
    depth: i64,
) -> Result<Vec<Vertex>> {
    let mut out = Vec::new();
    for l in level - depth..=level {
        for x in x_lo..=x_hi {
            let u = [x, l];
            if env.open(&u) && (l == level || successor_jump(env, &u)?.to.level() > level) {
                out.push(Vertex::from(u));
            }
        }
    }
    Ok(out)
}

/// Settings shared by the web diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WebSettings {
    pub n: f64,
    pub t: f64,
    pub constants: ScalingConstants,
}

impl WebSettings {
    fn scale(&self) -> Result<Scale> {
        if !(self.t > 0.0) {
            return Err(Error::invalid("t must be positive"));
        }
        Scale::new(self.n, &self.constants)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E1Report {
    pub n: f64,
    pub t: f64,
    pub a: f64,
    pub b: f64,
    pub windows: usize,
    pub target: f64,
    /// Mean of the per-replica window averages.
    pub eta_hat: MeanSe,
    pub relative_error: f64,
    pub start_level: i64,
    pub end_level: i64,
}

/// Spare width, in scaled units times `sqrt(t)`, kept on each side of the
/// E1 windows so that no path from outside the strip can reach them.
pub const E1_MARGIN_SD: f64 = 8.0;

/// `eta_hat(0, t; a + k (b - a), b + k (b - a))` for `k < windows`, in one
/// full-lattice environment.
pub fn e1_sample<E: Environment>(
    env: &E,
    settings: &WebSettings,
    a: f64,
    b: f64,
    windows: usize,
) -> Result<Vec<usize>> {
    let scale = settings.scale()?;
    if !(a < b) || windows == 0 {
        return Err(Error::invalid("need a < b and at least one window"));
    }
    let depth = crossing_band_depth(env.p());
    let margin = scale.lattice_x(E1_MARGIN_SD * settings.t.sqrt()) + depth as f64;
    let w = b - a;
    let x_lo = (scale.lattice_x(a) - margin).floor() as i64;
    let x_hi = (scale.lattice_x(a + w * windows as f64) + margin).ceil() as i64;
    let starts = crossers(env, 0, x_lo, x_hi, depth)?;
    let end = scale.level(settings.t);
    let mut flow = Flow::new(env, &starts)?;
    flow.advance_to(end)?;
    let xs: Vec<f64> = flow.points_at(end).iter().map(|p| scale.point(p)).collect();
    Ok((0..windows)
        .map(|k| {
            let (lo, hi) = (a + w * k as f64, b + w * k as f64);
            xs.iter().filter(|&&x| lo < x && x < hi).count()
        })
        .collect())
}

/// Mean number of distinct points per window against `(b - a) / sqrt(pi t)`.
pub fn e1_diagnostic(
    params: FieldParams,
    settings: &WebSettings,
    a: f64,
    b: f64,
    windows: usize,
    replicas: u64,
) -> Result<E1Report> {
    if params.d != 2 {
        return Err(Error::invalid("web diagnostics need d = 2"));
    }
    let scale = settings.scale()?;
    let per: Result<Vec<Vec<usize>>> = run_replicas(replicas, |r| {
        e1_sample(&Field::new(params.for_replica(r)), settings, a, b, windows)
    })
    .into_iter()
    .collect();
    let avgs: Vec<f64> = per?
        .iter()
        .map(|c| c.iter().sum::<usize>() as f64 / c.len() as f64)
        .collect();
    let eta_hat = MeanSe::of(&avgs);
    let target = (b - a) / (settings.t * std::f64::consts::PI).sqrt();
    Ok(E1Report {
        n: settings.n,
        t: settings.t,
        a,
        b,
        windows,
        target,
        eta_hat,
        relative_error: (eta_hat.mean - target) / target,
        start_level: 0,
        end_level: scale.level(settings.t),
    })
}

/// Finite stand-in for the sup over `(a, t0)`: a `cells_a x cells_t0` grid
/// over the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct B1Grid {
    pub cells_a: usize,
    pub cells_t0: usize,
}

impl Default for B1Grid {
    fn default() -> Self {
        B1Grid {
            cells_a: 20,
            cells_t0: 20,
        }
    }
}

impl B1Grid {
    pub fn a_values(&self) -> Vec<f64> {
        (0..self.cells_a)
            .map(|i| i as f64 / self.cells_a as f64)
            .collect()
    }

    pub fn t0_values(&self) -> Vec<f64> {
        (0..self.cells_t0)
            .map(|i| i as f64 / self.cells_t0 as f64)
            .collect()
    }
}

/// For each epsilon, the indicators `eta(t0, t; a, a + eps) >= 2` over the
/// grid, flattened `t0`-major.
pub fn b1_sample<E: Environment>(
    env: &E,
    settings: &WebSettings,
    epsilons: &[f64],
    grid: &B1Grid,
) -> Result<Vec<Vec<bool>>> {
    let scale = settings.scale()?;
    if epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::invalid("epsilons must be positive"));
    }
    let depth = crossing_band_depth(env.p());
    let eps_max = epsilons.iter().cloned().fold(0.0, f64::max);
    let a_values = grid.a_values();
    let a_max = a_values.last().copied().unwrap_or(0.0);
    let x_lo = scale.lattice_x(0.0).floor() as i64 - depth - 1;
    let x_hi = scale.lattice_x(a_max + eps_max).ceil() as i64 + depth + 1;
    let mut out = vec![Vec::with_capacity(a_values.len() * grid.cells_t0); epsilons.len()];
    for t0 in grid.t0_values() {
        let l0 = scale.level(t0);
        let l1 = scale.level(t0 + settings.t);
        let starts = crossers(env, l0, x_lo, x_hi, depth)?;
        let mut flow = Flow::new(env, &starts)?;
        flow.advance_to(l0)?;
        let first: Vec<f64> = (0..starts.len())
            .map(|i| scale.point(&flow.point_at(i, l0).expect("crossers reach the level")))
            .collect();
        flow.advance_to(l1)?;
        let last: Vec<LevelPoint> = (0..starts.len())
            .map(|i| flow.point_at(i, l1).expect("walkers reach the level"))
            .collect();
        for (e, &eps) in epsilons.iter().enumerate() {
            for &a in &a_values {
                let ends: BTreeSet<&LevelPoint> = (0..starts.len())
                    .filter(|&i| a <= first[i] && first[i] <= a + eps)
                    .map(|i| &last[i])
                    .collect();
                out[e].push(ends.len() >= 2);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B1Row {
    pub epsilon: f64,
    /// Over all grid cells and replicas; SE from per-replica averages.
    pub pooled: MeanSe,
    /// Largest per-cell frequency.
    pub grid_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B1Report {
    pub n: f64,
    pub t: f64,
    pub grid: B1Grid,
    pub replicas: u64,
    pub rows: Vec<B1Row>,
    /// Per-replica pooled frequency for each epsilon, for paired comparisons.
    pub per_replica: Vec<Vec<f64>>,
}

impl B1Report {
    /// Mean and SE of the paired difference `P(eps_j) - P(eps_i)`.
    pub fn difference(&self, i: usize, j: usize) -> MeanSe {
        let d: Vec<f64> = self.per_replica.iter().map(|r| r[j] - r[i]).collect();
        MeanSe::of(&d)
    }
}

pub fn b1_diagnostic(
    params: FieldParams,
    settings: &WebSettings,
    epsilons: &[f64],
    grid: &B1Grid,
    replicas: u64,
) -> Result<B1Report> {
    if params.d != 2 {
        return Err(Error::invalid("web diagnostics need d = 2"));
    }
    let per: Result<Vec<Vec<Vec<bool>>>> = run_replicas(replicas, |r| {
        b1_sample(&Field::new(params.for_replica(r)), settings, epsilons, grid)
    })
    .into_iter()
    .collect();
    let per = per?;
    let cells = grid.cells_a * grid.cells_t0;
    let per_replica: Vec<Vec<f64>> = per
        .iter()
        .map(|rep| {
            rep.iter()
                .map(|hits| hits.iter().filter(|&&h| h).count() as f64 / cells as f64)
                .collect()
        })
        .collect();
    let rows = epsilons
        .iter()
        .enumerate()
        .map(|(e, &epsilon)| {
            let pooled = MeanSe::of(&per_replica.iter().map(|r| r[e]).collect::<Vec<_>>());
            let grid_sup = (0..cells)
                .map(|c| per.iter().filter(|rep| rep[e][c]).count() as f64 / per.len() as f64)
                .fold(0.0, f64::max);
            B1Row {
                epsilon,
                pooled,
                grid_sup,
            }
        })
        .collect();
    Ok(B1Report {
        n: settings.n,
        t: settings.t,
        grid: *grid,
        replicas,
        rows,
        per_replica,
    })
}
