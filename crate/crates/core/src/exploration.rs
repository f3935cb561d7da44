//! Joint exploration of several paths with a shared history.
//!
//! Walkers start on a common level. At every step the walkers sitting on the
//! lowest level jump to their successors; the others wait. Every jump of
//! radius `r` from `g` examines the closed L1 ball of radius `r` around `g`,
//! and the history is the union of those balls cut to the levels strictly
//! above the current minimum walker level. A regeneration happens whenever
//! the history becomes empty; at that moment all walkers share one level and
//! the process restarts afresh.
//!
//! The history is kept as its generating balls in a min-heap keyed by the
//! ball's top level `center(d) + radius`; a ball contributes nothing once its
//! top is at or below the minimum level, so pruning pops from the heap. The
//! explicit vertex set can be materialized with [`JointState::history_vertices`].

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::field::{Environment, Vertex};
use crate::successor::{for_each_sphere_point, successor_jump};

/// Default budget of joint steps.
pub const DEFAULT_STEP_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Ball {
    top: i64,
    seq: u64,
    env: usize,
    center: Vertex,
    radius: u64,
}

#[derive(Debug, Clone, Default)]
struct History {
    heap: BinaryHeap<Reverse<Ball>>,
    max_top: i64,
    seq: u64,
}

impl History {
    fn push(&mut self, env: usize, center: Vertex, radius: u64) {
        let top = center.level() + radius as i64;
        if self.heap.is_empty() || top > self.max_top {
            self.max_top = top;
        }
        self.seq += 1;
        self.heap.push(Reverse(Ball {
            top,
            seq: self.seq,
            env,
            center,
            radius,
        }));
    }

    fn prune(&mut self, min_level: i64) {
        while let Some(Reverse(b)) = self.heap.peek() {
            if b.top > min_level {
                break;
            }
            self.heap.pop();
        }
    }

    fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// One mover of a joint step: every walker label sitting on `from`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Move {
    pub walkers: SmallVec<[usize; 2]>,
    pub from: Vertex,
    pub to: Vertex,
    pub radius: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub moves: Vec<Move>,
    /// History empty after this step.
    pub regenerated: bool,
    pub regeneration: Option<RegenerationRecord>,
}

/// State of the joint exploration after a regeneration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegenerationRecord {
    /// 1 for the first regeneration after the start.
    pub index: u64,
    /// Joint steps taken since the start.
    pub tau_steps: u64,
    /// Levels travelled since the start.
    pub t_time: i64,
    /// Total L1 length of the jumps since the previous regeneration.
    pub width: u64,
    pub positions: Vec<Vertex>,
}

/// Projection of `second - first` walker at a regeneration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifferenceSample {
    pub j: u64,
    pub z: Vec<i64>,
}

impl DifferenceSample {
    pub fn from_positions(j: u64, first: &Vertex, second: &Vertex) -> Self {
        let z = first
            .spatial()
            .iter()
            .zip(second.spatial())
            .map(|(a, b)| b - a)
            .collect();
        DifferenceSample { j, z }
    }

    pub fn is_absorbed(&self) -> bool {
        self.z.iter().all(|&c| c == 0)
    }
}

/// Positions of `k` walkers plus the history above the lowest of them.
#[derive(Debug, Clone)]
pub struct JointState {
    positions: Vec<Vertex>,
    envs: Vec<usize>,
    history: History,
    step: u64,
    min_level: i64,
    start_level: i64,
    regenerations: u64,
    width: u64,
}

impl JointState {
    /// All walkers in one environment.
    pub fn init(starts: &[Vertex]) -> Result<Self> {
        Self::init_with_envs(starts, &vec![0; starts.len()])
    }

    /// Walker `i` lives in environment `envs[i]`; walkers only coalesce
    /// with walkers of the same environment.
    pub fn init_with_envs(starts: &[Vertex], envs: &[usize]) -> Result<Self> {
        if starts.is_empty() {
            return Err(Error::invalid("at least one start is required"));
        }
        if envs.len() != starts.len() {
            return Err(Error::invalid("one environment index per start"));
        }
        let d = starts[0].dim();
        if d < 2 {
            return Err(Error::invalid("dimension must be >= 2"));
        }
        let level = starts[0].level();
        for s in starts {
            if s.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: s.dim(),
                });
            }
            if s.level() != level {
                return Err(Error::invalid(format!(
                    "starts must share a level: {:?} vs {:?}",
                    starts[0], s
                )));
            }
        }
        for i in 0..starts.len() {
            for j in 0..i {
                if starts[i] == starts[j] && envs[i] == envs[j] {
                    return Err(Error::invalid(format!("duplicate start {:?}", starts[i])));
                }
            }
        }
        Ok(JointState {
            positions: starts.to_vec(),
            envs: envs.to_vec(),
            history: History::default(),
            step: 0,
            min_level: level,
            start_level: level,
            regenerations: 0,
            width: 0,
        })
    }

    pub fn positions(&self) -> &[Vertex] {
        &self.positions
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn min_level(&self) -> i64 {
        self.min_level
    }

    pub fn regenerations(&self) -> u64 {
        self.regenerations
    }

    pub fn history_is_empty(&self) -> bool {
        self.history.is_empty()
    }

    /// Height of the history above the lowest walker; zero iff empty.
    pub fn height(&self) -> u64 {
        if self.history.is_empty() {
            0
        } else {
            (self.history.max_top - self.min_level) as u64
        }
    }

    /// Explicit history: every examined vertex strictly above the minimum level.
    pub fn history_vertices(&self) -> BTreeSet<Vertex> {
        let mut out = BTreeSet::new();
        for Reverse(ball) in self.history.heap.iter() {
            let d = ball.center.dim();
            let mut spatial: SmallVec<[i64; 4]> = SmallVec::from_slice(ball.center.spatial());
            let lowest = self.min_level + 1;
            for level in lowest..=ball.top {
                let dh = (level - ball.center.level()).unsigned_abs();
                if dh > ball.radius {
                    continue;
                }
                for s in 0..=ball.radius - dh {
                    for_each_sphere_point(ball.center.spatial(), s, &mut spatial, &mut |w| {
                        let mut v: SmallVec<[i64; 4]> = SmallVec::from_slice(w);
                        v.push(level);
                        debug_assert_eq!(v.len(), d);
                        out.insert(Vertex::new(&v));
                    });
                }
            }
        }
        out
    }

    /// One joint step with every walker in `env`.
    pub fn step_joint<E: Environment>(&mut self, env: &E) -> Result<StepOutcome> {
        self.step_in(|_| env)
    }

    /// One joint step where walker `i` lives in `envs[self.envs[i]]`.
    pub fn step_joint_multi<E: Environment>(&mut self, envs: &[E]) -> Result<StepOutcome> {
        self.step_in(|i| &envs[i])
    }

    fn step_in<'a, E: Environment + 'a>(
        &mut self,
        env_of: impl Fn(usize) -> &'a E,
    ) -> Result<StepOutcome> {
        let mut moves: Vec<Move> = Vec::new();
        for i in 0..self.positions.len() {
            if self.positions[i].level() != self.min_level {
                continue;
            }
            if let Some(m) = moves
                .iter_mut()
                .find(|m| m.from == self.positions[i] && self.envs[m.walkers[0]] == self.envs[i])
            {
                m.walkers.push(i);
                continue;
            }
            let jump = successor_jump(env_of(self.envs[i]), &self.positions[i])?;
            moves.push(Move {
                walkers: smallvec::smallvec![i],
                from: self.positions[i].clone(),
                to: jump.to,
                radius: jump.radius,
            });
        }
        for m in &moves {
            for &w in &m.walkers {
                self.positions[w] = m.to.clone();
            }
            self.history
                .push(self.envs[m.walkers[0]], m.from.clone(), m.radius);
            self.width += m.radius;
        }
        self.min_level = self.positions.iter().map(Vertex::level).min().unwrap();
        self.history.prune(self.min_level);
        self.step += 1;
        let regenerated = self.history.is_empty();
        Ok(StepOutcome {
            moves,
            regenerated,
            regeneration: regenerated.then(|| self.record()),
        })
    }

    fn record(&mut self) -> RegenerationRecord {
        self.regenerations += 1;
        let width = std::mem::take(&mut self.width);
        RegenerationRecord {
            index: self.regenerations,
            tau_steps: self.step,
            t_time: self.min_level - self.start_level,
            width,
            positions: self.positions.clone(),
        }
    }

    /// Steps until the next regeneration. `None` once the total step count
    /// reaches `step_cap` first.
    pub fn next_regeneration<E: Environment>(
        &mut self,
        env: &E,
        step_cap: u64,
    ) -> Result<Option<RegenerationRecord>> {
        self.next_regeneration_in(|_| env, step_cap)
    }

    pub fn next_regeneration_multi<E: Environment>(
        &mut self,
        envs: &[E],
        step_cap: u64,
    ) -> Result<Option<RegenerationRecord>> {
        self.next_regeneration_in(|i| &envs[i], step_cap)
    }

    fn next_regeneration_in<'a, E: Environment + 'a>(
        &mut self,
        env_of: impl Fn(usize) -> &'a E + Copy,
        step_cap: u64,
    ) -> Result<Option<RegenerationRecord>> {
        while self.step < step_cap {
            if let Some(r) = self.step_in(env_of)?.regeneration {
                return Ok(Some(r));
            }
        }
        Ok(None)
    }
}

/// Runs the joint process from `starts` until `j_max` regenerations.
pub fn run_until_regenerations<E: Environment>(
    env: &E,
    starts: &[Vertex],
    j_max: u64,
    step_cap: u64,
) -> Result<Vec<RegenerationRecord>> {
    if j_max < 1 {
        return Err(Error::invalid("j_max must be >= 1"));
    }
    for s in starts {
        env.params().check_vertex(s)?;
    }
    let mut state = JointState::init(starts)?;
    let mut records = Vec::with_capacity(j_max as usize);
    while (records.len() as u64) < j_max {
        match state.next_regeneration(env, step_cap)? {
            Some(r) => records.push(r),
            None => {
                return Err(Error::BudgetExhausted {
                    step_cap,
                    partial: records,
                })
            }
        }
    }
    Ok(records)
}

/// `z_j` = spatial part of `v`'s walker minus `u`'s walker at each
/// regeneration, starting with `z_0 = v - u`, stopping after the first zero.
pub fn difference_chain<E: Environment>(
    env: &E,
    u: &Vertex,
    v: &Vertex,
    j_max: u64,
    step_cap: u64,
) -> Result<Vec<DifferenceSample>> {
    env.params().check_vertex(u)?;
    env.params().check_vertex(v)?;
    if u.level() != v.level() || u == v {
        return Err(Error::invalid("u and v must be distinct and on one level"));
    }
    let mut state = JointState::init(&[u.clone(), v.clone()])?;
    let mut out = vec![DifferenceSample::from_positions(0, u, v)];
    let mut records = Vec::new();
    while (out.len() as u64) <= j_max {
        match state.next_regeneration(env, step_cap)? {
            Some(r) => {
                let z = DifferenceSample::from_positions(r.index, &r.positions[0], &r.positions[1]);
                records.push(r);
                let absorbed = z.is_absorbed();
                out.push(z);
                if absorbed {
                    break;
                }
            }
            None => {
                return Err(Error::BudgetExhausted {
                    step_cap,
                    partial: records,
                })
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Field, FieldParams};
    use crate::successor::iterate_path;
    use std::collections::HashMap;

    struct Scripted {
        params: FieldParams,
        open: HashMap<Vec<i64>, f64>,
    }

    impl Environment for Scripted {
        fn params(&self) -> &FieldParams {
            &self.params
        }
        fn uniform_bits(&self, v: &[i64]) -> u64 {
            let u = self.open.get(v).copied().unwrap_or(0.9);
            ((u * (1u64 << 53) as f64) as u64) << 11
        }
    }

    fn scripted(open: &[[i64; 2]]) -> Scripted {
        Scripted {
            params: FieldParams::new(2, 0.5, 0).unwrap(),
            open: open.iter().map(|v| (v.to_vec(), 0.1)).collect(),
        }
    }

    #[test]
    fn init_checks() {
        let s = JointState::init(&[[0, 0].into(), [5, 0].into()]).unwrap();
        assert_eq!(s.min_level(), 0);
        assert_eq!(s.height(), 0);
        assert!(JointState::init(&[[0, 0].into()]).is_ok());
        assert!(JointState::init(&[[0, 0].into(), [0, 1].into()]).is_err());
        assert!(JointState::init(&[[0, 0].into(), [0, 0].into()]).is_err());
        assert!(JointState::init(&[]).is_err());
    }

    #[test]
    fn straight_jumps_regenerate_immediately() {
        let env = scripted(&[[0, 1], [5, 1]]);
        let mut s = JointState::init(&[[0, 0].into(), [5, 0].into()]).unwrap();
        let out = s.step_joint(&env).unwrap();
        assert!(out.regenerated);
        assert_eq!(out.moves.len(), 2);
        assert!(s.history_vertices().is_empty());
    }

    #[test]
    fn diagonal_jump_leaves_one_vertex_of_history() {
        // (0,0) -> (1,1) with radius 2; (9,0) -> (9,1).
        let env = scripted(&[[1, 1], [9, 1]]);
        let mut s = JointState::init(&[[0, 0].into(), [9, 0].into()]).unwrap();
        let out = s.step_joint(&env).unwrap();
        assert!(!out.regenerated);
        // {w : |(0,0) - w|_1 <= 2, w(2) > 1} = {(0,2)}
        let expected: BTreeSet<Vertex> = [Vertex::from([0, 2])].into_iter().collect();
        assert_eq!(s.history_vertices(), expected);
        assert_eq!(s.height(), 1);
    }

    #[test]
    fn only_lower_walker_moves() {
        let env = scripted(&[[0, 3], [5, 1], [5, 2], [5, 3], [0, 4]]);
        let mut s = JointState::init(&[[0, 0].into(), [5, 0].into()]).unwrap();
        s.step_joint(&env).unwrap();
        assert_eq!(s.positions()[0], Vertex::from([0, 3]));
        assert_eq!(s.positions()[1], Vertex::from([5, 1]));
        let out = s.step_joint(&env).unwrap();
        assert_eq!(out.moves.len(), 1);
        assert_eq!(out.moves[0].walkers.as_slice(), &[1]);
        assert_eq!(s.positions()[0], Vertex::from([0, 3]));
    }

    #[test]
    fn single_walker_vertical_first_step() {
        let env = scripted(&[[0, 1]]);
        let mut s = JointState::init(&[[0, 0].into()]).unwrap();
        let r = s.next_regeneration(&env, 10).unwrap().unwrap();
        assert_eq!((r.index, r.tau_steps, r.t_time, r.width), (1, 1, 1, 1));
    }

    #[test]
    fn coalesced_walkers_move_once() {
        let field = Field::from_parts(2, 0.5, 3).unwrap();
        let mut s = JointState::init(&[[0, 0].into(), [1, 0].into()]).unwrap();
        for _ in 0..2000 {
            let out = s.step_joint(&field).unwrap();
            if s.positions()[0] == s.positions()[1] {
                let out2 = s.step_joint(&field).unwrap();
                if let Some(m) = out2.moves.first() {
                    assert_eq!(m.walkers.len(), 2);
                }
                return;
            }
            assert!(out.moves.len() <= 2);
        }
        panic!("walkers one apart did not meet");
    }

    #[test]
    fn history_invariants_hold_every_step() {
        for (d, seed) in [(2usize, 1u64), (3, 2), (4, 3)] {
            let field = Field::from_parts(d, 0.4, seed).unwrap();
            let mut a = vec![0i64; d];
            let b = {
                let mut b = a.clone();
                b[0] = 3;
                b
            };
            a[d - 1] = 0;
            let mut s = JointState::init(&[Vertex::from(a), Vertex::from(b)]).unwrap();
            for _ in 0..300 {
                s.step_joint(&field).unwrap();
                let hist = s.history_vertices();
                assert!(hist.iter().all(|w| w.level() > s.min_level()));
                let min = s.positions().iter().map(Vertex::level).min().unwrap();
                assert_eq!(min, s.min_level());
                if s.history_is_empty() {
                    assert!(hist.is_empty());
                    let l = s.positions()[0].level();
                    assert!(s.positions().iter().all(|p| p.level() == l));
                    assert_eq!(s.height(), 0);
                } else {
                    let top = hist.iter().map(Vertex::level).max().unwrap();
                    assert_eq!(s.height() as i64, top - s.min_level());
                    // columns above the walkers were never examined
                    for p in s.positions() {
                        for m in 1..20 {
                            assert!(!hist.contains(&p.raised(m)) || p.level() > s.min_level());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn marginals_follow_successor_paths() {
        let field = Field::from_parts(2, 0.5, 77).unwrap();
        let starts: Vec<Vertex> = vec![[0, 0].into(), [4, 0].into(), [-7, 0].into()];
        let paths: Vec<_> = starts
            .iter()
            .map(|s| iterate_path(&field, s, 3000).unwrap())
            .collect();
        let mut s = JointState::init(&starts).unwrap();
        for _ in 0..1000 {
            s.step_joint(&field).unwrap();
            for (i, p) in s.positions().iter().enumerate() {
                assert!(paths[i].steps.contains(p));
            }
        }
    }

    #[test]
    fn regenerations_are_level_aligned_and_monotone() {
        let field = Field::from_parts(2, 0.5, 5).unwrap();
        let recs =
            run_until_regenerations(&field, &[[0, 0].into(), [6, 0].into()], 3, 100_000).unwrap();
        assert_eq!(recs.len(), 3);
        for w in recs.windows(2) {
            assert!(w[1].tau_steps > w[0].tau_steps);
            assert!(w[1].t_time > w[0].t_time);
        }
        for r in &recs {
            assert_eq!(r.positions[0].level(), r.positions[1].level());
        }
    }

    #[test]
    fn budget_exhaustion_returns_partial_records() {
        let field = Field::from_parts(2, 0.5, 5).unwrap();
        match run_until_regenerations(&field, &[[0, 0].into(), [6, 0].into()], 1_000_000, 50) {
            Err(Error::BudgetExhausted { step_cap, partial }) => {
                assert_eq!(step_cap, 50);
                assert!(partial.iter().all(|r| r.tau_steps <= 50));
            }
            other => panic!("expected budget exhaustion, got {other:?}"),
        }
        assert!(run_until_regenerations(&field, &[[0, 0].into()], 0, 50).is_err());
    }

    #[test]
    fn difference_chain_absorbs_and_never_changes_sign() {
        let field = Field::from_parts(2, 0.5, 1234).unwrap();
        let mut absorbed = 0;
        for r in 0..200 {
            let f = Field::new(field.params().for_replica(r));
            let chain =
                difference_chain(&f, &[0, 0].into(), &[3, 0].into(), 100_000, 10_000_000).unwrap();
            assert_eq!(chain[0].z, vec![3]);
            assert!(chain.iter().all(|z| z.z[0] >= 0));
            let last = chain.last().unwrap();
            if last.is_absorbed() {
                absorbed += 1;
                assert!(chain[..chain.len() - 1].iter().all(|z| !z.is_absorbed()));
            }
        }
        assert!(absorbed > 150);
    }

    #[test]
    fn difference_chain_rejects_bad_starts() {
        let field = Field::from_parts(2, 0.5, 1).unwrap();
        assert!(difference_chain(&field, &[0, 0].into(), &[0, 0].into(), 3, 100).is_err());
        assert!(difference_chain(&field, &[0, 0].into(), &[0, 1].into(), 3, 100).is_err());
    }
}
