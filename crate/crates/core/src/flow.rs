//! Coalescing flow of many paths in one environment.
//!
//! Occupied vertices are processed lowest level first. Walkers landing on the
//! same vertex merge; their labels stay addressable through a union-find.
//! Merging is deferred until the shared vertex moves, so after
//! [`Flow::advance_to`] every occupied vertex still remembers the edges that
//! reached it, which gives exact crossing points at the checkpoint level.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::fmt;

use smallvec::SmallVec;

use crate::error::Result;
use crate::field::{Environment, Vertex};
use crate::successor::successor_jump;

fn gcd(mut a: i64, mut b: i64) -> i64 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Exact position of a path at an integer level: `num / den` per spatial
/// coordinate, stored in lowest terms with `den > 0`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LevelPoint {
    pub num: SmallVec<[i64; 3]>,
    pub den: i64,
}

impl LevelPoint {
    pub fn at_vertex(v: &Vertex) -> Self {
        LevelPoint {
            num: SmallVec::from_slice(v.spatial()),
            den: 1,
        }
    }

    /// Point where the segment `from -> to` meets `level`; requires
    /// `from.level() <= level <= to.level()` and `from.level() < to.level()`.
    pub fn on_edge(from: &Vertex, to: &Vertex, level: i64) -> Self {
        let den = to.level() - from.level();
        let t = level - from.level();
        debug_assert!(den > 0 && (0..=den).contains(&t));
        let mut num: SmallVec<[i64; 3]> = from
            .spatial()
            .iter()
            .zip(to.spatial())
            .map(|(a, b)| a * den + (b - a) * t)
            .collect();
        let g = num.iter().fold(den, |g, &x| gcd(g, x));
        for x in num.iter_mut() {
            *x /= g;
        }
        LevelPoint { num, den: den / g }
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.num[i] as f64 / self.den as f64
    }

    pub fn to_f64(&self) -> Vec<f64> {
        (0..self.num.len()).map(|i| self.coord(i)).collect()
    }
}

impl fmt::Debug for LevelPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}/{}", self.num.as_slice(), self.den)
    }
}

/// Many coalescing walkers advanced together.
pub struct Flow<'a, E> {
    env: &'a E,
    parent: Vec<usize>,
    /// For a root label: its vertex and the vertex it came from.
    at: Vec<(Vertex, Option<Vertex>)>,
    occupied: HashMap<Vertex, SmallVec<[usize; 2]>>,
    queue: BinaryHeap<Reverse<(i64, Vertex)>>,
    moves: u64,
}

impl<'a, E: Environment> Flow<'a, E> {
    /// Label `i` starts at `starts[i]`. Repeated starts are allowed.
    pub fn new(env: &'a E, starts: &[Vertex]) -> Result<Self> {
        let mut flow = Flow {
            env,
            parent: (0..starts.len()).collect(),
            at: Vec::with_capacity(starts.len()),
            occupied: HashMap::with_capacity(starts.len()),
            queue: BinaryHeap::with_capacity(starts.len()),
            moves: 0,
        };
        for (i, s) in starts.iter().enumerate() {
            env.params().check_vertex(s)?;
            flow.at.push((s.clone(), None));
            flow.place(i, s.clone());
        }
        Ok(flow)
    }

    fn place(&mut self, root: usize, v: Vertex) {
        let entry = self.occupied.entry(v.clone()).or_default();
        if entry.is_empty() {
            self.queue.push(Reverse((v.level(), v)));
        }
        entry.push(root);
    }

    pub fn find(&mut self, mut label: usize) -> usize {
        while self.parent[label] != label {
            self.parent[label] = self.parent[self.parent[label]];
            label = self.parent[label];
        }
        label
    }

    /// Moves walkers until every one of them sits at level `>= level`.
    pub fn advance_to(&mut self, level: i64) -> Result<()> {
        while let Some(Reverse((l, _))) = self.queue.peek() {
            if *l >= level {
                break;
            }
            let Reverse((_, v)) = self.queue.pop().unwrap();
            let roots = self.occupied.remove(&v).unwrap();
            let root = roots[0];
            for &r in &roots[1..] {
                self.parent[r] = root;
            }
            let jump = successor_jump(self.env, &v)?;
            self.moves += 1;
            self.at[root] = (jump.to.clone(), Some(v));
            self.place(root, jump.to);
        }
        Ok(())
    }

    /// Lowest occupied level.
    pub fn front_level(&self) -> Option<i64> {
        self.queue.peek().map(|Reverse((l, _))| *l)
    }

    /// Number of distinct occupied vertices.
    pub fn occupied_count(&self) -> usize {
        self.occupied.len()
    }

    /// Successor evaluations so far.
    pub fn moves(&self) -> u64 {
        self.moves
    }

    /// Current vertex of the walker with this label.
    pub fn position(&mut self, label: usize) -> Vertex {
        let r = self.find(label);
        self.at[r].0.clone()
    }

    fn root_point(&self, root: usize, level: i64) -> Option<LevelPoint> {
        let (w, prev) = &self.at[root];
        if w.level() == level {
            return Some(LevelPoint::at_vertex(w));
        }
        match prev {
            Some(u) if u.level() < level && level < w.level() => {
                Some(LevelPoint::on_edge(u, w, level))
            }
            _ => None,
        }
    }

    /// Position of a walker at `level`, valid right after `advance_to(level)`.
    /// `None` when the walker started above `level`.
    pub fn point_at(&mut self, label: usize, level: i64) -> Option<LevelPoint> {
        let r = self.find(label);
        self.root_point(r, level)
    }

    /// Distinct walker positions at `level`, valid right after `advance_to(level)`.
    pub fn points_at(&self, level: i64) -> BTreeSet<LevelPoint> {
        self.occupied
            .values()
            .flatten()
            .filter_map(|&r| self.root_point(r, level))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Field;
    use crate::successor::path_to_level;

    #[test]
    fn level_point_reduces() {
        let p = LevelPoint::on_edge(&[0, 0].into(), &[2, 2].into(), 1);
        assert_eq!((p.num.as_slice(), p.den), (&[1][..], 1));
        let q = LevelPoint::on_edge(&[0, 0].into(), &[1, 3].into(), 1);
        assert_eq!((q.num.as_slice(), q.den), (&[1][..], 3));
        let r = LevelPoint::on_edge(&[-3, 0].into(), &[3, 4].into(), 2);
        assert_eq!((r.num.as_slice(), r.den), (&[0][..], 1));
        assert_eq!(
            LevelPoint::on_edge(&[5, 1].into(), &[7, 3].into(), 3).den,
            1
        );
        assert_eq!(q.coord(0), 1.0 / 3.0);
    }

    fn path_point(field: &Field, start: &Vertex, level: i64) -> Option<LevelPoint> {
        if start.level() > level {
            return None;
        }
        let path = path_to_level(field, start, level).unwrap();
        let w = path.last();
        if w.level() == level {
            return Some(LevelPoint::at_vertex(w));
        }
        let u = &path.steps[path.steps.len() - 2];
        Some(LevelPoint::on_edge(u, w, level))
    }

    #[test]
    fn flow_matches_individual_paths() {
        for seed in 0..5 {
            let field = Field::from_parts(2, 0.5, seed).unwrap();
            let starts: Vec<Vertex> = (-20..20)
                .map(|x| Vertex::from([x, (x * 7 + seed as i64).rem_euclid(5) - 4]))
                .collect();
            let mut flow = Flow::new(&field, &starts).unwrap();
            for level in [0, 3, 10, 40, 200] {
                flow.advance_to(level).unwrap();
                let mut expected = BTreeSet::new();
                for (i, s) in starts.iter().enumerate() {
                    let want = path_point(&field, s, level);
                    assert_eq!(flow.point_at(i, level), want, "label {i} level {level}");
                    expected.extend(want);
                }
                assert_eq!(flow.points_at(level), expected);
            }
        }
    }

    #[test]
    fn occupied_count_never_increases() {
        let field = Field::from_parts(2, 0.5, 9).unwrap();
        let starts: Vec<Vertex> = (0..50).map(|x| Vertex::from([x, 0])).collect();
        let mut flow = Flow::new(&field, &starts).unwrap();
        let mut last = flow.occupied_count();
        for level in 1..300 {
            flow.advance_to(level).unwrap();
            assert!(flow.occupied_count() <= last);
            last = flow.occupied_count();
            assert!(flow.front_level().unwrap() >= level);
        }
    }

    #[test]
    fn repeated_starts_share_a_walker() {
        let field = Field::from_parts(3, 0.5, 2).unwrap();
        let s = Vertex::from([1, 1, 0]);
        let mut flow = Flow::new(&field, &[s.clone(), s.clone()]).unwrap();
        assert_eq!(flow.occupied_count(), 1);
        flow.advance_to(10).unwrap();
        assert_eq!(flow.position(0), flow.position(1));
        assert_eq!(flow.find(0), flow.find(1));
    }
}
