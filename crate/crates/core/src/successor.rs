//! The successor rule and the paths it generates.
//!
//! `h(u)` is the open vertex strictly above `u` (in the last coordinate) at
//! minimal L1 distance; among several at that distance the one with the
//! smallest uniform value wins, and the lexicographically smallest coordinate
//! vector breaks any remaining tie. The search walks forward L1 shells of
//! radius 1, 2, ... and stops at the first shell holding an open vertex.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::field::{Environment, Vertex};

/// Safety valve on the shell radius.
pub const DEFAULT_RADIUS_CAP: u64 = 10_000;

/// Forward vertices at one exact L1 radius from `center`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shell {
    pub center: Vertex,
    pub radius: u64,
    /// Lexicographically sorted.
    pub members: Vec<Vertex>,
}

/// One application of the successor rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Jump {
    pub to: Vertex,
    pub radius: u64,
}

/// `h^0(u) = u, h^1(u), ...` together with the L1 length of every jump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathRecord {
    pub start: Vertex,
    pub steps: Vec<Vertex>,
    pub step_radii: Vec<u64>,
}

impl PathRecord {
    pub fn last(&self) -> &Vertex {
        self.steps.last().expect("path contains its start")
    }
}

/// Calls `f` on every integer vector of `buf.len()` coordinates with L1 norm
/// exactly `radius`, offset by `base`.
pub(crate) fn for_each_sphere_point<F: FnMut(&[i64])>(
    base: &[i64],
    radius: u64,
    buf: &mut [i64],
    f: &mut F,
) {
    fn rec<F: FnMut(&[i64])>(base: &[i64], idx: usize, rem: u64, buf: &mut [i64], f: &mut F) {
        let last = buf.len() - 1;
        if idx == last {
            let r = rem as i64;
            if r == 0 {
                buf[idx] = base[idx];
                f(buf);
            } else {
                buf[idx] = base[idx] - r;
                f(buf);
                buf[idx] = base[idx] + r;
                f(buf);
            }
            return;
        }
        let r = rem as i64;
        for c in -r..=r {
            buf[idx] = base[idx] + c;
            rec(base, idx + 1, rem - c.unsigned_abs(), buf, f);
        }
    }
    if buf.is_empty() {
        if radius == 0 {
            f(buf);
        }
        return;
    }
    rec(base, 0, radius, buf, f);
}

/// Forward shell of radius `k` around `center` in dimension `d`.
pub fn forward_shell(center: &Vertex, k: i64, d: usize) -> Result<Shell> {
    if k <= 0 {
        return Err(Error::invalid(format!(
            "shell radius must be >= 1, got {k}"
        )));
    }
    if center.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: center.dim(),
        });
    }
    let k = k as u64;
    let mut members = Vec::new();
    let mut spatial: SmallVec<[i64; 4]> = SmallVec::from_slice(center.spatial());
    for h in 1..=k {
        let level = center.level() + h as i64;
        for_each_sphere_point(center.spatial(), k - h, &mut spatial, &mut |s| {
            let mut coords = s.to_vec();
            coords.push(level);
            members.push(Vertex::from(coords));
        });
    }
    members.sort();
    Ok(Shell {
        center: center.clone(),
        radius: k,
        members,
    })
}

/// Candidate ordering of condition 3 plus the lexicographic fallback.
#[inline]
fn better(bits: u64, w: &[i64], best: &Option<(u64, Vertex)>) -> bool {
    match best {
        None => true,
        Some((b, v)) => match (bits >> 11).cmp(&(b >> 11)) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => w < &v[..],
        },
    }
}

/// `h(u)` with the jump radius, searching shells up to `radius_cap`.
pub fn successor_capped<E: Environment>(env: &E, u: &[i64], radius_cap: u64) -> Result<Jump> {
    let d = env.dim();
    if u.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: u.len(),
        });
    }
    let p = env.p();
    let mut buf: SmallVec<[i64; 4]> = SmallVec::from_slice(u);
    // radius 1 has a single forward vertex: straight up
    buf[d - 1] += 1;
    if env.open(&buf) {
        return Ok(Jump {
            to: Vertex::new(&buf),
            radius: 1,
        });
    }
    for k in 2..=radius_cap {
        let mut best: Option<(u64, Vertex)> = None;
        for h in 1..=k {
            buf[d - 1] = u[d - 1] + h as i64;
            let level = buf[d - 1];
            let (spatial, _) = buf.split_at_mut(d - 1);
            for_each_sphere_point(&u[..d - 1], k - h, spatial, &mut |s| {
                let mut w: SmallVec<[i64; 4]> = SmallVec::from_slice(s);
                w.push(level);
                let bits = env.uniform_bits(&w);
                if crate::field::bits_to_unit(bits) < p && better(bits, &w, &best) {
                    best = Some((bits, Vertex::new(&w)));
                }
            });
        }
        if let Some((_, to)) = best {
            return Ok(Jump { to, radius: k });
        }
    }
    Err(Error::SearchExhausted { radius_cap })
}

pub fn successor_jump<E: Environment>(env: &E, u: &[i64]) -> Result<Jump> {
    successor_capped(env, u, DEFAULT_RADIUS_CAP)
}

/// `h(u)`.
pub fn successor<E: Environment>(env: &E, u: &Vertex) -> Result<Vertex> {
    successor_jump(env, u).map(|j| j.to)
}

/// Literal scan of the L1 ball of radius `window_radius`; test oracle.
pub fn successor_bruteforce<E: Environment>(
    env: &E,
    u: &Vertex,
    window_radius: u64,
) -> Result<Vertex> {
    let d = env.dim();
    if u.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: u.dim(),
        });
    }
    let r = window_radius as i64;
    let mut best: Option<(u64, f64, Vertex)> = None;
    let mut w = vec![0i64; d];
    let total = (2 * r + 1).pow(d as u32);
    for idx in 0..total {
        let mut rest = idx;
        for (i, c) in w.iter_mut().enumerate() {
            *c = u[i] + rest % (2 * r + 1) - r;
            rest /= 2 * r + 1;
        }
        if w[d - 1] <= u[d - 1] {
            continue;
        }
        let dist = crate::field::l1_distance(&w, u);
        if dist > window_radius {
            continue;
        }
        let value = env.uniform(&w);
        if value >= env.p() {
            continue;
        }
        let replace = match &best {
            None => true,
            Some((bd, bv, bw)) => {
                dist < *bd || (dist == *bd && (value < *bv || (value == *bv && w < bw.to_vec())))
            }
        };
        if replace {
            best = Some((dist, value, Vertex::new(&w)));
        }
    }
    best.map(|(_, _, v)| v).ok_or(Error::OracleWindowTooSmall {
        window: window_radius,
    })
}

/// `n_steps` applications of the successor rule starting at `u`.
pub fn iterate_path<E: Environment>(env: &E, u: &Vertex, n_steps: usize) -> Result<PathRecord> {
    env.params().check_vertex(u)?;
    let mut steps = Vec::with_capacity(n_steps + 1);
    let mut radii = Vec::with_capacity(n_steps);
    steps.push(u.clone());
    for _ in 0..n_steps {
        let jump = successor_jump(env, steps.last().unwrap())?;
        steps.push(jump.to);
        radii.push(jump.radius);
    }
    Ok(PathRecord {
        start: u.clone(),
        steps,
        step_radii: radii,
    })
}

/// Follows the path from `u` until its level is at least `level`.
pub fn path_to_level<E: Environment>(env: &E, u: &Vertex, level: i64) -> Result<PathRecord> {
    env.params().check_vertex(u)?;
    let mut steps = vec![u.clone()];
    let mut radii = Vec::new();
    while steps.last().unwrap().level() < level {
        let jump = successor_jump(env, steps.last().unwrap())?;
        steps.push(jump.to);
        radii.push(jump.radius);
    }
    Ok(PathRecord {
        start: u.clone(),
        steps,
        step_radii: radii,
    })
}
