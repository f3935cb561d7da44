//! Survival curves and tail fits, with right censoring.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::linear_fit;

/// Minimum sample size accepted by the fits.
pub const MIN_FIT_SAMPLES: usize = 1000;
/// Smallest survival probability used by the exponential fit.
pub const EXP_FIT_FLOOR: f64 = 1e-3;
/// Thresholds in the default logarithmic grid.
pub const POWER_GRID_POINTS: usize = 25;

/// A sample value, or a lower bound on it when `censored`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub value: u64,
    pub censored: bool,
}

impl Observation {
    pub fn exact(value: u64) -> Self {
        Observation {
            value,
            censored: false,
        }
    }
}

/// Kaplan–Meier estimate of `t -> P(X > t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KaplanMeier {
    /// Distinct uncensored values in increasing order.
    pub times: Vec<u64>,
    /// `P(X > times[i])`.
    pub survival: Vec<f64>,
}

impl KaplanMeier {
    pub fn new(obs: &[Observation]) -> Self {
        let mut sorted = obs.to_vec();
        sorted.sort_by_key(|o| (o.value, o.censored));
        let mut at_risk = sorted.len();
        let mut s = 1.0;
        let mut times = Vec::new();
        let mut survival = Vec::new();
        let mut i = 0;
        while i < sorted.len() {
            let t = sorted[i].value;
            let mut events = 0;
            let mut leaving = 0;
            while i < sorted.len() && sorted[i].value == t {
                if !sorted[i].censored {
                    events += 1;
                }
                leaving += 1;
                i += 1;
            }
            if events > 0 {
                s *= 1.0 - events as f64 / at_risk as f64;
                times.push(t);
                survival.push(s);
            }
            at_risk -= leaving;
        }
        KaplanMeier { times, survival }
    }

    /// `P(X > t)`.
    pub fn survival_gt(&self, t: u64) -> f64 {
        match self.times.partition_point(|&x| x <= t) {
            0 => 1.0,
            k => self.survival[k - 1],
        }
    }

    /// `P(X >= t)`.
    pub fn survival_ge(&self, t: u64) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.survival_gt(t - 1)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub thresholds: Vec<f64>,
    pub survival: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

fn check_samples(obs: &[Observation]) -> Result<()> {
    if obs.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_FIT_SAMPLES,
            got: obs.len(),
        });
    }
    if obs.iter().all(|o| o.value == obs[0].value) {
        return Err(Error::FitUndefined("all samples are equal".into()));
    }
    Ok(())
}

fn fit(thresholds: Vec<f64>, survival: Vec<f64>, x: Vec<f64>) -> Result<TailFit> {
    if x.len() < 3 {
        return Err(Error::FitUndefined(format!(
            "only {} usable thresholds",
            x.len()
        )));
    }
    let y: Vec<f64> = survival.iter().map(|s| s.ln()).collect();
    let (slope, intercept, r_squared) = linear_fit(&x, &y);
    if !slope.is_finite() {
        return Err(Error::FitUndefined("non-finite slope".into()));
    }
    Ok(TailFit {
        thresholds,
        survival,
        slope,
        intercept,
        r_squared,
    })
}

/// Fits `ln P(X >= t)` against `t` over the integers where the survival is
/// at least [`EXP_FIT_FLOOR`].
pub fn exp_tail_fit(samples: &[u64]) -> Result<TailFit> {
    let obs: Vec<Observation> = samples.iter().map(|&v| Observation::exact(v)).collect();
    exp_tail_fit_censored(&obs)
}

pub fn exp_tail_fit_censored(obs: &[Observation]) -> Result<TailFit> {
    check_samples(obs)?;
    let km = KaplanMeier::new(obs);
    let lo = obs.iter().map(|o| o.value).min().unwrap();
    let hi = obs.iter().map(|o| o.value).max().unwrap();
    let mut thresholds = Vec::new();
    let mut survival = Vec::new();
    for t in lo..=hi {
        let s = km.survival_ge(t);
        if s < EXP_FIT_FLOOR {
            break;
        }
        thresholds.push(t as f64);
        survival.push(s);
    }
    let x = thresholds.clone();
    fit(thresholds, survival, x)
}

/// Integer thresholds spaced evenly in `ln t` between `t_min` and `t_max`.
pub fn log_grid(t_min: u64, t_max: u64, points: usize) -> Vec<u64> {
    let (a, b) = ((t_min as f64).ln(), (t_max as f64).ln());
    let mut grid: Vec<u64> = (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp().round() as u64)
        .collect();
    grid.dedup();
    grid
}

/// Fits `ln P(X > t)` against `ln t` on a logarithmic grid in `[t_min, t_max]`.
pub fn power_tail_fit(samples: &[u64], t_min: u64, t_max: u64) -> Result<TailFit> {
    let obs: Vec<Observation> = samples.iter().map(|&v| Observation::exact(v)).collect();
    power_tail_fit_censored(&obs, t_min, t_max)
}

pub fn power_tail_fit_censored(obs: &[Observation], t_min: u64, t_max: u64) -> Result<TailFit> {
    if t_min < 1 || t_max < 100 * t_min {
        return Err(Error::invalid(
            "power fit needs 1 <= t_min and t_max >= 100 t_min",
        ));
    }
    power_tail_fit_on_grid(obs, &log_grid(t_min, t_max, POWER_GRID_POINTS))
}

/// Power fit on explicit thresholds; thresholds with zero survival are dropped.
pub fn power_tail_fit_on_grid(obs: &[Observation], grid: &[u64]) -> Result<TailFit> {
    check_samples(obs)?;
    let km = KaplanMeier::new(obs);
    let mut thresholds = Vec::new();
    let mut survival = Vec::new();
    for &t in grid {
        let s = km.survival_gt(t);
        if s > 0.0 {
            thresholds.push(t as f64);
            survival.push(s);
        }
    }
    let x = thresholds.iter().map(|t| t.ln()).collect();
    fit(thresholds, survival, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{bits_to_unit, mix64};

    fn geometric_samples(p: f64, n: usize, seed: u64) -> Vec<u64> {
        (0..n as u64)
            .map(|i| {
                let u = bits_to_unit(mix64(seed ^ mix64(i)));
                // inverse transform of P(G >= k) = (1-p)^(k-1)
                (u.ln() / (1.0 - p).ln()).floor() as u64 + 1
            })
            .collect()
    }

    #[test]
    fn km_without_censoring_is_empirical() {
        let obs: Vec<Observation> = [1, 2, 2, 3, 5]
            .iter()
            .map(|&v| Observation::exact(v))
            .collect();
        let km = KaplanMeier::new(&obs);
        assert_eq!(km.survival_gt(0), 1.0);
        assert!((km.survival_gt(1) - 0.8).abs() < 1e-12);
        assert!((km.survival_gt(2) - 0.4).abs() < 1e-12);
        assert!((km.survival_gt(4) - 0.2).abs() < 1e-12);
        assert_eq!(km.survival_gt(5), 0.0);
        assert!((km.survival_ge(3) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn km_with_censoring_matches_hand_computation() {
        // values 1, 2+, 3, 4+ : S(1) = 3/4, S(3) = 3/4 * (1 - 1/2) = 3/8
        let obs = [
            Observation::exact(1),
            Observation {
                value: 2,
                censored: true,
            },
            Observation::exact(3),
            Observation {
                value: 4,
                censored: true,
            },
        ];
        let km = KaplanMeier::new(&obs);
        assert!((km.survival_gt(1) - 0.75).abs() < 1e-12);
        assert!((km.survival_gt(2) - 0.75).abs() < 1e-12);
        assert!((km.survival_gt(3) - 0.375).abs() < 1e-12);
        assert!((km.survival_gt(10) - 0.375).abs() < 1e-12);
    }

    #[test]
    fn geometric_exp_fit_recovers_log_ratio() {
        let s = geometric_samples(0.5, 100_000, 3);
        let f = exp_tail_fit(&s).unwrap();
        assert!((f.slope - 0.5f64.ln()).abs() < 0.05, "{}", f.slope);
        assert!(f.r_squared > 0.99);
        assert!(f.survival.windows(2).all(|w| w[1] <= w[0]));
        assert!(*f.survival.last().unwrap() >= EXP_FIT_FLOOR);
    }

    #[test]
    fn exact_power_law_on_grid() {
        // survival exactly t^(-1/2) at t = 4^k, k = 0..=8
        let n: u64 = 1 << 16;
        let mut samples = Vec::new();
        for k in 0..=8u32 {
            let above_k = n >> k;
            let above_next = if k < 8 { n >> (k + 1) } else { 0 };
            samples.extend(std::iter::repeat_n(
                4u64.pow(k + 1),
                (above_k - above_next) as usize,
            ));
        }
        let obs: Vec<Observation> = samples.iter().map(|&v| Observation::exact(v)).collect();
        let grid: Vec<u64> = (0..=8).map(|k| 4u64.pow(k)).collect();
        let f = power_tail_fit_on_grid(&obs, &grid).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12, "{}", f.slope);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(
            exp_tail_fit(&[3; 2000]),
            Err(Error::FitUndefined(_))
        ));
        assert!(matches!(
            exp_tail_fit(&[1, 2, 3]),
            Err(Error::InsufficientSamples { .. })
        ));
        let s = geometric_samples(0.5, 2000, 1);
        assert!(power_tail_fit(&s, 10, 500).is_err());
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(100, 10_000, 25);
        assert_eq!((g[0], *g.last().unwrap()), (100, 10_000));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
