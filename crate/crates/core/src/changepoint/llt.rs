//! Local linear trend scores.
//!
//! Model for the standardized series `y`:
//!
//! ```text
//! y_t     = μ_t + ε_t,           ε ~ N(0, σ_ε²)
//! μ_{t+1} = μ_t + ν_t + η_t,     η ~ N(0, σ_η²)
//! ν_{t+1} = ν_t + ζ_t,           ζ ~ N(0, σ_ζ²)
//! ```
//!
//! Variances are fitted by maximum likelihood, then the smoothed level and
//! slope disturbances entering each time give the level and slope scores.

use serde::{Deserialize, Serialize};

use super::fusion::Stream;
use super::Order;
use crate::error::{Error, Result};

const MIN_LENGTH: usize = 8;
const DIFFUSE: f64 = 1e6;
const VAR_FLOOR: f64 = 1e-12;
const VAR_CEIL: f64 = 1e2;
/// Likelihood terms skipped while the diffuse prior dominates.
const BURN_IN: usize = 2;

/// Fitted variances `(σ_ε², σ_η², σ_ζ²)` of the standardized series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LltFit {
    pub irregular: f64,
    pub level: f64,
    pub slope: f64,
    pub log_likelihood: f64,
}

/// Level and slope scores of one mode trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub mode: usize,
    /// `s⁽⁰⁾_t = |σ η̂_t|`, index t−1 for time t.
    pub level: Vec<f64>,
    /// `s⁽¹⁾_t = |σ ζ̂_t|`.
    pub slope: Vec<f64>,
    pub fit: LltFit,
    /// Standard deviation used to standardize the trajectory.
    pub scale: f64,
    /// Constant input; all scores are zero.
    pub degenerate: bool,
}

impl ScoreSeries {
    pub fn horizon(&self) -> usize {
        self.level.len()
    }

    pub fn streams(&self) -> Vec<Stream> {
        vec![
            Stream {
                mode: self.mode,
                order: Order::Level,
                scores: self.level.clone(),
            },
            Stream {
                mode: self.mode,
                order: Order::Slope,
                scores: self.slope.clone(),
            },
        ]
    }
}

struct Filtered {
    v: Vec<f64>,
    f: Vec<f64>,
    k: Vec<[f64; 2]>,
    log_likelihood: f64,
}

type Mat2 = [[f64; 2]; 2];

fn kalman(y: &[f64], h: f64, q_level: f64, q_slope: f64) -> Filtered {
    let n = y.len();
    let mut a = [0.0, 0.0];
    let mut p: Mat2 = [[DIFFUSE, 0.0], [0.0, DIFFUSE]];
    let mut out = Filtered {
        v: Vec::with_capacity(n),
        f: Vec::with_capacity(n),
        k: Vec::with_capacity(n),
        log_likelihood: 0.0,
    };
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    for (t, &yt) in y.iter().enumerate() {
        let v = yt - a[0];
        let f = p[0][0] + h;
        // K = T P Zᵀ / F with T = [[1,1],[0,1]], Z = [1,0]
        let k = [(p[0][0] + p[1][0]) / f, p[1][0] / f];
        if t >= BURN_IN {
            out.log_likelihood -= 0.5 * (ln2pi + f.ln() + v * v / f);
        }
        // a' = T a + K v
        a = [a[0] + a[1] + k[0] * v, a[1] + k[1] * v];
        // P' = T P Lᵀ + Q, L = T − K Z
        let tp = [[p[0][0] + p[1][0], p[0][1] + p[1][1]], [p[1][0], p[1][1]]];
        let l = [[1.0 - k[0], 1.0], [-k[1], 1.0]];
        let mut next = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                next[i][j] = tp[i][0] * l[j][0] + tp[i][1] * l[j][1];
            }
        }
        next[0][0] += q_level;
        next[1][1] += q_slope;
        let sym = 0.5 * (next[0][1] + next[1][0]);
        p = [[next[0][0], sym], [sym, next[1][1]]];
        out.v.push(v);
        out.f.push(f);
        out.k.push(k);
    }
    out
}

/// Backward recursion `r_{t−1} = Zᵀ v_t/F_t + L_tᵀ r_t` over 1-based t;
/// `r_{t−1}` is stored at index t−1.
fn smooth(filtered: &Filtered) -> Vec<[f64; 2]> {
    let n = filtered.v.len();
    let mut r = [0.0, 0.0];
    let mut out = vec![[0.0; 2]; n];
    for t in (0..n).rev() {
        let (v, f, k) = (filtered.v[t], filtered.f[t], filtered.k[t]);
        // Lᵀ r with L = [[1−k0, 1], [−k1, 1]]
        let lr = [(1.0 - k[0]) * r[0] - k[1] * r[1], r[0] + r[1]];
        r = [v / f + lr[0], lr[1]];
        out[t] = r;
    }
    out
}

fn log_likelihood(y: &[f64], log_vars: [f64; 3]) -> f64 {
    let [h, ql, qs] = log_vars.map(|lv| 10f64.powf(lv).clamp(VAR_FLOOR, VAR_CEIL));
    let ll = kalman(y, h, ql, qs).log_likelihood;
    if ll.is_finite() {
        ll
    } else {
        f64::NEG_INFINITY
    }
}

fn grid() -> Vec<f64> {
    let mut g = vec![VAR_FLOOR.log10()];
    g.extend((0..14).map(|i| -6.0 + 0.5 * i as f64));
    g
}

fn maximize(y: &[f64]) -> ([f64; 3], f64) {
    let g = grid();
    let mut best = ([0.0; 3], f64::NEG_INFINITY);
    for &a in &g {
        for &b in &g {
            for &c in &g {
                let x = [a, b, c];
                let ll = log_likelihood(y, x);
                if ll > best.1 {
                    best = (x, ll);
                }
            }
        }
    }
    let lo = VAR_FLOOR.log10();
    let hi = VAR_CEIL.log10();
    let mut step = 0.25;
    while step >= 1e-3 {
        let mut improved = true;
        while improved {
            improved = false;
            for i in 0..3 {
                for dir in [-1.0, 1.0] {
                    let mut x = best.0;
                    x[i] = (x[i] + dir * step).clamp(lo, hi);
                    let ll = log_likelihood(y, x);
                    if ll > best.1 + 1e-12 {
                        best = (x, ll);
                        improved = true;
                    }
                }
            }
        }
        step *= 0.5;
    }
    best
}

/// Level and slope scores for a trajectory of at least 8 points.
pub fn llt_scores(psi: &[f64]) -> Result<ScoreSeries> {
    let n = psi.len();
    if n < MIN_LENGTH {
        return Err(Error::Validation(format!(
            "local linear trend scores need at least {MIN_LENGTH} points, got {n}"
        )));
    }
    if psi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(
            "trajectory passed to trend smoother".into(),
        ));
    }
    let mean = psi.iter().sum::<f64>() / n as f64;
    let var = psi.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let scale = var.sqrt();
    if scale <= 1e-12 * mean.abs().max(1.0) {
        return Ok(ScoreSeries {
            mode: 0,
            level: vec![0.0; n],
            slope: vec![0.0; n],
            fit: LltFit {
                irregular: 0.0,
                level: 0.0,
                slope: 0.0,
                log_likelihood: 0.0,
            },
            scale,
            degenerate: true,
        });
    }
    let y: Vec<f64> = psi.iter().map(|v| (v - mean) / scale).collect();
    let (log_vars, ll) = maximize(&y);
    if !ll.is_finite() {
        return Err(Error::NonFinite("local linear trend likelihood".into()));
    }
    let [h, ql, qs] = log_vars.map(|lv| 10f64.powf(lv).clamp(VAR_FLOOR, VAR_CEIL));
    let r = smooth(&kalman(&y, h, ql, qs));
    let mut level = vec![0.0; n];
    let mut slope = vec![0.0; n];
    for t in 1..n {
        // Q r[t] is the smoothed disturbance moving the state into index t
        level[t] = (scale * ql * r[t][0]).abs();
        slope[t] = (scale * qs * r[t][1]).abs();
    }
    Ok(ScoreSeries {
        mode: 0,
        level,
        slope,
        fit: LltFit {
            irregular: h,
            level: ql,
            slope: qs,
            log_likelihood: ll,
        },
        scale,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argmax(v: &[f64]) -> usize {
        let mut best = 0;
        for (i, x) in v.iter().enumerate() {
            if *x > v[best] {
                best = i;
            }
        }
        best + 1
    }

    #[test]
    fn constant_series_gives_zero_scores() {
        let s = llt_scores(&[3.0; 12]).unwrap();
        assert!(s.degenerate);
        assert!(s.level.iter().all(|&v| v == 0.0));
        let z = llt_scores(&[0.0; 12]).unwrap();
        assert!(z.slope.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_short_series() {
        assert!(llt_scores(&[1.0; 7]).is_err());
    }

    #[test]
    fn unit_step_peaks_at_the_jump() {
        let psi: Vec<f64> = (1..=20).map(|t| if t >= 9 { 1.0 } else { 0.0 }).collect();
        let s = llt_scores(&psi).unwrap();
        assert_eq!(argmax(&s.level), 9);
        let neg: Vec<f64> = psi.iter().map(|v| -v).collect();
        assert_eq!(argmax(&llt_scores(&neg).unwrap().level), 9);
    }

    #[test]
    fn slope_change_peaks_near_the_kink() {
        let psi: Vec<f64> = (1..=24)
            .map(|t| if t < 12 { 0.0 } else { 0.5 * (t - 12) as f64 })
            .collect();
        let s = llt_scores(&psi).unwrap();
        let peak = argmax(&s.slope);
        assert!((11..=13).contains(&peak), "peak at {peak}");
    }
}
