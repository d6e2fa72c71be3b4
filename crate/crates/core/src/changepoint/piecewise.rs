use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Order;
use crate::error::{Error, Result};

const TIE_REL: f64 = 1e-12;

/// Best single-knot piecewise fit of a 1D trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseFit {
    pub order: Order,
    /// Estimated knot (1-based).
    pub knot: usize,
    /// Level: `(a_L, a_R)`. Slope: `(a, b_L, b_R)`.
    pub params: Vec<f64>,
    /// `(k, Q(k))` for every candidate knot.
    pub rss: Vec<(usize, f64)>,
    pub fitted: Vec<f64>,
    /// Constant input: every knot ties.
    pub no_signal: bool,
}

impl PiecewiseFit {
    pub fn min_rss(&self) -> f64 {
        self.rss
            .iter()
            .find(|(k, _)| *k == self.knot)
            .map(|(_, q)| *q)
            .unwrap_or(0.0)
    }
}

fn candidates(order: Order, horizon: usize) -> std::ops::RangeInclusive<usize> {
    match order {
        Order::Level => 2..=horizon,
        Order::Slope => 2..=horizon - 1,
    }
}

/// `Ψ(t; k, θ)` for t = 1..=horizon.
pub fn template(order: Order, horizon: usize, knot: usize, params: &[f64]) -> Vec<f64> {
    (1..=horizon)
        .map(|t| match order {
            Order::Level => {
                if t < knot {
                    params[0]
                } else {
                    params[1]
                }
            }
            Order::Slope => {
                let (a, bl, br) = (params[0], params[1], params[2]);
                if t < knot {
                    a + bl * t as f64
                } else {
                    a + bl * knot as f64 + br * (t - knot) as f64
                }
            }
        })
        .collect()
}

fn fit_at(psi: &[f64], order: Order, knot: usize) -> Result<(Vec<f64>, f64)> {
    let horizon = psi.len();
    let params = match order {
        Order::Level => {
            let (left, right) = psi.split_at(knot - 1);
            let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
            vec![mean(left), mean(right)]
        }
        Order::Slope => {
            let k = knot as f64;
            let x = DMatrix::from_fn(horizon, 3, |r, c| {
                let t = (r + 1) as f64;
                match c {
                    0 => 1.0,
                    1 => t.min(k),
                    _ => (t - k).max(0.0),
                }
            });
            let y = DVector::from_column_slice(psi);
            let sol = x
                .svd(true, true)
                .solve(&y, 1e-14)
                .map_err(|e| Error::NonFinite(format!("hinge least squares: {e}")))?;
            sol.iter().copied().collect()
        }
    };
    let fitted = template(order, horizon, knot, &params);
    let rss = psi
        .iter()
        .zip(&fitted)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((params, rss))
}

/// `min_θ Σ_t (ψ(t) − Ψ(t; k, θ))²`.
pub fn fixed_knot_rss(psi: &[f64], order: Order, knot: usize) -> Result<f64> {
    check_length(psi.len(), order)?;
    if !candidates(order, psi.len()).contains(&knot) {
        return Err(Error::OutOfRange(format!(
            "knot {knot} for {order} fit of length {}",
            psi.len()
        )));
    }
    Ok(fit_at(psi, order, knot)?.1)
}

fn check_length(horizon: usize, order: Order) -> Result<()> {
    let min = match order {
        Order::Level => 3,
        Order::Slope => 4,
    };
    if horizon < min {
        return Err(Error::Validation(format!(
            "{order} fit needs at least {min} points, got {horizon}"
        )));
    }
    Ok(())
}

/// Exhaustive scan over candidate knots; ties go to the smallest knot.
pub fn fit_piecewise(psi: &[f64], order: Order) -> Result<PiecewiseFit> {
    check_length(psi.len(), order)?;
    if psi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(
            "trajectory passed to piecewise fit".into(),
        ));
    }
    let horizon = psi.len();
    let mean = psi.iter().sum::<f64>() / horizon as f64;
    let sst: f64 = psi.iter().map(|v| (v - mean) * (v - mean)).sum();
    let no_signal = sst == 0.0;
    if no_signal {
        log::warn!("constant trajectory: every knot fits equally well");
    }

    let mut rss = Vec::new();
    let mut fits = Vec::new();
    for k in candidates(order, horizon) {
        let (params, q) = fit_at(psi, order, k)?;
        rss.push((k, q));
        fits.push(params);
    }
    let q_min = rss.iter().map(|(_, q)| *q).fold(f64::INFINITY, f64::min);
    let best = rss
        .iter()
        .position(|(_, q)| *q <= q_min + TIE_REL * sst)
        .expect("at least one candidate");
    let knot = rss[best].0;
    let params = fits.swap_remove(best);
    Ok(PiecewiseFit {
        order,
        knot,
        fitted: template(order, horizon, knot, &params),
        params,
        rss,
        no_signal,
    })
}

/// `(t* − k)(T − t* + 1)/(T − k + 1)·Δa²` for k < t*, and
/// `(t* − 1)(k − t*)/(k − 1)·Δa²` for k > t*.
pub fn order0_separation_closed_form(horizon: usize, t_star: usize, k: usize, jump: f64) -> f64 {
    let (t, ts, kk) = (horizon as f64, t_star as f64, k as f64);
    let d = jump * jump;
    if k < t_star {
        (ts - kk) * (t - ts + 1.0) / (t - kk + 1.0) * d
    } else if k > t_star {
        (ts - 1.0) * (kk - ts) / (kk - 1.0) * d
    } else {
        0.0
    }
}

fn slope_term(x: f64, y: f64, z: f64) -> f64 {
    x * y * (y + 1.0) * (2.0 * x * y + x - y + 1.0) / (6.0 * z * (z * z - 1.0))
}

/// Residual of the best single line through the hinge segment that a knot at
/// `k` cannot bend around, times the squared slope change.
///
/// This is a lower bound on the order-1 separation value at `k` and does not
/// carry a factor of `|k − t*|`.
pub fn order1_segment_bound(horizon: usize, t_star: usize, k: usize, slope_change: f64) -> f64 {
    let (t, ts, kk) = (horizon as f64, t_star as f64, k as f64);
    let d = slope_change * slope_change;
    if k < t_star {
        slope_term(ts - kk + 1.0, t - ts, t - kk + 1.0) * d
    } else if k > t_star {
        slope_term(ts, kk - ts, kk) * d
    } else {
        0.0
    }
}

/// Separation constant α for a change at `t_star` in a series of `horizon`.
///
/// Level: `min(t* − 1, T − t* + 1)/(T − 1)`. Slope: the smaller of the two
/// finite minima over knots left and right of `t*`.
pub fn separation_alpha(order: Order, horizon: usize, t_star: usize) -> Result<f64> {
    check_length(horizon, order)?;
    if !candidates(order, horizon).contains(&t_star) {
        return Err(Error::OutOfRange(format!(
            "change at {t_star} for horizon {horizon}"
        )));
    }
    let t = horizon as f64;
    let ts = t_star as f64;
    Ok(match order {
        Order::Level => (ts - 1.0).min(t - ts + 1.0) / (t - 1.0),
        Order::Slope => {
            let alpha1 = (2..=t_star)
                .map(|k| {
                    let k = k as f64;
                    slope_term(ts - k + 1.0, t - ts, t - k + 1.0)
                })
                .fold(f64::INFINITY, f64::min);
            let alpha2 = ((t_star + 1)..horizon)
                .map(|k| {
                    let k = k as f64;
                    slope_term(ts, k - ts, k)
                })
                .fold(f64::INFINITY, f64::min);
            if t_star == 2 {
                alpha2
            } else if t_star == horizon - 1 {
                alpha1
            } else {
                alpha1.min(alpha2)
            }
        }
    })
}

/// Direct least-squares separation value against its linear lower bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationCheck {
    pub value: f64,
    pub alpha: f64,
    /// `D(θ*)`: squared level jump or squared slope change.
    pub strength: f64,
    pub lower_bound: f64,
    pub holds: bool,
}

/// `min_θ Σ_t (Ψ(t; t*, θ*) − Ψ(t; k, θ))²` compared with `α·D(θ*)·|k − t*|`.
pub fn separation_oracle(
    order: Order,
    horizon: usize,
    t_star: usize,
    k: usize,
    theta_star: &[f64],
) -> Result<SeparationCheck> {
    let expected = match order {
        Order::Level => 2,
        Order::Slope => 3,
    };
    if theta_star.len() != expected {
        return Err(Error::Validation(format!(
            "{order} template takes {expected} parameters, got {}",
            theta_star.len()
        )));
    }
    let alpha = separation_alpha(order, horizon, t_star)?;
    let psi = template(order, horizon, t_star, theta_star);
    let value = fixed_knot_rss(&psi, order, k)?;
    let strength = match order {
        Order::Level => (theta_star[0] - theta_star[1]).powi(2),
        Order::Slope => (theta_star[1] - theta_star[2]).powi(2),
    };
    let lower_bound = alpha * strength * k.abs_diff(t_star) as f64;
    let scale = psi.iter().map(|v| v * v).sum::<f64>().max(1.0);
    Ok(SeparationCheck {
        value,
        alpha,
        strength,
        lower_bound,
        holds: value >= lower_bound - 1e-10 * scale,
    })
}
