use crate::error::{Error, Result};

/// Least-squares line through `(t, ln v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples: usize,
    /// Number of samples at or below zero that were clipped to 1e-300.
    pub clipped: usize,
}

impl DecayFit {
    /// Fitted exponential decay rate (`-slope`).
    pub fn rate(&self) -> f64 {
        -self.slope
    }
}

/// Fit `ln v` against `t` on `[t_lo, t_hi]`.
pub fn decay_rate_fit(t: &[f64], v: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    if t.len() != v.len() {
        return Err(Error::Fit(format!(
            "time and value series differ in length ({} vs {})",
            t.len(),
            v.len()
        )));
    }
    let (lo, hi) = window;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut clipped = 0;
    for (&ti, &vi) in t.iter().zip(v) {
        if ti < lo || ti > hi {
            continue;
        }
        let vi = if vi > 1e-300 {
            vi
        } else {
            clipped += 1;
            1e-300
        };
        xs.push(ti);
        ys.push(vi.ln());
    }
    if xs.len() < 10 {
        return Err(Error::Fit(format!(
            "only {} samples in window [{lo}, {hi}], need at least 10",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::Fit("window contains a single time instant".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(DecayFit {
        slope,
        intercept,
        r_squared,
        samples: xs.len(),
        clipped,
    })
}
