use crate::error::{Error, Result};

/// Uniform time grid `start + k * step`, `k = 0..len`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl TimeGrid {
    /// `0, step, ..., t_max` (the end point is included when it lies on the grid).
    pub fn up_to(t_max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(t_max >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "time grid needs step > 0 and t_max >= 0 (got step {step}, t_max {t_max})"
            )));
        }
        let len = (t_max / step + 1e-9).floor() as usize + 1;
        Ok(Self { start: 0.0, step, len })
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.time(k)).collect()
    }

    pub fn end(&self) -> f64 {
        self.time(self.len.saturating_sub(1))
    }

    pub fn span(&self) -> f64 {
        self.end() - self.start
    }
}

/// Errors unless the two time lists agree point by point.
pub fn check_same_times(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch(format!("{} vs {} points", a.len(), b.len())));
    }
    for (k, (x, y)) in a.iter().zip(b).enumerate() {
        if (x - y).abs() > 1e-9 * x.abs().max(1.0) {
            return Err(Error::GridMismatch(format!("point {k}: t = {x} vs {y}")));
        }
    }
    Ok(())
}

/// Cumulative trapezoidal integral, starting at zero.
pub fn cumulative_trapezoid(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..values.len() {
        acc += 0.5 * (values[k] + values[k - 1]) * (times[k] - times[k - 1]);
        out.push(acc);
    }
    out.truncate(values.len());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_includes_end_point() {
        let g = TimeGrid::up_to(150.0, 0.5).unwrap();
        assert_eq!(g.len, 301);
        assert_eq!(g.end(), 150.0);
        let g = TimeGrid::up_to(10.0, 0.02).unwrap();
        assert_eq!(g.len, 501);
        assert!(TimeGrid::up_to(1.0, 0.0).is_err());
    }

    #[test]
    fn trapezoid_of_linear_is_exact() {
        let t: Vec<f64> = (0..11).map(|k| k as f64 * 0.1).collect();
        let f: Vec<f64> = t.iter().map(|x| 2.0 * x + 1.0).collect();
        let i = cumulative_trapezoid(&t, &f);
        assert!((i[10] - 2.0).abs() < 1e-14);
        assert_eq!(i[0], 0.0);
    }

    #[test]
    fn mismatch_detected() {
        assert!(check_same_times(&[0.0, 1.0], &[0.0, 1.0]).is_ok());
        assert!(check_same_times(&[0.0, 1.0], &[0.0]).is_err());
        assert!(check_same_times(&[0.0, 1.0], &[0.0, 1.5]).is_err());
    }
}
