//! Natural cubic spline through strictly increasing knots.

use crate::error::{QnsError, Result};

#[derive(Debug, Clone)]
pub struct NaturalCubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots; zero at both ends.
    m: Vec<f64>,
}

impl NaturalCubicSpline {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n != y.len() {
            return Err(QnsError::InvalidArgument(format!(
                "spline knots ({n}) and values ({}) differ in length",
                y.len()
            )));
        }
        if n < 2 {
            return Err(QnsError::TooFewPoints { needed: 2, got: n });
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(QnsError::InvalidArgument("spline knots must be strictly increasing".into()));
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior second-derivative system.
            let k = n - 2;
            let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                upper[i] = h[i + 1];
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
            }
            for i in 1..k {
                let lower = h[i];
                let f = lower / diag[i - 1];
                diag[i] -= f * upper[i - 1];
                rhs[i] -= f * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Ok(NaturalCubicSpline { x: x.to_vec(), y: y.to_vec(), m })
    }

    /// Evaluate the spline. Outside the knot range the spline continues
    /// linearly with its end slope (zero curvature, as at a natural end).
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0] + self.slope_at(0) * (t - self.x[0]);
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1] + self.slope_at(n - 1) * (t - self.x[n - 1]);
        }
        let i = match self.x.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => return self.y[i],
            Err(i) => i - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    fn slope_at(&self, i: usize) -> f64 {
        let n = self.x.len();
        if i == 0 {
            let h = self.x[1] - self.x[0];
            (self.y[1] - self.y[0]) / h - h * (2.0 * self.m[0] + self.m[1]) / 6.0
        } else {
            let h = self.x[n - 1] - self.x[n - 2];
            (self.y[n - 1] - self.y[n - 2]) / h + h * (self.m[n - 2] + 2.0 * self.m[n - 1]) / 6.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_linear_data() {
        let x = [0.0, 0.4, 1.0, 1.7, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let s = NaturalCubicSpline::new(&x, &y).unwrap();
        for t in [-0.5, 0.1, 0.9, 2.2, 3.5] {
            assert!((s.eval(t) - (2.0 - 0.5 * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn second_derivative_matches_hand_solution() {
        // Knots 0,1,2 with values 0,1,0: interior m = 6*(-1-1)/(2*2) = -3.
        let s = NaturalCubicSpline::new(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]).unwrap();
        assert!((s.m[1] + 3.0).abs() < 1e-14);
        // Midpoint of the first segment: 0.5 + (-(0.375)*(-3))/6 = 0.6875
        assert!((s.eval(0.5) - 0.6875).abs() < 1e-14);
    }

    #[test]
    fn rejects_unsorted() {
        assert!(NaturalCubicSpline::new(&[0.0, 0.0, 1.0], &[1.0, 1.0, 1.0]).is_err());
    }
}
