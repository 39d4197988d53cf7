//! Analytic objectives for exercising the optimizers outside the planner.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::optim::SearchBox;

/// Centers, heights and widths of the three bumps of [`tri_gaussian`].
pub const TRI_GAUSSIAN_PEAKS: [([f64; 2], f64, f64); 3] = [
    ([0.2, 0.25], 1.0, 0.08),
    ([0.75, 0.3], 0.8, 0.08),
    ([0.45, 0.8], 0.6, 0.08),
];

/// Sum of three isotropic Gaussian bumps on the unit square.
pub fn tri_gaussian(x: &[f64]) -> f64 {
    TRI_GAUSSIAN_PEAKS
        .iter()
        .map(|(c, h, w)| {
            let d2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
            h * (-d2 / (2.0 * w * w)).exp()
        })
        .sum()
}

/// Negated squared norm, maximal (0) at the origin.
pub fn neg_sphere(x: &[f64]) -> f64 {
    -x.iter().map(|v| v * v).sum::<f64>()
}

/// `1 - sum((x_i - 0.5 i)^2)`: a shifted paraboloid.
pub fn shifted_quadratic(x: &[f64]) -> f64 {
    1.0 - x
        .iter()
        .enumerate()
        .map(|(i, v)| (v - 0.5 * i as f64).powi(2))
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestFunction {
    TriGaussian,
    Sphere,
    Quadratic,
}

impl TestFunction {
    pub fn name(self) -> &'static str {
        match self {
            TestFunction::TriGaussian => "tri-gaussian",
            TestFunction::Sphere => "sphere",
            TestFunction::Quadratic => "quadratic",
        }
    }

    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            TestFunction::TriGaussian => tri_gaussian(x),
            TestFunction::Sphere => neg_sphere(x),
            TestFunction::Quadratic => shifted_quadratic(x),
        }
    }

    pub fn domain(self) -> SearchBox {
        let b = match self {
            TestFunction::TriGaussian => SearchBox::cube(2, 0.0, 1.0),
            TestFunction::Sphere => SearchBox::cube(3, -5.0, 5.0),
            TestFunction::Quadratic => SearchBox::cube(3, -3.0, 3.0),
        };
        b.expect("static bounds are valid")
    }

    /// Maximizers of the function.
    pub fn optima(self) -> Vec<Vec<f64>> {
        match self {
            TestFunction::TriGaussian => TRI_GAUSSIAN_PEAKS.iter().map(|(c, _, _)| c.to_vec()).collect(),
            TestFunction::Sphere => vec![vec![0.0; 3]],
            TestFunction::Quadratic => vec![vec![0.0, 0.5, 1.0]],
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tri-gaussian" => Ok(TestFunction::TriGaussian),
            "sphere" => Ok(TestFunction::Sphere),
            "quadratic" => Ok(TestFunction::Quadratic),
            _ => Err(Error::InvalidConfig(format!("unknown test function '{s}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peaks_are_local_maxima() {
        for (c, h, _) in TRI_GAUSSIAN_PEAKS {
            let v = tri_gaussian(&c);
            assert!(v >= h);
            for (dx, dy) in [(0.02, 0.0), (-0.02, 0.0), (0.0, 0.02), (0.0, -0.02)] {
                assert!(tri_gaussian(&[c[0] + dx, c[1] + dy]) < v);
            }
        }
    }

    #[test]
    fn optima_values() {
        assert_eq!(neg_sphere(&[0.0, 0.0, 0.0]), 0.0);
        assert_eq!(shifted_quadratic(&[0.0, 0.5, 1.0]), 1.0);
        assert!("rosenbrock".parse::<TestFunction>().is_err());
    }
}
