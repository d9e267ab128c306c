//! Symmetric kernel densities and their moments.
//!
//! `μ_k = ∫ u^k K(u) du` and `ν_k = ∫ u^k K(u)² du` enter the asymptotic
//! bias and variance constants of the local polynomial smoothers. All three
//! families have closed forms; [`Kernel::moment_mu_quadrature`] and
//! [`Kernel::moment_nu_quadrature`] recompute them numerically for checking.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SensiError};
use crate::quad;

/// Weights below this are treated as exactly zero when building local fits.
pub const WEIGHT_FLOOR: f64 = 1e-12;

const MAX_MOMENT: u32 = 7;

/// Kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// Standard normal density. Unbounded support.
    #[default]
    Gaussian,
    /// `(3/4)(1 − u²)` on `[−1, 1]`.
    Epanechnikov,
    /// `1/2` on `[−1, 1]`.
    Uniform,
}

impl Kernel {
    pub const ALL: [Kernel; 3] = [Kernel::Gaussian, Kernel::Epanechnikov, Kernel::Uniform];

    /// Kernel density `K(u)`.
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => (-0.5 * u * u).exp() / (2.0 * PI).sqrt(),
            Kernel::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            Kernel::Uniform => {
                if u.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
        }
    }

    /// `K(u)` with values under [`WEIGHT_FLOOR`] flushed to zero.
    #[inline]
    pub fn weight(self, u: f64) -> f64 {
        let k = self.eval(u);
        if k < WEIGHT_FLOOR {
            0.0
        } else {
            k
        }
    }

    /// Half-width (in units of `u`) outside which [`Kernel::weight`] is zero.
    pub fn support_radius(self) -> f64 {
        match self {
            // K(u) = 1e-12  <=>  u² = −2 ln(1e-12 √(2π))
            Kernel::Gaussian => (-2.0 * (WEIGHT_FLOOR * (2.0 * PI).sqrt()).ln()).sqrt() + 1e-9,
            Kernel::Epanechnikov | Kernel::Uniform => 1.0,
        }
    }

    fn check_order(k: u32) -> Result<()> {
        if k > MAX_MOMENT {
            Err(SensiError::MomentOrder(k))
        } else {
            Ok(())
        }
    }

    /// `μ_k = ∫ u^k K(u) du` for `0 ≤ k ≤ 7`.
    pub fn moment_mu(self, k: u32) -> Result<f64> {
        Self::check_order(k)?;
        if k % 2 == 1 {
            return Ok(0.0);
        }
        let kf = f64::from(k);
        Ok(match self {
            Kernel::Gaussian => double_factorial(k.saturating_sub(1)),
            Kernel::Epanechnikov => 0.75 * (2.0 / (kf + 1.0) - 2.0 / (kf + 3.0)),
            Kernel::Uniform => 1.0 / (kf + 1.0),
        })
    }

    /// `ν_k = ∫ u^k K(u)² du` for `0 ≤ k ≤ 7`.
    pub fn moment_nu(self, k: u32) -> Result<f64> {
        Self::check_order(k)?;
        if k % 2 == 1 {
            return Ok(0.0);
        }
        let kf = f64::from(k);
        Ok(match self {
            // K² = N(0, 1/2) density / (2√π)
            Kernel::Gaussian => {
                double_factorial(k.saturating_sub(1)) * 0.5f64.powi(k as i32 / 2)
                    / (2.0 * PI.sqrt())
            }
            Kernel::Epanechnikov => {
                (9.0 / 16.0) * 2.0 * (1.0 / (kf + 1.0) - 2.0 / (kf + 3.0) + 1.0 / (kf + 5.0))
            }
            Kernel::Uniform => 0.5 / (kf + 1.0),
        })
    }

    fn quadrature_bounds(self) -> (f64, f64) {
        match self {
            Kernel::Gaussian => (-14.0, 14.0),
            _ => (-1.0, 1.0),
        }
    }

    /// `μ_k` by adaptive quadrature.
    pub fn moment_mu_quadrature(self, k: u32) -> Result<f64> {
        Self::check_order(k)?;
        let (a, b) = self.quadrature_bounds();
        Ok(quad::integrate(
            |u| u.powi(k as i32) * self.eval(u),
            a,
            b,
            1e-13,
            1e-15,
        ))
    }

    /// `ν_k` by adaptive quadrature.
    pub fn moment_nu_quadrature(self, k: u32) -> Result<f64> {
        Self::check_order(k)?;
        let (a, b) = self.quadrature_bounds();
        Ok(quad::integrate(
            |u| u.powi(k as i32) * self.eval(u).powi(2),
            a,
            b,
            1e-13,
            1e-15,
        ))
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Gaussian => "gaussian",
            Kernel::Epanechnikov => "epanechnikov",
            Kernel::Uniform => "uniform",
        }
    }
}

fn double_factorial(k: u32) -> f64 {
    (1..=k).rev().step_by(2).map(f64::from).product()
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = SensiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Kernel::Gaussian),
            "epanechnikov" => Ok(Kernel::Epanechnikov),
            "uniform" => Ok(Kernel::Uniform),
            other => Err(SensiError::invalid(format!("unknown kernel '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn eval_examples() {
        assert_abs_diff_eq!(
            Kernel::Gaussian.eval(0.0),
            0.398_942_280_401_432_7,
            epsilon = 1e-15
        );
        assert_eq!(Kernel::Epanechnikov.eval(2.0), 0.0);
        assert_abs_diff_eq!(Kernel::Epanechnikov.eval(0.5), 0.5625, epsilon = 1e-15);
        assert_eq!(Kernel::Uniform.eval(1.5), 0.0);
        assert_eq!(Kernel::Uniform.eval(-0.3), 0.5);
    }

    #[test]
    fn unit_mass_and_symmetry() {
        for k in Kernel::ALL {
            let (a, b) = k.quadrature_bounds();
            let mass = quad::integrate(|u| k.eval(u), a, b, 1e-13, 1e-15);
            assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-8);
            for u in [0.0, 0.1, 0.5, 0.999, 1.0, 1.7, 3.2] {
                assert_eq!(k.eval(u), k.eval(-u));
                assert!(k.eval(u) >= 0.0);
            }
        }
    }

    #[test]
    fn scaled_kernel_keeps_unit_mass() {
        for k in Kernel::ALL {
            let (a, b) = k.quadrature_bounds();
            for h in [0.1, 1.0, 10.0] {
                let mass = quad::integrate(|x| k.eval(x / h) / h, a * h, b * h, 1e-13, 1e-15);
                assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn moment_examples() {
        assert_abs_diff_eq!(Kernel::Gaussian.moment_mu(2).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            Kernel::Epanechnikov.moment_mu(2).unwrap(),
            0.2,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            Kernel::Gaussian.moment_nu(0).unwrap(),
            0.282_094_791_773_878_1,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            Kernel::Epanechnikov.moment_nu(0).unwrap(),
            0.6,
            epsilon = 1e-15
        );
        for k in Kernel::ALL {
            assert_eq!(k.moment_mu(1).unwrap(), 0.0);
            assert_eq!(k.moment_nu(1).unwrap(), 0.0);
            assert_abs_diff_eq!(k.moment_mu(0).unwrap(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn closed_forms_match_quadrature() {
        for k in Kernel::ALL {
            for order in 0..=7 {
                let mu = k.moment_mu(order).unwrap();
                let nu = k.moment_nu(order).unwrap();
                let mu_q = k.moment_mu_quadrature(order).unwrap();
                let nu_q = k.moment_nu_quadrature(order).unwrap();
                assert_abs_diff_eq!(mu, mu_q, epsilon = 1e-8);
                assert_abs_diff_eq!(nu, nu_q, epsilon = 1e-8);
                if mu != 0.0 {
                    assert!(((mu - mu_q) / mu).abs() < 1e-10, "{k} mu_{order}");
                }
                if nu != 0.0 {
                    assert!(((nu - nu_q) / nu).abs() < 1e-10, "{k} nu_{order}");
                }
            }
        }
    }

    #[test]
    fn moment_order_is_bounded() {
        assert_eq!(
            Kernel::Uniform.moment_mu(8),
            Err(SensiError::MomentOrder(8))
        );
        assert_eq!(
            Kernel::Gaussian.moment_nu(9),
            Err(SensiError::MomentOrder(9))
        );
    }

    #[test]
    fn weight_floor_and_radius() {
        let r = Kernel::Gaussian.support_radius();
        assert!(Kernel::Gaussian.weight(r) == 0.0);
        assert!(Kernel::Gaussian.weight(r - 0.01) > 0.0);
        assert_eq!(Kernel::Epanechnikov.weight(1.0), 0.0);
    }

    #[test]
    fn parses_names() {
        for k in Kernel::ALL {
            assert_eq!(k.name().parse::<Kernel>().unwrap(), k);
        }
        assert!("triweight".parse::<Kernel>().is_err());
    }
}
