//! Compact-support polynomial kernels on `[-1, 1]`.
//!
//! Every kernel here is a polynomial in `u` truncated to `|u| <= 1`, so its
//! moments `kappa_r = int u^r K(u) du` and `nu_r = int u^r K(u)^2 du` have
//! closed forms. The quadrature route (composite Simpson, 2048 panels) is
//! kept alongside as an independent check.

use std::fmt;
use std::str::FromStr;

use crate::error::{check_bandwidth, GpaError, Result};
use crate::numeric;

/// Panels used by the quadrature moment route.
pub const QUADRATURE_PANELS: usize = 2048;

/// Tolerance for the moment conditions a kernel must satisfy.
pub const MOMENT_TOL: f64 = 1e-10;

/// Smallest magnitude accepted for the first non-vanishing moment.
const ORDER_FLOOR: f64 = 1e-6;

/// Highest polynomial degree accepted for custom kernels.
const MAX_DEGREE: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    Epanechnikov,
    FourthOrder,
    CustomPolynomial(Vec<f64>),
}

/// A validated symmetric kernel with compact support `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    order: u32,
    // monomial coefficients, coeffs[k] multiplies u^k
    coeffs: Vec<f64>,
}

impl KernelSpec {
    /// `K(u) = 3/4 (1 - u^2)`, a second-order kernel.
    pub fn epanechnikov() -> Self {
        Self {
            family: KernelFamily::Epanechnikov,
            order: 2,
            coeffs: vec![0.75, 0.0, -0.75],
        }
    }

    /// `K(u) = 45/32 (1 - 7u^2/3)(1 - u^2)`, a fourth-order kernel.
    pub fn fourth_order() -> Self {
        Self {
            family: KernelFamily::FourthOrder,
            order: 4,
            coeffs: vec![45.0 / 32.0, 0.0, -75.0 / 16.0, 0.0, 105.0 / 32.0],
        }
    }

    /// A user-supplied polynomial kernel with a declared order.
    ///
    /// The polynomial must be even, integrate to one, vanish at `u = ±1`,
    /// have `kappa_r = 0` for `1 <= r < order` and `kappa_order != 0`.
    /// Second-order kernels must also be nonnegative.
    pub fn custom(coeffs: Vec<f64>, order: u32) -> Result<Self> {
        let spec = Self {
            family: KernelFamily::CustomPolynomial(coeffs.clone()),
            order,
            coeffs,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Like [`KernelSpec::custom`] but takes the order to be the first
    /// moment that does not vanish.
    pub fn custom_inferred(coeffs: Vec<f64>) -> Result<Self> {
        let probe = Self {
            family: KernelFamily::CustomPolynomial(coeffs.clone()),
            order: 2,
            coeffs,
        };
        probe.check_shape()?;
        let order = (1..=MAX_DEGREE as u32 + 2)
            .find(|&r| probe.moment_exact(r).abs() > ORDER_FLOOR)
            .ok_or_else(|| GpaError::InvalidKernel("no non-vanishing moment".into()))?;
        Self::custom(probe.coeffs, order)
    }

    /// Built-in kernel paired with interpolation order `nu`: the
    /// interpolated estimator wants a kernel of order at least `nu + 1`.
    /// Symmetric kernels have even order, so `nu = 2` maps to the
    /// fourth-order kernel as well.
    pub fn for_interpolation_order(nu: usize) -> Result<Self> {
        match nu {
            1 => Ok(Self::epanechnikov()),
            2 | 3 => Ok(Self::fourth_order()),
            _ => Err(GpaError::InvalidKernel(format!(
                "no built-in kernel of order {}; supply poly:[...] coefficients",
                nu + 1
            ))),
        }
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// Identifier used in config files and model files.
    pub fn id(&self) -> String {
        self.to_string()
    }

    /// `K(u)`, zero outside `[-1, 1]`.
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        if !(u.abs() <= 1.0) {
            return 0.0;
        }
        let u2 = u * u;
        match self.family {
            KernelFamily::Epanechnikov => 0.75 * (1.0 - u2),
            KernelFamily::FourthOrder => 45.0 / 32.0 * (1.0 - 7.0 * u2 / 3.0) * (1.0 - u2),
            KernelFamily::CustomPolynomial(_) => horner(&self.coeffs, u),
        }
    }

    /// `K_h(d) = K(d / h) / h`.
    pub fn scaled_eval(&self, h: f64, d: f64) -> Result<f64> {
        check_bandwidth(h)?;
        Ok(self.eval(d / h) / h)
    }

    /// Product kernel `h^{-p} prod_s K(d_s / h)`.
    pub fn product_eval(&self, h: f64, d: &[f64]) -> Result<f64> {
        check_bandwidth(h)?;
        if d.is_empty() {
            return Err(GpaError::InvalidDimension { expected: 1, got: 0 });
        }
        Ok(self.product_unchecked(h.recip(), d))
    }

    #[inline]
    pub(crate) fn product_unchecked(&self, inv_h: f64, d: &[f64]) -> f64 {
        let mut w = 1.0;
        for &ds in d {
            w *= self.eval(ds * inv_h) * inv_h;
            if w == 0.0 {
                break;
            }
        }
        w
    }

    /// `kappa_r` by quadrature.
    pub fn moment(&self, r: u32) -> f64 {
        numeric::simpson(|u| u.powi(r as i32) * self.eval(u), -1.0, 1.0, QUADRATURE_PANELS)
    }

    /// `nu_r` by quadrature.
    pub fn square_moment(&self, r: u32) -> f64 {
        numeric::simpson(
            |u| {
                let k = self.eval(u);
                u.powi(r as i32) * k * k
            },
            -1.0,
            1.0,
            QUADRATURE_PANELS,
        )
    }

    /// `kappa_r` integrated term by term.
    pub fn moment_exact(&self, r: u32) -> f64 {
        monomial_integral(&self.coeffs, r)
    }

    /// `nu_r` integrated term by term.
    pub fn square_moment_exact(&self, r: u32) -> f64 {
        let n = self.coeffs.len();
        let mut sq = vec![0.0; 2 * n - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in self.coeffs.iter().enumerate() {
                sq[i + j] += a * b;
            }
        }
        monomial_integral(&sq, r)
    }

    fn check_shape(&self) -> Result<()> {
        let c = &self.coeffs;
        if c.is_empty() || c.len() > MAX_DEGREE + 1 {
            return Err(GpaError::InvalidKernel(format!(
                "expected 1..={} coefficients, got {}",
                MAX_DEGREE + 1,
                c.len()
            )));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(GpaError::InvalidKernel("non-finite coefficient".into()));
        }
        if c.iter().skip(1).step_by(2).any(|&v| v != 0.0) {
            return Err(GpaError::InvalidKernel(
                "odd-power coefficients must be zero for a symmetric kernel".into(),
            ));
        }
        let edge = horner(c, 1.0);
        if edge.abs() > MOMENT_TOL {
            return Err(GpaError::InvalidKernel(format!(
                "kernel must vanish at |u| = 1 for continuity, K(1) = {edge}"
            )));
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        self.check_shape()?;
        if self.order < 2 || self.order % 2 == 1 {
            return Err(GpaError::InvalidKernel(format!(
                "symmetric kernels have even order >= 2, got {}",
                self.order
            )));
        }
        let mass = self.moment_exact(0);
        if (mass - 1.0).abs() > MOMENT_TOL {
            return Err(GpaError::InvalidKernel(format!(
                "kernel integrates to {mass}, not 1"
            )));
        }
        for r in 1..self.order {
            let m = self.moment_exact(r);
            if m.abs() > MOMENT_TOL {
                return Err(GpaError::InvalidKernel(format!(
                    "moment {r} is {m}; an order-{} kernel needs it to vanish",
                    self.order
                )));
            }
        }
        let lead = self.moment_exact(self.order);
        if lead.abs() <= ORDER_FLOOR {
            return Err(GpaError::InvalidKernel(format!(
                "moment {} vanishes; declared order is too low",
                self.order
            )));
        }
        if self.order == 2 {
            let negative = (0..=1000)
                .map(|i| -1.0 + 2.0 * i as f64 / 1000.0)
                .any(|u| horner(&self.coeffs, u) < -MOMENT_TOL);
            if negative {
                return Err(GpaError::InvalidKernel(
                    "a second-order kernel must be a density (nonnegative)".into(),
                ));
            }
        }
        Ok(())
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::epanechnikov()
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            KernelFamily::Epanechnikov => f.write_str("epanechnikov"),
            KernelFamily::FourthOrder => f.write_str("fourth-order"),
            KernelFamily::CustomPolynomial(c) => {
                f.write_str("poly:[")?;
                for (i, v) in c.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{v:?}")?;
                }
                f.write_str("]")
            }
        }
    }
}

impl FromStr for KernelSpec {
    type Err = GpaError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "epanechnikov" => return Ok(Self::epanechnikov()),
            "fourth-order" => return Ok(Self::fourth_order()),
            _ => {}
        }
        let body = s
            .strip_prefix("poly:")
            .and_then(|b| b.trim().strip_prefix('['))
            .and_then(|b| b.strip_suffix(']'))
            .ok_or_else(|| {
                GpaError::InvalidKernel(format!(
                    "unknown kernel '{s}' (expected epanechnikov, fourth-order or poly:[c0,c1,...])"
                ))
            })?;
        let coeffs = body
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| GpaError::InvalidKernel(format!("bad coefficient '{t}': {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::custom_inferred(coeffs)
    }
}

#[inline]
fn horner(coeffs: &[f64], u: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * u + c)
}

/// `int_{-1}^{1} u^r sum_k c_k u^k du`
fn monomial_integral(coeffs: &[f64], r: u32) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .filter(|(k, _)| (k + r as usize).is_multiple_of(2))
        .map(|(k, c)| c * 2.0 / (k + r as usize + 1) as f64)
        .collect::<numeric::CompensatedSum>()
        .value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epanechnikov_values() {
        let k = KernelSpec::epanechnikov();
        assert_eq!(k.eval(0.0), 0.75);
        assert_eq!(k.eval(1.5), 0.0);
        assert_eq!(k.eval(-1.5), 0.0);
        assert_eq!(k.eval(1.0), 0.0);
    }

    #[test]
    fn fourth_order_values() {
        let k = KernelSpec::fourth_order();
        assert_eq!(k.eval(0.0), 1.40625);
        // (45/32)(1 - 7/12)(3/4) evaluated by hand: 45*5*3 / (32*12*4)
        let direct: f64 = 45.0 * 5.0 * 3.0 / (32.0 * 12.0 * 4.0);
        assert!((direct - 225.0 / 512.0).abs() < 1e-16);
        assert!((k.scaled_eval(1.0, 0.5).unwrap() - direct).abs() < 1e-15);
        // polynomial form and factored form agree
        for i in 0..=20 {
            let u = -1.0 + i as f64 / 10.0;
            assert!((k.eval(u) - horner(k.coefficients(), u)).abs() < 1e-14);
        }
    }

    #[test]
    fn scaled_eval_examples() {
        let k = KernelSpec::epanechnikov();
        assert_eq!(k.scaled_eval(0.5, 0.0).unwrap(), 1.5);
        assert_eq!(k.scaled_eval(0.1, 0.2).unwrap(), 0.0);
        assert!(matches!(k.scaled_eval(0.0, 0.1), Err(GpaError::InvalidBandwidth(_))));
        assert!(k.scaled_eval(-1.0, 0.1).is_err());
        assert!(k.scaled_eval(f64::NAN, 0.1).is_err());
    }

    #[test]
    fn product_eval_examples() {
        let k = KernelSpec::epanechnikov();
        assert_eq!(k.product_eval(1.0, &[0.0, 0.0]).unwrap(), 0.5625);
        assert_eq!(k.product_eval(1.0, &[0.0, 2.0]).unwrap(), 0.0);
        let v = k.product_eval(0.5, &[0.25, 0.25]).unwrap();
        assert!((v - 1.265625).abs() < 1e-15);
        assert!(matches!(
            k.product_eval(1.0, &[]),
            Err(GpaError::InvalidDimension { .. })
        ));
    }

    #[test]
    fn moment_examples() {
        let e = KernelSpec::epanechnikov();
        // (3/4) int u^2 (1 - u^2) = (3/4)(2/3 - 2/5) = 1/5
        assert!((e.moment(2) - 0.2).abs() < 1e-12);
        assert!(e.moment(1).abs() < 1e-14);
        // (9/16) int (1-u^2)^2 = (9/16)(2 - 4/3 + 2/5) = 3/5
        assert!((e.square_moment(0) - 0.6).abs() < 1e-12);
        let f = KernelSpec::fourth_order();
        assert!(f.moment(2).abs() < 1e-10);
        assert!((f.moment(0) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn quadrature_and_closed_form_agree() {
        let kernels = [
            KernelSpec::epanechnikov(),
            KernelSpec::fourth_order(),
            // biweight
            KernelSpec::custom(vec![15.0 / 16.0, 0.0, -30.0 / 16.0, 0.0, 15.0 / 16.0], 2).unwrap(),
        ];
        for k in &kernels {
            for r in 0..8 {
                assert!((k.moment(r) - k.moment_exact(r)).abs() < 1e-10, "{k} kappa_{r}");
                assert!(
                    (k.square_moment(r) - k.square_moment_exact(r)).abs() < 1e-10,
                    "{k} nu_{r}"
                );
            }
        }
    }

    #[test]
    fn scaled_kernel_integrates_to_one() {
        let k = KernelSpec::epanechnikov();
        for &h in &[0.01, 0.3, 2.5] {
            let mass = numeric::simpson(|d| k.scaled_eval(h, d).unwrap(), -h, h, QUADRATURE_PANELS);
            assert!((mass - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn custom_validation_rejects_bad_kernels() {
        // odd term
        assert!(KernelSpec::custom(vec![0.75, 0.1, -0.75], 2).is_err());
        // wrong mass
        assert!(KernelSpec::custom(vec![1.0, 0.0, -1.0], 2).is_err());
        // discontinuous uniform kernel
        assert!(KernelSpec::custom(vec![0.5], 2).is_err());
        // declared order 4 but kappa_2 != 0
        assert!(KernelSpec::custom(vec![0.75, 0.0, -0.75], 4).is_err());
        // fourth-order polynomial declared as second order is negative somewhere
        let c = KernelSpec::fourth_order().coefficients().to_vec();
        assert!(KernelSpec::custom(c.clone(), 2).is_err());
        assert_eq!(KernelSpec::custom(c, 4).unwrap().order(), 4);
    }

    #[test]
    fn parse_round_trip() {
        for name in ["epanechnikov", "fourth-order"] {
            let k: KernelSpec = name.parse().unwrap();
            assert_eq!(k.id(), name);
        }
        let k: KernelSpec = "poly:[0.9375, 0, -1.875, 0, 0.9375]".parse().unwrap();
        assert_eq!(k.order(), 2);
        let again: KernelSpec = k.id().parse().unwrap();
        assert_eq!(again, k);
        let listed: Vec<String> = KernelSpec::fourth_order()
            .coefficients()
            .iter()
            .map(|c| format!("{c:?}"))
            .collect();
        let k4: KernelSpec = format!("poly:[{}]", listed.join(",")).parse().unwrap();
        assert_eq!(k4.order(), 4);
        assert!("gaussian".parse::<KernelSpec>().is_err());
        assert!("poly:[a]".parse::<KernelSpec>().is_err());
    }

    #[test]
    fn interpolation_order_mapping() {
        assert_eq!(KernelSpec::for_interpolation_order(1).unwrap().order(), 2);
        assert_eq!(KernelSpec::for_interpolation_order(2).unwrap().order(), 4);
        assert_eq!(KernelSpec::for_interpolation_order(3).unwrap().order(), 4);
        assert!(KernelSpec::for_interpolation_order(4).is_err());
    }
}
