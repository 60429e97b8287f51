//! Simulation settings, bias/variance oracles and error metrics.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::bandwidth::{amise_optimal, WeightFn};
use crate::error::{GpaError, Result};
use crate::kernels::KernelSpec;
use crate::moments::{Estimate, Sample};
use crate::numeric::{gauss_legendre, CompensatedSum};

/// Step for central finite differences on user-supplied functions.
pub const FD_STEP: f64 = 1e-5;

/// Panels used by the AMISE quadrature.
const AMISE_PANELS: usize = 4000;

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

fn fd1(f: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    (f(x + FD_STEP) - f(x - FD_STEP)) / (2.0 * FD_STEP)
}

fn fd2(f: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    (f(x + FD_STEP) - 2.0 * f(x) + f(x - FD_STEP)) / (FD_STEP * FD_STEP)
}

#[derive(Clone)]
pub enum MeanFn {
    /// `4(x - 0.5) + 2 exp(-128 (x - 0.5)^2)`
    Mu1,
    /// `sin(8(x - 0.5)) + 2 exp(-128 (x - 0.5)^2)`
    Mu2,
    /// `24 sqrt(x(1 - x)) sin(2.1 pi / (x + 0.05))`
    Mu3,
    Custom { name: String, f: RealFn },
}

impl fmt::Debug for MeanFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeanFn::Mu1 => f.write_str("Mu1"),
            MeanFn::Mu2 => f.write_str("Mu2"),
            MeanFn::Mu3 => f.write_str("Mu3"),
            MeanFn::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl MeanFn {
    pub fn custom(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        MeanFn::Custom {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        let t = x - 0.5;
        match self {
            MeanFn::Mu1 => 4.0 * t + 2.0 * (-128.0 * t * t).exp(),
            MeanFn::Mu2 => (8.0 * t).sin() + 2.0 * (-128.0 * t * t).exp(),
            MeanFn::Mu3 => 24.0 * (x * (1.0 - x)).sqrt() * (2.1 * std::f64::consts::PI / (x + 0.05)).sin(),
            MeanFn::Custom { f, .. } => f(x),
        }
    }

    /// First derivative.
    pub fn d1(&self, x: f64) -> f64 {
        let t = x - 0.5;
        let bump = (-128.0 * t * t).exp();
        match self {
            MeanFn::Mu1 => 4.0 - 512.0 * t * bump,
            MeanFn::Mu2 => 8.0 * (8.0 * t).cos() - 512.0 * t * bump,
            MeanFn::Mu3 => {
                let m = mu3_parts(x);
                m.g1 * m.s + m.g * m.s1
            }
            MeanFn::Custom { f, .. } => fd1(f.as_ref(), x),
        }
    }

    /// Second derivative.
    pub fn d2(&self, x: f64) -> f64 {
        let t = x - 0.5;
        let bump = (-128.0 * t * t).exp();
        let gauss2 = 2.0 * (65536.0 * t * t - 256.0) * bump;
        match self {
            MeanFn::Mu1 => gauss2,
            MeanFn::Mu2 => -64.0 * (8.0 * t).sin() + gauss2,
            MeanFn::Mu3 => {
                let m = mu3_parts(x);
                m.g2 * m.s + 2.0 * m.g1 * m.s1 + m.g * m.s2
            }
            MeanFn::Custom { f, .. } => fd2(f.as_ref(), x),
        }
    }
}

/// Envelope `g = 24 sqrt(q)`, `q = x(1-x)`, and oscillation `s = sin(phi)`,
/// `phi = 2.1 pi / (x + 0.05)`, with their first two derivatives.
struct Mu3Parts {
    g: f64,
    g1: f64,
    g2: f64,
    s: f64,
    s1: f64,
    s2: f64,
}

fn mu3_parts(x: f64) -> Mu3Parts {
    let q = x * (1.0 - x);
    let q1 = 1.0 - 2.0 * x;
    let rq = q.sqrt();
    let c = 2.1 * std::f64::consts::PI;
    let z = x + 0.05;
    let phi = c / z;
    let phi1 = -c / (z * z);
    let phi2 = 2.0 * c / (z * z * z);
    let (sin, cos) = phi.sin_cos();
    Mu3Parts {
        g: 24.0 * rq,
        g1: 12.0 * q1 / rq,
        g2: 12.0 * (-2.0 / rq - 0.5 * q1 * q1 / (q * rq)),
        s: sin,
        s1: cos * phi1,
        s2: -sin * phi1 * phi1 + cos * phi2,
    }
}

#[derive(Clone)]
pub enum CovariateLaw {
    Uniform01,
    /// Beta(2, 3), density `12 x (1 - x)^2`.
    Beta23,
    /// User density on `[lo, hi]`, sampled by rejection under `max_density`.
    Custom {
        name: String,
        density: RealFn,
        support: (f64, f64),
        max_density: f64,
    },
}

impl fmt::Debug for CovariateLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovariateLaw::Uniform01 => f.write_str("Uniform01"),
            CovariateLaw::Beta23 => f.write_str("Beta23"),
            CovariateLaw::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl CovariateLaw {
    pub fn support(&self) -> (f64, f64) {
        match self {
            CovariateLaw::Uniform01 | CovariateLaw::Beta23 => (0.0, 1.0),
            CovariateLaw::Custom { support, .. } => *support,
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return 0.0;
        }
        match self {
            CovariateLaw::Uniform01 => 1.0,
            CovariateLaw::Beta23 => 12.0 * x * (1.0 - x) * (1.0 - x),
            CovariateLaw::Custom { density, .. } => density(x),
        }
    }

    pub fn density_d1(&self, x: f64) -> f64 {
        match self {
            CovariateLaw::Uniform01 => 0.0,
            CovariateLaw::Beta23 => 12.0 * (1.0 - x) * (1.0 - 3.0 * x),
            CovariateLaw::Custom { density, .. } => fd1(density.as_ref(), x),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            CovariateLaw::Uniform01 => rng.random::<f64>(),
            CovariateLaw::Beta23 => Beta::new(2.0, 3.0).expect("valid shape").sample(rng),
            CovariateLaw::Custom {
                density,
                support: (lo, hi),
                max_density,
                ..
            } => loop {
                let x = lo + (hi - lo) * rng.random::<f64>();
                if rng.random::<f64>() * max_density <= density(x) {
                    break x;
                }
            },
        }
    }
}

/// Generative description of a simulated regression problem.
#[derive(Debug, Clone)]
pub struct SimSetting {
    pub mean: MeanFn,
    pub law: CovariateLaw,
    pub sigma: f64,
}

/// A generated sample with the true mean at each covariate.
#[derive(Debug, Clone)]
pub struct SimData {
    pub sample: Sample,
    pub truth: Vec<f64>,
}

impl SimSetting {
    pub fn new(mean: MeanFn, law: CovariateLaw, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(GpaError::InvalidInput(format!("noise sd must be nonnegative, got {sigma}")));
        }
        Ok(Self { mean, law, sigma })
    }

    /// Setting 1: `mu1`, Unif(0, 1).
    pub fn setting1() -> Self {
        Self { mean: MeanFn::Mu1, law: CovariateLaw::Uniform01, sigma: 1.0 }
    }

    /// Setting 2: `mu1`, Beta(2, 3).
    pub fn setting2() -> Self {
        Self { mean: MeanFn::Mu1, law: CovariateLaw::Beta23, sigma: 1.0 }
    }

    /// Setting 3: `mu2`, Unif(0, 1).
    pub fn setting3() -> Self {
        Self { mean: MeanFn::Mu2, law: CovariateLaw::Uniform01, sigma: 1.0 }
    }

    /// Setting 4: `mu2`, Beta(2, 3).
    pub fn setting4() -> Self {
        Self { mean: MeanFn::Mu2, law: CovariateLaw::Beta23, sigma: 1.0 }
    }

    /// `mu3`, Unif(0, 1).
    pub fn mu3() -> Self {
        Self { mean: MeanFn::Mu3, law: CovariateLaw::Uniform01, sigma: 1.0 }
    }

    pub fn with_sigma(self, sigma: f64) -> Result<Self> {
        Self::new(self.mean, self.law, sigma)
    }

    /// `n` draws `Y = mu(X) + sigma Z`, reproducible for a given seed.
    pub fn generate(&self, n: usize, seed: u64) -> Result<SimData> {
        if n == 0 {
            return Err(GpaError::InvalidInput("cannot generate an empty sample".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut truth = Vec::with_capacity(n);
        for _ in 0..n {
            let xi = self.law.draw(&mut rng);
            let z: f64 = StandardNormal.sample(&mut rng);
            let m = self.mean.value(xi);
            x.push(xi);
            truth.push(m);
            y.push(m + self.sigma * z);
        }
        Ok(SimData { sample: Sample::univariate(x, y)?, truth })
    }
}

impl FromStr for SimSetting {
    type Err = GpaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" => Ok(Self::setting1()),
            "2" => Ok(Self::setting2()),
            "3" => Ok(Self::setting3()),
            "4" => Ok(Self::setting4()),
            "mu3" => Ok(Self::mu3()),
            other => Err(GpaError::InvalidInput(format!("unknown setting `{other}` (expected 1, 2, 3, 4 or mu3)"))),
        }
    }
}

/// Pointwise asymptotic bias and variance constants of the NW estimator.
pub struct BiasVariance<'a> {
    setting: &'a SimSetting,
    kappa2: f64,
    nu0: f64,
}

impl BiasVariance<'_> {
    /// `B(x) = (kappa2 / 2) (mu''(x) + 2 mu'(x) f'(x) / f(x))`.
    pub fn bias(&self, x: f64) -> Result<f64> {
        let f = self.density_at(x)?;
        let s = self.setting;
        Ok(0.5 * self.kappa2 * (s.mean.d2(x) + 2.0 * s.mean.d1(x) * s.law.density_d1(x) / f))
    }

    /// `V(x) = nu0 sigma^2 / f(x)`.
    pub fn variance(&self, x: f64) -> Result<f64> {
        let f = self.density_at(x)?;
        Ok(self.nu0 * self.setting.sigma * self.setting.sigma / f)
    }

    fn density_at(&self, x: f64) -> Result<f64> {
        let f = self.setting.law.density(x);
        if f > 0.0 {
            Ok(f)
        } else {
            Err(GpaError::InvalidInput(format!("covariate density vanishes at {x}")))
        }
    }
}

pub fn bias_variance_fns<'a>(setting: &'a SimSetting, kernel: &KernelSpec) -> BiasVariance<'a> {
    BiasVariance {
        setting,
        kappa2: kernel.moment_exact(2),
        nu0: kernel.square_moment_exact(0),
    }
}

/// `(B_bar, V_bar)`: integrals of `B^2 w f` and `V w f` over the trimmed
/// support.
pub fn amise_constants(setting: &SimSetting, kernel: &KernelSpec, weight: &WeightFn) -> Result<(f64, f64)> {
    let (a, b) = weight.interval(setting.law.support());
    if !(b > a) {
        return Err(GpaError::InvalidInput("weight function trims the whole support".into()));
    }
    let bv = bias_variance_fns(setting, kernel);
    // Gauss-Legendre nodes stay strictly inside (a, b), where f > 0 for the built-ins.
    let err = std::cell::RefCell::new(None);
    let b_bar = gauss_legendre(
        |x| match bv.bias(x) {
            Ok(v) => v * v * setting.law.density(x),
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        a,
        b,
        AMISE_PANELS,
    );
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    let v_bar = gauss_legendre(
        |x| bv.nu0 * setting.sigma * setting.sigma * f64::from(setting.law.density(x) > 0.0),
        a,
        b,
        AMISE_PANELS,
    );
    Ok((b_bar, v_bar))
}

/// AMISE-optimal bandwidth of a setting at sample size `n`.
pub fn h_opt(setting: &SimSetting, kernel: &KernelSpec, weight: &WeightFn, n: u64) -> Result<f64> {
    let (b, v) = amise_constants(setting, kernel, weight)?;
    amise_optimal(b, v, n)
}

/// An error metric together with the number of excluded (undefined)
/// predictions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metric {
    pub value: f64,
    pub excluded: usize,
}

fn root_mean_square(pred: &[Estimate], target: &[f64]) -> Result<Metric> {
    if pred.len() != target.len() {
        return Err(GpaError::InvalidDimension {
            expected: target.len(),
            got: pred.len(),
        });
    }
    let mut acc = CompensatedSum::new();
    let mut used = 0usize;
    for (p, t) in pred.iter().zip(target) {
        if let Some(p) = p {
            acc.add((p - t) * (p - t));
            used += 1;
        }
    }
    if used == 0 {
        return Err(GpaError::AllUndefined("no defined predictions to score".into()));
    }
    Ok(Metric {
        value: (acc.value() / used as f64).sqrt(),
        excluded: pred.len() - used,
    })
}

/// Root mean squared error against the true mean.
pub fn rmse(pred: &[Estimate], truth: &[f64]) -> Result<Metric> {
    root_mean_square(pred, truth)
}

/// Root mean prediction error against observed responses.
pub fn rmpe(pred: &[Estimate], observed: &[f64]) -> Result<Metric> {
    root_mean_square(pred, observed)
}

/// Mean relative absolute error `mean |h_b - h_ref| / h_ref`.
pub fn mrae(bandwidths: &[f64], h_ref: f64) -> Result<f64> {
    if bandwidths.is_empty() {
        return Err(GpaError::InvalidInput("no bandwidths to score".into()));
    }
    if !(h_ref > 0.0) {
        return Err(GpaError::InvalidBandwidth(h_ref));
    }
    let total: CompensatedSum = bandwidths.iter().map(|h| (h - h_ref).abs() / h_ref).collect();
    Ok(total.value() / bandwidths.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_values() {
        assert_eq!(MeanFn::Mu1.value(0.5), 2.0);
        assert_eq!(MeanFn::Mu2.value(0.5), 2.0);
        assert_eq!(MeanFn::Mu1.d2(0.5), -512.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for mean in [MeanFn::Mu1, MeanFn::Mu2, MeanFn::Mu3] {
            let f = mean.clone();
            let g = move |x: f64| f.value(x);
            for i in 1..40 {
                let x = 0.05 + 0.9 * i as f64 / 40.0;
                let (a1, n1) = (mean.d1(x), fd1(&g, x));
                let (a2, n2) = (mean.d2(x), fd2(&g, x));
                assert!((a1 - n1).abs() <= 1e-4 * a1.abs().max(1.0), "{mean:?} d1 at {x}");
                assert!((a2 - n2).abs() <= 1e-4 * a2.abs().max(1.0), "{mean:?} d2 at {x}");
            }
        }
    }

    #[test]
    fn bias_variance_examples() {
        let s = SimSetting::setting1();
        let k = KernelSpec::epanechnikov();
        let bv = bias_variance_fns(&s, &k);
        assert!((bv.bias(0.5).unwrap() + 51.2).abs() < 1e-12);
        assert!((bv.variance(0.3).unwrap() - 0.6).abs() < 1e-12);
        let beta = SimSetting::setting2();
        assert!(bias_variance_fns(&beta, &k).variance(0.0).is_err());
    }

    #[test]
    fn densities_integrate_to_one() {
        for law in [CovariateLaw::Uniform01, CovariateLaw::Beta23] {
            let total = crate::numeric::simpson(|x| law.density(x), 0.0, 1.0, 2048);
            assert!((total - 1.0).abs() < 1e-10, "{law:?}");
        }
    }

    #[test]
    fn noiseless_generation() {
        let s = SimSetting::setting2().with_sigma(0.0).unwrap();
        let d = s.generate(100, 3).unwrap();
        for (y, t) in d.sample.y().iter().zip(&d.truth) {
            assert_eq!(y, t);
        }
        let again = s.generate(100, 3).unwrap();
        assert_eq!(d.sample, again.sample);
    }

    #[test]
    fn constant_mean_has_zero_bias() {
        let s = SimSetting::new(MeanFn::custom("const", |_| 2.0), CovariateLaw::Uniform01, 1.0).unwrap();
        let (b, v) = amise_constants(&s, &KernelSpec::epanechnikov(), &WeightFn::default()).unwrap();
        assert!(b.abs() < 1e-12);
        assert!((v - 0.6 * 0.9).abs() < 1e-12);
    }

    #[test]
    fn metric_examples() {
        assert_eq!(rmse(&[Some(1.0), Some(2.0)], &[1.0, 2.0]).unwrap().value, 0.0);
        assert_eq!(rmse(&[Some(3.0)], &[1.0]).unwrap().value, 2.0);
        let m = rmpe(&[Some(3.0), None], &[1.0, 7.0]).unwrap();
        assert_eq!((m.value, m.excluded), (2.0, 1));
        assert!(rmse(&[None], &[1.0]).is_err());
        assert!((mrae(&[0.11, 0.09], 0.10).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn parse_presets() {
        assert!(matches!("4".parse::<SimSetting>().unwrap().law, CovariateLaw::Beta23));
        assert!(matches!("mu3".parse::<SimSetting>().unwrap().mean, MeanFn::Mu3));
        assert!("7".parse::<SimSetting>().is_err());
    }
}
