//! Distribution-dependent drift and diffusion families, the sampled
//! assumption checker and the closed-form constant ledger.

mod checker;
mod coefficients;
mod ledger;

pub use checker::{check_assumptions, check_field_bounds, AssumptionCheck, AssumptionReport};
pub use coefficients::{diffusion_sigma, drift_f, hs_lipschitz_gap, hs_norm_sq};
pub use ledger::{ConstantLedger, LedgerInputs};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{domain_area, Physical};

/// Summary of the empirical law that the default coefficient families use.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LawStats {
    /// μ(‖·‖²_H).
    pub second_moment: f64,
}

impl LawStats {
    pub fn new(second_moment: f64) -> Result<Self> {
        if !(second_moment >= 0.0) {
            return Err(Error::NegativeMoment(second_moment));
        }
        Ok(Self { second_moment })
    }

    /// The Dirac mass at the origin.
    pub fn dirac_zero() -> Self {
        Self { second_moment: 0.0 }
    }

    pub fn root(&self) -> f64 {
        self.second_moment.sqrt()
    }
}

/// Scalar field c + Σ a·cos(k·x + θ) on the torus.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub modes: Vec<ProfileMode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileMode {
    pub k: [i32; 2],
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Profile {
    pub fn constant(c: f64) -> Self {
        Self { constant: c, modes: Vec::new() }
    }

    pub fn with_mode(mut self, k: [i32; 2], amplitude: f64, phase: f64) -> Self {
        self.modes.push(ProfileMode { k, amplitude, phase });
        self
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.modes.iter().all(|m| m.amplitude == 0.0)
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.constant
            + self
                .modes
                .iter()
                .map(|m| m.amplitude * (m.k[0] as f64 * x[0] + m.k[1] as f64 * x[1] + m.phase).cos())
                .sum::<f64>()
    }

    pub fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for m in &self.modes {
            let s = -m.amplitude * (m.k[0] as f64 * x[0] + m.k[1] as f64 * x[1] + m.phase).sin();
            g[0] += s * m.k[0] as f64;
            g[1] += s * m.k[1] as f64;
        }
        g
    }

    /// Upper bound |c| + Σ|a| on the sup norm.
    pub fn sup_bound(&self) -> f64 {
        self.constant.abs() + self.modes.iter().map(|m| m.amplitude.abs()).sum::<f64>()
    }

    /// Upper bound Σ|a||k| on the sup norm of the gradient.
    pub fn grad_sup_bound(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| m.amplitude.abs() * ((m.k[0] * m.k[0] + m.k[1] * m.k[1]) as f64).sqrt())
            .sum()
    }

    fn max_wavenumber(&self) -> usize {
        self.modes
            .iter()
            .map(|m| m.k[0].unsigned_abs().max(m.k[1].unsigned_abs()) as usize)
            .max()
            .unwrap_or(0)
    }

    /// Exact L² norm, by quadrature on a grid fine enough for the square.
    pub fn l2_norm(&self) -> f64 {
        let m = 2 * self.max_wavenumber() + 2;
        let mut sq = self.sample(m);
        for v in &mut sq.values {
            *v *= *v;
        }
        sq.integral().sqrt()
    }

    pub fn sample(&self, m: usize) -> Physical {
        Physical::from_fn(m, |x| self.eval(x))
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let finite = self.constant.is_finite()
            && self.modes.iter().all(|m| m.amplitude.is_finite() && m.phase.is_finite());
        if finite {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("profile `{name}` has non-finite entries")))
        }
    }
}

/// Bounded, 1-Lipschitz scalar shape with s(0) = 0, applied componentwise.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    #[default]
    Tanh,
    /// Identity clipped to [−1, 1].
    Clip,
    Sin,
}

impl Shape {
    pub fn eval(self, r: f64) -> f64 {
        match self {
            Shape::Tanh => r.tanh(),
            Shape::Clip => r.clamp(-1.0, 1.0),
            Shape::Sin => r.sin(),
        }
    }

    pub fn derivative(self, r: f64) -> f64 {
        match self {
            Shape::Tanh => {
                let t = r.tanh();
                1.0 - t * t
            }
            Shape::Clip => {
                if r.abs() < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Shape::Sin => r.cos(),
        }
    }

    pub fn apply(self, u: [f64; 2]) -> [f64; 2] {
        [self.eval(u[0]), self.eval(u[1])]
    }
}

/// f(x, u, μ) = φ₁(x)·s(u) + ψ₁(x)·√μ(‖·‖²_H)·e.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    #[serde(default)]
    pub phi1: Profile,
    #[serde(default)]
    pub psi1: Profile,
    /// Lipschitz profile in u; |φ₁| when absent.
    #[serde(default)]
    pub phi2: Option<Profile>,
    /// Lipschitz profile in the law; |ψ₁| when absent.
    #[serde(default)]
    pub psi2: Option<Profile>,
    #[serde(default)]
    pub shape: Shape,
    /// Direction e of the law-driven part; normalized on use.
    #[serde(default = "default_direction")]
    pub direction: [f64; 2],
}

fn default_direction() -> [f64; 2] {
    [1.0, 0.0]
}

impl Default for DriftSpec {
    fn default() -> Self {
        Self {
            phi1: Profile::default(),
            psi1: Profile::default(),
            phi2: None,
            psi2: None,
            shape: Shape::Tanh,
            direction: default_direction(),
        }
    }
}

impl DriftSpec {
    pub fn unit_direction(&self) -> [f64; 2] {
        let n = self.direction[0].hypot(self.direction[1]);
        [self.direction[0] / n, self.direction[1] / n]
    }

    /// Pointwise drift given the profile values φ₁(x), ψ₁(x).
    #[inline]
    pub fn point(&self, phi1: f64, psi1: f64, u: [f64; 2], root_m: f64) -> [f64; 2] {
        let s = self.shape.apply(u);
        let e = self.unit_direction();
        [phi1 * s[0] + psi1 * root_m * e[0], phi1 * s[1] + psi1 * root_m * e[1]]
    }

    pub fn eval(&self, x: [f64; 2], u: [f64; 2], root_m: f64) -> [f64; 2] {
        self.point(self.phi1.eval(x), self.psi1.eval(x), u, root_m)
    }

    pub fn phi2_at(&self, x: [f64; 2]) -> f64 {
        match &self.phi2 {
            Some(p) => p.eval(x),
            None => self.phi1.eval(x).abs(),
        }
    }

    pub fn psi2_at(&self, x: [f64; 2]) -> f64 {
        match &self.psi2 {
            Some(p) => p.eval(x),
            None => self.psi1.eval(x).abs(),
        }
    }

    pub fn phi2_sup(&self) -> f64 {
        self.phi2.as_ref().map_or_else(|| self.phi1.sup_bound(), Profile::sup_bound)
    }

    pub fn psi2_l2(&self) -> f64 {
        self.psi2.as_ref().map_or_else(|| self.psi1.l2_norm(), Profile::l2_norm)
    }

    pub fn validate(&self) -> Result<()> {
        self.phi1.validate("phi1")?;
        self.psi1.validate("psi1")?;
        if let Some(p) = &self.phi2 {
            p.validate("phi2")?;
        }
        if let Some(p) = &self.psi2 {
            p.validate("psi2")?;
        }
        let n = self.direction[0].hypot(self.direction[1]);
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidParameter("drift direction must be a nonzero vector".into()));
        }
        Ok(())
    }
}

/// σₖ(t, u, μ) = βₖ·tanh(√μ(‖·‖²_H))·eₖ + γ̂ₖ·sₖ(u) with unit directions
/// eₖ at angle 2πk/K.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSpec {
    pub beta: Vec<f64>,
    pub gamma_hat: Vec<f64>,
    /// Lipschitz constants; max(βₖ, γ̂ₖ) when absent.
    #[serde(default)]
    pub lip: Option<Vec<f64>>,
    /// Per-mode shapes; tanh for every mode when absent.
    #[serde(default)]
    pub shapes: Option<Vec<Shape>>,
}

impl DiffusionSpec {
    pub fn modes(&self) -> usize {
        self.beta.len()
    }

    pub fn shape(&self, k: usize) -> Shape {
        self.shapes.as_ref().map_or(Shape::Tanh, |s| s[k])
    }

    pub fn direction(&self, k: usize) -> [f64; 2] {
        let a = std::f64::consts::TAU * k as f64 / self.modes() as f64;
        [a.cos(), a.sin()]
    }

    pub fn lip(&self, k: usize) -> f64 {
        match &self.lip {
            Some(l) => l[k],
            None => self.beta[k].max(self.gamma_hat[k]),
        }
    }

    pub fn lips(&self) -> Vec<f64> {
        (0..self.modes()).map(|k| self.lip(k)).collect()
    }

    pub fn beta_sq(&self) -> f64 {
        self.beta.iter().map(|b| b * b).sum()
    }

    pub fn gamma_sq(&self) -> f64 {
        self.gamma_hat.iter().map(|b| b * b).sum()
    }

    pub fn lip_sq(&self) -> f64 {
        self.lips().iter().map(|b| b * b).sum()
    }

    #[inline]
    pub fn eval(&self, k: usize, u: [f64; 2], root_m: f64) -> [f64; 2] {
        let law = self.beta[k] * root_m.tanh();
        let e = self.direction(k);
        let s = self.shape(k).apply(u);
        [law * e[0] + self.gamma_hat[k] * s[0], law * e[1] + self.gamma_hat[k] * s[1]]
    }

    /// Operator norm of ∂σₖ/∂u, which is diagonal for componentwise shapes.
    pub fn derivative_norm(&self, k: usize, u: [f64; 2]) -> f64 {
        let s = self.shape(k);
        self.gamma_hat[k] * s.derivative(u[0]).abs().max(s.derivative(u[1]).abs())
    }

    pub fn validate(&self, modes: usize) -> Result<()> {
        let check_seq = |name: &str, v: &[f64]| -> Result<()> {
            if v.len() != modes {
                return Err(Error::InvalidParameter(format!(
                    "diffusion `{name}` has {} entries, expected {modes}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::InvalidParameter(format!(
                    "diffusion `{name}` must be finite and nonnegative"
                )));
            }
            Ok(())
        };
        check_seq("beta", &self.beta)?;
        check_seq("gamma_hat", &self.gamma_hat)?;
        if let Some(l) = &self.lip {
            check_seq("lip", l)?;
        }
        if let Some(s) = &self.shapes {
            if s.len() != modes {
                return Err(Error::InvalidParameter("diffusion `shapes` length must equal noise_modes".into()));
            }
        }
        Ok(())
    }
}

/// Physical and coefficient parameters of the particle system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub nu: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub kappa: Profile,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    pub noise_modes: usize,
    #[serde(default)]
    pub drift: DriftSpec,
    pub diffusion: DiffusionSpec,
}

fn default_lambda() -> f64 {
    1.0
}

impl ModelParams {
    /// Linear Stokes flow: no drift, no noise coefficients, κ ≡ 0.
    pub fn stokes(nu: f64, noise_modes: usize) -> Self {
        Self {
            nu,
            epsilon: 0.0,
            kappa: Profile::default(),
            lambda: 1.0,
            noise_modes,
            drift: DriftSpec::default(),
            diffusion: DiffusionSpec {
                beta: vec![0.0; noise_modes],
                gamma_hat: vec![0.0; noise_modes],
                lip: None,
                shapes: None,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(Error::InvalidParameter(format!("viscosity must be positive, got {}", self.nu)));
        }
        // ε = 0 is admitted for the deterministic experiments.
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParameter(format!("noise intensity must lie in [0, 1], got {}", self.epsilon)));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::InvalidParameter("Poincaré constant must lie in (0, 1]".into()));
        }
        if self.noise_modes == 0 {
            return Err(Error::InvalidParameter("at least one noise mode is required".into()));
        }
        self.kappa.validate("kappa")?;
        self.drift.validate()?;
        self.diffusion.validate(self.noise_modes)
    }

    /// Weight ηₖ of h in noise mode k. Equal weights with Σηₖ² = 1 keep the
    /// Hilbert–Schmidt contribution of h at ‖h‖²_H.
    pub fn h_weight(&self) -> f64 {
        1.0 / (self.noise_modes as f64).sqrt()
    }

    pub(crate) fn sampled(&self, m: usize) -> SampledProfiles {
        SampledProfiles {
            m,
            phi1: self.drift.phi1.sample(m),
            psi1: self.drift.psi1.sample(m),
            kappa: self.kappa.sample(m),
        }
    }
}

/// Profiles sampled on a collocation grid.
#[derive(Clone, Debug)]
pub(crate) struct SampledProfiles {
    pub m: usize,
    pub phi1: Physical,
    pub psi1: Physical,
    pub kappa: Physical,
}

pub(crate) fn area() -> f64 {
    domain_area()
}
