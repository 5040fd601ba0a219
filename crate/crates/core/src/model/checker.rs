use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::coefficients::{diffusion_sigma, hs_lipschitz_gap, hs_norm_sq};
use super::{area, LawStats, ModelParams};
use crate::error::{Error, Result};
use crate::forcing::Symbol;
use crate::metrics::EmpiricalMeasure;
use crate::spectral::{GridSpec, RandomFieldSpec, SpectralField, DOMAIN_SIZE};

/// Ratios above this threshold count as violations.
pub const RATIO_TOLERANCE: f64 = 1.0 + 1e-9;

/// Identifiers of the sampled inequalities.
pub mod ids {
    pub const DRIFT_AT_REST: &str = "drift_vanishes_at_rest";
    pub const DRIFT_GROWTH: &str = "drift_growth";
    pub const DRIFT_LIPSCHITZ: &str = "drift_lipschitz";
    pub const DIFFUSION_GROWTH: &str = "diffusion_growth";
    pub const DIFFUSION_SUMMABLE: &str = "diffusion_summable";
    pub const DIFFUSION_LIPSCHITZ: &str = "diffusion_lipschitz";
    pub const DIFFUSION_DERIVATIVE: &str = "diffusion_derivative";
    pub const HS_GROWTH: &str = "hs_growth";
    pub const HS_LIPSCHITZ: &str = "hs_lipschitz";
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub id: String,
    /// Human-readable statement of the inequality.
    pub statement: String,
    pub samples: usize,
    /// Largest observed lhs / rhs (0 when every lhs vanished).
    pub max_ratio: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn first_failure(&self) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| !c.pass)
    }

    pub fn get(&self, id: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.id == id)
    }

    pub fn into_result(self) -> Result<Self> {
        match self.first_failure() {
            Some(c) => Err(Error::AssumptionViolated { id: c.id.clone(), ratio: c.max_ratio }),
            None => Ok(self),
        }
    }

    pub fn merged(mut self, other: AssumptionReport) -> Self {
        self.checks.extend(other.checks);
        self
    }
}

struct Tally {
    id: &'static str,
    statement: &'static str,
    samples: usize,
    max_ratio: f64,
}

impl Tally {
    fn new(id: &'static str, statement: &'static str) -> Self {
        Self { id, statement, samples: 0, max_ratio: 0.0 }
    }

    fn record(&mut self, lhs: f64, rhs: f64) {
        self.samples += 1;
        let r = if lhs == 0.0 {
            0.0
        } else if rhs > 0.0 {
            lhs / rhs
        } else {
            f64::INFINITY
        };
        if r.is_nan() || r > self.max_ratio {
            self.max_ratio = if r.is_nan() { f64::INFINITY } else { r };
        }
    }

    fn finish(self) -> AssumptionCheck {
        AssumptionCheck {
            id: self.id.to_string(),
            statement: self.statement.to_string(),
            samples: self.samples,
            max_ratio: self.max_ratio,
            pass: self.max_ratio <= RATIO_TOLERANCE,
        }
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.random_range(lo..hi))
}

fn random_vector(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> [f64; 2] {
    if rng.random_bool(0.05) {
        return [0.0, 0.0];
    }
    let r = log_uniform(rng, lo, hi);
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    [r * a.cos(), r * a.sin()]
}

fn random_radius(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random_bool(0.1) {
        0.0
    } else {
        log_uniform(rng, -3.0, 2.0)
    }
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn diff(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// Samples the pointwise drift and diffusion inequalities. Laws enter through
/// pairs of Dirac masses on a common ray, for which μ(‖·‖²) = r² and
/// 𝕎₂(δ_{r₁e}, δ_{r₂e}) = |r₁ − r₂| are exact.
pub fn check_assumptions(params: &ModelParams, budget: usize, seed: u64) -> Result<AssumptionReport> {
    if budget == 0 {
        return Err(Error::InvalidParameter("sample budget must be at least 1".into()));
    }
    params.validate()?;
    let drift = &params.drift;
    let diff_spec = &params.diffusion;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut at_rest = Tally::new(ids::DRIFT_AT_REST, "|f(x,0,δ₀)| = 0");
    let mut growth = Tally::new(ids::DRIFT_GROWTH, "|f(x,u,μ)| ≤ φ₁(x)(1+|u|) + ψ₁(x)√μ(‖·‖²)");
    let mut lip = Tally::new(
        ids::DRIFT_LIPSCHITZ,
        "|f(x,u₁,μ₁) − f(x,u₂,μ₂)| ≤ φ₂(x)|u₁−u₂| + ψ₂(x)𝕎₂(μ₁,μ₂)",
    );
    let mut sgrowth = Tally::new(ids::DIFFUSION_GROWTH, "|σₖ(t,u,μ)| ≤ βₖ(1+√μ(‖·‖²)) + γ̂ₖ|u|");
    let mut summable = Tally::new(ids::DIFFUSION_SUMMABLE, "‖β‖² + ‖γ̂‖² + ‖L‖² < ∞");
    let mut slip = Tally::new(
        ids::DIFFUSION_LIPSCHITZ,
        "|σₖ(t,u₁,μ₁) − σₖ(t,u₂,μ₂)| ≤ Lₖ(|u₁−u₂| + 𝕎₂(μ₁,μ₂))",
    );
    let mut sder = Tally::new(ids::DIFFUSION_DERIVATIVE, "|∂σₖ/∂u| ≤ Lₖ");

    let total = diff_spec.beta_sq() + diff_spec.gamma_sq() + diff_spec.lip_sq();
    summable.record(if total.is_finite() { 0.0 } else { 1.0 }, 0.0);

    for _ in 0..budget {
        let x = [rng.random_range(0.0..DOMAIN_SIZE), rng.random_range(0.0..DOMAIN_SIZE)];
        let u1 = random_vector(&mut rng, -3.0, 2.0);
        let u2 = if rng.random_bool(0.5) {
            let d = random_vector(&mut rng, -5.0, 1.0);
            [u1[0] + d[0], u1[1] + d[1]]
        } else {
            random_vector(&mut rng, -3.0, 2.0)
        };
        let r1 = random_radius(&mut rng);
        let r2 = if rng.random_bool(0.5) {
            (r1 + rng.random_range(-1.0..1.0) * log_uniform(&mut rng, -5.0, 0.0) * r1.max(1.0)).abs()
        } else {
            random_radius(&mut rng)
        };
        // Second moments of the Dirac masses, and their exact 𝕎₂ distance.
        let (m1, m2) = (r1 * r1, r2 * r2);
        let w2 = (r1 - r2).abs();

        at_rest.record(norm(drift.eval(x, [0.0, 0.0], 0.0)), 0.0);

        let phi1 = drift.phi1.eval(x).abs();
        let psi1 = drift.psi1.eval(x).abs();
        let f1 = drift.eval(x, u1, m1.sqrt());
        growth.record(norm(f1), phi1 * (1.0 + norm(u1)) + psi1 * m1.sqrt());

        let f2 = drift.eval(x, u2, m2.sqrt());
        lip.record(
            norm(diff(f1, f2)),
            drift.phi2_at(x) * norm(diff(u1, u2)) + drift.psi2_at(x) * w2,
        );

        for k in 0..params.noise_modes {
            let s1 = diff_spec.eval(k, u1, m1.sqrt());
            let s2 = diff_spec.eval(k, u2, m2.sqrt());
            sgrowth.record(norm(s1), diff_spec.beta[k] * (1.0 + m1.sqrt()) + diff_spec.gamma_hat[k] * norm(u1));
            let l = diff_spec.lip(k);
            slip.record(norm(diff(s1, s2)), l * (norm(diff(u1, u2)) + w2));
            sder.record(diff_spec.derivative_norm(k, u1), l);
        }
    }

    Ok(AssumptionReport {
        checks: vec![
            at_rest.finish(),
            growth.finish(),
            lip.finish(),
            sgrowth.finish(),
            summable.finish(),
            slip.finish(),
            sder.finish(),
        ],
    })
}

/// Samples the field-level Hilbert–Schmidt growth and Lipschitz bounds with
/// random fields, random times of the symbol's h, and four-atom empirical laws.
pub fn check_field_bounds(
    params: &ModelParams,
    symbol: &Symbol,
    grid: GridSpec,
    budget: usize,
    seed: u64,
) -> Result<AssumptionReport> {
    if budget == 0 {
        return Err(Error::InvalidParameter("sample budget must be at least 1".into()));
    }
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut growth = Tally::new(
        ids::HS_GROWTH,
        "‖σ(t,u,μ)‖²_HS ≤ 2‖h₀‖² + 8‖β‖²‖κ‖²_∞|𝒪|(1+μ(‖·‖²)) + 4‖κ‖²_∞‖γ̂‖²‖u‖²_H",
    );
    let mut lip = Tally::new(
        ids::HS_LIPSCHITZ,
        "‖σ(t,u₁,μ₁) − σ(t,u₂,μ₂)‖²_HS ≤ 2‖κ‖²_∞‖L‖²(1+|𝒪|)(‖u₁−u₂‖²_H + 𝕎₂²(μ₁,μ₂))",
    );
    let kappa = params.kappa.sup_bound();
    let h0 = symbol.h.sup_norm();
    let beta_sq = params.diffusion.beta_sq();
    let gamma_sq = params.diffusion.gamma_sq();
    let field = |rng: &mut ChaCha8Rng| {
        let spec = RandomFieldSpec {
            decay: rng.random_range(0.0..3.0),
            max_wavenumber: Some(rng.random_range(1..=grid.modes_per_axis)),
            h_norm: Some(log_uniform(rng, -2.0, 1.5)),
        };
        SpectralField::random(grid, &spec, rng)
    };
    for i in 0..budget {
        let t = rng.random_range(-100.0..100.0);
        let u = field(&mut rng);
        if i % 2 == 0 {
            let m = random_radius(&mut rng).powi(2);
            let h = symbol.h.eval(t);
            let sigma = diffusion_sigma(&u, &LawStats::new(m)?, &h, params)?;
            let rhs = 2.0 * h0 * h0
                + 8.0 * beta_sq * kappa * kappa * area() * (1.0 + m)
                + 4.0 * kappa * kappa * gamma_sq * u.h_norm_sq();
            growth.record(hs_norm_sq(&sigma), rhs);
        } else {
            let u2 = if rng.random_bool(0.5) {
                let mut v = field(&mut rng);
                v.scale_in_place(log_uniform(&mut rng, -4.0, 0.0));
                &u + &v
            } else {
                field(&mut rng)
            };
            let mu1 = EmpiricalMeasure::uniform((0..4).map(|_| field(&mut rng)).collect())?;
            let mu2 = EmpiricalMeasure::uniform((0..4).map(|_| field(&mut rng)).collect())?;
            let (l, r) = hs_lipschitz_gap(&u, &u2, &mu1, &mu2, params)?;
            lip.record(l, r);
        }
    }
    Ok(AssumptionReport { checks: vec![growth.finish(), lip.finish()] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiffusionSpec, DriftSpec, Profile};

    fn params() -> ModelParams {
        ModelParams {
            nu: 2.0,
            epsilon: 0.5,
            kappa: Profile::constant(0.5).with_mode([1, 1], 0.1, 0.0),
            lambda: 1.0,
            noise_modes: 4,
            drift: DriftSpec {
                phi1: Profile::constant(0.01).with_mode([0, 1], 0.005, 0.0),
                psi1: Profile::constant(0.002),
                ..Default::default()
            },
            diffusion: DiffusionSpec {
                beta: vec![0.004, 0.003, 0.002, 0.001],
                gamma_hat: vec![0.08, 0.06, 0.04, 0.02],
                lip: None,
                shapes: None,
            },
        }
    }

    #[test]
    fn default_family_passes() {
        let report = check_assumptions(&params(), 2000, 1).unwrap();
        assert!(report.pass(), "{report:?}");
        assert_eq!(report.checks.len(), 7);
    }

    #[test]
    fn halved_lipschitz_constants_fail_the_lipschitz_check() {
        let mut p = params();
        p.diffusion.lip = Some(p.diffusion.lips().iter().map(|l| 0.5 * l).collect());
        let report = check_assumptions(&p, 2000, 2).unwrap();
        assert!(!report.pass());
        assert!(!report.get(ids::DIFFUSION_LIPSCHITZ).unwrap().pass);
        match report.into_result() {
            Err(Error::AssumptionViolated { id, .. }) => {
                assert!(id == ids::DIFFUSION_LIPSCHITZ || id == ids::DIFFUSION_DERIVATIVE)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_coefficients_pass_trivially() {
        let p = ModelParams::stokes(1.0, 3);
        let report = check_assumptions(&p, 100, 3).unwrap();
        assert!(report.pass());
        assert!(report.checks.iter().all(|c| c.max_ratio == 0.0));
    }

    #[test]
    fn wrong_phi2_fails_drift_lipschitz() {
        let mut p = params();
        p.drift.phi2 = Some(Profile::constant(0.001));
        let report = check_assumptions(&p, 2000, 4).unwrap();
        assert!(!report.get(ids::DRIFT_LIPSCHITZ).unwrap().pass);
    }

    #[test]
    fn field_bounds_pass() {
        let grid = GridSpec::new(4, true).unwrap();
        let sym = Symbol::separated_example(grid).unwrap();
        let report = check_field_bounds(&params(), &sym, grid, 40, 5).unwrap();
        assert!(report.pass(), "{report:?}");
        assert!(report.checks.iter().all(|c| c.samples == 20));
    }

    #[test]
    fn zero_budget_is_rejected() {
        assert!(check_assumptions(&params(), 0, 1).is_err());
    }
}
