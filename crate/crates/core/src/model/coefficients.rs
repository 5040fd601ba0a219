use super::{area, DriftSpec, LawStats, ModelParams};
use crate::error::Result;
use crate::metrics::{wasserstein2, EmpiricalMeasure};
use crate::spectral::operators as ops;
use crate::spectral::{Physical, SpectralField};

/// 𝒫 f(·, u, μ) evaluated on the collocation grid and projected.
pub fn drift_f(u: &SpectralField, stats: &LawStats, spec: &DriftSpec) -> Result<SpectralField> {
    let stats = LawStats::new(stats.second_moment)?;
    let grid = *u.grid();
    let m = grid.collocation_size();
    let [ux, uy] = u.to_physical(m);
    let phi1 = spec.phi1.sample(m);
    let psi1 = spec.psi1.sample(m);
    let root = stats.root();
    let mut fx = Physical::zeros(m);
    let mut fy = Physical::zeros(m);
    for p in 0..m * m {
        let f = spec.point(phi1.values[p], psi1.values[p], [ux.values[p], uy.values[p]], root);
        fx.values[p] = f[0];
        fy.values[p] = f[1];
    }
    Ok(ops::project_from_physical(&grid, &fx, &fy))
}

/// The K noise fields 𝒫[ηₖ h + κ σₖ(u, μ)], ηₖ = 1/√K.
pub fn diffusion_sigma(
    u: &SpectralField,
    stats: &LawStats,
    h: &SpectralField,
    params: &ModelParams,
) -> Result<Vec<SpectralField>> {
    let stats = LawStats::new(stats.second_moment)?;
    u.same_grid(h)?;
    let grid = *u.grid();
    let m = grid.collocation_size();
    let [ux, uy] = u.to_physical(m);
    let [hx, hy] = h.to_physical(m);
    let kappa = params.kappa.sample(m);
    let eta = params.h_weight();
    let root = stats.root();
    let spec = &params.diffusion;
    let mut out = Vec::with_capacity(params.noise_modes);
    for k in 0..params.noise_modes {
        let mut fx = Physical::zeros(m);
        let mut fy = Physical::zeros(m);
        for p in 0..m * m {
            let s = spec.eval(k, [ux.values[p], uy.values[p]], root);
            fx.values[p] = eta * hx.values[p] + kappa.values[p] * s[0];
            fy.values[p] = eta * hy.values[p] + kappa.values[p] * s[1];
        }
        out.push(ops::project_from_physical(&grid, &fx, &fy));
    }
    Ok(out)
}

/// Squared Hilbert–Schmidt norm Σₖ ‖σ e_k‖²_H.
pub fn hs_norm_sq(sigma: &[SpectralField]) -> f64 {
    sigma.iter().map(SpectralField::h_norm_sq).sum()
}

/// Both sides of the Hilbert–Schmidt Lipschitz bound
/// ‖σ(u₁,μ₁) − σ(u₂,μ₂)‖²_HS ≤ 2‖κ‖²_∞‖L‖²(1+|𝒪|)(‖u₁−u₂‖²_H + 𝕎₂²(μ₁,μ₂)).
pub fn hs_lipschitz_gap(
    u1: &SpectralField,
    u2: &SpectralField,
    mu1: &EmpiricalMeasure,
    mu2: &EmpiricalMeasure,
    params: &ModelParams,
) -> Result<(f64, f64)> {
    let zero = SpectralField::zeros(*u1.grid());
    let s1 = diffusion_sigma(u1, &LawStats::new(mu1.moment_p(2))?, &zero, params)?;
    let s2 = diffusion_sigma(u2, &LawStats::new(mu2.moment_p(2))?, &zero, params)?;
    let lhs = s1
        .iter()
        .zip(&s2)
        .map(|(a, b)| a.dist_sq(b))
        .sum::<Result<f64>>()?;
    let w2 = wasserstein2(mu1, mu2)?;
    let kappa = params.kappa.sup_bound();
    let rhs = 2.0
        * kappa
        * kappa
        * params.diffusion.lip_sq()
        * (1.0 + area())
        * (u1.dist_sq(u2)? + w2 * w2);
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiffusionSpec, Profile};
    use crate::spectral::{GridSpec, RandomFieldSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> ModelParams {
        ModelParams {
            nu: 2.0,
            epsilon: 0.5,
            kappa: Profile::constant(0.5).with_mode([1, 1], 0.1, 0.0),
            lambda: 1.0,
            noise_modes: 3,
            drift: DriftSpec {
                phi1: Profile::constant(0.05).with_mode([1, 0], 0.02, 0.0),
                psi1: Profile::constant(0.01),
                ..Default::default()
            },
            diffusion: DiffusionSpec {
                beta: vec![0.01, 0.005, 0.002],
                gamma_hat: vec![0.1, 0.05, 0.02],
                lip: None,
                shapes: None,
            },
        }
    }

    #[test]
    fn drift_zero_at_rest() {
        let grid = GridSpec::new(4, true).unwrap();
        let f = drift_f(&SpectralField::zeros(grid), &LawStats::dirac_zero(), &params().drift).unwrap();
        assert!(f.is_zero());
        assert!(drift_f(&SpectralField::zeros(grid), &LawStats { second_moment: -1.0 }, &params().drift).is_err());
    }

    #[test]
    fn clipped_identity_drift_is_linear_for_small_fields() {
        let grid = GridSpec::new(4, true).unwrap();
        let spec = DriftSpec { phi1: Profile::constant(0.3), shape: super::super::Shape::Clip, ..Default::default() };
        let u = SpectralField::shear_wave(grid, (1, 2), 0.1, 0.4).unwrap();
        let f = drift_f(&u, &LawStats::dirac_zero(), &spec).unwrap();
        assert!(f.dist_sq(&u.scaled(0.3)).unwrap() < 1e-28);
    }

    #[test]
    fn drift_growth_bound_by_quadrature() {
        let grid = GridSpec::new(6, true).unwrap();
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for i in 0..20 {
            let spec = RandomFieldSpec { h_norm: Some(0.1 * (i + 1) as f64), ..Default::default() };
            let u = SpectralField::random(grid, &spec, &mut rng);
            let m2 = 0.3 * i as f64;
            let f = drift_f(&u, &LawStats::new(m2).unwrap(), &p.drift).unwrap();
            let bound = p.drift.phi1.sup_bound() * (area().sqrt() + u.h_norm_sq().sqrt())
                + p.drift.psi1.l2_norm() * m2.sqrt();
            assert!(f.h_norm_sq().sqrt() <= bound);
            assert!(f.invariant_defect() < 1e-12);
        }
    }

    #[test]
    fn sigma_vanishes_without_sources() {
        let grid = GridSpec::new(3, true).unwrap();
        let mut p = params();
        p.kappa = Profile::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = SpectralField::random(grid, &Default::default(), &mut rng);
        let s = diffusion_sigma(&u, &LawStats::new(2.0).unwrap(), &SpectralField::zeros(grid), &p).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(hs_norm_sq(&s), 0.0);
    }

    #[test]
    fn sigma_at_rest_meets_growth_bound() {
        let grid = GridSpec::new(4, true).unwrap();
        let p = params();
        let zero = SpectralField::zeros(grid);
        let s = diffusion_sigma(&zero, &LawStats::dirac_zero(), &zero, &p).unwrap();
        let kappa = p.kappa.sup_bound();
        assert!(hs_norm_sq(&s) <= 4.0 * p.diffusion.beta_sq() * kappa * kappa * area());
    }

    #[test]
    fn hs_gap_zero_for_identical_inputs() {
        let grid = GridSpec::new(3, true).unwrap();
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = SpectralField::random(grid, &Default::default(), &mut rng);
        let mu = EmpiricalMeasure::uniform(vec![u.clone(), u.scaled(2.0)]).unwrap();
        let (lhs, rhs) = hs_lipschitz_gap(&u, &u, &mu, &mu, &p).unwrap();
        assert_eq!(lhs, 0.0);
        assert_eq!(rhs, 0.0);
    }

    #[test]
    fn hs_gap_against_rest() {
        let grid = GridSpec::new(4, true).unwrap();
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let delta = EmpiricalMeasure::uniform(vec![SpectralField::zeros(grid)]).unwrap();
        for _ in 0..10 {
            let u = SpectralField::random(grid, &Default::default(), &mut rng);
            let (lhs, rhs) = hs_lipschitz_gap(&u, &SpectralField::zeros(grid), &delta, &delta, &p).unwrap();
            assert!(lhs <= rhs);
        }
    }
}
