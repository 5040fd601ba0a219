//! Semi-implicit Euler–Maruyama integration of the interacting particle system.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forcing::Symbol;
use crate::metrics::EmpiricalMeasure;
use crate::model::{LawStats, ModelParams, SampledProfiles, Shape};
use crate::spectral::operators::{physical_state, project_from_physical};
use crate::spectral::{GridSpec, Physical, RandomFieldSpec, SpectralField, DOMAIN_SIZE};

/// Upper limit on guard-induced substeps within one step.
pub const MAX_SUBSTEPS: usize = 4096;

/// ChaCha words reserved per step and particle; far more than any step draws.
const WORDS_PER_STEP: u128 = 1 << 24;

/// M particles sharing their empirical law.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    particles: Vec<SpectralField>,
    time: f64,
}

impl Ensemble {
    pub fn new(particles: Vec<SpectralField>, time: f64) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::InvalidParameter("an ensemble needs at least one particle".into()));
        }
        for p in &particles[1..] {
            particles[0].same_grid(p)?;
        }
        Ok(Self { particles, time })
    }

    /// Particles drawn independently with `spec`, from one seeded generator.
    pub fn random(grid: GridSpec, count: usize, spec: &RandomFieldSpec, seed: u64, time: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new((0..count).map(|_| SpectralField::random(grid, spec, &mut rng)).collect(), time)
    }

    pub fn particles(&self) -> &[SpectralField] {
        &self.particles
    }

    pub fn into_particles(self) -> Vec<SpectralField> {
        self.particles
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn grid(&self) -> &GridSpec {
        self.particles[0].grid()
    }

    pub fn law(&self) -> EmpiricalMeasure {
        EmpiricalMeasure::uniform(self.particles.clone()).expect("nonempty ensemble on one grid")
    }

    /// (1/M)Σ‖uⁱ‖ᵖ_H summed in sorted order, so it is invariant under
    /// relabelling the particles.
    pub fn moment(&self, p: u32) -> f64 {
        let mut v: Vec<f64> = self.particles.iter().map(|u| u.h_norm_sq().sqrt().powi(p as i32)).collect();
        v.sort_by(f64::total_cmp);
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn law_stats(&self) -> LawStats {
        LawStats { second_moment: self.moment(2) }
    }

    pub fn max_v_norm(&self) -> f64 {
        self.particles.iter().map(|u| u.v_norm_sq().sqrt()).fold(0.0, f64::max)
    }
}

/// Keys Gaussian increments by (seed, particle stream, absolute step).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub seed: u64,
    pub modes: usize,
    /// Absolute index of the first step of a simulation.
    #[serde(default)]
    pub step_offset: i64,
    /// Stream of each particle; particle i uses stream i when absent.
    #[serde(default)]
    pub streams: Option<Vec<u64>>,
}

impl NoiseSpec {
    pub fn new(seed: u64, modes: usize) -> Self {
        Self { seed, modes, step_offset: 0, streams: None }
    }

    pub fn with_offset(mut self, step_offset: i64) -> Self {
        self.step_offset = step_offset;
        self
    }

    pub fn stream(&self, particle: usize) -> u64 {
        self.streams.as_ref().map_or(particle as u64, |s| s[particle])
    }

    /// Generator positioned at the increments of `particle` for absolute step
    /// `step`; successive draws give the modes of each substep in turn.
    pub fn generator(&self, particle: usize, step: i64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream(particle));
        let slot = (step as i128 - i64::MIN as i128) as u128;
        rng.set_word_pos(slot * WORDS_PER_STEP);
        rng
    }

    /// The K standard-normal draws for one (sub)step, scaled by √dt.
    pub fn increments(rng: &mut ChaCha8Rng, modes: usize, dt: f64) -> Vec<f64> {
        let s = dt.sqrt();
        (0..modes).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()
    }
}

/// Left-point energy accumulators of one particle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTerms {
    pub h2_initial: f64,
    /// Σ dt (f(uₙ, μₙ), uₙ).
    pub fu_int: f64,
    /// Σ dt (g(tₙ), uₙ).
    pub gu_int: f64,
    /// ε² Σ dt ‖σ(tₙ, uₙ, μₙ)‖²_HS.
    pub hs_int: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParticleSample {
    pub h2: f64,
    pub v2: f64,
    /// Left-point Σ dt ‖uₙ‖²_V since the start.
    pub v_int: f64,
    /// Trapezoid ∫ ‖u‖²_H ‖u‖²_V since the start.
    pub hv_int: f64,
    pub energy: Option<EnergyTerms>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub step: u64,
    pub m2: f64,
    pub m4: f64,
    pub mean_v2: f64,
    pub particles: Vec<ParticleSample>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub nu: f64,
    pub dt: f64,
    pub samples: Vec<Sample>,
    pub snapshots: Vec<(f64, Vec<SpectralField>)>,
    /// Extra substeps inserted by the step-size guard.
    pub extra_substeps: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    /// Record statistics every this many steps (and at the end); 0 means 1.
    pub sample_every: usize,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub record_ledger: bool,
}

impl SamplingPlan {
    pub fn every(sample_every: usize) -> Self {
        Self { sample_every, ..Default::default() }
    }

    pub fn with_ledger(mut self) -> Self {
        self.record_ledger = true;
        self
    }
}

struct Advanced {
    field: SpectralField,
    fu: f64,
    hs: f64,
}

pub struct Integrator<'a> {
    params: &'a ModelParams,
    symbol: &'a Symbol,
    noise: NoiseSpec,
    c_lady: f64,
    grid: GridSpec,
    profiles: SampledProfiles,
}

impl<'a> Integrator<'a> {
    pub fn new(params: &'a ModelParams, symbol: &'a Symbol, noise: NoiseSpec, c_lady: f64) -> Result<Self> {
        params.validate()?;
        if noise.modes != params.noise_modes {
            return Err(Error::InvalidParameter(format!(
                "noise carries {} modes, parameters {}",
                noise.modes, params.noise_modes
            )));
        }
        let grid = *symbol.grid();
        let profiles = params.sampled(grid.collocation_size());
        Ok(Self { params, symbol, noise, c_lady, grid, profiles })
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    /// Largest step the guard admits: 0.5 / (𝔠 maxᵢ‖uⁱ‖_V).
    pub fn dt_max(&self, ens: &Ensemble) -> f64 {
        let v = self.c_lady * ens.max_v_norm();
        if v > 0.0 {
            0.5 / v
        } else {
            f64::INFINITY
        }
    }

    fn check_ensemble(&self, ens: &Ensemble) -> Result<()> {
        if *ens.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        if let Some(s) = &self.noise.streams {
            if s.len() != ens.len() {
                return Err(Error::InvalidParameter("one noise stream per particle is required".into()));
            }
        }
        Ok(())
    }

    /// One step of size dt ≤ dt_max; `step` indexes the noise relative to the
    /// spec's offset.
    pub fn step(&self, ens: &mut Ensemble, dt: f64, step: u64) -> Result<()> {
        self.check_ensemble(ens)?;
        let dt_max = self.dt_max(ens);
        if !(dt > 0.0) || dt > dt_max {
            return Err(Error::StepTooLarge { dt, dt_max });
        }
        let t = ens.time + dt;
        self.advance(ens, dt, step, 1, None)?;
        ens.time = t;
        Ok(())
    }

    fn advance(
        &self,
        ens: &mut Ensemble,
        dt: f64,
        step: u64,
        substeps: usize,
        mut ledger: Option<&mut [ParticleSample]>,
    ) -> Result<()> {
        // A corrupted particle would poison the shared law; name it first.
        if let Some(i) = ens.particles.iter().position(|u| !is_finite(u)) {
            return Err(Error::NonFinite { particle: i, step });
        }
        let abs_step = self.noise.step_offset + step as i64;
        let mut rngs: Vec<ChaCha8Rng> = (0..ens.len()).map(|i| self.noise.generator(i, abs_step)).collect();
        let h = dt / substeps as f64;
        for j in 0..substeps {
            let t = ens.time + j as f64 * h;
            let (g, hfield) = self.symbol.eval(t);
            let m = self.grid.collocation_size();
            let h_phys = hfield.to_physical(m);
            let stats = ens.law_stats();
            let record = ledger.is_some();
            let results: Vec<Result<Advanced>> = ens
                .particles
                .par_iter()
                .zip(rngs.par_iter_mut())
                .enumerate()
                .map(|(i, (u, rng))| {
                    let dw = NoiseSpec::increments(rng, self.params.noise_modes, h);
                    let out = self.particle_update(u, &stats, &g, &h_phys, &dw, h, record);
                    if is_finite(&out.field) {
                        Ok(out)
                    } else {
                        Err(Error::NonFinite { particle: i, step })
                    }
                })
                .collect();
            let mut next = Vec::with_capacity(results.len());
            for (i, r) in results.into_iter().enumerate() {
                let a = r?;
                if let Some(l) = ledger.as_deref_mut() {
                    let u = &ens.particles[i];
                    let e = l[i].energy.get_or_insert_with(Default::default);
                    e.fu_int += h * a.fu;
                    e.gu_int += h * g.inner(u)?;
                    e.hs_int += self.params.epsilon.powi(2) * h * a.hs;
                }
                next.push(a.field);
            }
            ens.particles = next;
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn particle_update(
        &self,
        u: &SpectralField,
        stats: &LawStats,
        g: &SpectralField,
        h_phys: &[Physical; 2],
        dw: &[f64],
        dt: f64,
        record: bool,
    ) -> Advanced {
        let grid = self.grid;
        let m = self.profiles.m;
        let ps = physical_state(u, m);
        let root = stats.root();
        let drift = &self.params.drift;
        let diff = &self.params.diffusion;
        let eps = self.params.epsilon;
        let eta = self.params.h_weight();
        let dw_sum: f64 = dw.iter().sum();
        // Σₖ ΔWₖ σₖ(u) = Σₖ ΔWₖ βₖ tanh(√m) eₖ + Σ_shapes (Σₖ ΔWₖ γ̂ₖ) s(u), so the
        // per-point work does not grow with K.
        let law_part = root.tanh();
        let mut law = [0.0; 2];
        let mut by_shape = [0.0; 3];
        for (k, w) in dw.iter().enumerate() {
            let e = diff.direction(k);
            law[0] += w * diff.beta[k] * law_part * e[0];
            law[1] += w * diff.beta[k] * law_part * e[1];
            by_shape[shape_slot(diff.shape(k))] += w * diff.gamma_hat[k];
        }
        let shapes = [Shape::Tanh, Shape::Clip, Shape::Sin];
        let e = drift.unit_direction();
        let noisy = !record && eps != 0.0;
        let mut rx = Physical::zeros(m);
        let mut ry = Physical::zeros(m);
        let mut fu = 0.0;
        for p in 0..m * m {
            let ux = ps.u[0].values[p];
            let uy = ps.u[1].values[p];
            let ax = ux * ps.grad[0][0].values[p] + uy * ps.grad[0][1].values[p];
            let ay = ux * ps.grad[1][0].values[p] + uy * ps.grad[1][1].values[p];
            let s = drift.shape.apply([ux, uy]);
            let (phi, psi) = (self.profiles.phi1.values[p], self.profiles.psi1.values[p]);
            let f = [phi * s[0] + psi * root * e[0], phi * s[1] + psi * root * e[1]];
            fu += f[0] * ux + f[1] * uy;
            rx.values[p] = dt * (f[0] - ax);
            ry.values[p] = dt * (f[1] - ay);
            if noisy {
                let kap = self.profiles.kappa.values[p];
                let mut nx = law[0];
                let mut ny = law[1];
                for (c, shape) in by_shape.iter().zip(shapes) {
                    if *c != 0.0 {
                        let v = shape.apply([ux, uy]);
                        nx += c * v[0];
                        ny += c * v[1];
                    }
                }
                rx.values[p] += eps * (eta * h_phys[0].values[p] * dw_sum + kap * nx);
                ry.values[p] += eps * (eta * h_phys[1].values[p] * dw_sum + kap * ny);
            }
        }
        let cell = (DOMAIN_SIZE / m as f64).powi(2);
        let mut incr = project_from_physical(&grid, &rx, &ry);
        let mut hs = 0.0;
        if record {
            for (k, w) in dw.iter().enumerate() {
                let mut sx = Physical::zeros(m);
                let mut sy = Physical::zeros(m);
                for p in 0..m * m {
                    let kap = self.profiles.kappa.values[p];
                    let s = diff.eval(k, [ps.u[0].values[p], ps.u[1].values[p]], root);
                    sx.values[p] = eta * h_phys[0].values[p] + kap * s[0];
                    sy.values[p] = eta * h_phys[1].values[p] + kap * s[1];
                }
                let sigma = project_from_physical(&grid, &sx, &sy);
                hs += sigma.h_norm_sq();
                if eps != 0.0 {
                    incr.axpy(eps * w, &sigma).expect("shared grid");
                }
            }
        }
        let mut coeffs = u.coeffs().to_vec();
        let nu = self.params.nu;
        for (idx, (k1, k2)) in grid.modes() {
            let denom = 1.0 + nu * (k1 * k1 + k2 * k2) as f64 * dt;
            let gc = g.coeffs()[idx];
            let ic = incr.coeffs()[idx];
            for d in 0..2 {
                coeffs[idx][d] = (coeffs[idx][d] + ic[d] + gc[d] * dt) / denom;
            }
        }
        Advanced { field: SpectralField::from_coeffs_unchecked(grid, coeffs), fu: fu * cell, hs }
    }

    fn substeps_for(&self, ens: &Ensemble, dt: f64) -> Result<usize> {
        let dt_max = self.dt_max(ens);
        if dt <= dt_max {
            return Ok(1);
        }
        let n = (dt / dt_max).ceil();
        if !(n <= MAX_SUBSTEPS as f64) {
            return Err(Error::StepTooLarge { dt, dt_max });
        }
        Ok(n as usize)
    }

    /// Runs `steps` steps of size dt from `initial`, sampling per `plan`.
    /// Steps the guard rejects are split into equal substeps driven by the
    /// same keyed increments stream.
    pub fn simulate(&self, initial: Ensemble, steps: u64, dt: f64, plan: &SamplingPlan) -> Result<(Trajectory, Ensemble)> {
        self.check_ensemble(&initial)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        let t0 = initial.time;
        let every = plan.sample_every.max(1) as u64;
        let mut ens = initial;
        let mut acc: Vec<ParticleSample> = ens
            .particles
            .iter()
            .map(|u| ParticleSample {
                h2: u.h_norm_sq(),
                v2: u.v_norm_sq(),
                energy: plan.record_ledger.then(|| EnergyTerms { h2_initial: u.h_norm_sq(), ..Default::default() }),
                ..Default::default()
            })
            .collect();
        let snapshot_steps: Vec<(u64, f64)> = plan
            .snapshot_times
            .iter()
            .map(|&t| (((t - t0) / dt).round().max(0.0) as u64, t))
            .collect();
        let mut traj = Trajectory { nu: self.params.nu, dt, samples: Vec::new(), snapshots: Vec::new(), extra_substeps: 0 };
        let record = |traj: &mut Trajectory, ens: &Ensemble, acc: &[ParticleSample], n: u64| {
            let mut v2: Vec<f64> = acc.iter().map(|a| a.v2).collect();
            v2.sort_by(f64::total_cmp);
            traj.samples.push(Sample {
                t: t0 + n as f64 * dt,
                step: n,
                m2: ens.moment(2),
                m4: ens.moment(4),
                mean_v2: v2.iter().sum::<f64>() / v2.len() as f64,
                particles: acc.to_vec(),
            });
            for &(s, t) in &snapshot_steps {
                if s == n {
                    traj.snapshots.push((t, ens.particles.clone()));
                }
            }
        };
        record(&mut traj, &ens, &acc, 0);
        for n in 0..steps {
            let sub = self.substeps_for(&ens, dt)?;
            traj.extra_substeps += sub as u64 - 1;
            for a in acc.iter_mut() {
                a.v_int += dt * a.v2;
            }
            let ledger = if plan.record_ledger { Some(acc.as_mut_slice()) } else { None };
            self.advance(&mut ens, dt, n, sub, ledger)?;
            ens.time = t0 + (n + 1) as f64 * dt;
            for (a, u) in acc.iter_mut().zip(&ens.particles) {
                let (h2, v2) = (u.h_norm_sq(), u.v_norm_sq());
                a.hv_int += 0.5 * dt * (a.h2 * a.v2 + h2 * v2);
                a.h2 = h2;
                a.v2 = v2;
            }
            let done = n + 1;
            if done % every == 0 || done == steps || snapshot_steps.iter().any(|&(s, _)| s == done) {
                record(&mut traj, &ens, &acc, done);
            }
        }
        Ok((traj, ens))
    }
}

fn shape_slot(s: Shape) -> usize {
    match s {
        Shape::Tanh => 0,
        Shape::Clip => 1,
        Shape::Sin => 2,
    }
}

fn is_finite(u: &SpectralField) -> bool {
    u.coeffs().iter().all(|c| c[0].is_finite() && c[1].is_finite())
}

impl Trajectory {
    pub fn final_sample(&self) -> &Sample {
        self.samples.last().expect("trajectories hold the initial sample")
    }

    /// Sample closest to time t.
    pub fn at(&self, t: f64) -> &Sample {
        self.samples
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .expect("trajectories hold the initial sample")
    }
}

/// Per-sample, per-particle weight 𝒢 = exp(−(27𝔠⁴/(2ν³))∫‖u‖²_H‖u‖²_V).
pub fn exp_weight_g(traj: &Trajectory, c_lady: f64, nu: f64) -> Vec<Vec<f64>> {
    let c = 27.0 * c_lady.powi(4) / (2.0 * nu.powi(3));
    traj.samples
        .iter()
        .map(|s| s.particles.iter().map(|p| (-c * p.hv_int).exp()).collect())
        .collect()
}

/// Energy-equality defect of one particle at a sample:
/// ‖u‖² + 2ν∫‖u‖²_V − 2∫(f,u) − 2∫(g,u) − ε²∫‖σ‖²_HS − ‖u_τ‖².
pub fn particle_residual(p: &ParticleSample, nu: f64) -> Result<f64> {
    let e = p.energy.ok_or(Error::MissingLedger)?;
    Ok(p.h2 + 2.0 * nu * p.v_int - 2.0 * e.fu_int - 2.0 * e.gu_int - e.hs_int - e.h2_initial)
}

/// Mean and standard error of a sample of independent values.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualPoint {
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
}

/// Seed-averaged energy residual: each trajectory contributes its particle
/// mean, and the spread across trajectories gives the standard error.
pub fn energy_residual(trajs: &[Trajectory]) -> Result<Vec<ResidualPoint>> {
    let first = trajs.first().ok_or_else(|| Error::InvalidParameter("no trajectories".into()))?;
    let mut out = Vec::with_capacity(first.samples.len());
    for (k, s) in first.samples.iter().enumerate() {
        let mut per_seed = Vec::with_capacity(trajs.len());
        for tr in trajs {
            let sample = tr
                .samples
                .get(k)
                .ok_or_else(|| Error::InvalidParameter("trajectories sampled differently".into()))?;
            let r = sample
                .particles
                .iter()
                .map(|p| particle_residual(p, tr.nu))
                .sum::<Result<f64>>()?;
            per_seed.push(r / sample.particles.len() as f64);
        }
        let (mean, stderr) = mean_stderr(&per_seed);
        out.push(ResidualPoint { t: s.t, mean, stderr });
    }
    Ok(out)
}

/// Writes t,m2,m4,mean_v2,G,residual (residual empty without a ledger).
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, c_lady: f64, out: &mut W) -> Result<()> {
    writeln!(out, "t,m2,m4,mean_v2,G,residual")?;
    let weights = exp_weight_g(traj, c_lady, traj.nu);
    for (s, w) in traj.samples.iter().zip(&weights) {
        let g = w.iter().sum::<f64>() / w.len() as f64;
        let residual = s
            .particles
            .iter()
            .map(|p| particle_residual(p, traj.nu))
            .sum::<Result<f64>>()
            .map(|r| format!("{:e}", r / s.particles.len() as f64))
            .unwrap_or_default();
        writeln!(out, "{:e},{:e},{:e},{:e},{:e},{residual}", s.t, s.m2, s.m4, s.mean_v2, g)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::{APSignal, APTerm};
    use crate::model::{DiffusionSpec, DriftSpec, Profile};

    fn grid() -> GridSpec {
        GridSpec::new(4, true).unwrap()
    }

    fn noisy_params() -> ModelParams {
        ModelParams {
            nu: 2.0,
            epsilon: 0.5,
            kappa: Profile::constant(0.5).with_mode([1, 1], 0.1, 0.0),
            lambda: 1.0,
            noise_modes: 3,
            drift: DriftSpec {
                phi1: Profile::constant(0.02),
                psi1: Profile::constant(0.005),
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

    fn forcing() -> Symbol {
        let g = grid();
        let a = SpectralField::shear_wave(g, (1, 1), 0.3, 0.0).unwrap();
        let gs = APSignal::new(g, vec![APTerm { frequency: 1.0, phase: 0.3, amplitude: a }]).unwrap();
        let h = Symbol::separated_example(g).unwrap().h;
        Symbol::new(gs, h).unwrap()
    }

    fn start(m: usize, seed: u64) -> Ensemble {
        let spec = RandomFieldSpec { h_norm: Some(1.0), max_wavenumber: Some(3), ..Default::default() };
        Ensemble::random(grid(), m, &spec, seed, 0.0).unwrap()
    }

    #[test]
    fn single_mode_implicit_decay() {
        let p = ModelParams::stokes(1.0, 1);
        let sym = Symbol::zero(grid());
        let int = Integrator::new(&p, &sym, NoiseSpec::new(0, 1), 0.3).unwrap();
        let u = SpectralField::shear_wave(grid(), (1, 0), 1.0, 0.2).unwrap();
        let mut ens = Ensemble::new(vec![u.clone()], 0.0).unwrap();
        int.step(&mut ens, 0.1, 0).unwrap();
        let expected = u.scaled(1.0 / 1.1);
        for (a, b) in ens.particles()[0].coeffs().iter().zip(expected.coeffs()) {
            assert!((a[0] - b[0]).norm() < 1e-14 && (a[1] - b[1]).norm() < 1e-14);
        }
        assert!((ens.time() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_data_stays_zero() {
        let p = ModelParams::stokes(1.0, 2);
        let sym = Symbol::zero(grid());
        let int = Integrator::new(&p, &sym, NoiseSpec::new(3, 2), 0.3).unwrap();
        let ens = Ensemble::new(vec![SpectralField::zeros(grid()); 3], 0.0).unwrap();
        let (traj, end) = int.simulate(ens, 20, 0.05, &SamplingPlan::every(5)).unwrap();
        assert!(end.particles().iter().all(SpectralField::is_zero));
        assert!(traj.samples.iter().all(|s| s.m2 == 0.0));
        assert_eq!(traj.samples.len(), 5);
    }

    #[test]
    fn stokes_decay_tracks_exponential() {
        let p = ModelParams::stokes(1.0, 1);
        let sym = Symbol::zero(grid());
        let int = Integrator::new(&p, &sym, NoiseSpec::new(0, 1), 0.3).unwrap();
        let u = SpectralField::shear_wave(grid(), (1, 1), 1.0, 0.0).unwrap();
        let h0 = u.h_norm_sq();
        for &dt in &[0.01, 0.005] {
            let (traj, _) = int.simulate(Ensemble::new(vec![u.clone()], 0.0).unwrap(), (1.0 / dt) as u64, dt, &SamplingPlan::every(10)).unwrap();
            let s = traj.final_sample();
            let n = (1.0 / dt).round();
            let recursion = h0 * (1.0 + 2.0 * dt).powf(-2.0 * n);
            assert!((s.m2 - recursion).abs() < 1e-12 * h0);
            assert!((s.m2 - h0 * (-4.0f64).exp()).abs() < 30.0 * dt * h0 * (-4.0f64).exp());
        }
    }

    #[test]
    fn replay_is_bit_identical_and_divergence_free() {
        let p = noisy_params();
        let sym = forcing();
        let int = Integrator::new(&p, &sym, NoiseSpec::new(11, 3), 0.3).unwrap();
        let (a, ea) = int.simulate(start(4, 1), 30, 0.01, &SamplingPlan::every(10)).unwrap();
        let (b, eb) = int.simulate(start(4, 1), 30, 0.01, &SamplingPlan::every(10)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ea, eb);
        for u in ea.particles() {
            assert!(u.invariant_defect() < 1e-12);
        }
    }

    #[test]
    fn ledger_path_agrees_with_fast_path() {
        let p = noisy_params();
        let sym = forcing();
        let int = Integrator::new(&p, &sym, NoiseSpec::new(5, 3), 0.3).unwrap();
        let (_, a) = int.simulate(start(3, 2), 10, 0.01, &SamplingPlan::every(10)).unwrap();
        let (_, b) = int.simulate(start(3, 2), 10, 0.01, &SamplingPlan::every(10).with_ledger()).unwrap();
        for (x, y) in a.particles().iter().zip(b.particles()) {
            assert!(x.dist_sq(y).unwrap() < 1e-24);
        }
    }

    #[test]
    fn permuting_particles_and_streams_permutes_outputs() {
        let p = noisy_params();
        let sym = forcing();
        let ens = start(4, 3);
        let perm = [2usize, 0, 3, 1];
        let permuted = Ensemble::new(perm.iter().map(|&i| ens.particles()[i].clone()).collect(), 0.0).unwrap();
        let base = Integrator::new(&p, &sym, NoiseSpec::new(9, 3), 0.3).unwrap();
        let mut spec = NoiseSpec::new(9, 3);
        spec.streams = Some(perm.iter().map(|&i| i as u64).collect());
        let swapped = Integrator::new(&p, &sym, spec, 0.3).unwrap();
        let (_, a) = base.simulate(ens, 15, 0.01, &SamplingPlan::every(15)).unwrap();
        let (_, b) = swapped.simulate(permuted, 15, 0.01, &SamplingPlan::every(15)).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            assert_eq!(a.particles()[i], b.particles()[j]);
        }
    }

    #[test]
    fn deterministic_energy_decreases_without_forcing() {
        let mut p = noisy_params();
        p.epsilon = 0.0;
        let sym = Symbol::zero(grid());
        let int = Integrator::new(&p, &sym, NoiseSpec::new(0, 3), 0.3).unwrap();
        let (traj, _) = int.simulate(start(2, 4), 100, 0.01, &SamplingPlan::every(1)).unwrap();
        // γ = 0.2 < νλ/2 − k₀ for these coefficients.
        let gamma = 0.2;
        for w in traj.samples.windows(2) {
            assert!(w[1].m2 * (gamma * w[1].t).exp() <= w[0].m2 * (gamma * w[0].t).exp());
        }
    }

    #[test]
    fn guard_rejects_large_steps_and_simulate_substeps() {
        let p = ModelParams::stokes(1.0, 1);
        let sym = Symbol::zero(grid());
        let int = Integrator::new(&p, &sym, NoiseSpec::new(0, 1), 1.0).unwrap();
        let u = SpectralField::shear_wave(grid(), (2, 1), 10.0, 0.0).unwrap();
        let ens = Ensemble::new(vec![u], 0.0).unwrap();
        let dt_max = int.dt_max(&ens);
        assert!(matches!(int.step(&mut ens.clone(), 2.0 * dt_max, 0), Err(Error::StepTooLarge { .. })));
        let (traj, _) = int.simulate(ens, 2, 2.0 * dt_max, &SamplingPlan::every(1)).unwrap();
        assert!(traj.extra_substeps >= 1);
    }

    #[test]
    fn non_finite_data_is_reported() {
        let p = ModelParams::stokes(1.0, 1);
        let sym = Symbol::zero(grid());
        let int = Integrator::new(&p, &sym, NoiseSpec::new(0, 1), 0.0).unwrap();
        let mut u = SpectralField::zeros(grid());
        let idx = grid().index(1, 0).unwrap();
        let mirror = grid().mirror(idx);
        u.coeffs_mut()[idx][1] = crate::spectral::Complex64::new(f64::NAN, 0.0);
        u.coeffs_mut()[mirror][1] = crate::spectral::Complex64::new(f64::NAN, 0.0);
        let ens = Ensemble::new(vec![SpectralField::zeros(grid()), u], 0.0).unwrap();
        match int.simulate(ens, 1, 0.1, &SamplingPlan::every(1)) {
            Err(Error::NonFinite { particle: 1, step: 0 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn increments_are_standard_normal() {
        let spec = NoiseSpec::new(42, 10);
        let mut draws = Vec::new();
        for step in 0..1000 {
            let mut rng = spec.generator(step % 7, step as i64 - 500);
            draws.extend(NoiseSpec::increments(&mut rng, 10, 1.0));
        }
        let (mean, se) = mean_stderr(&draws);
        assert!(mean.abs() < 4.0 * se);
        let var = draws.iter().map(|x| x * x).sum::<f64>() / draws.len() as f64;
        assert!((var - 1.0).abs() < 4.0 * (2.0 / draws.len() as f64).sqrt());
        let mut a = spec.generator(3, -2);
        let mut b = spec.generator(3, -2);
        assert_eq!(NoiseSpec::increments(&mut a, 4, 0.1), NoiseSpec::increments(&mut b, 4, 0.1));
    }

    #[test]
    fn exp_weight_closed_form() {
        let traj = Trajectory {
            nu: 2.0,
            dt: 1.0,
            samples: vec![Sample {
                t: 1.0,
                step: 1,
                m2: 0.0,
                m4: 0.0,
                mean_v2: 0.0,
                particles: vec![ParticleSample { h2: 0.5, v2: 3.0, v_int: 3.0, hv_int: 1.5, energy: None }],
            }],
            snapshots: vec![],
            extra_substeps: 0,
        };
        let g = exp_weight_g(&traj, 0.7, 2.0);
        let expected = (-27.0 * 0.7f64.powi(4) * 1.5 / 16.0).exp();
        assert!((g[0][0] - expected).abs() < 1e-15);
        assert!(matches!(energy_residual(&[traj]), Err(Error::MissingLedger)));
    }

    #[test]
    fn weight_is_nonincreasing_and_residual_vanishes_at_rest() {
        let p = noisy_params();
        let sym = forcing();
        let int = Integrator::new(&p, &sym, NoiseSpec::new(1, 3), 0.3).unwrap();
        let (traj, _) = int.simulate(start(2, 5), 20, 0.01, &SamplingPlan::every(2)).unwrap();
        let g = exp_weight_g(&traj, 0.3, p.nu);
        for w in g.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                assert!(b <= a && *b > 0.0);
            }
        }
        let rest = Ensemble::new(vec![SpectralField::zeros(grid())], 0.0).unwrap();
        let stokes = ModelParams::stokes(1.0, 3);
        let zero = Symbol::zero(grid());
        let int = Integrator::new(&stokes, &zero, NoiseSpec::new(1, 3), 0.3).unwrap();
        let (traj, _) = int.simulate(rest, 5, 0.1, &SamplingPlan::every(1).with_ledger()).unwrap();
        assert!(energy_residual(&[traj]).unwrap().iter().all(|r| r.mean == 0.0));
    }
}
