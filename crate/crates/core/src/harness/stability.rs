use serde::{Deserialize, Serialize};

use super::{
    across_seeds, derive_seed, field_distance, per_seed, tags, Assertion, ExperimentKind, ExperimentReport,
    InitialLaw, Ladder, LadderPoint, MonteCarlo, Setup,
};
use crate::error::Result;
use crate::forcing::{APSignal, APTerm, Symbol};
use crate::integrator::{mean_stderr, Ensemble, Integrator, NoiseSpec, SamplingPlan};
use crate::metrics::dbl_metric;
use crate::model::ModelParams;
use crate::spectral::{GridSpec, RandomFieldSpec, SpectralField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StabilityPlan {
    pub mc: MonteCarlo,
    pub init: InitialLaw,
    /// Number of offsets; each halves the previous one.
    pub levels: usize,
    /// H-norm of the initial perturbation of every particle at level 0.
    pub base_offset: f64,
    /// Amplitude of the constant perturbation of g per unit initial offset.
    pub symbol_offset: f64,
    pub horizon: f64,
    /// Sample times of the deterministic pair.
    pub gronwall_samples: usize,
}

impl Default for StabilityPlan {
    fn default() -> Self {
        Self {
            mc: MonteCarlo { seeds: 16, particles: 16, dt: 0.01, seed: 1 },
            init: InitialLaw::default(),
            levels: 4,
            base_offset: 0.5,
            symbol_offset: 0.5,
            horizon: 1.0,
            gronwall_samples: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TranslationPlan {
    pub mc: MonteCarlo,
    pub init: InitialLaw,
    pub shifts: Vec<f64>,
    pub horizon: f64,
    /// Snapshot times (elapsed) of the pathwise comparison.
    pub probes: usize,
}

impl Default for TranslationPlan {
    fn default() -> Self {
        Self {
            mc: MonteCarlo { seeds: 16, particles: 8, dt: 0.01, seed: 1 },
            init: InitialLaw::default(),
            shifts: vec![0.5, 1.0, std::f64::consts::PI],
            horizon: 1.0,
            probes: 10,
        }
    }
}

/// Symbol with g increased by the constant field `amplitude`·(shear wave (2, 1)).
fn perturbed_symbol(symbol: &Symbol, amplitude: f64) -> Result<Symbol> {
    let grid = *symbol.grid();
    let field = SpectralField::shear_wave(grid, (2, 1), amplitude, 0.0)?;
    let term = APTerm { frequency: 0.0, phase: std::f64::consts::FRAC_PI_2, amplitude: field };
    Symbol::new(symbol.g.extended(&APSignal::new(grid, vec![term])?)?, symbol.h.clone())
}

fn shifted(ens: &Ensemble, directions: &[SpectralField], offset: f64) -> Result<Ensemble> {
    let mut out = Vec::with_capacity(ens.len());
    for (u, v) in ens.particles().iter().zip(directions) {
        let mut w = u.clone();
        w.axpy(offset, v)?;
        out.push(w);
    }
    Ensemble::new(out, ens.time())
}

fn law_distance(a: &Ensemble, b: &Ensemble) -> Result<f64> {
    dbl_metric(&a.law(), &b.law())
}

/// Max over sample times of ‖Δu(t)‖² divided by its Gronwall bound, for two
/// deterministic single-particle solutions.
fn gronwall_ratio(setup: &Setup, plan: &StabilityPlan) -> Result<f64> {
    let params = ModelParams { epsilon: 0.0, ..setup.params.clone() };
    let grid = setup.grid();
    let int = Integrator::new(&params, &setup.symbol, NoiseSpec::new(plan.mc.seed, params.noise_modes), setup.c_lady())?;
    let base = plan.init.sample(grid, 1, derive_seed(plan.mc.seed, tags::INIT, 0), 0.0)?;
    let dir = direction_fields(plan, grid, 1, 0)?;
    let other = shifted(&base, &dir, plan.base_offset)?;
    let steps = plan.mc.steps(plan.horizon);
    let times: Vec<f64> = (1..=plan.gronwall_samples.max(1))
        .map(|j| (j as f64 * steps as f64 / plan.gronwall_samples.max(1) as f64).round() * plan.mc.dt)
        .collect();
    let sampling = SamplingPlan { sample_every: steps as usize, snapshot_times: times.clone(), record_ledger: false };
    let (ta, _) = int.simulate(base.clone(), steps, plan.mc.dt, &sampling)?;
    let (tb, _) = int.simulate(other.clone(), steps, plan.mc.dt, &sampling)?;
    let d0 = field_distance(&base.particles()[0], &other.particles()[0]).powi(2);
    let l = &setup.ledger;
    let mut worst = 0.0f64;
    for ((t, a), (_, b)) in ta.snapshots.iter().zip(&tb.snapshots) {
        let va = ta.at(*t).particles[0].v_int;
        let vb = tb.at(*t).particles[0].v_int;
        let bound = d0 * l.gronwall_factor(*t, va.max(vb));
        worst = worst.max(field_distance(&a[0], &b[0]).powi(2) / bound);
    }
    Ok(worst)
}

/// Unit-H-norm perturbation directions of seed `s`.
fn direction_fields(plan: &StabilityPlan, grid: GridSpec, particles: usize, s: usize) -> Result<Vec<SpectralField>> {
    let spec = RandomFieldSpec { h_norm: Some(1.0), ..Default::default() };
    Ok(Ensemble::random(grid, particles, &spec, derive_seed(plan.mc.seed, tags::PERTURB, s as u64), 0.0)?.into_particles())
}

/// Continuous dependence on the initial law and the symbol: d_P between the
/// base and perturbed laws along a halving ladder of offsets, against the d_P
/// floor between independent same-law clouds, plus the deterministic Gronwall
/// bound for a pair of solutions.
pub fn stability_experiment(setup: &Setup, plan: &StabilityPlan) -> Result<ExperimentReport> {
    plan.mc.validate()?;
    let skipped = setup.dissipative_gate()?;
    let grid = setup.grid();
    let steps = plan.mc.steps(plan.horizon);
    let offsets: Vec<f64> = (0..plan.levels).map(|j| plan.base_offset * 0.5f64.powi(j as i32)).collect();
    let symbols: Vec<Symbol> = offsets
        .iter()
        .map(|&o| perturbed_symbol(&setup.symbol, o * plan.symbol_offset))
        .collect::<Result<_>>()?;
    // Per seed: d_P at each level followed by the control distance.
    let rows = per_seed(plan.mc.seeds, |s| {
        let si = s as u64;
        let base = plan.init.sample(grid, plan.mc.particles, derive_seed(plan.mc.seed, tags::INIT, si), 0.0)?;
        let dirs = direction_fields(plan, grid, plan.mc.particles, s)?;
        let noise = NoiseSpec::new(derive_seed(plan.mc.seed, tags::NOISE, si), setup.params.noise_modes);
        let run = |init: Ensemble, symbol: &Symbol, noise: NoiseSpec| -> Result<Ensemble> {
            let int = Integrator::new(&setup.params, symbol, noise, setup.c_lady())?;
            Ok(int.simulate(init, steps, plan.mc.dt, &SamplingPlan::every(steps as usize))?.1)
        };
        let reference = run(base.clone(), &setup.symbol, noise.clone())?;
        let mut row = Vec::with_capacity(offsets.len() + 1);
        for (o, sym) in offsets.iter().zip(&symbols) {
            let end = run(shifted(&base, &dirs, *o)?, sym, noise.clone())?;
            row.push(law_distance(&reference, &end)?);
        }
        let control_init =
            plan.init.sample(grid, plan.mc.particles, derive_seed(plan.mc.seed, tags::CONTROL_INIT, si), 0.0)?;
        let control_noise = NoiseSpec::new(derive_seed(plan.mc.seed, tags::CONTROL_NOISE, si), setup.params.noise_modes);
        let control = run(control_init, &setup.symbol, control_noise)?;
        row.push(law_distance(&reference, &control)?);
        Ok(row)
    })?;
    let stats = across_seeds(&rows);
    let (control_mean, control_se) = stats[offsets.len()];

    let mut rep = ExperimentReport::new(ExperimentKind::Stability, &setup.ledger);
    for j in 1..offsets.len() {
        let diffs: Vec<f64> = rows.iter().map(|r| r[j] - r[j - 1]).collect();
        let (m, se) = mean_stderr(&diffs);
        rep.assertions.push(
            Assertion::within(&format!("offset_ladder_step_{j}"), "0", Some(plan.horizon), m, se, 0.0, 2.0)
                .with_detail(format!("paired change of d_P from offset {} to {}", offsets[j - 1], offsets[j])),
        );
    }
    let (last_mean, last_se) = stats[offsets.len() - 1];
    rep.assertions.push(
        Assertion::exact("final_offset_below_floor", "control floor", Some(plan.horizon), last_mean + 2.0 * last_se, control_mean)
            .with_detail(format!("control floor {control_mean} ± {control_se}")),
    );
    let ratio = gronwall_ratio(setup, plan)?;
    rep.assertions.push(
        Assertion::exact("deterministic_pair_gronwall", "k8 + k9, k10", Some(plan.horizon), ratio, 1.0)
            .with_detail("max of squared gap over its bound"),
    );
    let mut points: Vec<LadderPoint> = offsets
        .iter()
        .enumerate()
        .map(|(j, &offset)| LadderPoint { level: j, offset, mean: stats[j].0, stderr: stats[j].1 })
        .collect();
    points.push(LadderPoint { level: offsets.len(), offset: 0.0, mean: control_mean, stderr: control_se });
    rep.ladders.push(Ladder { name: "offset_ladder".into(), points });
    rep.notes.push("last ladder level is the independent same-law control".into());
    if skipped {
        rep.skip_assertions();
    }
    Ok(rep)
}

/// Translation identity U_{T(s)σ}(t, τ) = U_σ(t + s, τ + s): pathwise for
/// ε = 0, and in law for ε > 0.
pub fn translation_identity_check(setup: &Setup, plan: &TranslationPlan) -> Result<ExperimentReport> {
    plan.mc.validate()?;
    let grid = setup.grid();
    let steps = plan.mc.steps(plan.horizon);
    let probes: Vec<f64> = (1..=plan.probes.max(1))
        .map(|j| (j as f64 * steps as f64 / plan.probes.max(1) as f64).round() * plan.mc.dt)
        .collect();
    let mut rep = ExperimentReport::new(ExperimentKind::Translation, &setup.ledger);

    let det = ModelParams { epsilon: 0.0, ..setup.params.clone() };
    let init = plan.init.sample(grid, plan.mc.particles, derive_seed(plan.mc.seed, tags::INIT, 0), 0.0)?;
    let noise = NoiseSpec::new(plan.mc.seed, det.noise_modes);
    for &s in &plan.shifts {
        let translated = setup.symbol.translate(s);
        let a = Integrator::new(&det, &translated, noise.clone(), setup.c_lady())?;
        let b = Integrator::new(&det, &setup.symbol, noise.clone(), setup.c_lady())?;
        let sampling = |t0: f64| SamplingPlan {
            sample_every: steps as usize,
            snapshot_times: probes.iter().map(|p| t0 + p).collect(),
            record_ledger: false,
        };
        let (ta, _) = a.simulate(init.clone(), steps, plan.mc.dt, &sampling(0.0))?;
        let late = Ensemble::new(init.particles().to_vec(), s)?;
        let (tb, _) = b.simulate(late, steps, plan.mc.dt, &sampling(s))?;
        let mut gap = 0.0f64;
        for ((_, xa), (_, xb)) in ta.snapshots.iter().zip(&tb.snapshots) {
            for (u, v) in xa.iter().zip(xb) {
                gap = gap.max(field_distance(u, v));
            }
        }
        rep.assertions.push(Assertion::exact(&format!("pathwise_gap_shift_{s}"), "1e-8", Some(plan.horizon), gap, 1e-8));
    }

    if setup.params.epsilon > 0.0 {
        for &s in &plan.shifts {
            let translated = setup.symbol.translate(s);
            // Per seed: coupled gap, independent gap, control distance.
            let rows = per_seed(plan.mc.seeds, |k| {
                let ki = k as u64;
                let init = plan.init.sample(grid, plan.mc.particles, derive_seed(plan.mc.seed, tags::INIT, ki), 0.0)?;
                let late = Ensemble::new(init.particles().to_vec(), s)?;
                let noise = NoiseSpec::new(derive_seed(plan.mc.seed, tags::NOISE, ki), setup.params.noise_modes);
                let other = NoiseSpec::new(derive_seed(plan.mc.seed, tags::FRESH, ki), setup.params.noise_modes);
                let control_noise =
                    NoiseSpec::new(derive_seed(plan.mc.seed, tags::CONTROL_NOISE, ki), setup.params.noise_modes);
                let run = |init: Ensemble, symbol: &Symbol, noise: NoiseSpec| -> Result<Ensemble> {
                    let int = Integrator::new(&setup.params, symbol, noise, setup.c_lady())?;
                    Ok(int.simulate(init, steps, plan.mc.dt, &SamplingPlan::every(steps as usize))?.1)
                };
                let a = run(init.clone(), &translated, noise.clone())?;
                let coupled = run(late.clone(), &setup.symbol, noise)?;
                let independent = run(late, &setup.symbol, other)?;
                let control = run(init, &translated, control_noise)?;
                Ok(vec![law_distance(&a, &coupled)?, law_distance(&a, &independent)?, law_distance(&a, &control)?])
            })?;
            let st = across_seeds(&rows);
            let (coupled, coupled_se) = st[0];
            let (control, control_se) = st[2];
            rep.assertions.push(
                Assertion::exact(&format!("coupled_gap_shift_{s}"), "2 control stderr", Some(plan.horizon), coupled, 2.0 * control_se)
                    .with_detail(format!("coupled stderr {coupled_se}, control {control} ± {control_se}")),
            );
            let diffs: Vec<f64> = rows.iter().map(|r| r[1] - r[2]).collect();
            let (m, se) = mean_stderr(&diffs);
            rep.assertions.push(
                Assertion { pass: m.abs() <= 3.0 * se, ..Assertion::monte_carlo(&format!("law_gap_shift_{s}"), "0", Some(plan.horizon), m.abs(), se, 0.0) }
                    .with_detail(format!("independent-noise gap minus control, control {control} ± {control_se}")),
            );
        }
    }
    Ok(rep)
}
