//! Almost periodic forcing built from finite trigonometric sums in time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{GridSpec, SpectralField};

/// One term a(x)·sin(ωt + θ) of an almost periodic signal.
#[derive(Clone, Debug, PartialEq)]
pub struct APTerm {
    pub frequency: f64,
    pub phase: f64,
    pub amplitude: SpectralField,
}

/// Finite trigonometric polynomial t ↦ Σ a·sin(ωt + θ) with values in H.
#[derive(Clone, Debug, PartialEq)]
pub struct APSignal {
    grid: GridSpec,
    terms: Vec<APTerm>,
}

impl APSignal {
    pub fn new(grid: GridSpec, terms: Vec<APTerm>) -> Result<Self> {
        for term in &terms {
            if term.amplitude.grid() != &grid {
                return Err(Error::GridMismatch);
            }
            if !term.frequency.is_finite() || !term.phase.is_finite() {
                return Err(Error::InvalidParameter("signal frequencies and phases must be finite".into()));
            }
        }
        Ok(Self { grid, terms })
    }

    pub fn zero(grid: GridSpec) -> Self {
        Self { grid, terms: Vec::new() }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn terms(&self) -> &[APTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.amplitude.is_zero())
    }

    pub fn eval(&self, t: f64) -> SpectralField {
        let mut out = SpectralField::zeros(self.grid);
        for term in &self.terms {
            let c = (term.frequency * t + term.phase).sin();
            out.axpy(c, &term.amplitude).expect("terms share the signal grid");
        }
        out
    }

    /// t ↦ signal(t + s), realized as θ ↦ θ + ωs.
    pub fn translate(&self, s: f64) -> Self {
        let mut out = self.clone();
        for term in &mut out.terms {
            term.phase += term.frequency * s;
        }
        out
    }

    /// Triangle-inequality bound Σ‖a‖_H on sup_t ‖signal(t)‖_H.
    pub fn sup_norm(&self) -> f64 {
        self.terms.iter().map(|t| t.amplitude.h_norm_sq().sqrt()).sum()
    }

    /// Bound Σ‖∇a‖_H on sup_t ‖∇signal(t)‖_H.
    pub fn grad_sup_norm(&self) -> f64 {
        self.terms.iter().map(|t| t.amplitude.v_norm_sq().sqrt()).sum()
    }

    /// Adds `other`'s terms to this signal.
    pub fn extended(&self, other: &APSignal) -> Result<Self> {
        if other.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(Self { grid: self.grid, terms })
    }

    fn shift_phases(&mut self, freqs: &[f64], offsets: &[f64]) {
        for term in &mut self.terms {
            let j = freqs
                .iter()
                .position(|&f| f == term.frequency)
                .expect("frequency list covers every term");
            term.phase += offsets[j];
        }
    }
}

/// Bound ĉ on ∫ₜ^{t+1} ‖∇h(s)‖²_H ds, namely (Σ‖∇a‖_H)².
pub fn grad_window_bound(h: &APSignal) -> f64 {
    h.grad_sup_norm().powi(2)
}

pub fn sup_norm(signal: &APSignal) -> f64 {
    signal.sup_norm()
}

/// The forcing pair (g, h): g drives the deterministic forcing, h the additive
/// part of every noise mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Symbol {
    pub g: APSignal,
    pub h: APSignal,
}

impl Symbol {
    pub fn new(g: APSignal, h: APSignal) -> Result<Self> {
        if g.grid() != h.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { g, h })
    }

    pub fn zero(grid: GridSpec) -> Self {
        Self { g: APSignal::zero(grid), h: APSignal::zero(grid) }
    }

    pub fn grid(&self) -> &GridSpec {
        self.g.grid()
    }

    pub fn eval(&self, t: f64) -> (SpectralField, SpectralField) {
        (self.g.eval(t), self.h.eval(t))
    }

    pub fn translate(&self, s: f64) -> Self {
        Self { g: self.g.translate(s), h: self.h.translate(s) }
    }

    /// Distinct frequencies of g and h together, in increasing order.
    pub fn frequencies(&self) -> Vec<f64> {
        let mut freqs: Vec<f64> = self
            .g
            .terms()
            .iter()
            .chain(self.h.terms())
            .map(|t| t.frequency)
            .collect();
        freqs.sort_by(f64::total_cmp);
        freqs.dedup();
        freqs
    }

    /// Hull element obtained by shifting the phase of every term with
    /// frequency `frequencies()[j]` by `offsets[j]`.
    pub fn hull_sample(&self, offsets: &[f64]) -> Result<Self> {
        let freqs = self.frequencies();
        if offsets.len() != freqs.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} phase offsets, got {}",
                freqs.len(),
                offsets.len()
            )));
        }
        let mut out = self.clone();
        out.g.shift_phases(&freqs, offsets);
        out.h.shift_phases(&freqs, offsets);
        Ok(out)
    }

    /// The time-periodic example h(t,x) = (sin t + sin √2 t)·(sin x₂, 0) with
    /// g = 0; its profile has pointwise gradient bound 1.
    pub fn separated_example(grid: GridSpec) -> Result<Self> {
        // (sin x₂, 0) = −cos(x₂ + π/2)·(−1, 0) along k = (0, 1).
        let profile = SpectralField::shear_wave(grid, (0, 1), 1.0, -std::f64::consts::FRAC_PI_2)?;
        let terms = vec![
            APTerm { frequency: 1.0, phase: 0.0, amplitude: profile.clone() },
            APTerm { frequency: std::f64::consts::SQRT_2, phase: 0.0, amplitude: profile },
        ];
        Ok(Self { g: APSignal::zero(grid), h: APSignal::new(grid, terms)? })
    }
}

/// Low-discrepancy phase vectors in [0, 2π)^dims from the additive recurrence
/// with generalized golden-ratio increments.
pub fn hull_phases(count: usize, dims: usize) -> Vec<Vec<f64>> {
    // Root of x^(d+1) = x + 1, whose inverse powers give well-spread increments.
    let mut phi = 2.0f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (dims as f64 + 1.0));
    }
    let alphas: Vec<f64> = (1..=dims).map(|i| phi.powi(-(i as i32)).fract()).collect();
    (0..count)
        .map(|n| {
            alphas
                .iter()
                .map(|a| std::f64::consts::TAU * (0.5 + a * n as f64).fract())
                .collect()
        })
        .collect()
}

/// Serializable description of a divergence-free amplitude profile as a sum
/// of shear waves a·cos(k·x + θ)·k⊥/|k|.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub k: [i32; 2],
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

pub fn build_profile(grid: GridSpec, waves: &[Wave]) -> Result<SpectralField> {
    let mut out = SpectralField::zeros(grid);
    for w in waves {
        out.add_shear_wave((w.k[0], w.k[1]), w.amplitude, w.phase)?;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
    pub waves: Vec<Wave>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    #[serde(default)]
    pub terms: Vec<TermSpec>,
}

impl SignalSpec {
    pub fn build(&self, grid: GridSpec) -> Result<APSignal> {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                Ok(APTerm { frequency: t.frequency, phase: t.phase, amplitude: build_profile(grid, &t.waves)? })
            })
            .collect::<Result<Vec<_>>>()?;
        APSignal::new(grid, terms)
    }
}
