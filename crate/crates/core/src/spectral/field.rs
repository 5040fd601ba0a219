use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;

use super::operators::{leray_project, RawField};
use super::transform::{Physical, Transform};
use super::{domain_area, GridSpec};
use crate::error::{Error, Result};

/// Real, divergence-free, zero-mean vector field stored as Fourier
/// coefficients û(k) ∈ ℂ² on the grid's square truncation.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    coeffs: Vec<[Complex64; 2]>,
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

impl SpectralField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, coeffs: vec![[ZERO; 2]; grid.len()] }
    }

    /// Wraps coefficients that are already real and divergence-free.
    pub(crate) fn from_coeffs_unchecked(grid: GridSpec, coeffs: Vec<[Complex64; 2]>) -> Self {
        debug_assert_eq!(coeffs.len(), grid.len());
        Self { grid, coeffs }
    }

    /// Real shear wave a·cos(k·x + θ)·k⊥/|k|, which is divergence-free.
    pub fn shear_wave(grid: GridSpec, k: (i32, i32), amplitude: f64, phase: f64) -> Result<Self> {
        let mut out = Self::zeros(grid);
        out.add_shear_wave(k, amplitude, phase)?;
        Ok(out)
    }

    pub fn add_shear_wave(&mut self, k: (i32, i32), amplitude: f64, phase: f64) -> Result<()> {
        let idx = self.grid.index(k.0, k.1).ok_or(Error::OutsideTruncation(k.0, k.1))?;
        if idx == self.grid.zero_index() {
            return Err(Error::InvalidParameter("shear wave needs a nonzero wavevector".into()));
        }
        let norm = ((k.0 * k.0 + k.1 * k.1) as f64).sqrt();
        let perp = [-(k.1 as f64) / norm, k.0 as f64 / norm];
        let c = Complex64::from_polar(0.5 * amplitude, phase);
        let mirror = self.grid.mirror(idx);
        for d in 0..2 {
            self.coeffs[idx][d] += c * perp[d];
            self.coeffs[mirror][d] += c.conj() * perp[d];
        }
        Ok(())
    }

    /// Random field with Gaussian coefficients projected onto divergence-free modes.
    pub fn random<R: Rng + ?Sized>(grid: GridSpec, spec: &RandomFieldSpec, rng: &mut R) -> Self {
        let mut raw = RawField::zeros(grid);
        let kmax = spec.max_wavenumber.unwrap_or(grid.modes_per_axis) as i32;
        for (idx, (k1, k2)) in grid.modes() {
            let mirror = grid.mirror(idx);
            if mirror < idx || k1.abs() > kmax || k2.abs() > kmax {
                continue;
            }
            let k2n = (k1 * k1 + k2 * k2) as f64;
            let amp = k2n.powf(-0.5 * spec.decay);
            for d in 0..2 {
                let z = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * amp;
                raw.coeffs_mut()[idx][d] = z;
                raw.coeffs_mut()[mirror][d] = z.conj();
            }
        }
        let mut field = leray_project(&raw);
        if let Some(norm) = spec.h_norm {
            let current = field.h_norm_sq().sqrt();
            if current > 0.0 {
                field.scale_in_place(norm / current);
            }
        }
        field
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coeffs(&self) -> &[[Complex64; 2]] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [[Complex64; 2]] {
        &mut self.coeffs
    }

    pub fn coeff(&self, k1: i32, k2: i32) -> Option<[Complex64; 2]> {
        self.grid.index(k1, k2).map(|i| self.coeffs[i])
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c[0] == ZERO && c[1] == ZERO)
    }

    /// ‖u‖²_H = (2π)² Σ |û(k)|².
    pub fn h_norm_sq(&self) -> f64 {
        domain_area() * self.coeffs.iter().map(|c| c[0].norm_sqr() + c[1].norm_sqr()).sum::<f64>()
    }

    /// ‖u‖²_V = (2π)² Σ |k|² |û(k)|².
    pub fn v_norm_sq(&self) -> f64 {
        let s: f64 = self
            .grid
            .modes()
            .map(|(i, (k1, k2))| {
                let c = &self.coeffs[i];
                (k1 * k1 + k2 * k2) as f64 * (c[0].norm_sqr() + c[1].norm_sqr())
            })
            .sum();
        domain_area() * s
    }

    /// H inner product (u, v) = (2π)² Σ Re(û · conj v̂).
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.same_grid(other)?;
        let s: f64 = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a[0] * b[0].conj() + a[1] * b[1].conj()).re)
            .sum();
        Ok(domain_area() * s)
    }

    pub fn dist_sq(&self, other: &Self) -> Result<f64> {
        self.same_grid(other)?;
        let s: f64 = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a[0] - b[0]).norm_sqr() + (a[1] - b[1]).norm_sqr())
            .sum();
        Ok(domain_area() * s)
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn scale_in_place(&mut self, c: f64) {
        for v in &mut self.coeffs {
            v[0] *= c;
            v[1] *= c;
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.scale_in_place(c);
        out
    }

    /// self += c · other.
    pub fn axpy(&mut self, c: f64, other: &Self) -> Result<()> {
        self.same_grid(other)?;
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            a[0] += b[0] * c;
            a[1] += b[1] * c;
        }
        Ok(())
    }

    /// Samples both velocity components on an m × m collocation grid.
    pub fn to_physical(&self, m: usize) -> [Physical; 2] {
        let t = Transform::get(m);
        let (x, y) = t.to_physical_pair(&self.grid, |i| self.coeffs[i][0], |i| self.coeffs[i][1]);
        [x, y]
    }

    /// Largest deviation from reality or incompressibility, relative to the
    /// largest coefficient magnitude.
    pub fn invariant_defect(&self) -> f64 {
        let scale = self
            .coeffs
            .iter()
            .map(|c| c[0].norm().max(c[1].norm()))
            .fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = self.coeffs[self.grid.zero_index()][0]
            .norm()
            .max(self.coeffs[self.grid.zero_index()][1].norm());
        for (i, (k1, k2)) in self.grid.modes() {
            let c = &self.coeffs[i];
            let m = &self.coeffs[self.grid.mirror(i)];
            worst = worst.max((c[0] - m[0].conj()).norm()).max((c[1] - m[1].conj()).norm());
            let kn = ((k1 * k1 + k2 * k2) as f64).sqrt();
            let div = (c[0] * k1 as f64 + c[1] * k2 as f64) / kn;
            worst = worst.max(div.norm());
        }
        worst / scale
    }

    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        let d = self.invariant_defect();
        if d <= tol {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("field invariant defect {d:e} exceeds {tol:e}")))
        }
    }
}

impl std::ops::Add<&SpectralField> for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(1.0, rhs).expect("grid mismatch in field addition");
        out
    }
}

impl std::ops::Sub<&SpectralField> for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs).expect("grid mismatch in field subtraction");
        out
    }
}

/// Controls the spectrum of [`SpectralField::random`].
#[derive(Clone, Debug, PartialEq)]
pub struct RandomFieldSpec {
    /// Coefficient magnitudes scale as |k|^(-decay).
    pub decay: f64,
    /// Only modes with |kᵢ| ≤ this bound are excited.
    pub max_wavenumber: Option<usize>,
    /// Rescale to this H norm when set.
    pub h_norm: Option<f64>,
}

impl Default for RandomFieldSpec {
    fn default() -> Self {
        Self { decay: 1.0, max_wavenumber: None, h_norm: None }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shear_wave_norms() {
        let grid = GridSpec::new(4, true).unwrap();
        let u = SpectralField::shear_wave(grid, (1, 0), 2.0, 0.3).unwrap();
        let area = domain_area();
        assert!((u.h_norm_sq() - 4.0 * area / 2.0).abs() < 1e-12);
        assert!((u.v_norm_sq() - u.h_norm_sq()).abs() < 1e-12);
        assert!(u.invariant_defect() < 1e-15);
    }

    #[test]
    fn shear_wave_samples_match_closed_form() {
        let grid = GridSpec::new(3, true).unwrap();
        let u = SpectralField::shear_wave(grid, (1, 2), 1.5, 0.7).unwrap();
        let [px, py] = u.to_physical(16);
        let kn = 5f64.sqrt();
        for i in 0..16 {
            for j in 0..16 {
                let x = super::super::transform::point(16, i, j);
                let c = 1.5 * (x[0] + 2.0 * x[1] + 0.7).cos();
                assert!((px.values[i * 16 + j] - c * (-2.0 / kn)).abs() < 1e-13);
                assert!((py.values[i * 16 + j] - c * (1.0 / kn)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn random_fields_are_valid() {
        let grid = GridSpec::new(5, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = RandomFieldSpec { h_norm: Some(2.0), ..Default::default() };
        for _ in 0..10 {
            let u = SpectralField::random(grid, &spec, &mut rng);
            assert!(u.invariant_defect() < 1e-14);
            assert!((u.h_norm_sq() - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn inner_product_and_distance_agree() {
        let grid = GridSpec::new(3, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = SpectralField::random(grid, &Default::default(), &mut rng);
        let v = SpectralField::random(grid, &Default::default(), &mut rng);
        let d = u.dist_sq(&v).unwrap();
        let e = u.h_norm_sq() + v.h_norm_sq() - 2.0 * u.inner(&v).unwrap();
        assert!((d - e).abs() < 1e-10 * d);
        assert!(((&u - &v).h_norm_sq() - d).abs() < 1e-12 * d);
    }
}
