//! Divergence-free Fourier fields on the periodic torus [0, 2π)².

mod field;
pub(crate) mod operators;
mod snapshot;
mod transform;

pub use field::{RandomFieldSpec, SpectralField};
pub use operators::{
    bilinear_b, calibrate_ladyzhenskaya, ladyzhenskaya_ratio, leray_project, norms, stokes_apply,
    trilinear_b, trilinear_b_scaled, RawField,
};
pub use snapshot::{read_fields, read_snapshot, write_fields, write_snapshot};
pub use transform::{next_smooth, Physical, Transform};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use rustfft::num_complex::Complex64;

/// Side length of the periodic box.
pub const DOMAIN_SIZE: f64 = 2.0 * std::f64::consts::PI;

/// Area of the periodic box, (2π)².
pub fn domain_area() -> f64 {
    DOMAIN_SIZE * DOMAIN_SIZE
}

/// Square truncation |k₁|, |k₂| ≤ N of the integer wavevector lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    pub modes_per_axis: usize,
    #[serde(default = "default_dealias")]
    pub dealias: bool,
}

fn default_dealias() -> bool {
    true
}

impl GridSpec {
    pub const MAX_MODES: usize = 128;

    pub fn new(modes_per_axis: usize, dealias: bool) -> Result<Self> {
        let grid = Self { modes_per_axis, dealias };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes_per_axis == 0 || self.modes_per_axis > Self::MAX_MODES {
            return Err(Error::InvalidParameter(format!(
                "modes_per_axis must lie in 1..={}, got {}",
                Self::MAX_MODES,
                self.modes_per_axis
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> i32 {
        self.modes_per_axis as i32
    }

    /// Number of wavenumbers per axis, 2N + 1.
    pub fn side(&self) -> usize {
        2 * self.modes_per_axis + 1
    }

    /// Size of the dense coefficient array, including the (always zero) mean slot.
    pub fn len(&self) -> usize {
        self.side() * self.side()
    }

    /// Number of nonzero wavevectors in the truncation.
    pub fn mode_count(&self) -> usize {
        self.len() - 1
    }

    pub fn contains(&self, k1: i32, k2: i32) -> bool {
        k1.abs() <= self.n() && k2.abs() <= self.n()
    }

    pub fn index(&self, k1: i32, k2: i32) -> Option<usize> {
        if !self.contains(k1, k2) {
            return None;
        }
        let n = self.n();
        Some(((k1 + n) as usize) * self.side() + (k2 + n) as usize)
    }

    pub fn wavevector(&self, index: usize) -> (i32, i32) {
        let n = self.n();
        let side = self.side();
        ((index / side) as i32 - n, (index % side) as i32 - n)
    }

    /// Index of −k for the slot holding k.
    pub fn mirror(&self, index: usize) -> usize {
        self.len() - 1 - index
    }

    pub fn zero_index(&self) -> usize {
        self.len() / 2
    }

    /// Collocation points per axis used for nonlinear products. With dealiasing
    /// this is at least 3N + 1 so quadratic products never alias into retained
    /// modes; without it the minimal 2N + 1 grid is used.
    pub fn collocation_size(&self) -> usize {
        if self.dealias {
            next_smooth(3 * self.modes_per_axis + 1)
        } else {
            next_smooth(2 * self.modes_per_axis + 1)
        }
    }

    /// Collocation size on which cubic integrands are integrated exactly.
    pub fn exact_cubic_size(&self) -> usize {
        next_smooth(3 * self.modes_per_axis + 1)
    }

    /// Nonzero wavevectors in dense-index order.
    pub fn modes(&self) -> impl Iterator<Item = (usize, (i32, i32))> + '_ {
        let zero = self.zero_index();
        (0..self.len())
            .filter(move |&i| i != zero)
            .map(move |i| (i, self.wavevector(i)))
    }
}

/// Smallest eigenvalue of the Stokes operator over the grid's admissible modes.
pub fn poincare_lambda(grid: &GridSpec) -> f64 {
    grid.modes()
        .map(|(_, (k1, k2))| (k1 * k1 + k2 * k2) as f64)
        .fold(f64::INFINITY, f64::min)
}
