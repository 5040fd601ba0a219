use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{GridSpec, DOMAIN_SIZE};

/// Smallest integer ≥ n whose prime factors are all in {2, 3, 5, 7}.
pub fn next_smooth(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5, 7] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Real-valued samples of a scalar field on an m × m collocation grid,
/// row-major with point (i, j) at x = (2πi/m, 2πj/m).
#[derive(Clone, Debug, PartialEq)]
pub struct Physical {
    pub m: usize,
    pub values: Vec<f64>,
}

impl Physical {
    pub fn zeros(m: usize) -> Self {
        Self { m, values: vec![0.0; m * m] }
    }

    pub fn from_fn(m: usize, f: impl Fn([f64; 2]) -> f64) -> Self {
        let mut values = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                values.push(f(point(m, i, j)));
            }
        }
        Self { m, values }
    }

    /// Trapezoid (spectrally exact) quadrature of the samples over the torus.
    pub fn integral(&self) -> f64 {
        let h = DOMAIN_SIZE / self.m as f64;
        self.values.iter().sum::<f64>() * h * h
    }
}

pub(crate) fn point(m: usize, i: usize, j: usize) -> [f64; 2] {
    let h = DOMAIN_SIZE / m as f64;
    [h * i as f64, h * j as f64]
}

/// Two-dimensional complex FFT of a fixed size, shared process-wide.
pub struct Transform {
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transform").field("m", &self.m).finish()
    }
}

impl Transform {
    pub fn get(m: usize) -> Arc<Transform> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Transform>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().expect("transform cache poisoned");
        map.entry(m)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                Arc::new(Transform {
                    m,
                    forward: planner.plan_fft_forward(m),
                    inverse: planner.plan_fft_inverse(m),
                })
            })
            .clone()
    }

    pub fn size(&self) -> usize {
        self.m
    }

    fn fft2(&self, buf: &mut [Complex64], inverse: bool) {
        let fft = if inverse { &self.inverse } else { &self.forward };
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(buf, &mut scratch);
        transpose(buf, self.m);
        fft.process_with_scratch(buf, &mut scratch);
        transpose(buf, self.m);
    }

    fn slot(&self, k: i32) -> usize {
        k.rem_euclid(self.m as i32) as usize
    }

    /// Evaluates two real scalar spectra (given per dense grid index, each
    /// Hermitian) at the collocation points using a single packed transform.
    pub fn to_physical_pair(
        &self,
        grid: &GridSpec,
        a: impl Fn(usize) -> Complex64,
        b: impl Fn(usize) -> Complex64,
    ) -> (Physical, Physical) {
        let m = self.m;
        debug_assert!(m > 2 * grid.modes_per_axis);
        let mut buf = vec![Complex64::new(0.0, 0.0); m * m];
        for (idx, (k1, k2)) in grid.modes() {
            let z = a(idx) + Complex64::i() * b(idx);
            buf[self.slot(k1) * m + self.slot(k2)] = z;
        }
        self.fft2(&mut buf, true);
        let re = buf.iter().map(|z| z.re).collect();
        let im = buf.iter().map(|z| z.im).collect();
        (Physical { m, values: re }, Physical { m, values: im })
    }

    /// Fourier coefficients of two real sampled fields, truncated to the grid.
    /// The outputs satisfy the reality condition exactly; the mean slot is zero.
    pub fn to_spectral_pair(
        &self,
        grid: &GridSpec,
        a: &Physical,
        b: &Physical,
    ) -> (Vec<Complex64>, Vec<Complex64>) {
        let m = self.m;
        assert_eq!(a.m, m);
        assert_eq!(b.m, m);
        let mut buf: Vec<Complex64> = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(&x, &y)| Complex64::new(x, y))
            .collect();
        self.fft2(&mut buf, false);
        let scale = 1.0 / (m * m) as f64;
        let mut out_a = vec![Complex64::new(0.0, 0.0); grid.len()];
        let mut out_b = vec![Complex64::new(0.0, 0.0); grid.len()];
        for (idx, (k1, k2)) in grid.modes() {
            let z = buf[self.slot(k1) * m + self.slot(k2)];
            let zm = buf[self.slot(-k1) * m + self.slot(-k2)].conj();
            out_a[idx] = (z + zm) * (0.5 * scale);
            out_b[idx] = (z - zm) * Complex64::new(0.0, -0.5 * scale);
        }
        (out_a, out_b)
    }
}

fn transpose(buf: &mut [Complex64], m: usize) {
    for i in 0..m {
        for j in (i + 1)..m {
            buf.swap(i * m + j, j * m + i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_sizes() {
        assert_eq!(next_smooth(13), 14);
        assert_eq!(next_smooth(25), 25);
        assert_eq!(next_smooth(11), 12);
        assert_eq!(next_smooth(1), 1);
    }

    #[test]
    fn packed_roundtrip_recovers_both_spectra() {
        let grid = GridSpec::new(3, true).unwrap();
        let t = Transform::get(grid.collocation_size());
        let a = Physical::from_fn(t.size(), |x| (x[0] + 2.0 * x[1]).cos() - 0.5 * (3.0 * x[1]).sin());
        let b = Physical::from_fn(t.size(), |x| (2.0 * x[0] - x[1]).sin());
        let (sa, sb) = t.to_spectral_pair(&grid, &a, &b);
        let ia = grid.index(1, 2).unwrap();
        assert!((sa[ia] - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        let ib = grid.index(2, -1).unwrap();
        assert!((sb[ib] - Complex64::new(0.0, -0.5)).norm() < 1e-14);
        let (pa, pb) = t.to_physical_pair(&grid, |i| sa[i], |i| sb[i]);
        for (x, y) in pa.values.iter().zip(&a.values) {
            assert!((x - y).abs() < 1e-13);
        }
        for (x, y) in pb.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn quadrature_of_trig_polynomial() {
        let p = Physical::from_fn(16, |x| 1.0 + (x[0]).cos() * (x[1]).sin());
        assert!((p.integral() - DOMAIN_SIZE * DOMAIN_SIZE).abs() < 1e-12);
    }
}
