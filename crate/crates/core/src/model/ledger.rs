use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{area, ModelParams};
use crate::error::Result;
use crate::forcing::{grad_window_bound, Symbol};

/// Largest admissible exponential rate γ.
pub const GAMMA_CAP: f64 = 0.49;

/// Norms of the forcing pair and the calibrated trilinear constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerInputs {
    /// sup_t ‖g(t)‖_H (triangle-inequality bound).
    pub g0: f64,
    /// sup_t ‖h(t)‖_H (triangle-inequality bound).
    pub h0: f64,
    /// Bound on ∫ₜ^{t+1} ‖∇h‖²_H.
    pub c_hat: f64,
    /// Calibrated 𝔠 in |b(u,v,w)| ≤ 𝔠‖u‖^½‖u‖_V^½‖v‖_V‖w‖^½‖w‖_V^½.
    pub c_lady: f64,
}

impl LedgerInputs {
    pub fn from_symbol(symbol: &Symbol, c_lady: f64) -> Self {
        Self {
            g0: symbol.g.sup_norm(),
            h0: symbol.h.sup_norm(),
            c_hat: grad_window_bound(&symbol.h),
            c_lady,
        }
    }
}

/// Closed-form constants of the moment, absorbing-set and stability bounds.
/// Profile sup norms are the coefficient bounds |c| + Σ|a|; they dominate the
/// exact sup norms, so every bound built from them is at least as large.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantLedger {
    pub inputs: LedgerInputs,
    pub nu: f64,
    pub lambda: f64,
    pub area: f64,
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub k6: f64,
    pub k7: f64,
    pub k8: f64,
    pub k9: f64,
    /// k₉ + (2𝔠²/ν)·M₂, the stopping level being the window V-bound.
    pub k10: f64,
    pub k10_coefficient: f64,
    pub k11: f64,
    pub gamma: f64,
    /// Forcing part (2/γ)((1/(νλ))‖g₀‖² + ‖h₀‖²) of the second-moment bound.
    pub q: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    pub c_hat: f64,
    pub c_lady: f64,
    pub dissipative: bool,
    pub gamma_ok: bool,
}

impl ConstantLedger {
    pub fn from_symbol(params: &ModelParams, symbol: &Symbol, c_lady: f64) -> Self {
        Self::compute(params, LedgerInputs::from_symbol(symbol, c_lady))
    }

    pub fn compute(params: &ModelParams, inputs: LedgerInputs) -> Self {
        let nu = params.nu;
        let lambda = params.lambda;
        let o = area();
        let phi1 = params.drift.phi1.sup_bound();
        let psi1 = params.drift.psi1.l2_norm();
        let phi2 = params.drift.phi2_sup();
        let psi2 = params.drift.psi2_l2();
        let beta2 = params.diffusion.beta_sq();
        let ghat2 = params.diffusion.gamma_sq();
        let lip2 = params.diffusion.lip_sq();
        let kap = params.kappa.sup_bound();
        let kap2 = kap * kap;
        let gkap = params.kappa.grad_sup_bound();
        let gkap2 = gkap * gkap;
        let LedgerInputs { g0, h0, c_hat, c_lady } = inputs;

        let k0 = 6.0 * phi1 + 6.0 * psi1 + 6.0 * beta2 + 8.0 * kap2 * ghat2 + 16.0 * beta2 * kap2 * o;
        let dissipative = nu > 2.0 * k0 / lambda;
        let slack = nu * lambda / 2.0 - k0;
        let gamma = if dissipative { GAMMA_CAP.min(slack / 4.0) } else { 0.0 };
        let gamma_ok = gamma > 0.0 && gamma < 0.5 && nu * lambda / 2.0 - 2.0 * gamma > k0;

        let k1 = 2.0 * (phi1 + psi1 + 2.0 * kap2 * (2.0 * beta2 * o + ghat2));
        let k4 = 4.0 * (phi1 + psi1 + 6.0 * beta2 + 6.0 * kap2 * ghat2 + 12.0 * beta2 * kap2 * o);
        let k5 = 2.0 * ((8.0 / (nu * lambda)) * phi1 + lip2 * kap2 + (2.0 / lambda) * ghat2 * gkap2);
        let k6 = 8.0 * ((1.0 / nu) * psi1 * psi1 + o * beta2 * gkap2);
        let k7 = (16.0 / nu) * o * phi1 * phi1 + 2.0 * c_hat + 8.0 * o * beta2 * gkap2;
        let lip_term = 4.0 * kap2 * lip2 * (1.0 + o);
        let k8 = 2.0 * phi2 + psi2 + lip_term;
        let k9 = psi2 + lip_term;
        let k11 = 2.0 * k9 + 2.0 * lip_term;
        let k10_coefficient = 2.0 * c_lady * c_lady / nu;

        let (k2, k3, q, m1, m2, m3, m4, k10) = if gamma > 0.0 {
            let nl = nu * lambda;
            let k2 = (4.0 * o / gamma) * (phi1 * phi1 / nl + 2.0 * beta2 * kap2);
            let q = (2.0 / gamma) * (g0 * g0 / nl + h0 * h0);
            let m1 = 2.0 * q + k2;
            let m2 = gamma.exp() * m1;
            let nl3 = nl * nl * nl;
            let k3 = 27.0 / (2.0 * gamma * nl3) * g0.powi(4)
                + 864.0 / (gamma * nl3) * phi1.powi(4) * o * o
                + 72.0 / (gamma * nl) * h0.powi(4)
                + (12.0 / gamma) * beta2 * kap2 * kap2 * o * o;
            let m3 = 2.0 * k3;
            let m4 = (1.0 + k5 + k6 / lambda) * m2 + k7 + (4.0 / nu) * g0 * g0;
            let k10 = k9 + k10_coefficient * m2;
            (k2, k3, q, m1, m2, m3, m4, k10)
        } else {
            let inf = f64::INFINITY;
            (inf, inf, inf, inf, inf, inf, inf, inf)
        };

        Self {
            inputs,
            nu,
            lambda,
            area: o,
            k0,
            k1,
            k2,
            k3,
            k4,
            k5,
            k6,
            k7,
            k8,
            k9,
            k10,
            k10_coefficient,
            k11,
            gamma,
            q,
            m1,
            m2,
            m3,
            m4,
            c_hat,
            c_lady,
            dissipative,
            gamma_ok,
        }
    }

    /// E‖u(t)‖²_H ≤ e^{−γ(t−τ)}R + Q + k₂ for E‖u(τ)‖²_H ≤ R.
    pub fn second_moment_bound(&self, r: f64, elapsed: f64) -> f64 {
        (-self.gamma * elapsed).exp() * r + self.q + self.k2
    }

    /// ∫_τ^t E‖u‖²_V ≤ (2/ν)(R + (Q + k₂)e^{γ(t−τ)}).
    pub fn horizon_v_bound(&self, r: f64, elapsed: f64) -> f64 {
        (2.0 / self.nu) * (r + (self.q + self.k2) * (self.gamma * elapsed).exp())
    }

    /// ∫_{t−1}^t E‖u‖²_V ≤ (2/ν)e^γ(e^{−γ(t−τ)}R + Q + k₂) for t − τ ≥ 1.
    pub fn window_v_bound(&self, r: f64, elapsed: f64) -> f64 {
        (2.0 / self.nu) * self.gamma.exp() * self.second_moment_bound(r, elapsed)
    }

    /// E‖u(t)‖⁴_H ≤ e^{−2γ(t−τ)}R₄ + k₃ for E‖u(τ)‖⁴_H ≤ R₄.
    pub fn fourth_moment_bound(&self, r4: f64, elapsed: f64) -> f64 {
        (-2.0 * self.gamma * elapsed).exp() * r4 + self.k3
    }

    /// Elapsed time after which the second-moment bound falls below M₁.
    pub fn entry_time_second(&self, r: f64) -> f64 {
        entry_time(r, self.q, self.gamma)
    }

    /// Elapsed time after which the fourth-moment bound falls below M₃.
    pub fn entry_time_fourth(&self, r4: f64) -> f64 {
        entry_time(r4, self.k3, 2.0 * self.gamma)
    }

    /// Growth factor of the squared H-distance of two deterministic solutions
    /// over `elapsed`, given ∫‖u_ref‖²_V over the same interval.
    pub fn gronwall_factor(&self, elapsed: f64, v_integral: f64) -> f64 {
        ((self.k8 + self.k9) * elapsed + self.k10_coefficient * v_integral).exp()
    }

    /// (name, value, defining formula) rows for the CSV table.
    pub fn rows(&self) -> Vec<(&'static str, f64, &'static str)> {
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        vec![
            ("nu", self.nu, "viscosity"),
            ("lambda", self.lambda, "Poincare constant"),
            ("area", self.area, "|O| = (2 pi)^2"),
            ("g0", self.inputs.g0, "sup_t ||g(t)||_H"),
            ("h0", self.inputs.h0, "sup_t ||h(t)||_H"),
            ("c_hat", self.c_hat, "sup_t int_t^{t+1} ||grad h||_H^2"),
            ("c_lady", self.c_lady, "calibrated trilinear constant"),
            ("k0", self.k0, "6|phi1| + 6|psi1|_2 + 6|beta|^2 + 8|kappa|^2|gamma_hat|^2 + 16|beta|^2|kappa|^2|O|"),
            ("dissipative", b(self.dissipative), "nu > 2 k0 / lambda"),
            ("gamma", self.gamma, "min(0.49, (nu lambda/2 - k0)/4)"),
            ("gamma_ok", b(self.gamma_ok), "0 < gamma < 1/2 and nu lambda/2 - 2 gamma > k0"),
            ("k1", self.k1, "2(|phi1| + |psi1|_2 + 2|kappa|^2(2|beta|^2|O| + |gamma_hat|^2))"),
            ("k2", self.k2, "(4|O|/gamma)(|phi1|^2/(nu lambda) + 2|beta|^2|kappa|^2)"),
            ("q", self.q, "(2/gamma)(g0^2/(nu lambda) + h0^2)"),
            ("M1", self.m1, "2q + k2"),
            ("M2", self.m2, "e^gamma M1"),
            ("k3", self.k3, "27 g0^4/(2 gamma (nu lambda)^3) + 864|phi1|^4|O|^2/(gamma (nu lambda)^3) + 72 h0^4/(gamma nu lambda) + 12|beta|^2|kappa|^4|O|^2/gamma"),
            ("k4", self.k4, "4(|phi1| + |psi1|_2 + 6|beta|^2 + 6|kappa|^2|gamma_hat|^2 + 12|beta|^2|kappa|^2|O|)"),
            ("M3", self.m3, "2 k3"),
            ("k5", self.k5, "2(8|phi1|/(nu lambda) + |L|^2|kappa|^2 + (2/lambda)|gamma_hat|^2|grad kappa|^2)"),
            ("k6", self.k6, "8(|psi1|_2^2/nu + |O||beta|^2|grad kappa|^2)"),
            ("k7", self.k7, "16|O||phi1|^2/nu + 2 c_hat + 8|O||beta|^2|grad kappa|^2"),
            ("M4", self.m4, "(1 + k5 + k6/lambda) M2 + k7 + 4 g0^2/nu"),
            ("k8", self.k8, "2|phi2| + |psi2|_2 + 4|kappa|^2|L|^2(1 + |O|)"),
            ("k9", self.k9, "|psi2|_2 + 4|kappa|^2|L|^2(1 + |O|)"),
            ("k10_coefficient", self.k10_coefficient, "2 c_lady^2 / nu"),
            ("k10", self.k10, "k9 + (2 c_lady^2/nu) M2"),
            ("k11", self.k11, "2 k9 + 8|kappa|^2|L|^2(1 + |O|)"),
        ]
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "name,value,definition")?;
        for (name, value, def) in self.rows() {
            writeln!(out, "{name},{value:e},\"{def}\"")?;
        }
        Ok(())
    }
}

fn entry_time(r: f64, level: f64, rate: f64) -> f64 {
    if r <= level {
        return 0.0;
    }
    if !(level > 0.0 && rate > 0.0) {
        return f64::INFINITY;
    }
    (r / level).ln() / rate
}
