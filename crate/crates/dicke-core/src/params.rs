// SPDX-License-Identifier: Apache-2.0

//! Physical constants, unit conventions and the experiment configuration.
//!
//! Every angular frequency is stored in rad/s. Config files and the CLI take
//! plain Hz and multiply by 2π on the way in.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HBAR: f64 = 1.054_571_817e-34;
pub const K_B: f64 = 1.380_649e-23;
pub const TWO_PI: f64 = 2.0 * PI;

/// Which coupling enters κ_eff = λ_c²κ/(ω²+κ²).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CouplingConvention {
    #[default]
    Lambda,
    TwoLambda,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub n_atoms: f64,
    /// Pump-cavity detuning ω (rad/s).
    pub omega: f64,
    /// Recoil splitting ω₀ (rad/s).
    pub omega0: f64,
    /// Field decay rate κ (rad/s).
    pub kappa: f64,
    pub eta: f64,
    /// Background click rate (1/s).
    pub r_b: f64,
    /// Bath temperature (K).
    pub temperature: f64,
    pub coupling_convention: CouplingConvention,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self::reference()
    }
}

impl PhysicalParams {
    /// The experimental operating point.
    pub fn reference() -> Self {
        Self {
            n_atoms: 1.6e5,
            omega: TWO_PI * 10.0e6,
            omega0: TWO_PI * 8.3e3,
            kappa: TWO_PI * 1.25e6,
            eta: 0.05,
            r_b: 341.0,
            temperature: 100e-9,
            coupling_convention: CouplingConvention::Lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.n_atoms >= 1.0) {
            return bad("N must be >= 1");
        }
        if !(self.omega > 0.0 && self.omega0 > 0.0 && self.kappa > 0.0) {
            return bad("omega, omega0 and kappa must be positive");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("eta must lie in (0, 1]");
        }
        if !(self.r_b >= 0.0) {
            return bad("r_b must be non-negative");
        }
        if !(self.temperature >= 0.0) {
            return bad("T must be non-negative");
        }
        Ok(())
    }

    /// Parse a flat TOML table. Frequencies are given in Hz, T in nK.
    /// Missing keys keep the experimental default; unknown keys are rejected.
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let table: toml::Table = src
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut p = Self::reference();
        for (key, value) in &table {
            let num = || -> Result<f64> {
                value
                    .as_float()
                    .or_else(|| value.as_integer().map(|i| i as f64))
                    .ok_or_else(|| Error::Config(format!("key `{key}` must be numeric")))
            };
            match key.as_str() {
                "N" => p.n_atoms = num()?,
                "omega_hz" => p.omega = TWO_PI * num()?,
                "omega0_hz" => p.omega0 = TWO_PI * num()?,
                "kappa_hz" => p.kappa = TWO_PI * num()?,
                "eta" => p.eta = num()?,
                "r_b" => p.r_b = num()?,
                "T_nK" => p.temperature = num()? * 1e-9,
                "coupling_convention" => {
                    p.coupling_convention = match value.as_str() {
                        Some("lambda") => CouplingConvention::Lambda,
                        Some("two_lambda") => CouplingConvention::TwoLambda,
                        _ => {
                            return Err(Error::Config(
                                "coupling_convention must be \"lambda\" or \"two_lambda\"".into(),
                            ))
                        }
                    }
                }
                other => return Err(Error::Config(format!("unknown key `{other}`"))),
            }
        }
        p.validate()?;
        Ok(p)
    }

    pub fn to_toml_string(&self) -> String {
        let conv = match self.coupling_convention {
            CouplingConvention::Lambda => "lambda",
            CouplingConvention::TwoLambda => "two_lambda",
        };
        format!(
            "N = {:?}\nomega_hz = {:?}\nomega0_hz = {:?}\nkappa_hz = {:?}\neta = {:?}\nr_b = {:?}\nT_nK = {:?}\ncoupling_convention = \"{}\"\n",
            self.n_atoms,
            self.omega / TWO_PI,
            self.omega0 / TWO_PI,
            self.kappa / TWO_PI,
            self.eta,
            self.r_b,
            self.temperature * 1e9,
            conv
        )
    }

    /// Clicks per second per intracavity photon, 2κη.
    pub fn click_rate_per_photon(&self) -> f64 {
        2.0 * self.kappa * self.eta
    }

    /// Background expressed as an intracavity photon number, r_b/(2κη).
    pub fn background_photons(&self) -> f64 {
        self.r_b / self.click_rate_per_photon()
    }

    /// λ for relative coupling x, referenced to the open-system threshold.
    pub fn lambda_at(&self, x: f64) -> f64 {
        lambda_cr_open(self) * x.max(0.0).sqrt()
    }
}

pub fn lambda_cr_closed(p: &PhysicalParams) -> f64 {
    (p.omega * p.omega0).sqrt() / 2.0
}

pub fn lambda_cr_open(p: &PhysicalParams) -> f64 {
    ((p.kappa * p.kappa + p.omega * p.omega) * p.omega0 / (4.0 * p.omega)).sqrt()
}

pub fn soft_mode_frequency(p: &PhysicalParams, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!(
            "soft mode defined for 0 <= x <= 1, got {x}"
        )));
    }
    Ok(p.omega0 * (1.0 - x).sqrt())
}

pub fn kappa_eff(p: &PhysicalParams, lambda: f64) -> f64 {
    let lc = match p.coupling_convention {
        CouplingConvention::Lambda => lambda,
        CouplingConvention::TwoLambda => 2.0 * lambda,
    };
    lc * lc * p.kappa / (p.omega * p.omega + p.kappa * p.kappa)
}

/// Bose occupation 1/(exp(ħν/k_BT) − 1).
pub fn thermal_occupation(nu: f64, temperature: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::Domain(format!(
            "thermal occupation needs nu > 0, got {nu}"
        )));
    }
    if temperature <= 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 / (HBAR * nu / (K_B * temperature)).exp_m1())
}
