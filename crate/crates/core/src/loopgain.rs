//! Minor-loop gain `L = Z_net / Z_ppm` and its update when a new PPM is
//! paralleled at the connection point: `ρ = Z_net,old / Z_new`,
//! `F = 1 / (1 + ρ)`, `L_new = L_old · F`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqresp::{FrequencyResponse, Unit};

/// Threshold on `|1 + ρ|` below which the update is singular.
pub const SENSITIVITY_FLOOR: f64 = 1e-12;

/// Floor on the denominator of [`consistency_error`].
const REL_ERROR_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Derivation {
    /// `Z_net / Z_ppm` from the network seen by the PPM.
    Direct,
    /// `L_old / (1 + ρ)`.
    Factored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopGainDerivation {
    pub method: Derivation,
    pub inputs: Vec<String>,
}

/// A loop-gain curve together with how it was built.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopGain {
    pub curve: FrequencyResponse,
    pub derivation: LoopGainDerivation,
}

/// Result of the factored update.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopGainUpdate {
    pub l_new: LoopGain,
    /// `F = 1 / (1 + ρ)`.
    pub sensitivity: FrequencyResponse,
}

fn same_grid(a: &FrequencyResponse, b: &FrequencyResponse) -> Result<()> {
    if a.grid() == b.grid() {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

fn ratio(num: &FrequencyResponse, den: &FrequencyResponse) -> Result<FrequencyResponse> {
    same_grid(num, den)?;
    let samples = num
        .samples()
        .iter()
        .zip(den.samples())
        .zip(num.freqs())
        .map(|((n, d), &f)| if d.norm() == 0.0 { Err(Error::ZeroDenominator { f_hz: f }) } else { Ok(n / d) })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrequencyResponse::new(num.grid().clone(), samples, Unit::Dimensionless)?.with_metadata_of(num))
}

/// `L = Z_net / Z_ppm`.
pub fn loop_gain(z_net: &FrequencyResponse, z_ppm: &FrequencyResponse) -> Result<LoopGain> {
    let curve = ratio(z_net, z_ppm)?.with_label(format!("L = {} / {}", z_net.label(), z_ppm.label()));
    Ok(LoopGain {
        curve,
        derivation: LoopGainDerivation {
            method: Derivation::Direct,
            inputs: vec![z_net.label().to_string(), z_ppm.label().to_string()],
        },
    })
}

/// `ρ = Z_net,old / Z_new`.
pub fn rho(z_net_old: &FrequencyResponse, z_new: &FrequencyResponse) -> Result<FrequencyResponse> {
    Ok(ratio(z_net_old, z_new)?.with_label("rho"))
}

/// `L_new = L_old / (1 + ρ)`, also returning `F = 1 / (1 + ρ)`.
pub fn update_loop_gain(l_old: &FrequencyResponse, rho: &FrequencyResponse) -> Result<LoopGainUpdate> {
    same_grid(l_old, rho)?;
    let one = Complex64::new(1.0, 0.0);
    let mut l_new = Vec::with_capacity(l_old.len());
    let mut f_sens = Vec::with_capacity(l_old.len());
    for ((l, r), &f) in l_old.samples().iter().zip(rho.samples()).zip(l_old.freqs()) {
        let d = one + r;
        if d.norm() < SENSITIVITY_FLOOR {
            return Err(Error::SingularSensitivity { f_hz: f });
        }
        l_new.push(l / d);
        f_sens.push(d.inv());
    }
    let grid = l_old.grid().clone();
    Ok(LoopGainUpdate {
        l_new: LoopGain {
            curve: FrequencyResponse::new(grid.clone(), l_new, Unit::Dimensionless)?
                .with_metadata_of(l_old)
                .with_label("L_new (factored)"),
            derivation: LoopGainDerivation {
                method: Derivation::Factored,
                inputs: vec![l_old.label().to_string(), rho.label().to_string()],
            },
        },
        sensitivity: FrequencyResponse::new(grid, f_sens, Unit::Dimensionless)?.with_metadata_of(l_old).with_label("F"),
    })
}

/// `1 + ρ` as a curve, the denominator of the update.
pub fn one_plus_rho(rho: &FrequencyResponse) -> Result<FrequencyResponse> {
    Ok(rho.map(Unit::Dimensionless, |r| r + 1.0)?.with_label("1 + rho"))
}

/// `max_f |direct − factored| / max(|direct|, 1e-30)`.
pub fn consistency_error(l_direct: &FrequencyResponse, l_factored: &FrequencyResponse) -> Result<f64> {
    same_grid(l_direct, l_factored)?;
    Ok(l_direct
        .samples()
        .iter()
        .zip(l_factored.samples())
        .map(|(a, b)| (a - b).norm() / a.norm().max(REL_ERROR_FLOOR))
        .fold(0.0, f64::max))
}
