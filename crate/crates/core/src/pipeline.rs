//! The full assessment chain: align → L_old → ρ → L_new (two ways) → margins
//! → decompositions → limit curve → compliance → encirclements.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqresp::{align, FrequencyResponse, Unit};
use crate::loopgain::{consistency_error, loop_gain, one_plus_rho, rho, update_loop_gain};
use crate::margins::{summarize_margins, Decomposer, MarginDecomposition, MarginSummary};
use crate::netsynth::par;
use crate::regions::{winding_number, EncirclementResult};
use crate::speclimit::{check_compliance, limit_curve, ComplianceRecord, LimitCurve, LimitMode, MarginPolicy};

/// Processing stage, named in diagnostics when an assessment fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Parse,
    Synth,
    Align,
    LoopGain,
    Margins,
    Decomposition,
    Limit,
    Compliance,
    Regions,
    Report,
    Render,
    Write,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Parse => "parse",
            Stage::Synth => "synth",
            Stage::Align => "align",
            Stage::LoopGain => "loopgain",
            Stage::Margins => "margins",
            Stage::Decomposition => "decomposition",
            Stage::Limit => "limit",
            Stage::Compliance => "compliance",
            Stage::Regions => "regions",
            Stage::Report => "report",
            Stage::Render => "render",
            Stage::Write => "write",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{stage}: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

pub trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssessConfig {
    pub policy: MarginPolicy,
    /// Evaluate the limit at these frequencies instead of the detected
    /// gain crossovers of the new loop gain.
    pub critical_freqs: Option<Vec<f64>>,
}

impl AssessConfig {
    pub fn limit_mode(&self) -> LimitMode {
        if self.critical_freqs.is_some() {
            LimitMode::OperatorCritical
        } else {
            LimitMode::DetectedCrossovers
        }
    }
}

/// Every intermediate result of one assessment, on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Assessment {
    pub z_ppm_existing: FrequencyResponse,
    pub z_net_old: FrequencyResponse,
    pub z_ppm_new: FrequencyResponse,
    pub policy: MarginPolicy,
    pub l_old: FrequencyResponse,
    /// `L_old / (1 + ρ)`, the curve all new-loop margins are read from.
    pub l_new: FrequencyResponse,
    /// `Z_net,new / Z_ppm` with `Z_net,new = Z_net,old ∥ Z_new`.
    pub l_new_direct: FrequencyResponse,
    pub one_plus_rho: FrequencyResponse,
    pub l_old_summary: MarginSummary,
    pub l_new_summary: MarginSummary,
    pub decompositions: Vec<MarginDecomposition>,
    pub limit_curve: LimitCurve,
    pub compliance: Vec<ComplianceRecord>,
    pub encirclement_old: EncirclementResult,
    pub encirclement_new: EncirclementResult,
    pub consistency_error: f64,
}

/// Pointwise `a ∥ b`.
pub fn parallel_curves(a: &FrequencyResponse, b: &FrequencyResponse) -> Result<FrequencyResponse> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    let samples = a
        .samples()
        .iter()
        .zip(b.samples())
        .zip(a.freqs())
        .map(|((x, y), &f)| par(*x, *y).map_err(|_| Error::SingularAtFrequency { f_hz: f }))
        .collect::<Result<Vec<_>>>()?;
    Ok(FrequencyResponse::new(a.grid().clone(), samples, Unit::Ohm)?.with_metadata_of(a))
}

/// Runs the chain on `z_ppm_existing`, `z_net_old`, `z_ppm_new`.
pub fn assess(
    z_ppm_existing: &FrequencyResponse,
    z_net_old: &FrequencyResponse,
    z_ppm_new: &FrequencyResponse,
    cfg: &AssessConfig,
) -> std::result::Result<Assessment, StageError> {
    cfg.policy.validate().at(Stage::Config)?;
    let aligned = align(&[z_ppm_existing.clone(), z_net_old.clone(), z_ppm_new.clone()]).at(Stage::Align)?;
    let [z_ppm_existing, z_net_old, z_ppm_new]: [FrequencyResponse; 3] =
        aligned.try_into().expect("align keeps the count");

    let l_old = loop_gain(&z_net_old, &z_ppm_existing).at(Stage::LoopGain)?.curve;
    let r = rho(&z_net_old, &z_ppm_new).at(Stage::LoopGain)?;
    let l_new = update_loop_gain(&l_old, &r).at(Stage::LoopGain)?.l_new.curve;
    let z_net_new = parallel_curves(&z_net_old, &z_ppm_new).at(Stage::LoopGain)?;
    let l_new_direct = loop_gain(&z_net_new, &z_ppm_existing).at(Stage::LoopGain)?.curve.with_label("L_new (direct)");
    let consistency = consistency_error(&l_new_direct, &l_new).at(Stage::LoopGain)?;
    let d = one_plus_rho(&r).at(Stage::LoopGain)?;

    let l_old_summary = summarize_margins(&l_old, &cfg.policy).at(Stage::Margins)?;
    let l_new_summary = summarize_margins(&l_new, &cfg.policy).at(Stage::Margins)?;

    let decomposer = Decomposer::new(&l_old, &r).at(Stage::Decomposition)?;
    let decompositions = l_new_summary
        .crossovers
        .iter()
        .map(|c| decomposer.at(c.f_hz, c.kind))
        .collect::<Result<Vec<_>>>()
        .at(Stage::Decomposition)?;

    let freqs: Vec<f64> = match &cfg.critical_freqs {
        Some(fs) => fs.clone(),
        None => l_new_summary.gain_crossovers().map(|c| c.f_hz).collect(),
    };
    let limits = limit_curve(&l_old, &z_net_old, Some(&d), &freqs, cfg.limit_mode(), &cfg.policy).at(Stage::Limit)?;
    let compliance = check_compliance(&z_ppm_new, &limits).at(Stage::Compliance)?;

    let encirclement_old = winding_number(&l_old).at(Stage::Regions)?;
    let encirclement_new = winding_number(&l_new).at(Stage::Regions)?;

    Ok(Assessment {
        z_ppm_existing,
        z_net_old,
        z_ppm_new,
        policy: cfg.policy,
        l_old,
        l_new,
        l_new_direct,
        one_plus_rho: d,
        l_old_summary,
        l_new_summary,
        decompositions,
        limit_curve: limits,
        compliance,
        encirclement_old,
        encirclement_new,
        consistency_error: consistency,
    })
}
