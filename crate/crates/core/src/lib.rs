//! Impedance-based stability margin assessment for paralleled power park
//! modules: loop-gain update, phase/gain margins, maximum allowable
//! impedance of a new connection, Nyquist regions and reports.

pub mod error;
pub mod freqresp;
pub mod loopgain;
pub mod margins;
pub mod netsynth;
pub mod pipeline;
pub mod regions;
pub mod report;
pub mod speclimit;

pub use num_complex::Complex64;

pub use error::{Error, Result};
pub use freqresp::{
    align, parse_response, write_response, FrequencyGrid, FrequencyResponse, PhaseSeries, Sequence, Unit,
};
pub use loopgain::{
    consistency_error, loop_gain, one_plus_rho, rho, update_loop_gain, Derivation, LoopGain, LoopGainDerivation,
    LoopGainUpdate,
};
pub use margins::{
    decompose_margins, find_crossovers, margin_at, normalize_deg, phase_margin_deg, summarize_margins, CrossoverKind,
    CrossoverPoint, Decomposer, Margin, MarginDecomposition, MarginSummary, Verdict,
};
pub use netsynth::{eval_network, par, random_case, ser, CaseFixture, GridSpec, NetworkElement, TheveninRl};
pub use pipeline::{assess, parallel_curves, AssessConfig, Assessment, AtStage, Stage, StageError};
pub use regions::{
    classify_crossing, classify_pm, critical_intersection, gm_circle_check, region_verdicts, winding_number,
    EncirclementResult, NyquistGeometry, Region, RegionVerdict, ResolutionWarning, WarningKind,
};
pub use report::{
    build_report, compliance_markdown, overall_verdict, parse_report, render, AssessmentReport, CurveMargins,
    Encirclements, Format, InputInfo, Loci, MarginEntry, ReportInputs, SCHEMA,
};
pub use speclimit::{
    check_compliance, compliance_table, impedance_limit, limit_curve, pm_old_at, ComplianceRecord, ComplianceVerdict,
    ImpedanceLimit, LimitCurve, LimitFlag, LimitMode, LimitPoint, MarginPolicy,
};
