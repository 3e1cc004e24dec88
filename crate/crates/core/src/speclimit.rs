//! Phase-margin headroom and the maximum allowable impedance of a newly
//! connected PPM:
//!
//! ```text
//! |Z_new(f)| ≤ |Z_net,old(f)| / (2 · sin(ΔPM / 2)),   ΔPM = PM_old(f) − PM_min
//! ```
//!
//! evaluated either at the detected gain crossovers of the new loop gain or
//! at an operator-specified set of critical frequencies.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqresp::{sin_deg, FrequencyResponse};
use crate::margins::phase_margin_deg;

/// Operator margin thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginPolicy {
    pub pm_min_deg: f64,
    pub pm_cau_deg: f64,
    pub gm_min_db: f64,
}

impl Default for MarginPolicy {
    /// Offshore defaults: PM_min 15°, caution 30°, GM_min 15 dB.
    fn default() -> Self {
        Self { pm_min_deg: 15.0, pm_cau_deg: 30.0, gm_min_db: 15.0 }
    }
}

impl MarginPolicy {
    pub fn new(pm_min_deg: f64, pm_cau_deg: f64, gm_min_db: f64) -> Result<Self> {
        let p = Self { pm_min_deg, pm_cau_deg, gm_min_db };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.pm_min_deg > 0.0
            && self.pm_min_deg <= self.pm_cau_deg
            && self.pm_cau_deg < 180.0
            && self.gm_min_db >= 0.0
            && self.gm_min_db.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "policy needs 0 < pm_min ≤ pm_cau < 180 and gm_min ≥ 0, got ({}, {}, {})",
                self.pm_min_deg, self.pm_cau_deg, self.gm_min_db
            )))
        }
    }

    pub fn gm_min_lin(&self) -> f64 {
        10f64.powf(self.gm_min_db / 20.0)
    }

    /// Radius of the gain-margin circle, `1 / GM_lin`.
    pub fn gm_radius(&self) -> f64 {
        10f64.powf(-self.gm_min_db / 20.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitFlag {
    /// ΔPM ≤ 0: the existing plant already misses PM_min here.
    PreexistingViolation,
    /// |1 + ρ| < 1, where the geometric bound behind the limit does not hold.
    #[serde(rename = "bound_caveat_r_lt_1")]
    BoundCaveatRLt1,
    /// ΔPM ≥ 180°, sine argument clamped at 90°.
    Unconstrained,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpedanceLimit {
    pub z_limit_ohm: Option<f64>,
    pub delta_pm_deg: f64,
    pub flags: BTreeSet<LimitFlag>,
}

/// Phase margin of the old loop gain at `f`, `180° + ∠L_old(f)` in (−180°, 180°].
pub fn pm_old_at(l_old: &FrequencyResponse, f_hz: f64) -> Result<f64> {
    Ok(phase_margin_deg(l_old.value_at(f_hz)?))
}

/// Maximum allowable `|Z_new|` for the given network magnitude and old margin.
pub fn impedance_limit(z_net_old_mag: f64, pm_old_deg: f64, policy: &MarginPolicy) -> Result<ImpedanceLimit> {
    if !(z_net_old_mag > 0.0 && z_net_old_mag.is_finite()) {
        return Err(Error::NonpositiveImpedanceMagnitude(z_net_old_mag));
    }
    let delta_pm_deg = pm_old_deg - policy.pm_min_deg;
    let mut flags = BTreeSet::new();
    let z_limit_ohm = if delta_pm_deg <= 0.0 {
        flags.insert(LimitFlag::PreexistingViolation);
        None
    } else {
        let half = if delta_pm_deg >= 180.0 {
            flags.insert(LimitFlag::Unconstrained);
            90.0
        } else {
            delta_pm_deg / 2.0
        };
        Some(z_net_old_mag / (2.0 * sin_deg(half)))
    };
    Ok(ImpedanceLimit { z_limit_ohm, delta_pm_deg, flags })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitMode {
    /// Gain crossovers of the new loop gain.
    DetectedCrossovers,
    /// Frequencies supplied by the system operator.
    OperatorCritical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitPoint {
    pub f_hz: f64,
    pub z_net_old_mag_ohm: f64,
    pub pm_old_deg: f64,
    pub delta_pm_deg: f64,
    pub z_limit_ohm: Option<f64>,
    /// `|1 + ρ(f)|` when ρ is known.
    pub r_diag: Option<f64>,
    pub flags: BTreeSet<LimitFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCurve {
    pub mode: LimitMode,
    pub points: Vec<LimitPoint>,
}

impl LimitCurve {
    pub fn freqs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.f_hz).collect()
    }
}

/// Limit at each of `freqs`.
///
/// Headroom is measured from the angular distance `|PM_old|` of the old loop
/// gain to the negative real axis, so crossings above and below the axis are
/// treated alike. `one_plus_rho`, when given, feeds the `|1 + ρ|` diagnostic.
pub fn limit_curve(
    l_old: &FrequencyResponse,
    z_net_old: &FrequencyResponse,
    one_plus_rho: Option<&FrequencyResponse>,
    freqs: &[f64],
    mode: LimitMode,
    policy: &MarginPolicy,
) -> Result<LimitCurve> {
    let points = freqs
        .iter()
        .map(|&f| {
            let pm_old_deg = pm_old_at(l_old, f)?;
            let z_net_old_mag_ohm = z_net_old.value_at(f)?.norm();
            let lim = impedance_limit(z_net_old_mag_ohm, pm_old_deg.abs(), policy)?;
            let mut flags = lim.flags;
            let r_diag = match one_plus_rho {
                Some(d) => {
                    let r = d.value_at(f)?.norm();
                    if r < 1.0 {
                        flags.insert(LimitFlag::BoundCaveatRLt1);
                    }
                    Some(r)
                }
                None => None,
            };
            Ok(LimitPoint {
                f_hz: f,
                z_net_old_mag_ohm,
                pm_old_deg,
                delta_pm_deg: lim.delta_pm_deg,
                z_limit_ohm: lim.z_limit_ohm,
                r_diag,
                flags,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LimitCurve { mode, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplianceVerdict {
    Compliant,
    Violation,
}

impl ComplianceVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            ComplianceVerdict::Compliant => "compliant",
            ComplianceVerdict::Violation => "violation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceRecord {
    pub f_hz: f64,
    pub z_new_mag_ohm: f64,
    pub z_limit_ohm: Option<f64>,
    pub verdict: ComplianceVerdict,
}

/// `|Z_new(f)| ≤ Z_limit(f)` at every limit frequency; boundary counts as compliant.
pub fn check_compliance(z_new: &FrequencyResponse, limits: &LimitCurve) -> Result<Vec<ComplianceRecord>> {
    limits
        .points
        .iter()
        .map(|p| {
            let z_new_mag_ohm = z_new.value_at(p.f_hz)?.norm();
            let verdict = match p.z_limit_ohm {
                Some(lim) if z_new_mag_ohm <= lim => ComplianceVerdict::Compliant,
                _ => ComplianceVerdict::Violation,
            };
            Ok(ComplianceRecord { f_hz: p.f_hz, z_new_mag_ohm, z_limit_ohm: p.z_limit_ohm, verdict })
        })
        .collect()
}

/// `freq_hz,z_new_ohm,z_limit_ohm,verdict` table; an absent limit is an empty field.
pub fn compliance_table(records: &[ComplianceRecord]) -> String {
    let mut out = String::from("freq_hz,z_new_ohm,z_limit_ohm,verdict\n");
    for r in records {
        let lim = r.z_limit_ohm.map(|v| format!("{v:?}")).unwrap_or_default();
        let _ = writeln!(out, "{:?},{:?},{},{}", r.f_hz, r.z_new_mag_ohm, lim, r.verdict.as_str());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freqresp::{FrequencyGrid, Unit};
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn constant(z: Complex64) -> FrequencyResponse {
        FrequencyResponse::new(FrequencyGrid::new(vec![10.0, 100.0, 1000.0]).unwrap(), vec![z; 3], Unit::Dimensionless)
            .unwrap()
    }

    #[test]
    fn policy_validation() {
        assert!(MarginPolicy::new(15.0, 30.0, 15.0).is_ok());
        assert!(MarginPolicy::new(0.0, 30.0, 15.0).is_err());
        assert!(MarginPolicy::new(31.0, 30.0, 15.0).is_err());
        assert!(MarginPolicy::new(15.0, 180.0, 15.0).is_err());
        assert!(MarginPolicy::new(15.0, 30.0, -1.0).is_err());
        assert_eq!(MarginPolicy::default(), MarginPolicy::new(15.0, 30.0, 15.0).unwrap());
    }

    #[test]
    fn pm_old_examples() {
        let l = constant(Complex64::from_polar(1.0, (-120f64).to_radians()));
        assert!((pm_old_at(&l, 50.0).unwrap() - 60.0).abs() < 1e-12);
        let l = constant(Complex64::new(-1.0, 0.0));
        assert_eq!(pm_old_at(&l, 500.0).unwrap(), 0.0);
        assert!(matches!(pm_old_at(&l, 5.0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn limit_examples() {
        let p = MarginPolicy::default();
        let lim = impedance_limit(10.0, 75.0, &p).unwrap();
        assert_eq!(lim.delta_pm_deg, 60.0);
        assert!((lim.z_limit_ohm.unwrap() - 10.0).abs() < 1e-12);
        assert!(lim.flags.is_empty());

        let lim = impedance_limit(10.0, 15.0, &p).unwrap();
        assert_eq!(lim.z_limit_ohm, None);
        assert!(lim.flags.contains(&LimitFlag::PreexistingViolation));

        // ΔPM = 180° needs pm_old = 195°, outside the normalized range but accepted here
        let lim = impedance_limit(8.0, 195.0, &p).unwrap();
        assert_eq!(lim.z_limit_ohm, Some(4.0));
        assert!(lim.flags.contains(&LimitFlag::Unconstrained));

        assert!(matches!(impedance_limit(0.0, 75.0, &p), Err(Error::NonpositiveImpedanceMagnitude(_))));
    }

    fn table_curve(rows: &[(f64, f64)]) -> LimitCurve {
        // ΔPM = 60° makes the limit equal to |Z_net,old|
        let p = MarginPolicy::default();
        LimitCurve {
            mode: LimitMode::DetectedCrossovers,
            points: rows
                .iter()
                .map(|&(f, z_limit)| {
                    let lim = impedance_limit(z_limit, p.pm_min_deg + 60.0, &p).unwrap();
                    LimitPoint {
                        f_hz: f,
                        z_net_old_mag_ohm: z_limit,
                        pm_old_deg: p.pm_min_deg + 60.0,
                        delta_pm_deg: lim.delta_pm_deg,
                        z_limit_ohm: lim.z_limit_ohm,
                        r_diag: None,
                        flags: lim.flags,
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn reference_rows_get_expected_verdicts() {
        let rows = [(354.07, 11.22, 201.27), (794.76, 70.03, 7.15), (1628.8, 194.24, 156.76)];
        let grid = FrequencyGrid::new(rows.iter().map(|r| r.0).collect()).unwrap();
        let z_new =
            FrequencyResponse::new(grid, rows.iter().map(|r| Complex64::new(0.0, r.1)).collect(), Unit::Ohm).unwrap();
        let curve = table_curve(&rows.iter().map(|r| (r.0, r.2)).collect::<Vec<_>>());
        let recs = check_compliance(&z_new, &curve).unwrap();
        let verdicts: Vec<_> = recs.iter().map(|r| r.verdict).collect();
        assert_eq!(
            verdicts,
            [ComplianceVerdict::Compliant, ComplianceVerdict::Violation, ComplianceVerdict::Violation]
        );
        let table = compliance_table(&recs);
        assert!(table.starts_with("freq_hz,z_new_ohm,z_limit_ohm,verdict\n"));
        assert!(table.contains(",violation\n"));
    }

    #[test]
    fn boundary_is_compliant_and_preexisting_is_violation() {
        let z_new = constant(Complex64::new(10.0, 0.0));
        let mut curve = table_curve(&[(10.0, 10.0), (100.0, 10.0)]);
        curve.points[0].z_limit_ohm = Some(10.0);
        curve.points[1].z_limit_ohm = None;
        curve.points[1].flags.insert(LimitFlag::PreexistingViolation);
        let recs = check_compliance(&z_new, &curve).unwrap();
        assert_eq!(recs[0].verdict, ComplianceVerdict::Compliant);
        assert_eq!(recs[1].verdict, ComplianceVerdict::Violation);
        assert_eq!(recs[1].z_limit_ohm, None);
    }

    #[test]
    fn limit_curve_flags_small_r() {
        let l_old = constant(Complex64::from_polar(1.0, (-100f64).to_radians()));
        let z_net = constant(Complex64::new(3.0, 4.0));
        let d = constant(Complex64::new(0.5, 0.0));
        let p = MarginPolicy::default();
        let c = limit_curve(&l_old, &z_net, Some(&d), &[50.0], LimitMode::OperatorCritical, &p).unwrap();
        let pt = &c.points[0];
        assert!((pt.z_net_old_mag_ohm - 5.0).abs() < 1e-12);
        assert!((pt.delta_pm_deg - 65.0).abs() < 1e-9);
        assert_eq!(pt.r_diag, Some(0.5));
        assert!(pt.flags.contains(&LimitFlag::BoundCaveatRLt1));
        let expected = 5.0 / (2.0 * (32.5f64).to_radians().sin());
        assert!((pt.z_limit_ohm.unwrap() - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn chord_identity() {
        for deg in -180..=180 {
            let th = (deg as f64).to_radians();
            let chord = (Complex64::from_polar(1.0, th) - 1.0).norm();
            assert!((chord - 2.0 * (th / 2.0).sin().abs()).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn limit_decreases_with_headroom(z in 1e-3f64..1e4, a in 0.01f64..180.0, b in 0.01f64..180.0) {
            prop_assume!((a - b).abs() > 1e-6);
            let p = MarginPolicy::default();
            let la = impedance_limit(z, p.pm_min_deg + a, &p).unwrap().z_limit_ohm.unwrap();
            let lb = impedance_limit(z, p.pm_min_deg + b, &p).unwrap().z_limit_ohm.unwrap();
            prop_assert_eq!(a < b, la > lb);
        }

        #[test]
        fn limit_scales_with_network(z in 1e-3f64..1e4, k in 1e-3f64..1e3, d in 0.01f64..179.0) {
            let p = MarginPolicy::default();
            let a = impedance_limit(z, p.pm_min_deg + d, &p).unwrap().z_limit_ohm.unwrap();
            let b = impedance_limit(z * k, p.pm_min_deg + d, &p).unwrap().z_limit_ohm.unwrap();
            prop_assert!((b - k * a).abs() <= 1e-12 * b);
        }

        #[test]
        fn limit_matches_closed_form(z in 1e-3f64..1e4, d in 0.01f64..179.99) {
            let p = MarginPolicy::default();
            let lim = impedance_limit(z, p.pm_min_deg + d, &p).unwrap();
            let expected = z / (2.0 * (lim.delta_pm_deg / 2.0).to_radians().sin());
            prop_assert!((lim.z_limit_ohm.unwrap() - expected).abs() <= 1e-12 * expected);
        }
    }
}
