//! Nyquist-plane geometry: critical and caution wedges around the negative
//! real axis, the gain-margin circle, and encirclement counting of −1.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqresp::FrequencyResponse;
use crate::margins::{find_crossovers, phase_margin_deg, CrossoverKind, CrossoverPoint};
use crate::speclimit::MarginPolicy;

const UNIT_CIRCLE_TOL: f64 = 1e-6;
const CRITICAL_POINT_TOL: f64 = 1e-12;
const WINDING_RESIDUAL_MAX: f64 = 0.01;
const COARSE_STEP_DEG: f64 = 90.0;
const CLOSURE_WARN_DISTANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Critical,
    Caution,
    Compliant,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::Critical => "critical",
            Region::Caution => "caution",
            Region::Compliant => "compliant",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Region of a phase margin. Compared by angular distance to the negative
/// real axis, so a crossing at +170° is as critical as one at −170°.
pub fn classify_pm(pm_deg: f64, policy: &MarginPolicy) -> Region {
    let pm = pm_deg.abs();
    if pm < policy.pm_min_deg {
        Region::Critical
    } else if pm < policy.pm_cau_deg {
        Region::Caution
    } else {
        Region::Compliant
    }
}

pub fn classify_crossing(l_value: Complex64, policy: &MarginPolicy) -> Result<Region> {
    let magnitude = l_value.norm();
    if (magnitude - 1.0).abs() >= UNIT_CIRCLE_TOL {
        return Err(Error::NotOnUnitCircle { magnitude });
    }
    Ok(classify_pm(phase_margin_deg(l_value), policy))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionVerdict {
    pub crossover: CrossoverPoint,
    pub region: Region,
}

/// Flags phase crossovers landing outside the gain-margin circle.
pub fn gm_circle_check(
    phase_crossovers: &[CrossoverPoint],
    policy: &MarginPolicy,
) -> Result<Vec<(CrossoverPoint, bool)>> {
    let radius = policy.gm_radius();
    phase_crossovers
        .iter()
        .map(|c| {
            if c.kind != CrossoverKind::Phase {
                return Err(Error::KindMismatch("phase"));
            }
            Ok((c.clone(), c.l_value.norm() > radius))
        })
        .collect()
}

/// Every gain crossover with its region; `violates` iff any is critical.
pub fn critical_intersection(l: &FrequencyResponse, policy: &MarginPolicy) -> Result<(bool, Vec<RegionVerdict>)> {
    let mut offenders = Vec::new();
    for c in find_crossovers(l, CrossoverKind::Gain)? {
        let region = classify_pm(c.pm_deg.unwrap_or_else(|| phase_margin_deg(c.l_value)), policy);
        if region == Region::Critical {
            offenders.push(RegionVerdict { crossover: c, region });
        }
    }
    Ok((!offenders.is_empty(), offenders))
}

/// All gain crossovers with their regions.
pub fn region_verdicts(l: &FrequencyResponse, policy: &MarginPolicy) -> Result<Vec<RegionVerdict>> {
    find_crossovers(l, CrossoverKind::Gain)?
        .into_iter()
        .map(|c| {
            let region = classify_pm(c.pm_deg.unwrap_or_else(|| phase_margin_deg(c.l_value)), policy);
            Ok(RegionVerdict { crossover: c, region })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningKind {
    /// Consecutive samples turn more than 90° around −1.
    CoarseStep,
    /// A straight closure segment passes close to −1.
    ClosureNearCritical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionWarning {
    pub kind: WarningKind,
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
    /// Step angle in degrees, or closure distance to −1.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncirclementResult {
    /// Clockwise encirclements of −1 (negative means counter-clockwise).
    pub winding: i64,
    pub residual: f64,
    pub min_distance_to_critical_point: f64,
    pub resolution_warnings: Vec<ResolutionWarning>,
}

fn distance_to_segment(p: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = (((p - a) * ab.conj()).re / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Clockwise turns of a closed polygon around −1; the last vertex joins the first.
///
/// Returns the raw turn count (before rounding) and the index of every edge
/// whose turn exceeds 90°.
pub fn contour_winding(points: &[Complex64]) -> (f64, Vec<(usize, f64)>) {
    let mut total = 0.0;
    let mut coarse = Vec::new();
    let n = points.len();
    for i in 0..n {
        let a = points[i] + 1.0;
        let b = points[(i + 1) % n] + 1.0;
        // principal increment of arg along a → b
        let step = (b * a.conj()).arg().to_degrees();
        if step.abs() > COARSE_STEP_DEG {
            coarse.push((i, step));
        }
        total += step;
    }
    (-total / 360.0, coarse)
}

/// Encirclements of −1 by the Nyquist contour of `l`.
///
/// The contour runs over the negative-frequency mirror (`conj L`, ω from −f_max
/// to −f_min), closes straight to `L(f_min)`, follows the sampled locus up to
/// `f_max`, and closes straight back to the mirror.
pub fn winding_number(l: &FrequencyResponse) -> Result<EncirclementResult> {
    let freqs = l.freqs();
    let samples = l.samples();
    let n = samples.len();
    for (f, z) in freqs.iter().zip(samples) {
        if (z + 1.0).norm() <= CRITICAL_POINT_TOL {
            return Err(Error::CriticalPointOnLocus { f_hz: *f });
        }
    }

    let mut contour: Vec<Complex64> = samples.iter().rev().map(|z| z.conj()).collect();
    contour.extend_from_slice(samples);
    let (turns, coarse) = contour_winding(&contour);
    let winding = turns.round();
    let residual = (turns - winding).abs();
    if residual >= WINDING_RESIDUAL_MAX {
        return Err(Error::AmbiguousWinding { residual });
    }

    let critical = Complex64::new(-1.0, 0.0);
    let mut warnings = Vec::new();
    // mirrored steps repeat the positive ones; report each frequency interval once
    for (i, step) in coarse {
        if i >= n && i + 1 < 2 * n {
            let k = i - n;
            warnings.push(ResolutionWarning {
                kind: WarningKind::CoarseStep,
                f_lo_hz: freqs[k],
                f_hi_hz: freqs[k + 1],
                value: step.abs(),
            });
        }
    }
    let closures = [(freqs[0], samples[0]), (freqs[n - 1], samples[n - 1])];
    for (f, z) in closures {
        let d = distance_to_segment(critical, z.conj(), z);
        if d < CLOSURE_WARN_DISTANCE {
            warnings.push(ResolutionWarning {
                kind: WarningKind::ClosureNearCritical,
                f_lo_hz: f,
                f_hi_hz: f,
                value: d,
            });
        }
    }
    warnings.sort_by(|a, b| a.f_lo_hz.total_cmp(&b.f_lo_hz));

    let m = contour.len();
    let min_distance_to_critical_point =
        (0..m).map(|i| distance_to_segment(critical, contour[i], contour[(i + 1) % m])).fold(f64::INFINITY, f64::min);

    Ok(EncirclementResult {
        winding: winding as i64,
        residual,
        min_distance_to_critical_point,
        resolution_warnings: warnings,
    })
}

/// Wedge and circle parameters for plotting the stability regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NyquistGeometry {
    /// Critical wedge: rays at `180° ± pm_min_deg` about the origin.
    pub pm_min_deg: f64,
    /// Caution band: between the `pm_min` and `pm_cau` rays on each side.
    pub pm_cau_deg: f64,
    pub gm_radius: f64,
}

impl NyquistGeometry {
    pub fn from_policy(policy: &MarginPolicy) -> Self {
        Self { pm_min_deg: policy.pm_min_deg, pm_cau_deg: policy.pm_cau_deg, gm_radius: policy.gm_radius() }
    }

    /// Unit vector of the ray at `180° + offset_deg`.
    pub fn ray(offset_deg: f64) -> Complex64 {
        Complex64::from_polar(1.0, (180.0 + offset_deg).to_radians())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freqresp::{FrequencyGrid, Unit};
    use crate::loopgain::loop_gain;
    use crate::netsynth::random_case;
    use proptest::prelude::*;

    fn polar(deg: f64) -> Complex64 {
        Complex64::from_polar(1.0, deg.to_radians())
    }

    fn three_pole(k: f64, n: usize) -> FrequencyResponse {
        let grid = FrequencyGrid::log_spaced(0.01, 1e6, n).unwrap();
        FrequencyResponse::from_fn(grid, Unit::Dimensionless, |f| {
            Complex64::new(k, 0.0) / Complex64::new(1.0, f / 100.0).powi(3)
        })
        .unwrap()
    }

    /// Sign changes in the first column of the Routh array of a cubic
    /// `s³ + a2·s² + a1·s + a0`, i.e. the number of right-half-plane roots.
    fn routh_cubic(a2: f64, a1: f64, a0: f64) -> usize {
        let b1 = (a2 * a1 - a0) / a2;
        let col = [1.0, a2, b1, a0];
        col.windows(2).filter(|w| w[0].signum() != w[1].signum()).count()
    }

    #[test]
    fn crossing_classification() {
        let p = MarginPolicy::default();
        assert_eq!(classify_crossing(polar(-170.0), &p).unwrap(), Region::Critical);
        assert_eq!(classify_crossing(polar(-160.0), &p).unwrap(), Region::Caution);
        assert_eq!(classify_crossing(polar(-140.0), &p).unwrap(), Region::Compliant);
        assert_eq!(classify_crossing(polar(170.0), &p).unwrap(), Region::Critical);
        assert!(matches!(classify_crossing(Complex64::new(0.5, 0.0), &p), Err(Error::NotOnUnitCircle { .. })));
    }

    #[test]
    fn boundaries_are_exact() {
        let p = MarginPolicy::default();
        assert_eq!(classify_pm(15.0, &p), Region::Caution);
        assert_eq!(classify_pm(30.0, &p), Region::Compliant);
        assert_eq!(classify_pm(14.999_999, &p), Region::Critical);
        assert_eq!(classify_pm(29.999_999, &p), Region::Caution);
    }

    #[test]
    fn gm_circle() {
        let p = MarginPolicy::default();
        assert!((p.gm_radius() - 10f64.powf(-0.75)).abs() < 1e-12);
        assert!((p.gm_radius() - 0.177_828).abs() < 1e-6);
        let pc = |m: f64| CrossoverPoint::new(CrossoverKind::Phase, 100.0, Complex64::new(-m, 0.0)).unwrap();
        let out = gm_circle_check(&[pc(0.4), pc(0.1)], &p).unwrap();
        assert!(out[0].1);
        assert!(!out[1].1);
        assert!(gm_circle_check(&[], &p).unwrap().is_empty());
        let gc = CrossoverPoint::new(CrossoverKind::Gain, 100.0, polar(-100.0)).unwrap();
        assert_eq!(gm_circle_check(&[gc], &p), Err(Error::KindMismatch("phase")));
    }

    #[test]
    fn routh_oracle_windings() {
        // (1 + s)³ + k  with s normalized to the pole frequency
        assert_eq!(routh_cubic(3.0, 3.0, 11.0), 2);
        assert_eq!(routh_cubic(3.0, 3.0, 4.0), 0);
        let r = winding_number(&three_pole(10.0, 4000)).unwrap();
        assert_eq!(r.winding as usize, routh_cubic(3.0, 3.0, 11.0));
        assert!(r.residual < 0.01);
        let r = winding_number(&three_pole(3.0, 4000)).unwrap();
        assert_eq!(r.winding as usize, routh_cubic(3.0, 3.0, 4.0));
        assert!(r.resolution_warnings.is_empty());
    }

    #[test]
    fn constant_locus_does_not_encircle() {
        let grid = FrequencyGrid::log_spaced(1.0, 1e3, 10).unwrap();
        let l = FrequencyResponse::from_fn(grid, Unit::Dimensionless, |_| Complex64::new(0.5, 0.0)).unwrap();
        let r = winding_number(&l).unwrap();
        assert_eq!(r.winding, 0);
        assert!((r.min_distance_to_critical_point - 1.5).abs() < 1e-15);
    }

    #[test]
    fn critical_point_on_locus() {
        let grid = FrequencyGrid::log_spaced(1.0, 1e3, 10).unwrap();
        let l = FrequencyResponse::from_fn(grid, Unit::Dimensionless, |_| Complex64::new(-1.0, 0.0)).unwrap();
        assert!(matches!(winding_number(&l), Err(Error::CriticalPointOnLocus { .. })));
    }

    #[test]
    fn coarse_sampling_warns() {
        let r = winding_number(&three_pole(10.0, 12)).unwrap_or_else(|e| panic!("{e}"));
        assert!(r.resolution_warnings.iter().any(|w| w.kind == WarningKind::CoarseStep));
    }

    #[test]
    fn closure_near_critical_warns() {
        // ends just beside −1 at the top frequency
        let grid = FrequencyGrid::log_spaced(1.0, 1e3, 200).unwrap();
        let l = FrequencyResponse::from_fn(grid, Unit::Dimensionless, |f| {
            Complex64::from_polar(0.5 + 0.45 * (f / 1e3), (-180.0 * f.log10() / 3.0).to_radians() * 0.99)
        })
        .unwrap();
        let r = winding_number(&l).unwrap();
        assert!(r.resolution_warnings.iter().any(|w| w.kind == WarningKind::ClosureNearCritical && w.f_lo_hz == 1e3));
    }

    #[test]
    fn critical_intersection_cases() {
        let p = MarginPolicy::default();
        let grid = FrequencyGrid::log_spaced(1.0, 1e4, 2000).unwrap();
        let first = FrequencyResponse::from_fn(grid.clone(), Unit::Dimensionless, |f| {
            Complex64::new(2.0, 0.0) / Complex64::new(1.0, f / 100.0)
        })
        .unwrap();
        let (v, off) = critical_intersection(&first, &p).unwrap();
        assert!(!v && off.is_empty());

        // magnitude falls through 1 at 100 Hz with phase pinned at −170°
        let steep = FrequencyResponse::from_fn(grid.clone(), Unit::Dimensionless, |f| {
            Complex64::from_polar(100.0 / f, (-170f64).to_radians())
        })
        .unwrap();
        let (v, off) = critical_intersection(&steep, &p).unwrap();
        assert!(v);
        assert_eq!(off.len(), 1);
        assert!((off[0].crossover.f_hz - 100.0).abs() < 1e-6);

        let half = FrequencyResponse::from_fn(grid, Unit::Dimensionless, |_| Complex64::new(0.5, 0.0)).unwrap();
        assert_eq!(critical_intersection(&half, &p).unwrap(), (false, vec![]));
    }

    #[test]
    fn reversed_conjugate_contour_is_equivalent() {
        let l = three_pole(10.0, 800);
        let mut contour: Vec<Complex64> = l.samples().iter().rev().map(|z| z.conj()).collect();
        contour.extend_from_slice(l.samples());
        let (w, _) = contour_winding(&contour);
        // pointwise conjugate, traversed backwards
        let mirrored: Vec<Complex64> = contour.iter().rev().map(|z| z.conj()).collect();
        let (wm, _) = contour_winding(&mirrored);
        assert!((w - wm).abs() < 1e-9);
        // pointwise conjugate alone flips orientation
        assert_eq!(winding_number(&l.conj()).unwrap().winding, -2);
    }

    proptest! {
        #[test]
        fn tightening_never_relaxes(pm in -180.0f64..180.0, lo in 1.0f64..40.0, bump in 0.0f64..40.0, cau in 0.0f64..60.0) {
            let a = MarginPolicy { pm_min_deg: lo, pm_cau_deg: lo + bump + cau, gm_min_db: 15.0 };
            let b = MarginPolicy { pm_min_deg: lo + bump, ..a };
            prop_assert!(classify_pm(pm, &b) <= classify_pm(pm, &a));
        }

        #[test]
        fn inside_unit_circle_never_encircles(seed in 0u64..300, shrink in 0.01f64..0.99) {
            let fx = random_case(seed, 2, (1.0, 1e4)).unwrap();
            let [z_ppm, z_net, _] = fx.evaluate().unwrap();
            let l = loop_gain(&z_net, &z_ppm).unwrap().curve;
            let peak = l.samples().iter().map(|z| z.norm()).fold(0.0, f64::max);
            let inside = l.map(Unit::Dimensionless, |z| z * (shrink / peak)).unwrap();
            prop_assert_eq!(winding_number(&inside).unwrap().winding, 0);
        }

        #[test]
        fn conjugate_flips_winding(seed in 0u64..300) {
            let fx = random_case(seed, 3, (1.0, 1e4)).unwrap();
            let [z_ppm, z_net, _] = fx.evaluate().unwrap();
            let l = loop_gain(&z_net, &z_ppm).unwrap().curve;
            if let (Ok(a), Ok(b)) = (winding_number(&l), winding_number(&l.conj())) {
                prop_assert_eq!(a.winding, -b.winding);
            }
        }
    }
}
