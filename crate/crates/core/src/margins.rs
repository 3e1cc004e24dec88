//! Crossover detection and phase / gain margins.
//!
//! Gain crossovers are sign changes of `ln|L|`; phase crossovers are passages
//! of the unwrapped phase through any `−180° + k·360°` level. Both are
//! bracketed on the sample grid and refined by bisection on the log-frequency
//! interpolant, so every reported point lies on the same curve that
//! [`FrequencyResponse::value_at`] evaluates.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqresp::{FrequencyResponse, Segment};
use crate::loopgain::{one_plus_rho, SENSITIVITY_FLOOR};
use crate::regions::{classify_pm, Region};
use crate::speclimit::MarginPolicy;

/// Crossovers closer than this relative spacing are merged.
const MERGE_REL: f64 = 1e-6;
/// Tolerance used when checking a value against its crossover kind.
const KIND_TOL: f64 = 1e-6;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossoverKind {
    /// `|L| = 1`
    Gain,
    /// `∠L = −180°`
    Phase,
}

impl CrossoverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CrossoverKind::Gain => "gain",
            CrossoverKind::Phase => "phase",
        }
    }
}

/// Overall margin verdict, ordered from best to worst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Compliant,
    Caution,
    Violation,
    /// Assessment could not be completed; only produced at the reporting layer.
    Error,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Compliant => "compliant",
            Verdict::Caution => "caution",
            Verdict::Violation => "violation",
            Verdict::Error => "error",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverPoint {
    pub kind: CrossoverKind,
    pub f_hz: f64,
    /// Interpolated loop gain at `f_hz`.
    pub l_value: Complex64,
    pub pm_deg: Option<f64>,
    pub gm_lin: Option<f64>,
    pub gm_db: Option<f64>,
}

impl CrossoverPoint {
    pub fn new(kind: CrossoverKind, f_hz: f64, l_value: Complex64) -> Result<Self> {
        let (pm_deg, gm_lin, gm_db) = match margin_at(kind, l_value)? {
            Margin::Phase { pm_deg } => (Some(pm_deg), None, None),
            Margin::Gain { gm_lin, gm_db } => (None, Some(gm_lin), Some(gm_db)),
        };
        Ok(Self { kind, f_hz, l_value, pm_deg, gm_lin, gm_db })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Margin {
    Phase { pm_deg: f64 },
    Gain { gm_lin: f64, gm_db: f64 },
}

/// Wraps degrees into (−180°, 180°].
pub fn normalize_deg(x: f64) -> f64 {
    let r = x - 360.0 * ((x - 180.0) / 360.0).ceil();
    if r <= -180.0 {
        r + 360.0
    } else {
        r
    }
}

/// `180° + ∠l`, normalized to (−180°, 180°].
pub fn phase_margin_deg(l: Complex64) -> f64 {
    normalize_deg(180.0 + l.arg().to_degrees())
}

/// Phase margin for a gain crossover value, gain margin for a phase crossover value.
pub fn margin_at(kind: CrossoverKind, l_value: Complex64) -> Result<Margin> {
    match kind {
        CrossoverKind::Gain => {
            if (l_value.norm() - 1.0).abs() >= KIND_TOL {
                return Err(Error::KindMismatch("gain"));
            }
            Ok(Margin::Phase { pm_deg: phase_margin_deg(l_value) })
        }
        CrossoverKind::Phase => {
            if 180.0 - l_value.arg().to_degrees().abs() >= KIND_TOL || l_value.norm() == 0.0 {
                return Err(Error::KindMismatch("phase"));
            }
            let gm_lin = 1.0 / l_value.norm();
            Ok(Margin::Gain { gm_lin, gm_db: 20.0 * gm_lin.log10() })
        }
    }
}

/// Root of `h` on `[f_lo, f_hi]` by bisection in log-frequency; `h` must change sign.
fn bisect(f_lo: f64, f_hi: f64, h: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (f_lo.ln(), f_hi.ln());
    let lo_positive = h(f_lo) > 0.0;
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (h(mid.exp()) > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp().clamp(f_lo, f_hi)
}

/// All crossovers of one kind, sorted by frequency.
pub fn find_crossovers(l: &FrequencyResponse, kind: CrossoverKind) -> Result<Vec<CrossoverPoint>> {
    // unwrap also rejects zero-magnitude samples
    let phase = l.unwrap_phase()?;
    let freqs = l.freqs();
    let samples = l.samples();
    let n = freqs.len();
    let mut found: Vec<(f64, Complex64)> = Vec::new();

    match kind {
        CrossoverKind::Gain => {
            let g: Vec<f64> = samples.iter().map(|z| z.norm().ln()).collect();
            for i in 0..n {
                if g[i] == 0.0 {
                    found.push((freqs[i], samples[i]));
                }
                if i + 1 < n && g[i] * g[i + 1] < 0.0 {
                    let seg: Segment = l.segment(i);
                    let f = bisect(freqs[i], freqs[i + 1], |x| seg.ln_mag(x));
                    found.push((f, seg.eval(f)));
                }
            }
        }
        CrossoverKind::Phase => {
            let ph = phase.degrees();
            let on_level = |d: f64| (d + 180.0).rem_euclid(360.0) == 0.0;
            for i in 0..n {
                if on_level(ph[i]) {
                    found.push((freqs[i], samples[i]));
                }
                if i + 1 < n {
                    let (a, b) = (ph[i], ph[i + 1]);
                    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                    let level = -180.0 + 360.0 * (((lo + 180.0) / 360.0).floor() + 1.0);
                    if level > lo && level < hi {
                        let seg = l.segment(i);
                        let f = bisect(freqs[i], freqs[i + 1], |x| a + seg.phase_offset_deg(x) - level);
                        found.push((f, seg.eval(f)));
                    }
                }
            }
        }
    }

    found.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut merged: Vec<(f64, Complex64)> = Vec::with_capacity(found.len());
    for item in found {
        match merged.last() {
            Some(&(f_prev, _)) if (item.0 - f_prev) / f_prev < MERGE_REL => {}
            _ => merged.push(item),
        }
    }
    merged.into_iter().map(|(f, z)| CrossoverPoint::new(kind, f, z)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginSummary {
    pub crossovers: Vec<CrossoverPoint>,
    pub worst_pm: Option<CrossoverPoint>,
    pub worst_gm: Option<CrossoverPoint>,
    pub policy: MarginPolicy,
    pub verdict: Verdict,
}

impl MarginSummary {
    pub fn gain_crossovers(&self) -> impl Iterator<Item = &CrossoverPoint> {
        self.crossovers.iter().filter(|c| c.kind == CrossoverKind::Gain)
    }

    pub fn phase_crossovers(&self) -> impl Iterator<Item = &CrossoverPoint> {
        self.crossovers.iter().filter(|c| c.kind == CrossoverKind::Phase)
    }
}

/// Crossovers of both kinds, worst cases and the policy verdict.
///
/// The worst phase margin is the gain crossover closest in angle to the
/// negative real axis (smallest `|pm_deg|`).
pub fn summarize_margins(l: &FrequencyResponse, policy: &MarginPolicy) -> Result<MarginSummary> {
    let mut crossovers = find_crossovers(l, CrossoverKind::Gain)?;
    crossovers.extend(find_crossovers(l, CrossoverKind::Phase)?);
    crossovers.sort_by(|a, b| a.f_hz.total_cmp(&b.f_hz));

    let pm_distance = |c: &CrossoverPoint| c.pm_deg.map_or(f64::INFINITY, f64::abs);
    let worst_pm = crossovers
        .iter()
        .filter(|c| c.kind == CrossoverKind::Gain)
        .min_by(|a, b| pm_distance(a).total_cmp(&pm_distance(b)))
        .cloned();
    let worst_gm = crossovers
        .iter()
        .filter(|c| c.kind == CrossoverKind::Phase)
        .max_by(|a, b| a.l_value.norm().total_cmp(&b.l_value.norm()))
        .cloned();

    let pm_region = worst_pm.as_ref().and_then(|c| c.pm_deg).map(|pm| classify_pm(pm, policy));
    let gm_violated = crossovers.iter().filter_map(|c| c.gm_db).any(|gm| gm < policy.gm_min_db);
    let verdict = if gm_violated || pm_region == Some(Region::Critical) {
        Verdict::Violation
    } else if pm_region == Some(Region::Caution) {
        Verdict::Caution
    } else {
        Verdict::Compliant
    };
    Ok(MarginSummary { crossovers, worst_pm, worst_gm, policy: *policy, verdict })
}

/// New-loop margins expressed through the old loop gain and `1 + ρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginDecomposition {
    pub kind: CrossoverKind,
    pub f_hz: f64,
    /// `180° + ∠L_old(f)`, normalized; `|L_old(f)|` need not be 1.
    pub pm_old_newgc_deg: f64,
    pub angle_one_plus_rho_deg: f64,
    pub pm_new_deg: f64,
    pub gm_new_lin: f64,
    pub abs_one_plus_rho: f64,
    pub l_old_mag: f64,
}

/// Evaluates decompositions at many frequencies against one `(L_old, ρ)` pair.
#[derive(Debug, Clone)]
pub struct Decomposer<'a> {
    l_old: &'a FrequencyResponse,
    one_plus_rho: FrequencyResponse,
}

impl<'a> Decomposer<'a> {
    pub fn new(l_old: &'a FrequencyResponse, rho: &FrequencyResponse) -> Result<Self> {
        if l_old.grid() != rho.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { l_old, one_plus_rho: one_plus_rho(rho)? })
    }

    pub fn at(&self, f_hz: f64, kind: CrossoverKind) -> Result<MarginDecomposition> {
        let l_old = self.l_old.value_at(f_hz)?;
        let d = self.one_plus_rho.value_at(f_hz)?;
        if d.norm() < SENSITIVITY_FLOOR {
            return Err(Error::SingularSensitivity { f_hz });
        }
        let pm_old_newgc_deg = phase_margin_deg(l_old);
        let angle_one_plus_rho_deg = d.arg().to_degrees();
        Ok(MarginDecomposition {
            kind,
            f_hz,
            pm_old_newgc_deg,
            angle_one_plus_rho_deg,
            pm_new_deg: normalize_deg(pm_old_newgc_deg - angle_one_plus_rho_deg),
            gm_new_lin: d.norm() / l_old.norm(),
            abs_one_plus_rho: d.norm(),
            l_old_mag: l_old.norm(),
        })
    }
}

/// `PM_new = PM_old(f) − ∠(1 + ρ(f))` and `GM_new = |1 + ρ(f)| / |L_old(f)|`.
///
/// `1 + ρ` is interpolated as its own curve, which keeps the result identical
/// (to rounding) to margins read directly off `L_old / (1 + ρ)`.
pub fn decompose_margins(
    l_old: &FrequencyResponse,
    rho: &FrequencyResponse,
    f_hz: f64,
    kind: CrossoverKind,
) -> Result<MarginDecomposition> {
    Decomposer::new(l_old, rho)?.at(f_hz, kind)
}
