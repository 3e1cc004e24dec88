//! Assessment reports: a versioned JSON document plus markdown and SVG
//! renderings (Nyquist plane with the stability regions, Bode panels).

use std::fmt::Write as _;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqresp::{FrequencyResponse, Sequence};
use crate::margins::{CrossoverKind, CrossoverPoint, MarginDecomposition, MarginSummary, Verdict};
use crate::pipeline::Assessment;
use crate::regions::{classify_pm, EncirclementResult, NyquistGeometry, Region};
use crate::speclimit::{ComplianceRecord, ComplianceVerdict, LimitCurve, LimitMode, MarginPolicy};

pub const SCHEMA: &str = "margin-gate/1";

const ASSUMPTION_STABLE_SUBSYSTEMS: &str =
    "each subsystem is stable when connected to an ideal grid (no right-half-plane poles); not verifiable from impedance data";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputInfo {
    pub label: String,
    pub sequence: Sequence,
    pub operating_point: String,
}

impl InputInfo {
    fn of(r: &FrequencyResponse) -> Self {
        Self { label: r.label().to_string(), sequence: r.sequence(), operating_point: r.operating_point().to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub points: usize,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportInputs {
    pub z_ppm_existing: InputInfo,
    pub z_net_old: InputInfo,
    pub z_ppm_new: InputInfo,
    pub grid: GridInfo,
    pub policy: MarginPolicy,
    pub limit_mode: LimitMode,
    pub assumptions: Vec<String>,
}

/// One crossover as reported. Phase crossovers are `critical` when they land
/// outside the gain-margin circle and `compliant` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginEntry {
    pub f_hz: f64,
    pub kind: CrossoverKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pm_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gm_db: Option<f64>,
    pub region: Region,
    pub l_value: Complex64,
}

impl MarginEntry {
    pub fn of(c: &CrossoverPoint, policy: &MarginPolicy) -> Self {
        let region = match (c.kind, c.pm_deg) {
            (CrossoverKind::Gain, Some(pm)) => classify_pm(pm, policy),
            _ if c.l_value.norm() > policy.gm_radius() => Region::Critical,
            _ => Region::Compliant,
        };
        Self { f_hz: c.f_hz, kind: c.kind, pm_deg: c.pm_deg, gm_db: c.gm_db, region, l_value: c.l_value }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMargins {
    pub verdict: Verdict,
    pub worst_pm_deg: Option<f64>,
    pub worst_gm_db: Option<f64>,
    pub margins: Vec<MarginEntry>,
}

impl CurveMargins {
    pub fn of(s: &MarginSummary) -> Self {
        Self {
            verdict: s.verdict,
            worst_pm_deg: s.worst_pm.as_ref().and_then(|c| c.pm_deg),
            worst_gm_db: s.worst_gm.as_ref().and_then(|c| c.gm_db),
            margins: s.crossovers.iter().map(|c| MarginEntry::of(c, &s.policy)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encirclements {
    pub l_old: EncirclementResult,
    pub l_new: EncirclementResult,
}

impl Encirclements {
    pub fn any_nonzero(&self) -> bool {
        self.l_old.winding != 0 || self.l_new.winding != 0
    }
}

/// Loop-gain curves kept for plotting; not part of the JSON document.
#[derive(Debug, Clone, PartialEq)]
pub struct Loci {
    pub l_old: FrequencyResponse,
    pub l_new: FrequencyResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentReport {
    pub schema: String,
    pub inputs: ReportInputs,
    pub l_old: CurveMargins,
    pub l_new: CurveMargins,
    pub decompositions: Vec<MarginDecomposition>,
    pub limit_curve: LimitCurve,
    pub compliance: Vec<ComplianceRecord>,
    pub encirclements: Encirclements,
    pub consistency_error: f64,
    pub overall_verdict: Verdict,
    #[serde(skip)]
    pub loci: Option<Loci>,
}

/// Worst of the new-loop verdict, any compliance violation, and any encirclement.
pub fn overall_verdict(
    l_new_verdict: Verdict,
    compliance: &[ComplianceRecord],
    encirclements: &Encirclements,
) -> Verdict {
    let mut v = l_new_verdict;
    if compliance.iter().any(|r| r.verdict == ComplianceVerdict::Violation) || encirclements.any_nonzero() {
        v = v.max(Verdict::Violation);
    }
    v
}

pub fn build_report(a: &Assessment) -> Result<AssessmentReport> {
    let grid = a.l_old.grid();
    let curves = [&a.z_ppm_existing, &a.z_net_old, &a.z_ppm_new, &a.l_new, &a.l_new_direct];
    if curves.iter().any(|c| c.grid() != grid) {
        return Err(Error::InconsistentInputs("curves are not on a common grid".into()));
    }
    if a.compliance.len() != a.limit_curve.points.len()
        || a.compliance.iter().zip(&a.limit_curve.points).any(|(c, p)| c.f_hz != p.f_hz)
    {
        return Err(Error::InconsistentInputs("compliance records do not match the limit curve".into()));
    }
    if a.decompositions.len() != a.l_new_summary.crossovers.len() {
        return Err(Error::InconsistentInputs("one decomposition per new crossover expected".into()));
    }
    let encirclements = Encirclements { l_old: a.encirclement_old.clone(), l_new: a.encirclement_new.clone() };
    Ok(AssessmentReport {
        schema: SCHEMA.to_string(),
        inputs: ReportInputs {
            z_ppm_existing: InputInfo::of(&a.z_ppm_existing),
            z_net_old: InputInfo::of(&a.z_net_old),
            z_ppm_new: InputInfo::of(&a.z_ppm_new),
            grid: GridInfo { points: grid.len(), f_min_hz: grid.first(), f_max_hz: grid.last() },
            policy: a.policy,
            limit_mode: a.limit_curve.mode,
            assumptions: vec![ASSUMPTION_STABLE_SUBSYSTEMS.to_string()],
        },
        l_old: CurveMargins::of(&a.l_old_summary),
        l_new: CurveMargins::of(&a.l_new_summary),
        decompositions: a.decompositions.clone(),
        limit_curve: a.limit_curve.clone(),
        compliance: a.compliance.clone(),
        overall_verdict: overall_verdict(a.l_new_summary.verdict, &a.compliance, &encirclements),
        encirclements,
        consistency_error: a.consistency_error,
        loci: Some(Loci { l_old: a.l_old.clone(), l_new: a.l_new.clone() }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Markdown,
    NyquistSvg,
    BodeSvg,
}

impl Format {
    pub const ALL: [Format; 4] = [Format::Json, Format::Markdown, Format::NyquistSvg, Format::BodeSvg];

    pub fn as_str(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Markdown => "markdown",
            Format::NyquistSvg => "nyquist_svg",
            Format::BodeSvg => "bode_svg",
        }
    }

    /// Default output file name.
    pub fn file_name(self) -> &'static str {
        match self {
            Format::Json => "report.json",
            Format::Markdown => "report.md",
            Format::NyquistSvg => "nyquist.svg",
            Format::BodeSvg => "bode.svg",
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "markdown" | "md" => Ok(Format::Markdown),
            "nyquist_svg" | "nyquist" => Ok(Format::NyquistSvg),
            "bode_svg" | "bode" => Ok(Format::BodeSvg),
            _ => Err(Error::UnsupportedFormat(s.to_string())),
        }
    }
}

pub fn render(report: &AssessmentReport, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Json => render_json(report),
        Format::Markdown => Ok(render_markdown(report).into_bytes()),
        Format::NyquistSvg => Ok(render_nyquist_svg(report).into_bytes()),
        Format::BodeSvg => render_bode_svg(report).map(String::into_bytes),
    }
}

fn render_json(report: &AssessmentReport) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(report).map_err(|e| Error::InconsistentInputs(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

pub fn parse_report(bytes: &[u8]) -> Result<AssessmentReport> {
    serde_json::from_slice(bytes).map_err(|e| Error::InconsistentInputs(format!("report JSON: {e}")))
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "—".to_string(), |x| format!("{x:.digits$}"))
}

/// `| f | |Z_new| | Z_limit | verdict |` rows with two decimals.
pub fn compliance_markdown(records: &[ComplianceRecord]) -> String {
    let mut out = String::from("| Frequency (Hz) | \\|Z_new\\| (Ω) | Z_limit (Ω) | Verdict |\n|---:|---:|---:|:---|\n");
    for r in records {
        let _ = writeln!(
            out,
            "| {:.2} | {:.2} | {} | {} |",
            r.f_hz,
            r.z_new_mag_ohm,
            opt(r.z_limit_ohm, 2),
            r.verdict.as_str()
        );
    }
    out
}

fn margins_markdown(out: &mut String, title: &str, m: &CurveMargins) {
    let _ = writeln!(out, "## {title}\n");
    let _ = writeln!(
        out,
        "Verdict: **{}**; worst PM {} °; worst GM {} dB\n",
        m.verdict,
        opt(m.worst_pm_deg, 2),
        opt(m.worst_gm_db, 2)
    );
    if m.margins.is_empty() {
        out.push_str("No crossovers.\n\n");
        return;
    }
    out.push_str("| Frequency (Hz) | Kind | PM (°) | GM (dB) | Region |\n|---:|:---|---:|---:|:---|\n");
    for e in &m.margins {
        let _ = writeln!(
            out,
            "| {:.2} | {} | {} | {} | {} |",
            e.f_hz,
            e.kind.as_str(),
            opt(e.pm_deg, 2),
            opt(e.gm_db, 2),
            e.region
        );
    }
    out.push('\n');
}

fn render_markdown(r: &AssessmentReport) -> String {
    let mut out = String::new();
    let p = &r.inputs.policy;
    let _ = writeln!(out, "# Stability margin assessment\n");
    let _ = writeln!(out, "Overall verdict: **{}**\n", r.overall_verdict);
    let _ = writeln!(
        out,
        "Policy: PM_min {} °, PM_caution {} °, GM_min {} dB. Grid: {} points, {} – {} Hz.\n",
        p.pm_min_deg, p.pm_cau_deg, p.gm_min_db, r.inputs.grid.points, r.inputs.grid.f_min_hz, r.inputs.grid.f_max_hz
    );
    for (name, i) in
        [("existing PPM", &r.inputs.z_ppm_existing), ("network", &r.inputs.z_net_old), ("new PPM", &r.inputs.z_ppm_new)]
    {
        let _ = write!(out, "- {name}: `{}` ({} sequence)", i.label, i.sequence);
        if !i.operating_point.is_empty() {
            let _ = write!(out, ", operating point {}", i.operating_point);
        }
        out.push('\n');
    }
    out.push('\n');
    margins_markdown(&mut out, "Existing loop gain", &r.l_old);
    margins_markdown(&mut out, "Loop gain with the new PPM", &r.l_new);

    let mode = match r.limit_curve.mode {
        LimitMode::DetectedCrossovers => "detected gain crossovers",
        LimitMode::OperatorCritical => "operator critical frequencies",
    };
    let _ = writeln!(out, "## Impedance limit ({mode})\n");
    out.push_str(&compliance_markdown(&r.compliance));
    out.push('\n');
    let _ = writeln!(
        out,
        "## Encirclements of −1\n\nExisting: {}; new: {}. Loop-gain consistency error: {:.3e}.",
        r.encirclements.l_old.winding, r.encirclements.l_new.winding, r.consistency_error
    );
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const SVG_STYLE: &str = "<style>\
.axis{stroke:#888;stroke-width:1;vector-effect:non-scaling-stroke}\
.unit-circle{fill:none;stroke:#333;stroke-width:1;vector-effect:non-scaling-stroke}\
.gm-circle{fill:none;stroke:#c0392b;stroke-width:1;stroke-dasharray:4 3;vector-effect:non-scaling-stroke}\
.wedge.critical{fill:#e74c3c;fill-opacity:0.35;stroke:none}\
.wedge.caution{fill:#f1c40f;fill-opacity:0.35;stroke:none}\
.locus{fill:none;stroke-width:1.5;vector-effect:non-scaling-stroke}\
.l_old{stroke:#2c3e50}\
.l_new{stroke:#2980b9}\
.marker{fill:#000}\
text{font-family:sans-serif;font-size:12px}\
</style>";

/// `d` attribute for a filled circular sector between two angles (degrees).
fn sector(r: f64, from_deg: f64, to_deg: f64) -> String {
    const STEPS: usize = 48;
    let mut d = String::from("M0,0");
    for k in 0..=STEPS {
        let a = (from_deg + (to_deg - from_deg) * k as f64 / STEPS as f64).to_radians();
        let _ = write!(d, " L{:.6},{:.6}", r * a.cos(), r * a.sin());
    }
    d.push_str(" Z");
    d
}

fn polyline(points: impl Iterator<Item = (f64, f64)>) -> String {
    let mut d = String::new();
    for (i, (x, y)) in points.enumerate() {
        let _ = write!(d, "{}{:.6},{:.6}", if i == 0 { "M" } else { " L" }, x, y);
    }
    d
}

/// Nyquist plane in plot units (the complex plane itself, y pointing up).
fn render_nyquist_svg(r: &AssessmentReport) -> String {
    const PX: f64 = 640.0;
    let g = NyquistGeometry::from_policy(&r.inputs.policy);
    let peak = r
        .loci
        .iter()
        .flat_map(|l| l.l_old.samples().iter().chain(l.l_new.samples()))
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let extent = (1.2 * peak).clamp(1.5, 4.0);
    let scale = 0.45 * PX / extent;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PX}\" height=\"{PX}\" viewBox=\"0 0 {PX} {PX}\">"
    );
    s.push_str(SVG_STYLE);
    s.push('\n');
    let _ = writeln!(s, "<rect width=\"{PX}\" height=\"{PX}\" fill=\"#fff\"/>");
    let _ = writeln!(
        s,
        "<defs><clipPath id=\"plot\"><rect x=\"{e:.6}\" y=\"{e:.6}\" width=\"{w:.6}\" height=\"{w:.6}\"/></clipPath></defs>",
        e = -extent,
        w = 2.0 * extent
    );
    let _ = writeln!(
        s,
        "<g transform=\"translate({c} {c}) scale({scale:.6} {neg:.6})\" clip-path=\"url(#plot)\">",
        c = PX / 2.0,
        neg = -scale
    );
    let _ = writeln!(
        s,
        "<path class=\"wedge critical\" d=\"{}\"/>",
        sector(2.0 * extent, 180.0 - g.pm_min_deg, 180.0 + g.pm_min_deg)
    );
    let _ = writeln!(
        s,
        "<path class=\"wedge caution\" d=\"{} {}\"/>",
        sector(2.0 * extent, 180.0 - g.pm_cau_deg, 180.0 - g.pm_min_deg),
        sector(2.0 * extent, 180.0 + g.pm_min_deg, 180.0 + g.pm_cau_deg)
    );
    let _ = writeln!(
        s,
        "<line class=\"axis\" x1=\"{e:.6}\" y1=\"0\" x2=\"{f:.6}\" y2=\"0\"/><line class=\"axis\" x1=\"0\" y1=\"{e:.6}\" x2=\"0\" y2=\"{f:.6}\"/>",
        e = -extent,
        f = extent
    );
    s.push_str("<circle class=\"unit-circle\" cx=\"0\" cy=\"0\" r=\"1\"/>\n");
    let _ = writeln!(s, "<circle class=\"gm-circle\" cx=\"0\" cy=\"0\" r=\"{:.6}\"/>", g.gm_radius);
    if let Some(loci) = &r.loci {
        for (name, l) in [("l_old", &loci.l_old), ("l_new", &loci.l_new)] {
            let _ = writeln!(
                s,
                "<path class=\"locus {name}\" d=\"{}\"><title>{}</title></path>",
                polyline(l.samples().iter().map(|z| (z.re, z.im))),
                xml_escape(l.label())
            );
        }
    }
    let marker_r = 0.012 * extent;
    for (name, m) in [("l_old", &r.l_old), ("l_new", &r.l_new)] {
        for e in &m.margins {
            let _ = writeln!(
                s,
                "<circle class=\"marker {name}\" cx=\"{:.6}\" cy=\"{:.6}\" r=\"{marker_r:.6}\"><title>{} {} crossover {:.2} Hz: {}</title></circle>",
                e.l_value.re,
                e.l_value.im,
                name,
                e.kind.as_str(),
                e.f_hz,
                e.region
            );
        }
    }
    s.push_str("</g>\n");
    let _ = writeln!(
        s,
        "<text x=\"12\" y=\"20\">Nyquist: L_old (dark), L_new (blue); PM_min {} °, PM_caution {} °, GM_min {} dB — {}</text>",
        r.inputs.policy.pm_min_deg, r.inputs.policy.pm_cau_deg, r.inputs.policy.gm_min_db, r.overall_verdict
    );
    s.push_str("</svg>\n");
    s
}

/// Magnitude (dB) and unwrapped phase panels over log frequency, pixel units.
fn render_bode_svg(r: &AssessmentReport) -> Result<String> {
    const W: f64 = 800.0;
    const H: f64 = 260.0;
    const LEFT: f64 = 60.0;
    const GAP: f64 = 40.0;
    let plot_w = W - LEFT - 20.0;
    let (f_lo, f_hi) = (r.inputs.grid.f_min_hz.log10(), r.inputs.grid.f_max_hz.log10());
    let x_of = |f: f64| LEFT + plot_w * (f.log10() - f_lo) / (f_hi - f_lo);

    let mut curves = Vec::new();
    if let Some(loci) = &r.loci {
        for (name, l) in [("l_old", &loci.l_old), ("l_new", &loci.l_new)] {
            let mag: Vec<f64> = l.samples().iter().map(|z| 20.0 * z.norm().log10()).collect();
            let phase = l.unwrap_phase()?.degrees().to_vec();
            curves.push((name, l.freqs().to_vec(), mag, phase));
        }
    }
    let range = |values: Vec<f64>, must: f64| {
        let (lo, hi) = values.into_iter().fold((must, must), |(a, b), v| (a.min(v), b.max(v)));
        let pad = 0.05 * (hi - lo).max(1.0);
        (lo - pad, hi + pad)
    };
    let mag_range = range(curves.iter().flat_map(|c| c.2.iter().copied()).collect(), 0.0);
    let ph_range = range(curves.iter().flat_map(|c| c.3.iter().copied()).collect(), -180.0);
    let top = [30.0, 30.0 + H + GAP];
    let y_of = |panel: usize, v: f64| {
        let (lo, hi) = if panel == 0 { mag_range } else { ph_range };
        top[panel] + H * (hi - v) / (hi - lo)
    };

    let mut s = String::new();
    let total_h = top[1] + H + 30.0;
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{total_h}\" viewBox=\"0 0 {W} {total_h}\">"
    );
    s.push_str(SVG_STYLE);
    s.push('\n');
    let _ = writeln!(s, "<rect width=\"{W}\" height=\"{total_h}\" fill=\"#fff\"/>");
    for (panel, (title, reference)) in [("|L| (dB)", 0.0), ("∠L (°, unwrapped)", -180.0)].into_iter().enumerate() {
        let _ = writeln!(
            s,
            "<rect class=\"axis\" x=\"{LEFT}\" y=\"{}\" width=\"{plot_w}\" height=\"{H}\" fill=\"none\"/>",
            top[panel]
        );
        let _ = writeln!(
            s,
            "<line class=\"axis\" x1=\"{LEFT}\" y1=\"{y:.3}\" x2=\"{:.3}\" y2=\"{y:.3}\" stroke-dasharray=\"3 3\"/>",
            LEFT + plot_w,
            y = y_of(panel, reference)
        );
        let _ = writeln!(s, "<text x=\"{LEFT}\" y=\"{}\">{}</text>", top[panel] - 8.0, xml_escape(title));
        for (name, freqs, mag, phase) in &curves {
            let vals = if panel == 0 { mag } else { phase };
            let _ = writeln!(
                s,
                "<path class=\"locus {name}\" d=\"{}\"/>",
                polyline(freqs.iter().zip(vals).map(|(f, v)| (x_of(*f), y_of(panel, *v))))
            );
        }
    }
    for (name, m) in [("l_old", &r.l_old), ("l_new", &r.l_new)] {
        for e in &m.margins {
            let x = x_of(e.f_hz);
            let _ = writeln!(
                s,
                "<line class=\"axis {name}\" x1=\"{x:.3}\" y1=\"{}\" x2=\"{x:.3}\" y2=\"{}\"><title>{} {} crossover {:.2} Hz</title></line>",
                top[0],
                top[1] + H,
                name,
                e.kind.as_str(),
                e.f_hz
            );
        }
    }
    let _ = writeln!(
        s,
        "<text x=\"{LEFT}\" y=\"{}\">{:.3e} Hz – {:.3e} Hz (log)</text>",
        top[1] + H + 20.0,
        r.inputs.grid.f_min_hz,
        r.inputs.grid.f_max_hz
    );
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsynth::random_case;
    use crate::pipeline::{assess, AssessConfig};
    use proptest::prelude::*;

    fn report(seed: u64) -> AssessmentReport {
        let [a, b, c] = random_case(seed, 3, (1.0, 1e4)).unwrap().evaluate().unwrap();
        build_report(&assess(&a, &b, &c, &AssessConfig::default()).unwrap()).unwrap()
    }

    fn enc(w: i64) -> EncirclementResult {
        EncirclementResult {
            winding: w,
            residual: 0.0,
            min_distance_to_critical_point: 1.0,
            resolution_warnings: vec![],
        }
    }

    fn rec(verdict: ComplianceVerdict) -> ComplianceRecord {
        ComplianceRecord { f_hz: 100.0, z_new_mag_ohm: 1.0, z_limit_ohm: Some(2.0), verdict }
    }

    #[test]
    fn top_level_keys_in_order() {
        let bytes = render(&report(3), Format::Json).unwrap();
        let text = std::str::from_utf8(&bytes).unwrap();
        // top-level keys sit at two-space indent in the pretty output
        let keys: Vec<&str> =
            text.lines().filter_map(|l| l.strip_prefix("  \"")).filter_map(|l| l.split('"').next()).collect();
        let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(
            keys,
            [
                "schema",
                "inputs",
                "l_old",
                "l_new",
                "decompositions",
                "limit_curve",
                "compliance",
                "encirclements",
                "consistency_error",
                "overall_verdict"
            ]
        );
        assert_eq!(v["schema"], SCHEMA);
        let entry = &v["l_new"]["margins"][0];
        if !entry.is_null() {
            for k in ["f_hz", "kind", "region"] {
                assert!(entry.get(k).is_some(), "{k}");
            }
            assert!(entry.get("pm_deg").is_some() || entry.get("gm_db").is_some());
        }
    }

    #[test]
    fn verdict_lattice() {
        let none = Encirclements { l_old: enc(0), l_new: enc(0) };
        let two = Encirclements { l_old: enc(0), l_new: enc(2) };
        let ok = [rec(ComplianceVerdict::Compliant)];
        assert_eq!(overall_verdict(Verdict::Compliant, &ok, &none), Verdict::Compliant);
        assert_eq!(overall_verdict(Verdict::Caution, &ok, &none), Verdict::Caution);
        assert_eq!(
            overall_verdict(Verdict::Compliant, &[rec(ComplianceVerdict::Violation)], &none),
            Verdict::Violation
        );
        assert_eq!(overall_verdict(Verdict::Compliant, &ok, &two), Verdict::Violation);
    }

    #[test]
    fn formats_parse() {
        for f in Format::ALL {
            assert_eq!(f.as_str().parse::<Format>().unwrap(), f);
        }
        assert_eq!("pdf".parse::<Format>(), Err(Error::UnsupportedFormat("pdf".into())));
    }

    #[test]
    fn markdown_rows_use_two_decimals() {
        let r = ComplianceRecord {
            f_hz: 354.07,
            z_new_mag_ohm: 11.22,
            z_limit_ohm: Some(201.27),
            verdict: ComplianceVerdict::Compliant,
        };
        let md = compliance_markdown(&[r]);
        assert!(md.contains("| 354.07 | 11.22 | 201.27 | compliant |"));
        let none = ComplianceRecord {
            z_limit_ohm: None,
            verdict: ComplianceVerdict::Violation,
            ..rec(ComplianceVerdict::Violation)
        };
        assert!(compliance_markdown(&[none]).contains("| 100.00 | 1.00 | — | violation |"));
    }

    #[test]
    fn nyquist_geometry_in_plot_units() {
        let svg = String::from_utf8(render(&report(5), Format::NyquistSvg).unwrap()).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let wedges = doc
            .descendants()
            .filter(|n| n.attribute("class").is_some_and(|c| c.split(' ').any(|w| w == "wedge")))
            .count();
        assert_eq!(wedges, 2);
        let radius = format!("{:.6}", 10f64.powf(-15.0 / 20.0));
        assert_eq!(radius, "0.177828");
        let gm: Vec<_> = doc.descendants().filter(|n| n.attribute("class") == Some("gm-circle")).collect();
        assert_eq!(gm.len(), 1);
        assert_eq!(gm[0].attribute("r"), Some("0.177828"));
        let loci = doc
            .descendants()
            .filter(|n| n.tag_name().name() == "path" && n.attribute("class").is_some_and(|c| c.starts_with("locus")))
            .count();
        assert_eq!(loci, 2);
        assert!(!svg.contains("href"));
    }

    #[test]
    fn bode_is_well_formed() {
        let svg = String::from_utf8(render(&report(6), Format::BodeSvg).unwrap()).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let loci = doc
            .descendants()
            .filter(|n| n.tag_name().name() == "path" && n.attribute("class").is_some_and(|c| c.starts_with("locus")))
            .count();
        assert_eq!(loci, 4);
    }

    #[test]
    fn inconsistent_inputs_rejected() {
        let [a, b, c] = random_case(2, 2, (1.0, 1e4)).unwrap().evaluate().unwrap();
        let mut out = assess(&a, &b, &c, &AssessConfig::default()).unwrap();
        out.compliance.push(rec(ComplianceVerdict::Compliant));
        assert!(matches!(build_report(&out), Err(Error::InconsistentInputs(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn json_round_trip_is_lossless(seed in 0u64..10_000) {
            let r = report(seed);
            let bytes = render(&r, Format::Json).unwrap();
            let back = parse_report(&bytes).unwrap();
            prop_assert_eq!(&back, &AssessmentReport { loci: None, ..r.clone() });
            prop_assert_eq!(render(&back, Format::Json).unwrap(), bytes);
        }

        #[test]
        fn adding_a_violation_never_improves(seed in 0u64..10_000) {
            let r = report(seed);
            let mut worse = r.compliance.clone();
            worse.push(rec(ComplianceVerdict::Violation));
            let v = overall_verdict(r.l_new.verdict, &worse, &r.encirclements);
            prop_assert!(v >= r.overall_verdict);
            prop_assert!(v >= Verdict::Violation);
        }
    }
}
