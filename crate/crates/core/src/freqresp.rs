//! Complex frequency-response curves: grids, table I/O, log-frequency
//! interpolation, grid alignment and phase unwrapping.
//!
//! Every impedance `Z(jω)` and loop gain `L(jω)` in the crate is a
//! [`FrequencyResponse`]. Curves are immutable once built.

use std::f64::consts::PI;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points closer than this (relative) are treated as one when merging grids.
const MERGE_REL_TOL: f64 = 1e-12;

/// Strictly increasing, positive frequency axis in Hz with at least two points.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid(Vec<f64>);

impl FrequencyGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid(format!("need at least two points, got {}", points.len())));
        }
        if let Some(bad) = points.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
            return Err(Error::InvalidGrid(format!("frequency {bad} is not positive and finite")));
        }
        if let Some(w) = points.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!("not strictly increasing: {} then {}", w[0], w[1])));
        }
        Ok(Self(points))
    }

    /// `n` logarithmically spaced points from `f_min` to `f_max` inclusive.
    pub fn log_spaced(f_min: f64, f_max: f64, n: usize) -> Result<Self> {
        if !(f_min > 0.0 && f_max > f_min && f_max.is_finite()) {
            return Err(Error::InvalidGrid(format!("invalid span [{f_min}, {f_max}]")));
        }
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least two points, got {n}")));
        }
        let (a, b) = (f_min.ln(), f_max.ln());
        let step = (b - a) / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| (a + step * i as f64).exp()).collect();
        points[0] = f_min;
        points[n - 1] = f_max;
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.0[0]
    }

    pub fn last(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    pub fn contains(&self, f: f64) -> bool {
        f >= self.first() && f <= self.last()
    }

    fn check_in_span(&self, f: f64) -> Result<()> {
        if self.contains(f) {
            Ok(())
        } else {
            Err(Error::OutOfRange { f_hz: f, lo: self.first(), hi: self.last() })
        }
    }

    /// Index of the node equal to `f`, or the interval `[i, i+1]` holding it.
    fn locate(&self, f: f64) -> Location {
        let i = self.0.partition_point(|&x| x < f);
        if i < self.0.len() && self.0[i] == f {
            Location::Node(i)
        } else {
            Location::Between(i - 1)
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Location {
    Node(usize),
    Between(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Ohm,
    Dimensionless,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sequence {
    Positive,
    Negative,
    #[default]
    Untagged,
}

impl Sequence {
    pub fn as_str(self) -> &'static str {
        match self {
            Sequence::Positive => "positive",
            Sequence::Negative => "negative",
            Sequence::Untagged => "untagged",
        }
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Sequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positive" => Ok(Sequence::Positive),
            "negative" => Ok(Sequence::Negative),
            "untagged" | "" => Ok(Sequence::Untagged),
            other => Err(Error::InvalidResponse(format!("unknown sequence `{other}`"))),
        }
    }
}

/// A complex-valued curve sampled on a [`FrequencyGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    grid: FrequencyGrid,
    samples: Vec<Complex64>,
    unit: Unit,
    sequence: Sequence,
    label: String,
    operating_point: String,
}

impl FrequencyResponse {
    pub fn new(grid: FrequencyGrid, samples: Vec<Complex64>, unit: Unit) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::InvalidResponse(format!("{} samples for {} grid points", samples.len(), grid.len())));
        }
        if let Some(i) = samples.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidResponse(format!("non-finite sample at {} Hz", grid.points()[i])));
        }
        Ok(Self {
            grid,
            samples,
            unit,
            sequence: Sequence::Untagged,
            label: String::new(),
            operating_point: String::new(),
        })
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(grid: FrequencyGrid, unit: Unit, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let samples = grid.points().iter().map(|&x| f(x)).collect();
        Self::new(grid, samples, unit)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_sequence(mut self, sequence: Sequence) -> Self {
        self.sequence = sequence;
        self
    }

    pub fn with_operating_point(mut self, operating_point: impl Into<String>) -> Self {
        self.operating_point = operating_point.into();
        self
    }

    /// Copies sequence and operating point from `other`.
    pub fn with_metadata_of(mut self, other: &FrequencyResponse) -> Self {
        self.sequence = other.sequence;
        self.operating_point = other.operating_point.clone();
        self
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn freqs(&self) -> &[f64] {
        self.grid.points()
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn sequence(&self) -> Sequence {
        self.sequence
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn operating_point(&self) -> &str {
        &self.operating_point
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Pointwise map onto a new unit; metadata other than the label is kept.
    pub fn map(&self, unit: Unit, f: impl Fn(Complex64) -> Complex64) -> Result<Self> {
        let samples = self.samples.iter().map(|&z| f(z)).collect();
        Ok(Self::new(self.grid.clone(), samples, unit)?.with_metadata_of(self))
    }

    pub fn conj(&self) -> Self {
        let mut out = self.clone();
        out.samples.iter_mut().for_each(|z| *z = z.conj());
        out
    }

    pub fn scaled(&self, k: Complex64) -> Result<Self> {
        Ok(self.map(self.unit, |z| z * k)?.with_label(self.label.clone()))
    }

    /// Interpolated value at `f` (Hz).
    ///
    /// Nodes are returned bit-for-bit. Between nodes, log-magnitude and the
    /// minimal-step phase are interpolated linearly in log-frequency.
    pub fn value_at(&self, f: f64) -> Result<Complex64> {
        self.grid.check_in_span(f)?;
        Ok(match self.grid.locate(f) {
            Location::Node(i) => self.samples[i],
            Location::Between(i) => self.segment(i).eval(f),
        })
    }

    pub(crate) fn segment(&self, i: usize) -> Segment {
        let (f0, f1) = (self.grid.0[i], self.grid.0[i + 1]);
        let (z0, z1) = (self.samples[i], self.samples[i + 1]);
        let shape = if z0.norm() == 0.0 || z1.norm() == 0.0 {
            // log-magnitude undefined; fall back to rectangular parts
            SegmentShape::Rectangular { z0, z1 }
        } else {
            let ph0 = z0.arg();
            SegmentShape::Polar { ln_m0: z0.norm().ln(), ln_m1: z1.norm().ln(), ph0, dph: minimal_step(z1.arg() - ph0) }
        };
        Segment { ln_f0: f0.ln(), ln_f1: f1.ln(), shape }
    }

    /// Phase in degrees, each node within ±180° of its predecessor.
    pub fn unwrap_phase(&self) -> Result<PhaseSeries> {
        let mut degrees = Vec::with_capacity(self.samples.len());
        let mut prev: Option<f64> = None;
        for (z, &f) in self.samples.iter().zip(self.freqs()) {
            if z.norm() == 0.0 {
                return Err(Error::ZeroMagnitudeSample { f_hz: f });
            }
            let principal = z.arg();
            let phase = match prev {
                None => principal,
                Some(p) => p + minimal_step(principal - p),
            };
            degrees.push(phase.to_degrees());
            prev = Some(phase);
        }
        Ok(PhaseSeries { grid: self.grid.clone(), degrees })
    }

    /// Resample onto `grid` via [`value_at`](Self::value_at).
    pub fn resample(&self, grid: &FrequencyGrid) -> Result<Self> {
        if grid == &self.grid {
            return Ok(self.clone());
        }
        let samples = grid.points().iter().map(|&f| self.value_at(f)).collect::<Result<Vec<_>>>()?;
        let mut out = Self::new(grid.clone(), samples, self.unit)?.with_metadata_of(self);
        out.label = self.label.clone();
        Ok(out)
    }
}

/// Wraps an angle difference (radians) into `[-π, π)`; a half-turn resolves
/// to the negative step.
pub(crate) fn minimal_step(d: f64) -> f64 {
    let tau = 2.0 * PI;
    let w = d - tau * ((d + PI) / tau).floor();
    // floor can land exactly on the upper edge after rounding
    if w >= PI {
        w - tau
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Segment {
    ln_f0: f64,
    ln_f1: f64,
    shape: SegmentShape,
}

#[derive(Debug, Clone, Copy)]
enum SegmentShape {
    Polar { ln_m0: f64, ln_m1: f64, ph0: f64, dph: f64 },
    Rectangular { z0: Complex64, z1: Complex64 },
}

impl Segment {
    fn t(&self, f: f64) -> f64 {
        (f.ln() - self.ln_f0) / (self.ln_f1 - self.ln_f0)
    }

    pub(crate) fn eval(&self, f: f64) -> Complex64 {
        let t = self.t(f);
        match self.shape {
            SegmentShape::Polar { ln_m0, ln_m1, ph0, dph } => {
                Complex64::from_polar((ln_m0 + t * (ln_m1 - ln_m0)).exp(), ph0 + t * dph)
            }
            SegmentShape::Rectangular { z0, z1 } => z0 + (z1 - z0) * t,
        }
    }

    /// Natural log of the interpolated magnitude.
    pub(crate) fn ln_mag(&self, f: f64) -> f64 {
        match self.shape {
            SegmentShape::Polar { ln_m0, ln_m1, .. } => ln_m0 + self.t(f) * (ln_m1 - ln_m0),
            SegmentShape::Rectangular { .. } => self.eval(f).norm().ln(),
        }
    }

    /// Interpolated phase in degrees relative to the left node's phase.
    pub(crate) fn phase_offset_deg(&self, f: f64) -> f64 {
        match self.shape {
            SegmentShape::Polar { dph, .. } => (self.t(f) * dph).to_degrees(),
            SegmentShape::Rectangular { z0, .. } => minimal_step(self.eval(f).arg() - z0.arg()).to_degrees(),
        }
    }
}

/// Unwrapped phase (degrees) on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSeries {
    grid: FrequencyGrid,
    degrees: Vec<f64>,
}

impl PhaseSeries {
    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }
}

/// Resamples every response onto the union of grid points inside the common span.
pub fn align(responses: &[FrequencyResponse]) -> Result<Vec<FrequencyResponse>> {
    let Some(first) = responses.first() else {
        return Ok(Vec::new());
    };
    if responses.iter().all(|r| r.grid == first.grid) {
        return Ok(responses.to_vec());
    }
    let lo = responses.iter().map(|r| r.grid.first()).fold(f64::MIN, f64::max);
    let hi = responses.iter().map(|r| r.grid.last()).fold(f64::MAX, f64::min);
    if lo >= hi {
        return Err(Error::DisjointSpans);
    }
    let mut union: Vec<f64> =
        responses.iter().flat_map(|r| r.freqs().iter().copied()).filter(|&f| f >= lo && f <= hi).collect();
    union.sort_by(f64::total_cmp);
    let mut merged: Vec<f64> = Vec::with_capacity(union.len());
    for f in union {
        match merged.last() {
            Some(&p) if f - p <= MERGE_REL_TOL * f => {}
            _ => merged.push(f),
        }
    }
    // keep the exact span end even if a near-duplicate swallowed it
    if let Some(last) = merged.last_mut() {
        *last = hi;
    }
    let grid = FrequencyGrid::new(merged).map_err(|_| Error::DisjointSpans)?;
    responses.iter().map(|r| r.resample(&grid)).collect()
}

const HEADERS: [(&str, Unit, bool); 4] = [
    ("freq_hz,re_ohm,im_ohm", Unit::Ohm, false),
    ("freq_hz,mag_ohm,phase_deg", Unit::Ohm, true),
    ("freq_hz,re,im", Unit::Dimensionless, false),
    ("freq_hz,mag,phase_deg", Unit::Dimensionless, true),
];

/// Parses the comma-separated impedance / loop-gain table format.
pub fn parse_response(bytes: &[u8]) -> Result<FrequencyResponse> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::InvalidResponse(format!("not UTF-8: {e}")))?;
    text.parse()
}

impl FromStr for FrequencyResponse {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut sequence = Sequence::Untagged;
        let mut label = String::new();
        let mut operating_point = String::new();
        let mut format: Option<(Unit, bool)> = None;
        let mut freqs = Vec::new();
        let mut samples = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((key, value)) = comment.trim().split_once('=') {
                    match key.trim() {
                        "sequence" => sequence = value.trim().parse()?,
                        "label" => label = value.trim().to_string(),
                        "operating_point" => operating_point = value.trim().to_string(),
                        _ => {}
                    }
                }
                continue;
            }
            let Some((_, polar)) = format else {
                let header: String = line.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_lowercase();
                let found = HEADERS.iter().find(|(h, _, _)| *h == header);
                match found {
                    Some(&(_, unit, polar)) => format = Some((unit, polar)),
                    None => return Err(Error::UnknownHeader(line.to_string())),
                }
                continue;
            };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::MalformedRow {
                    line: line_no,
                    reason: format!("expected 3 fields, found {}", fields.len()),
                });
            }
            let mut vals = [0.0f64; 3];
            for (v, s) in vals.iter_mut().zip(&fields) {
                *v = s
                    .parse()
                    .map_err(|_| Error::MalformedRow { line: line_no, reason: format!("`{s}` is not a number") })?;
                if !v.is_finite() {
                    return Err(Error::NonFiniteValue { line: line_no });
                }
            }
            let [f, a, b] = vals;
            if f <= 0.0 {
                return Err(Error::MalformedRow { line: line_no, reason: format!("frequency {f} is not positive") });
            }
            if let Some(&prev) = freqs.last() {
                if f <= prev {
                    return Err(Error::NonMonotonicFrequency { line: line_no, prev, next: f });
                }
            }
            let z = if polar {
                // columns are (mag, phase_deg); exact at quadrant angles
                Complex64::new(a * cos_deg(b), a * sin_deg(b))
            } else {
                Complex64::new(a, b)
            };
            freqs.push(f);
            samples.push(z);
        }

        let Some((unit, _)) = format else {
            return Err(Error::EmptyTable);
        };
        if samples.is_empty() {
            return Err(Error::EmptyTable);
        }
        let grid = FrequencyGrid::new(freqs)?;
        Ok(FrequencyResponse::new(grid, samples, unit)?
            .with_sequence(sequence)
            .with_label(label)
            .with_operating_point(operating_point))
    }
}

fn cos_deg(deg: f64) -> f64 {
    sin_deg(deg + 90.0)
}

/// Sine of an angle in degrees, exact at multiples of 30°.
pub(crate) fn sin_deg(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    let (a, sign) = match r {
        r if r <= 90.0 => (r, 1.0),
        r if r <= 180.0 => (180.0 - r, 1.0),
        r if r <= 270.0 => (r - 180.0, -1.0),
        r => (360.0 - r, -1.0),
    };
    let v = if a == 0.0 {
        0.0
    } else if a == 30.0 {
        0.5
    } else if a == 90.0 {
        1.0
    } else {
        a.to_radians().sin()
    };
    sign * v
}

/// Serializes in rectangular form with metadata comment lines.
pub fn write_response(resp: &FrequencyResponse) -> Vec<u8> {
    let mut out = String::with_capacity(64 + resp.len() * 64);
    let clean = |s: &str| s.replace(['\n', '\r'], " ");
    let _ = writeln!(out, "# label={}", clean(&resp.label));
    let _ = writeln!(out, "# sequence={}", resp.sequence);
    let _ = writeln!(out, "# operating_point={}", clean(&resp.operating_point));
    out.push_str(match resp.unit {
        Unit::Ohm => "freq_hz,re_ohm,im_ohm\n",
        Unit::Dimensionless => "freq_hz,re,im\n",
    });
    for (f, z) in resp.freqs().iter().zip(&resp.samples) {
        let _ = writeln!(out, "{f:?},{:?},{:?}", z.re, z.im);
    }
    out.into_bytes()
}
