//! Impedance algebra and synthetic network generation.
//!
//! A [`NetworkElement`] tree evaluates to an impedance curve. The trees double
//! as analytic oracles in tests and as the `--synth` input of the CLI.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqresp::{FrequencyGrid, FrequencyResponse, Unit};

/// Relative threshold below which a sum of impedances (or `jω − p`) counts as zero.
pub const SINGULAR_REL_TOL: f64 = 1e-12;

/// Nominal frequency at which a Thévenin X/R ratio is specified.
pub const NOMINAL_HZ: f64 = 50.0;

const MAX_GENERATION_ATTEMPTS: u64 = 16;

/// Grid size used by [`random_case`].
pub const RANDOM_CASE_POINTS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NetworkElement {
    Resistor {
        r_ohm: f64,
    },
    Inductor {
        l_henry: f64,
    },
    Capacitor {
        c_farad: f64,
    },
    /// `gain · Π(s − z) / Π(s − p)` with roots in rad/s as `[re, im]` pairs.
    Rational {
        gain: f64,
        #[serde(default)]
        zeros_rad_s: Vec<[f64; 2]>,
        #[serde(default)]
        poles_rad_s: Vec<[f64; 2]>,
    },
    /// Grid equivalent sized from short-circuit power, realized as series R–L.
    Thevenin {
        v_ll_volt: f64,
        s_sc_va: f64,
        xr: f64,
    },
    Series {
        children: Vec<NetworkElement>,
    },
    Parallel {
        children: Vec<NetworkElement>,
    },
}

/// Series R–L realization of a Thévenin equivalent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheveninRl {
    pub z_mag_ohm: f64,
    pub r_ohm: f64,
    pub l_henry: f64,
}

impl TheveninRl {
    pub fn new(v_ll_volt: f64, s_sc_va: f64, xr: f64) -> Self {
        let z_mag_ohm = v_ll_volt * v_ll_volt / s_sc_va;
        let r_ohm = z_mag_ohm / (1.0 + xr * xr).sqrt();
        let l_henry = r_ohm * xr / (2.0 * PI * NOMINAL_HZ);
        Self { z_mag_ohm, r_ohm, l_henry }
    }

    pub fn x_at(&self, f_hz: f64) -> f64 {
        2.0 * PI * f_hz * self.l_henry
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidNetwork(format!("{name} must be positive, got {v}")))
    }
}

/// Roots must be finite and complex ones must come in conjugate pairs.
fn check_roots(name: &str, roots: &[[f64; 2]]) -> Result<()> {
    if roots.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidNetwork(format!("{name} contain non-finite values")));
    }
    let mut unmatched: Vec<[f64; 2]> = roots.iter().copied().filter(|r| r[1] != 0.0).collect();
    while let Some(r) = unmatched.pop() {
        let tol = 1e-9 * (r[0].abs() + r[1].abs());
        let mate = unmatched.iter().position(|q| (q[0] - r[0]).abs() <= tol && (q[1] + r[1]).abs() <= tol);
        match mate {
            Some(i) => {
                unmatched.swap_remove(i);
            }
            None => {
                return Err(Error::InvalidNetwork(format!("{name}: {} {:+}j has no conjugate partner", r[0], r[1])))
            }
        }
    }
    Ok(())
}

impl NetworkElement {
    pub fn resistor(r_ohm: f64) -> Self {
        Self::Resistor { r_ohm }
    }

    pub fn inductor(l_henry: f64) -> Self {
        Self::Inductor { l_henry }
    }

    pub fn capacitor(c_farad: f64) -> Self {
        Self::Capacitor { c_farad }
    }

    pub fn series(children: Vec<NetworkElement>) -> Self {
        Self::Series { children }
    }

    pub fn parallel(children: Vec<NetworkElement>) -> Self {
        Self::Parallel { children }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Resistor { r_ohm } => positive("R", *r_ohm),
            Self::Inductor { l_henry } => positive("L", *l_henry),
            Self::Capacitor { c_farad } => positive("C", *c_farad),
            Self::Rational { gain, zeros_rad_s, poles_rad_s } => {
                if !(gain.is_finite() && *gain != 0.0) {
                    return Err(Error::InvalidNetwork(format!("rational gain {gain}")));
                }
                check_roots("zeros", zeros_rad_s)?;
                check_roots("poles", poles_rad_s)
            }
            Self::Thevenin { v_ll_volt, s_sc_va, xr } => {
                positive("V", *v_ll_volt)?;
                positive("S_sc", *s_sc_va)?;
                positive("X/R", *xr)
            }
            Self::Series { children } | Self::Parallel { children } => {
                if children.len() < 2 {
                    return Err(Error::InvalidNetwork(format!(
                        "composite needs at least two children, got {}",
                        children.len()
                    )));
                }
                children.iter().try_for_each(NetworkElement::validate)
            }
        }
    }

    /// Impedance at one frequency (Hz). Assumes `validate` passed.
    pub fn impedance_at(&self, f_hz: f64) -> Result<Complex64> {
        let w = 2.0 * PI * f_hz;
        let s = Complex64::new(0.0, w);
        match self {
            Self::Resistor { r_ohm } => Ok(Complex64::new(*r_ohm, 0.0)),
            Self::Inductor { l_henry } => Ok(s * l_henry),
            Self::Capacitor { c_farad } => Ok((s * c_farad).inv()),
            Self::Rational { gain, zeros_rad_s, poles_rad_s } => {
                let mut z = Complex64::new(*gain, 0.0);
                for [re, im] in zeros_rad_s {
                    z *= s - Complex64::new(*re, *im);
                }
                for [re, im] in poles_rad_s {
                    let p = Complex64::new(*re, *im);
                    let d = s - p;
                    if d.norm() <= SINGULAR_REL_TOL * w.max(p.norm()) {
                        return Err(Error::SingularAtFrequency { f_hz });
                    }
                    z /= d;
                }
                Ok(z)
            }
            Self::Thevenin { v_ll_volt, s_sc_va, xr } => {
                let rl = TheveninRl::new(*v_ll_volt, *s_sc_va, *xr);
                Ok(Complex64::new(rl.r_ohm, rl.x_at(f_hz)))
            }
            Self::Series { children } => {
                children.iter().try_fold(Complex64::new(0.0, 0.0), |acc, c| Ok(ser(acc, c.impedance_at(f_hz)?)))
            }
            Self::Parallel { children } => {
                let mut it = children.iter();
                let first =
                    it.next().ok_or_else(|| Error::InvalidNetwork("empty parallel".into()))?.impedance_at(f_hz)?;
                it.try_fold(first, |acc, c| {
                    par(acc, c.impedance_at(f_hz)?).map_err(|_| Error::SingularAtFrequency { f_hz })
                })
            }
        }
    }

    /// Multiplies the element's impedance by `k > 0` at every frequency.
    pub fn scaled(&self, k: f64) -> Self {
        match self {
            Self::Resistor { r_ohm } => Self::Resistor { r_ohm: r_ohm * k },
            Self::Inductor { l_henry } => Self::Inductor { l_henry: l_henry * k },
            Self::Capacitor { c_farad } => Self::Capacitor { c_farad: c_farad / k },
            Self::Rational { gain, zeros_rad_s, poles_rad_s } => {
                Self::Rational { gain: gain * k, zeros_rad_s: zeros_rad_s.clone(), poles_rad_s: poles_rad_s.clone() }
            }
            // V²/S_sc scales with 1/S_sc
            Self::Thevenin { v_ll_volt, s_sc_va, xr } => {
                Self::Thevenin { v_ll_volt: *v_ll_volt, s_sc_va: s_sc_va / k, xr: *xr }
            }
            Self::Series { children } => Self::Series { children: children.iter().map(|c| c.scaled(k)).collect() },
            Self::Parallel { children } => Self::Parallel { children: children.iter().map(|c| c.scaled(k)).collect() },
        }
    }

    /// True when every leaf is R, L, C or Thévenin.
    pub fn is_rlc(&self) -> bool {
        match self {
            Self::Rational { .. } => false,
            Self::Series { children } | Self::Parallel { children } => children.iter().all(NetworkElement::is_rlc),
            _ => true,
        }
    }
}

/// Evaluates `desc` on every grid point.
pub fn eval_network(desc: &NetworkElement, grid: &FrequencyGrid) -> Result<FrequencyResponse> {
    desc.validate()?;
    let samples = grid.points().iter().map(|&f| desc.impedance_at(f)).collect::<Result<Vec<_>>>()?;
    FrequencyResponse::new(grid.clone(), samples, Unit::Ohm)
}

/// Parallel combination `Z1·Z2 / (Z1 + Z2)`.
pub fn par(z1: Complex64, z2: Complex64) -> Result<Complex64> {
    let sum = z1 + z2;
    if sum.norm() < SINGULAR_REL_TOL * z1.norm().max(z2.norm()) || sum.norm() == 0.0 {
        return Err(Error::ResonanceSingular);
    }
    Ok(z1 * z2 / sum)
}

pub fn ser(z1: Complex64, z2: Complex64) -> Complex64 {
    z1 + z2
}

/// Frequency grid of a case file: explicit points or a log-spaced sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Points(Vec<f64>),
    LogSpaced { f_min_hz: f64, f_max_hz: f64, points: usize },
}

impl GridSpec {
    pub fn build(&self) -> Result<FrequencyGrid> {
        match self {
            GridSpec::Points(p) => FrequencyGrid::new(p.clone()),
            GridSpec::LogSpaced { f_min_hz, f_max_hz, points } => {
                FrequencyGrid::log_spaced(*f_min_hz, *f_max_hz, *points)
            }
        }
    }
}

/// The three impedances of one assessment plus the grid they are sampled on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFixture {
    pub z_ppm_existing: NetworkElement,
    pub z_net_old: NetworkElement,
    pub z_ppm_new: NetworkElement,
    pub grid: GridSpec,
    /// Seed that generated this case, absent for hand-written cases.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Sub-seed that produced this fixture (equals `seed` on the first attempt).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_seed: Option<u64>,
}

impl CaseFixture {
    pub fn grid(&self) -> Result<FrequencyGrid> {
        self.grid.build()
    }

    /// Evaluates `(z_ppm_existing, z_net_old, z_ppm_new)`.
    pub fn evaluate(&self) -> Result<[FrequencyResponse; 3]> {
        let grid = self.grid()?;
        Ok([
            eval_network(&self.z_ppm_existing, &grid)?.with_label("z_ppm_existing"),
            eval_network(&self.z_net_old, &grid)?.with_label("z_net_old"),
            eval_network(&self.z_ppm_new, &grid)?.with_label("z_ppm_new"),
        ])
    }
}

/// Deterministic synthetic case: a Thévenin grid with cable capacitance and
/// `n_strings − 1` other strings forms the old network; the existing and new
/// PPMs are converter-like strings.
pub fn random_case(seed: u64, n_strings: usize, span: (f64, f64)) -> Result<CaseFixture> {
    if n_strings == 0 {
        return Err(Error::Precondition("n_strings must be at least 1".into()));
    }
    let grid = FrequencyGrid::log_spaced(span.0, span.1, RANDOM_CASE_POINTS)?;
    let mut tried = Vec::new();
    for attempt in 0..MAX_GENERATION_ATTEMPTS {
        let sub_seed = seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        tried.push(sub_seed);
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed);
        let fixture = CaseFixture {
            z_ppm_existing: random_string(&mut rng),
            z_net_old: random_network(&mut rng, n_strings),
            z_ppm_new: random_string(&mut rng),
            grid: GridSpec::Points(grid.points().to_vec()),
            seed: Some(seed),
            sub_seed: Some(sub_seed),
        };
        if fixture_is_usable(&fixture) {
            return Ok(fixture);
        }
    }
    Err(Error::GenerationFailed { seed, sub_seeds: tried })
}

fn fixture_is_usable(fx: &CaseFixture) -> bool {
    let Ok(curves) = fx.evaluate() else {
        return false;
    };
    let finite_nonzero = curves.iter().all(|c| c.samples().iter().all(|z| z.norm() > 0.0));
    // |1 + ρ| bounded away from zero keeps the update algebra well conditioned
    let [_, net, new] = &curves;
    finite_nonzero
        && net.samples().iter().zip(new.samples()).all(|(a, b)| (a + b).norm() > 1e-9 * a.norm().max(b.norm()))
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// Converter string seen from its terminals: R–L branch, damped filter
/// capacitor and, sometimes, a positive-real lead–lag term.
fn random_string(rng: &mut ChaCha8Rng) -> NetworkElement {
    let branch = NetworkElement::series(vec![
        NetworkElement::resistor(log_uniform(rng, 0.5, 10.0)),
        NetworkElement::inductor(log_uniform(rng, 2e-3, 50e-3)),
    ]);
    let filter = NetworkElement::series(vec![
        NetworkElement::resistor(log_uniform(rng, 2.0, 30.0)),
        NetworkElement::capacitor(log_uniform(rng, 0.5e-6, 10e-6)),
    ]);
    let string = NetworkElement::parallel(vec![branch, filter]);
    if rng.gen_bool(0.5) {
        // k·(s + a)/(s + b) with a, b > 0 is positive real
        let a = log_uniform(rng, 2.0 * PI * 20.0, 2.0 * PI * 2000.0);
        let b = log_uniform(rng, 2.0 * PI * 20.0, 2.0 * PI * 2000.0);
        let lead_lag = NetworkElement::Rational {
            gain: log_uniform(rng, 0.2, 5.0),
            zeros_rad_s: vec![[-a, 0.0]],
            poles_rad_s: vec![[-b, 0.0]],
        };
        NetworkElement::series(vec![string, lead_lag])
    } else {
        string
    }
}

fn random_network(rng: &mut ChaCha8Rng, n_strings: usize) -> NetworkElement {
    let grid = NetworkElement::Thevenin {
        v_ll_volt: 66e3,
        s_sc_va: log_uniform(rng, 300e6, 3e9),
        xr: rng.gen_range(5.0..15.0),
    };
    let cable = NetworkElement::series(vec![
        NetworkElement::resistor(log_uniform(rng, 0.2, 5.0)),
        NetworkElement::capacitor(log_uniform(rng, 1e-6, 20e-6)),
    ]);
    let mut children = vec![grid, cable];
    children.extend((1..n_strings).map(|_| random_string(rng)));
    NetworkElement::parallel(children)
}
