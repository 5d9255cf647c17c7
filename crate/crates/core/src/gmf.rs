//! C-band geophysical model functions and their inversion to wind speed.
//!
//! The default model is CMOD5.N (neutral-wind CMOD5, 28 coefficients). Other
//! variants can be added by implementing [`GeophysicalModel`] and extending
//! [`model_by_name`].

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SPEED: f64 = 0.2;
pub const MAX_SPEED: f64 = 50.0;
/// Relative bracket width at which bisection stops.
pub const BISECTION_REL_TOL: f64 = 1e-8;
/// Contract between LUT inversion and exact inversion.
pub const LUT_MAX_ERROR_MPS: f64 = 0.1;
/// LUT validation stops at this fraction of the speed where σ0 peaks.
pub const PEAK_MARGIN: f64 = 0.8;

/// Maps wind and geometry to sea-surface NRCS (linear power).
pub trait GeophysicalModel: Send + Sync {
    fn name(&self) -> &'static str;

    /// Unchecked evaluation; callers validate the domain.
    fn sigma0(&self, speed: f64, phi_deg: f64, theta_deg: f64) -> f64;
}

/// Looks up a registered model.
pub fn model_by_name(name: &str) -> Option<&'static dyn GeophysicalModel> {
    match name.to_ascii_lowercase().as_str() {
        "cmod5n" | "cmod5.n" | "cmod5_n" => Some(&Cmod5n),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmfInputs {
    pub speed: f64,
    /// Wind-to-antenna azimuth difference, degrees; 0 is upwind.
    pub relative_direction: f64,
    pub incidence_angle: f64,
}

impl GmfInputs {
    pub fn new(speed: f64, relative_direction: f64, incidence_angle: f64) -> Result<Self> {
        if !(speed > 0.0 && speed <= MAX_SPEED) {
            return Err(Error::Domain {
                field: "wind_speed",
                value: speed,
                allowed: "(0, 50] m/s",
            });
        }
        check_geometry(relative_direction, incidence_angle)?;
        Ok(Self {
            speed,
            relative_direction: normalize_direction(relative_direction),
            incidence_angle,
        })
    }
}

fn check_geometry(phi: f64, theta: f64) -> Result<()> {
    if !phi.is_finite() {
        return Err(Error::Domain {
            field: "relative_direction",
            value: phi,
            allowed: "finite degrees",
        });
    }
    if !(18.0..=50.0).contains(&theta) {
        return Err(Error::Domain {
            field: "incidence_angle",
            value: theta,
            allowed: "[18, 50] degrees",
        });
    }
    Ok(())
}

/// Wraps degrees into `[0, 360)`.
pub fn normalize_direction(phi: f64) -> f64 {
    let r = phi.rem_euclid(360.0);
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Folds a direction onto `[0, 180]` using the model's even symmetry.
pub fn fold_direction(phi: f64) -> f64 {
    let r = normalize_direction(phi);
    if r > 180.0 {
        360.0 - r
    } else {
        r
    }
}

/// Normalized radar cross-section, linear power.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Nrcs(pub f64);

impl Nrcs {
    pub fn new(sigma0: f64) -> Result<Self> {
        if sigma0 > 0.0 && sigma0.is_finite() {
            Ok(Self(sigma0))
        } else {
            Err(Error::Domain {
                field: "sigma0",
                value: sigma0,
                allowed: "finite and > 0",
            })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// CMOD5.N, Hersbach (2010) coefficient set.
#[derive(Debug, Clone, Copy, Default)]
pub struct Cmod5n;

// 1-based in the literature; index 0 is padding.
const C: [f64; 29] = [
    0.0, -0.6878, -0.7957, 0.3380, -0.1728, 0.0000, 0.0040, 0.1103, 0.0159, 6.7329, 2.7713,
    -2.2885, 0.4971, -0.7250, 0.0450, 0.0066, 0.3222, 0.0120, 22.7000, 2.0813, 3.0000, 8.3659,
    -3.3428, 1.3236, 6.2437, 2.3893, 0.3249, 4.1590, 1.6930,
];

const THETA_MID: f64 = 40.0;
const THETA_HALF_RANGE: f64 = 25.0;
const HARMONIC_POWER: f64 = 1.6;

impl GeophysicalModel for Cmod5n {
    fn name(&self) -> &'static str {
        "cmod5n"
    }

    fn sigma0(&self, v: f64, phi_deg: f64, theta_deg: f64) -> f64 {
        // Folding first keeps the model exactly even in direction.
        let cos_phi = fold_direction(phi_deg).to_radians().cos();
        let cos_2phi = 2.0 * cos_phi * cos_phi - 1.0;
        let x = (theta_deg - THETA_MID) / THETA_HALF_RANGE;
        let xx = x * x;

        // Isotropic term B0.
        let a0 = C[1] + C[2] * x + C[3] * xx + C[4] * x * xx;
        let a1 = C[5] + C[6] * x;
        let a2 = C[7] + C[8] * x;
        let gamma = C[9] + C[10] * x + C[11] * xx;
        let s0 = C[12] + C[13] * x;
        let s = a2 * v;
        let mut a3 = 1.0 / (1.0 + (-s.max(s0)).exp());
        if s < s0 {
            a3 *= (s / s0).powf(s0 * (1.0 - a3));
        }
        let b0 = a3.powf(gamma) * 10f64.powf(a0 + a1 * v);

        // Upwind/downwind term B1.
        let b1 = C[15] * v * (0.5 + x - (4.0 * (x + C[16] + C[17] * v)).tanh());
        let b1 = (C[14] * (1.0 + x) - b1) / ((0.34 * (v - C[18])).exp() + 1.0);

        // Upwind/crosswind term B2.
        let y0 = C[19];
        let pn = C[20];
        let a = y0 - (y0 - 1.0) / pn;
        let b = 1.0 / (pn * (y0 - 1.0).powf(pn - 1.0));
        let v0 = C[21] + C[22] * x + C[23] * xx;
        let d1 = C[24] + C[25] * x + C[26] * xx;
        let d2 = C[27] + C[28] * x;
        let mut v2 = v / v0 + 1.0;
        if v2 < y0 {
            v2 = a + b * (v2 - 1.0).powf(pn);
        }
        let b2 = (-d1 + d2 * v2) * (-v2).exp();

        b0 * (1.0 + b1 * cos_phi + b2 * cos_2phi).powf(HARMONIC_POWER)
    }
}

/// Forward CMOD5.N evaluation with domain checks.
pub fn forward(input: &GmfInputs) -> Result<Nrcs> {
    forward_with(&Cmod5n, input)
}

pub fn forward_with(model: &dyn GeophysicalModel, input: &GmfInputs) -> Result<Nrcs> {
    let checked = GmfInputs::new(input.speed, input.relative_direction, input.incidence_angle)?;
    Nrcs::new(model.sigma0(
        checked.speed,
        checked.relative_direction,
        checked.incidence_angle,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InversionFlag {
    Ok,
    ClampedLow,
    ClampedHigh,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub speed: f64,
    pub flag: InversionFlag,
}

impl Inversion {
    fn low() -> Self {
        Self {
            speed: MIN_SPEED,
            flag: InversionFlag::ClampedLow,
        }
    }

    fn high() -> Self {
        Self {
            speed: MAX_SPEED,
            flag: InversionFlag::ClampedHigh,
        }
    }
}

/// Exact inversion of CMOD5.N for speed at known direction and incidence.
pub fn invert_speed(sigma0: Nrcs, phi: f64, theta: f64) -> Result<Inversion> {
    invert_speed_with(&Cmod5n, sigma0, phi, theta)
}

/// Bracketing bisection on the rising branch of `model` in speed.
///
/// The model saturates and turns over somewhere above ~25 m/s; the scan walks
/// up from [`MIN_SPEED`] and bisects the first bracket that crosses `sigma0`,
/// so the lowest-speed solution is returned. Targets above every value on
/// `[MIN_SPEED, MAX_SPEED]` clamp high.
pub fn invert_speed_with(
    model: &dyn GeophysicalModel,
    sigma0: Nrcs,
    phi: f64,
    theta: f64,
) -> Result<Inversion> {
    check_geometry(phi, theta)?;
    let target = sigma0.value();
    if !(target.is_finite() && target > 0.0) {
        return Err(Error::Domain {
            field: "sigma0",
            value: target,
            allowed: "finite and > 0",
        });
    }
    let phi = normalize_direction(phi);
    let f = |v: f64| model.sigma0(v, phi, theta);

    let mut lo = MIN_SPEED;
    let mut f_lo = f(lo);
    if target <= f_lo {
        return Ok(Inversion::low());
    }
    const SCAN_STEP: f64 = 0.5;
    loop {
        if lo >= MAX_SPEED {
            return Ok(Inversion::high());
        }
        let hi = (lo + SCAN_STEP).min(MAX_SPEED);
        let f_hi = f(hi);
        if f_hi >= target && f_lo < target {
            return Ok(Inversion {
                speed: bisect(&f, target, lo, hi),
                flag: InversionFlag::Ok,
            });
        }
        lo = hi;
        f_lo = f_hi;
    }
}

/// Requires `f(lo) < target <= f(hi)`.
fn bisect(f: &impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    while hi - lo > BISECTION_REL_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Strictly increasing sample positions along one LUT axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis(Vec<f64>);

impl Axis {
    pub fn new(name: &'static str, nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(format!(
                "LUT {name} grid must hold at least two strictly increasing values"
            )));
        }
        Ok(Self(nodes))
    }

    /// `n` evenly spaced nodes from `start` to `end` inclusive.
    pub fn linspace(name: &'static str, start: f64, end: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("LUT {name} grid needs >= 2 nodes")));
        }
        let step = (end - start) / (n - 1) as f64;
        Self::new(name, (0..n).map(|i| start + step * i as f64).collect())
    }

    pub fn nodes(&self) -> &[f64] {
        &self.0
    }

    fn len(&self) -> usize {
        self.0.len()
    }

    fn first(&self) -> f64 {
        self.0[0]
    }

    fn last(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    /// Cell index and fractional offset; `x` must lie in range.
    fn locate(&self, x: f64) -> (usize, f64) {
        let nodes = &self.0;
        let i = match nodes.partition_point(|&n| n <= x) {
            0 => 0,
            p => (p - 1).min(nodes.len() - 2),
        };
        let t = (x - nodes[i]) / (nodes[i + 1] - nodes[i]);
        (i, t.clamp(0.0, 1.0))
    }
}

/// Precomputed `ln σ0` on a (θ, folded φ, v) grid for fast per-pixel inversion.
#[derive(Debug, Clone)]
pub struct InversionLut {
    theta: Axis,
    phi: Axis,
    speed: Axis,
    log_sigma0: Vec<f64>,
    /// Last speed index of the rising branch, per (θ, φ) node.
    rising_end: Vec<usize>,
    max_error: f64,
}

impl InversionLut {
    /// Builds and validates the table. The direction grid is interpreted on
    /// the folded range and must span `[0, 180]`; the speed grid must lie in
    /// `[MIN_SPEED, MAX_SPEED]`. Fails with [`Error::LutTooCoarse`] when
    /// interpolated inversion at cell midpoints drifts more than
    /// [`LUT_MAX_ERROR_MPS`] from the true speed.
    pub fn build(theta: Axis, phi: Axis, speed: Axis) -> Result<Self> {
        Self::build_with(&Cmod5n, theta, phi, speed, 25.0)
    }

    pub fn build_with(
        model: &dyn GeophysicalModel,
        theta: Axis,
        phi: Axis,
        speed: Axis,
        validate_up_to: f64,
    ) -> Result<Self> {
        if theta.first() < 18.0 || theta.last() > 50.0 {
            return Err(Error::Config("LUT incidence grid must lie in [18, 50]".into()));
        }
        if phi.first() > 0.0 || phi.last() < 180.0 {
            return Err(Error::Config(
                "LUT direction grid must span the folded range [0, 180]".into(),
            ));
        }
        if speed.first() < MIN_SPEED || speed.last() > MAX_SPEED {
            return Err(Error::Config("LUT speed grid must lie in [0.2, 50]".into()));
        }
        let (nt, np, nv) = (theta.len(), phi.len(), speed.len());
        let curves: Vec<(Vec<f64>, usize)> = crate::par::map_range(nt * np, |k| {
            let (it, ip) = (k / np, k % np);
            let curve: Vec<f64> = speed
                .nodes()
                .iter()
                .map(|&v| model.sigma0(v, phi.nodes()[ip], theta.nodes()[it]).ln())
                .collect();
            let end = curve
                .windows(2)
                .position(|w| !(w[1] > w[0]))
                .unwrap_or(nv - 1);
            (curve, end)
        });
        let mut log_sigma0 = Vec::with_capacity(nt * np * nv);
        let mut rising_end = Vec::with_capacity(nt * np);
        for (curve, end) in curves {
            log_sigma0.extend(curve);
            rising_end.push(end);
        }
        let mut lut = Self {
            theta,
            phi,
            speed,
            log_sigma0,
            rising_end,
            max_error: 0.0,
        };
        lut.max_error = lut.validate(model, validate_up_to);
        if lut.max_error > LUT_MAX_ERROR_MPS {
            return Err(Error::LutTooCoarse {
                max_error: lut.max_error,
                limit: LUT_MAX_ERROR_MPS,
            });
        }
        Ok(lut)
    }

    /// Worst speed error at cell midpoints on the rising branch, up to
    /// `up_to` and below [`PEAK_MARGIN`] of the cell's turnover speed.
    fn validate(&self, model: &dyn GeophysicalModel, up_to: f64) -> f64 {
        let (nt, np) = (self.theta.len(), self.phi.len());
        let v = self.speed.nodes();
        let errors = crate::par::map_range((nt - 1) * (np - 1), |k| {
            let (it, ip) = (k / (np - 1), k % (np - 1));
            let th = 0.5 * (self.theta.nodes()[it] + self.theta.nodes()[it + 1]);
            let ph = 0.5 * (self.phi.nodes()[ip] + self.phi.nodes()[ip + 1]);
            let rising = [
                self.rising_end[it * np + ip],
                self.rising_end[it * np + ip + 1],
                self.rising_end[(it + 1) * np + ip],
                self.rising_end[(it + 1) * np + ip + 1],
            ]
            .into_iter()
            .min()
            .unwrap_or(0);
            // Near the turnover the curve is flat and inversion ill-posed.
            let limit = up_to.min(PEAK_MARGIN * v[rising]);
            let mut worst = 0.0f64;
            for iv in 0..rising {
                let vm = 0.5 * (v[iv] + v[iv + 1]);
                if vm > limit {
                    break;
                }
                let s = model.sigma0(vm, ph, th);
                let est = self.query_unchecked(s, ph, th).speed;
                worst = worst.max((est - vm).abs());
            }
            worst
        });
        errors.into_iter().fold(0.0, f64::max)
    }

    /// Default grid: θ every 0.25°, φ every 2.5°, v every 0.2 m/s.
    pub fn default_cmod5n() -> &'static InversionLut {
        static LUT: OnceLock<InversionLut> = OnceLock::new();
        LUT.get_or_init(|| {
            InversionLut::build(
                Axis::linspace("incidence", 18.0, 50.0, 129).expect("static grid"),
                Axis::linspace("direction", 0.0, 180.0, 73).expect("static grid"),
                Axis::linspace("speed", MIN_SPEED, MAX_SPEED, 250).expect("static grid"),
            )
            .expect("default LUT meets its accuracy contract")
        })
    }

    pub fn max_validation_error(&self) -> f64 {
        self.max_error
    }

    #[inline]
    fn node(&self, it: usize, ip: usize, iv: usize) -> f64 {
        self.log_sigma0[(it * self.phi.len() + ip) * self.speed.len() + iv]
    }

    /// Interpolated inversion. Refuses incidence angles outside the grid.
    pub fn invert(&self, sigma0: Nrcs, phi: f64, theta: f64) -> Result<Inversion> {
        if !phi.is_finite() {
            return Err(Error::Domain {
                field: "relative_direction",
                value: phi,
                allowed: "finite degrees",
            });
        }
        if !(theta >= self.theta.first() && theta <= self.theta.last()) {
            return Err(Error::Domain {
                field: "incidence_angle",
                value: theta,
                allowed: "inside the LUT incidence grid",
            });
        }
        Ok(self.query_unchecked(sigma0.value(), fold_direction(phi), theta))
    }

    fn query_unchecked(&self, sigma0: f64, phi_folded: f64, theta: f64) -> Inversion {
        let target = sigma0.ln();
        let (it, tt) = self.theta.locate(theta);
        let (ip, tp) = self.phi.locate(phi_folded);
        let w = [
            (1.0 - tt) * (1.0 - tp),
            (1.0 - tt) * tp,
            tt * (1.0 - tp),
            tt * tp,
        ];
        let np = self.phi.len();
        let corners = [(it, ip), (it, ip + 1), (it + 1, ip), (it + 1, ip + 1)];
        let curve = |iv: usize| -> f64 {
            corners
                .iter()
                .zip(w)
                .map(|(&(a, b), wt)| wt * self.node(a, b, iv))
                .sum()
        };
        let rising = corners
            .iter()
            .map(|&(a, b)| self.rising_end[a * np + b])
            .min()
            .unwrap_or(0);

        let v = self.speed.nodes();
        if target <= curve(0) {
            return Inversion::low();
        }
        // Binary search on the guaranteed-monotone prefix.
        let top = curve(rising);
        let (lo_idx, f_lo, f_hi) = if target <= top {
            let (mut lo, mut hi) = (0usize, rising);
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if curve(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (lo, curve(lo), curve(hi))
        } else {
            let mut found = None;
            let mut prev = top;
            for iv in rising..v.len() - 1 {
                let next = curve(iv + 1);
                if prev < target && next >= target {
                    found = Some((iv, prev, next));
                    break;
                }
                prev = next;
            }
            match found {
                Some(f) => f,
                None => return Inversion::high(),
            }
        };
        let t = (target - f_lo) / (f_hi - f_lo);
        Inversion {
            speed: v[lo_idx] + t * (v[lo_idx + 1] - v[lo_idx]),
            flag: InversionFlag::Ok,
        }
    }
}
