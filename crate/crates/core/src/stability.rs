//! Frequency-domain string-stability analysis.
//!
//! With homogeneous gains every follower obeys `V_i = sum_k Q_k V_{i-k}` where
//!
//! ```text
//! Q_k(jw) = (w_e a_k - jw w_v g_k - w^2 f_k) / (-w^2 + w_e (1 + tau_bar jw) - jw w_v)
//! tau_bar = tau * sum_k a_k k
//! ```
//!
//! The platoon is L2 string stable when `||Q_k||_inf <= 1/N` for every `k`
//! (per-predecessor bound) or when `sum_k ||Q_k||_inf <= 1` (sum bound).

use num_complex::Complex64;

use crate::control::{WeightScheme, WeightVector};
use crate::error::{Error, Result};
use crate::topology::CommTopology;

#[derive(Debug, Clone, PartialEq)]
pub struct TransferSpec {
    pub omega_e: f64,
    pub omega_v: f64,
    pub tau: f64,
    pub weights: WeightVector,
}

impl TransferSpec {
    pub fn new(omega_e: f64, omega_v: f64, tau: f64, weights: WeightVector) -> Self {
        Self {
            omega_e,
            omega_v,
            tau,
            weights,
        }
    }

    pub fn with_scheme(
        omega_e: f64,
        omega_v: f64,
        tau: f64,
        scheme: WeightScheme,
        n: usize,
    ) -> Result<Self> {
        Ok(Self::new(omega_e, omega_v, tau, crate::control::weights(scheme, n)?))
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn theta(&self) -> f64 {
        self.weights.mean_rank()
    }

    /// Slope of the frequency-domain spacing policy `H(s) = 1 + tau_bar s`.
    pub fn tau_bar(&self) -> f64 {
        self.tau * self.theta()
    }

    fn check_rank(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.n() {
            return Err(Error::IndexOutOfRange { index: k, len: self.n() });
        }
        Ok(())
    }

    /// Denominator `J(jw)`, shared by every `Q_k`.
    fn denominator(&self, omega: f64) -> Complex64 {
        Complex64::new(
            self.omega_e - omega * omega,
            omega * (self.omega_e * self.tau_bar() - self.omega_v),
        )
    }

    /// True when `J(jw)` vanishes on the imaginary axis (at `w = sqrt(w_e)`).
    fn has_axis_pole(&self) -> bool {
        self.omega_e * self.tau_bar() - self.omega_v == 0.0 && self.omega_e >= 0.0
    }
}

/// `Q_k(jw)` for rank `k` (1-based). Returns an infinite value on a pole.
pub fn q_eval(spec: &TransferSpec, k: usize, omega: f64) -> Result<Complex64> {
    spec.check_rank(k)?;
    if !(omega >= 0.0) {
        return Err(Error::InvalidParameter(format!("omega must be >= 0, got {omega}")));
    }
    let w = &spec.weights;
    let slot = k - 1;
    if omega.is_infinite() {
        return Ok(Complex64::new(w.alpha_f[slot], 0.0));
    }
    let num = Complex64::new(
        spec.omega_e * w.alpha_b[slot] - omega * omega * w.alpha_f[slot],
        -omega * spec.omega_v * w.gamma_b[slot],
    );
    let den = spec.denominator(omega);
    let at_pole = spec.has_axis_pole() && (omega * omega - spec.omega_e).abs() <= 1e-12 * spec.omega_e.max(1.0);
    if den.norm() == 0.0 || at_pole {
        return Ok(Complex64::new(f64::INFINITY, 0.0));
    }
    Ok(num / den)
}

fn q_mag(spec: &TransferSpec, k: usize, omega: f64) -> f64 {
    q_eval(spec, k, omega).map(|q| q.norm()).unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub points: usize,
    pub omega_min: f64,
    pub omega_max: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            points: 4096,
            omega_min: 1e-3,
            omega_max: 1e3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HinfNorm {
    pub value: f64,
    /// Frequency of the supremum; `0.0` or `f64::INFINITY` for the limits.
    pub argmax_omega: f64,
}

pub fn hinf_norm(spec: &TransferSpec, k: usize) -> Result<HinfNorm> {
    hinf_norm_with(spec, k, &SweepOptions::default())
}

/// Supremum of `|Q_k(jw)|` over `w >= 0`: logarithmic sweep, golden-section
/// refinement around the best grid points, plus the analytic `w = 0` and
/// `w -> inf` limits.
pub fn hinf_norm_with(spec: &TransferSpec, k: usize, opts: &SweepOptions) -> Result<HinfNorm> {
    spec.check_rank(k)?;
    if opts.points < 2 || !(opts.omega_min > 0.0 && opts.omega_max > opts.omega_min) {
        return Err(Error::InvalidParameter("bad sweep options".into()));
    }
    if spec.has_axis_pole() {
        return Ok(HinfNorm {
            value: f64::INFINITY,
            argmax_omega: spec.omega_e.sqrt(),
        });
    }

    let slot = k - 1;
    let mut best = HinfNorm {
        value: spec.weights.alpha_b[slot].abs(),
        argmax_omega: 0.0,
    };
    let at_infinity = spec.weights.alpha_f[slot].abs();
    if at_infinity > best.value {
        best = HinfNorm {
            value: at_infinity,
            argmax_omega: f64::INFINITY,
        };
    }

    let (lo, hi) = (opts.omega_min.ln(), opts.omega_max.ln());
    let step = (hi - lo) / (opts.points - 1) as f64;
    let grid: Vec<f64> = (0..opts.points).map(|i| (lo + step * i as f64).exp()).collect();
    let mags: Vec<f64> = grid.iter().map(|&w| q_mag(spec, k, w)).collect();

    // Local maxima of the grid, plus the frequency where the real parts of
    // numerator and denominator both vanish for equal channel weights.
    let mut seeds: Vec<(f64, f64)> = Vec::new();
    for i in 0..grid.len() {
        let left = if i == 0 { f64::NEG_INFINITY } else { mags[i - 1] };
        let right = if i + 1 == grid.len() { f64::NEG_INFINITY } else { mags[i + 1] };
        if mags[i] >= left && mags[i] >= right {
            let a = if i == 0 { grid[0] } else { grid[i - 1] };
            let b = if i + 1 == grid.len() { grid[i] } else { grid[i + 1] };
            seeds.push((a, b));
        }
    }
    if spec.omega_e > 0.0 {
        let w0 = spec.omega_e.sqrt();
        seeds.push((w0 * (1.0 - 1e-3), w0 * (1.0 + 1e-3)));
    }

    for (a, b) in seeds {
        let (w, m) = golden_max(|w| q_mag(spec, k, w), a, b);
        if m > best.value {
            best = HinfNorm {
                value: m,
                argmax_omega: w,
            };
        }
        for probe in [a, b] {
            let m = q_mag(spec, k, probe);
            if m > best.value {
                best = HinfNorm {
                    value: m,
                    argmax_omega: probe,
                };
            }
        }
    }
    Ok(best)
}

/// Golden-section search for a maximum on `[a, b]` in log-frequency.
fn golden_max(f: impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut lo, mut hi) = (a.ln(), b.ln());
    let g = |u: f64| f(u.exp());
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let (mut fc, mut fd) = (g(c), g(d));
    for _ in 0..200 {
        if (hi - lo).abs() < 1e-13 {
            break;
        }
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = g(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = g(d);
        }
    }
    let u = 0.5 * (lo + hi);
    (u.exp(), g(u))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedForm {
    pub holds: bool,
    pub margin: f64,
}

/// Closed-form sufficient condition for the two built-in weight schemes.
///
/// Equal weights: `w_e tau (1+N)/4 - w_v >= 0`.
/// Geometric weights: `w_e tau theta - 2 w_v >= 0`.
pub fn closed_form_condition(
    scheme: WeightScheme,
    omega_e: f64,
    omega_v: f64,
    tau: f64,
    n: usize,
) -> Result<ClosedForm> {
    let margin = match scheme {
        WeightScheme::Equal => {
            if n == 0 {
                return Err(Error::NoPredecessors);
            }
            omega_e * tau * (1.0 + n as f64) / 4.0 - omega_v
        }
        WeightScheme::Geometric => {
            let theta = crate::control::weights(scheme, n)?.mean_rank();
            omega_e * tau * theta - 2.0 * omega_v
        }
    };
    Ok(ClosedForm {
        holds: margin >= 0.0,
        margin,
    })
}

/// Slope `w_v / w_e` of the feasible-region boundary line.
pub fn boundary_slope(scheme: WeightScheme, tau: f64, n: usize) -> Result<f64> {
    Ok(match scheme {
        WeightScheme::Equal => {
            if n == 0 {
                return Err(Error::NoPredecessors);
            }
            tau * (1.0 + n as f64) / 4.0
        }
        WeightScheme::Geometric => tau * crate::control::weights(scheme, n)?.mean_rank() / 2.0,
    })
}

pub const SUM_CONDITION_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SumCondition {
    pub holds: bool,
    pub value: f64,
}

/// `sum_k ||Q_k||_inf <= 1`.
pub fn sum_condition(spec: &TransferSpec) -> Result<SumCondition> {
    let mut value = 0.0;
    for k in 1..=spec.n() {
        value += hinf_norm(spec, k)?.value;
    }
    Ok(SumCondition {
        holds: value <= 1.0 + SUM_CONDITION_SLACK,
        value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalStability {
    Stable,
    /// Routh conditions `w_e > 0` and `w_e tau_bar - w_v > 0` violated.
    Unstable,
}

pub fn local_stability(spec: &TransferSpec) -> LocalStability {
    if spec.omega_e > 0.0 && spec.omega_e * spec.tau_bar() - spec.omega_v > 0.0 {
        LocalStability::Stable
    } else {
        LocalStability::Unstable
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub scheme: WeightScheme,
    pub local: LocalStability,
    pub norms: Vec<HinfNorm>,
    /// Every `||Q_k||_inf <= 1/N`.
    pub per_predecessor_holds: bool,
    pub closed_form: ClosedForm,
    pub sum: SumCondition,
}

impl StabilityReport {
    pub fn string_stable(&self) -> bool {
        self.local == LocalStability::Stable && (self.per_predecessor_holds || self.sum.holds)
    }
}

pub fn analyze(
    scheme: WeightScheme,
    omega_e: f64,
    omega_v: f64,
    tau: f64,
    n: usize,
) -> Result<StabilityReport> {
    let spec = TransferSpec::with_scheme(omega_e, omega_v, tau, scheme, n)?;
    let norms = (1..=n).map(|k| hinf_norm(&spec, k)).collect::<Result<Vec<_>>>()?;
    let bound = 1.0 / n as f64;
    let per_predecessor_holds = norms.iter().all(|h| h.value <= bound * (1.0 + SUM_CONDITION_SLACK));
    let value: f64 = norms.iter().map(|h| h.value).sum();
    Ok(StabilityReport {
        scheme,
        local: local_stability(&spec),
        norms,
        per_predecessor_holds,
        closed_form: closed_form_condition(scheme, omega_e, omega_v, tau, n)?,
        sum: SumCondition {
            holds: value <= 1.0 + SUM_CONDITION_SLACK,
            value,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionGrid {
    pub omega_e: (f64, f64),
    pub omega_v: (f64, f64),
    pub cols: usize,
    pub rows: usize,
}

impl Default for RegionGrid {
    fn default() -> Self {
        Self {
            omega_e: (0.0, 3.0),
            omega_v: (0.0, 1.5),
            cols: 120,
            rows: 60,
        }
    }
}

impl RegionGrid {
    pub fn cell_width(&self) -> f64 {
        (self.omega_e.1 - self.omega_e.0) / self.cols as f64
    }

    pub fn cell_height(&self) -> f64 {
        (self.omega_v.1 - self.omega_v.0) / self.rows as f64
    }

    /// Centre of cell (`col`, `row`) as (`w_e`, `w_v`).
    pub fn center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.omega_e.0 + (col as f64 + 0.5) * self.cell_width(),
            self.omega_v.0 + (row as f64 + 0.5) * self.cell_height(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleRegion {
    pub scheme: WeightScheme,
    pub tau: f64,
    pub n: usize,
    pub grid: RegionGrid,
    /// Row-major, `rows x cols`, row 0 at the lowest `w_v`.
    pub feasible: Vec<bool>,
    pub slope: f64,
    /// Boundary line `w_v = slope * w_e` clipped to the grid rectangle.
    pub boundary: Vec<(f64, f64)>,
}

impl FeasibleRegion {
    pub fn is_feasible(&self, col: usize, row: usize) -> bool {
        self.feasible[row * self.grid.cols + col]
    }

    pub fn feasible_count(&self) -> usize {
        self.feasible.iter().filter(|&&f| f).count()
    }

    pub fn area(&self) -> f64 {
        self.feasible_count() as f64 * self.grid.cell_width() * self.grid.cell_height()
    }
}

pub fn feasible_region(
    scheme: WeightScheme,
    tau: f64,
    n: usize,
    grid: RegionGrid,
) -> Result<FeasibleRegion> {
    if grid.cols == 0 || grid.rows == 0 {
        return Err(Error::InvalidParameter("region grid needs a nonzero resolution".into()));
    }
    if !(grid.omega_e.1 > grid.omega_e.0 && grid.omega_v.1 > grid.omega_v.0) {
        return Err(Error::InvalidParameter("region ranges must be increasing".into()));
    }
    let mut feasible = Vec::with_capacity(grid.cols * grid.rows);
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            let (we, wv) = grid.center(col, row);
            feasible.push(closed_form_condition(scheme, we, wv, tau, n)?.holds);
        }
    }
    let slope = boundary_slope(scheme, tau, n)?;
    Ok(FeasibleRegion {
        scheme,
        tau,
        n,
        grid,
        feasible,
        slope,
        boundary: clip_ray(slope, &grid),
    })
}

/// Segment of `w_v = slope * w_e` inside the grid rectangle.
fn clip_ray(slope: f64, grid: &RegionGrid) -> Vec<(f64, f64)> {
    let (e0, e1) = grid.omega_e;
    let (v0, v1) = grid.omega_v;
    let mut lo = e0;
    let mut hi = e1;
    if slope > 0.0 {
        lo = lo.max(v0 / slope);
        hi = hi.min(v1 / slope);
    } else if !(v0..=v1).contains(&0.0) {
        return Vec::new();
    }
    if lo > hi {
        return Vec::new();
    }
    vec![(lo, slope * lo), (hi, slope * hi)]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnergyMode {
    /// `sum v^2 dt`.
    #[default]
    Absolute,
    /// `sum (v - v(0))^2 dt`.
    Deviation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyVerdict {
    pub vehicle: usize,
    pub energy: f64,
    /// Mean energy of the vehicle's predecessors.
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub absolute: Vec<f64>,
    pub deviation: Vec<f64>,
    pub mode: EnergyMode,
    pub verdicts: Vec<EnergyVerdict>,
}

impl EnergyReport {
    pub fn all_hold(&self) -> bool {
        self.verdicts.iter().all(|v| v.holds)
    }
}

/// Squared-L2 velocity energies and the per-vehicle attenuation verdicts
/// `E_i <= (1/N_i) sum_{k in preds} E_k`. `speeds[i]` is vehicle `i`'s
/// speed series sampled every `dt` seconds.
pub fn energy_report(
    speeds: &[&[f64]],
    dt: f64,
    topology: &CommTopology,
    mode: EnergyMode,
) -> Result<EnergyReport> {
    let samples = speeds.iter().map(|s| s.len()).min().unwrap_or(0);
    if samples < 2 {
        return Err(Error::TraceTooShort(samples));
    }
    if topology.len() != speeds.len() {
        return Err(Error::InvalidParameter(format!(
            "topology has {} vehicles, trace has {}",
            topology.len(),
            speeds.len()
        )));
    }
    let absolute: Vec<f64> = speeds.iter().map(|s| s.iter().map(|v| v * v * dt).sum()).collect();
    let deviation: Vec<f64> = speeds
        .iter()
        .map(|s| {
            let v_ref = s[0];
            s.iter().map(|v| (v - v_ref) * (v - v_ref) * dt).sum()
        })
        .collect();
    let energies = match mode {
        EnergyMode::Absolute => &absolute,
        EnergyMode::Deviation => &deviation,
    };

    let mut verdicts = Vec::new();
    for i in 0..speeds.len() {
        let preds = topology.predecessors(i)?;
        if preds.is_empty() {
            continue;
        }
        let bound = preds.iter().map(|&p| energies[p]).sum::<f64>() / preds.len() as f64;
        let energy = energies[i];
        verdicts.push(EnergyVerdict {
            vehicle: i,
            energy,
            bound,
            holds: energy <= bound * (1.0 + 1e-12),
        });
    }
    Ok(EnergyReport {
        absolute,
        deviation,
        mode,
        verdicts,
    })
}
