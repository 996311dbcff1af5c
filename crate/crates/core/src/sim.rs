//! Differentiable surrogate distillation simulator.
//!
//! The cumulative vaporized mass fraction of a mixture at temperature `T` is
//! modelled as a weight-fraction mixture of logistic steps centred on each
//! component's normal boiling point:
//!
//! ```text
//! V(T) = sum_i (c_i / 100) * sigmoid((T - Tb_i) / s)
//! ```
//!
//! The distillation curve is the inverse of `V` sampled on a fixed recovery
//! grid. Sensitivities of the curve with respect to composition follow from
//! the implicit function theorem at each root, which the Watson K gradient
//! then chains through.

use thiserror::Error;

use crate::property::{
    blend_sg_gradient, normalize, watson_k, watson_k_gradient, Composition, ComponentLibrary,
    PropertyError, WatsonKConfig, N_COMPONENTS,
};

/// Number of points on the distillation curve.
pub const N_CURVE_POINTS: usize = 30;

/// Recovery fractions averaged to estimate the mean average boiling point.
pub const MEABP_RECOVERIES: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// Bracket half-width beyond the library boiling range, in smoothing widths.
const BRACKET_WIDTHS: f64 = 10.0;
const MAX_ROOT_ITERATIONS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("cannot bracket recovery {recovery} between {lo_k} K and {hi_k} K")]
    BracketFailure { recovery: f64, lo_k: f64, hi_k: f64 },
    #[error("invalid simulator configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid distillation curve: {0}")]
    InvalidCurve(String),
    #[error(transparent)]
    Property(#[from] PropertyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatorConfig {
    smoothing_width_k: f64,
    recovery_grid: Vec<f64>,
    root_tolerance_k: f64,
}

/// 30 points evenly spaced from 0.01 to 0.99 inclusive.
pub fn default_recovery_grid() -> Vec<f64> {
    let n = N_CURVE_POINTS;
    (0..n)
        .map(|j| 0.01 + 0.98 * j as f64 / (n - 1) as f64)
        .collect()
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self {
            smoothing_width_k: 8.0,
            recovery_grid: default_recovery_grid(),
            root_tolerance_k: 1e-6,
        }
    }
}

impl SimulatorConfig {
    pub fn new(
        smoothing_width_k: f64,
        recovery_grid: Vec<f64>,
        root_tolerance_k: f64,
    ) -> Result<Self, SimError> {
        if !(smoothing_width_k.is_finite() && smoothing_width_k > 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "smoothing width {smoothing_width_k} must be positive"
            )));
        }
        if !(root_tolerance_k.is_finite() && root_tolerance_k > 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "root tolerance {root_tolerance_k} must be positive"
            )));
        }
        check_grid(&recovery_grid).map_err(SimError::InvalidConfig)?;
        Ok(Self {
            smoothing_width_k,
            recovery_grid,
            root_tolerance_k,
        })
    }

    pub fn smoothing_width_k(&self) -> f64 {
        self.smoothing_width_k
    }

    pub fn recovery_grid(&self) -> &[f64] {
        &self.recovery_grid
    }

    pub fn root_tolerance_k(&self) -> f64 {
        self.root_tolerance_k
    }

    /// Interpolation weights `a_j` such that `meabp = sum_j a_j T_j`.
    pub fn meabp_weights(&self) -> Vec<f64> {
        let grid = &self.recovery_grid;
        let mut weights = vec![0.0; grid.len()];
        let share = 1.0 / MEABP_RECOVERIES.len() as f64;
        for &p in &MEABP_RECOVERIES {
            // clamp to the end segments when p falls outside the grid
            let j = match grid.iter().rposition(|&g| g <= p) {
                Some(j) if j + 1 < grid.len() => j,
                Some(j) => j - 1,
                None => 0,
            };
            let w = (p - grid[j]) / (grid[j + 1] - grid[j]);
            weights[j] += share * (1.0 - w);
            weights[j + 1] += share * w;
        }
        weights
    }
}

fn check_grid(grid: &[f64]) -> Result<(), String> {
    if grid.len() != N_CURVE_POINTS {
        return Err(format!(
            "recovery grid must have {N_CURVE_POINTS} points, found {}",
            grid.len()
        ));
    }
    if grid.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
        return Err("recovery fractions must lie in (0, 1)".into());
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err("recovery grid must be strictly increasing".into());
    }
    Ok(())
}

/// Temperatures at fixed cumulative recovery fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillationCurve {
    temperatures_k: Vec<f64>,
    recovery_fractions: Vec<f64>,
}

impl DistillationCurve {
    pub fn new(temperatures_k: Vec<f64>, recovery_fractions: Vec<f64>) -> Result<Self, SimError> {
        check_grid(&recovery_fractions).map_err(SimError::InvalidCurve)?;
        if temperatures_k.len() != recovery_fractions.len() {
            return Err(SimError::InvalidCurve(format!(
                "{} temperatures for {} recovery fractions",
                temperatures_k.len(),
                recovery_fractions.len()
            )));
        }
        if let Some(j) = temperatures_k.iter().position(|t| !t.is_finite()) {
            return Err(SimError::InvalidCurve(format!("non-finite temperature at point {j}")));
        }
        if let Some(j) = temperatures_k.windows(2).position(|w| w[1] <= w[0]) {
            return Err(SimError::InvalidCurve(format!(
                "temperatures not strictly increasing at point {}",
                j + 1
            )));
        }
        Ok(Self {
            temperatures_k,
            recovery_fractions,
        })
    }

    /// Curve on the default recovery grid.
    pub fn on_default_grid(temperatures_k: Vec<f64>) -> Result<Self, SimError> {
        Self::new(temperatures_k, default_recovery_grid())
    }

    pub fn temperatures_k(&self) -> &[f64] {
        &self.temperatures_k
    }

    pub fn recovery_fractions(&self) -> &[f64] {
        &self.recovery_fractions
    }

    /// Linear interpolation of temperature at recovery `p`.
    pub fn temperature_at(&self, p: f64) -> f64 {
        let grid = &self.recovery_fractions;
        let t = &self.temperatures_k;
        let j = match grid.iter().rposition(|&g| g <= p) {
            Some(j) if j + 1 < grid.len() => j,
            Some(j) => j - 1,
            None => 0,
        };
        let w = (p - grid[j]) / (grid[j + 1] - grid[j]);
        (1.0 - w) * t[j] + w * t[j + 1]
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Returns `(V, dV/dT)` for a wt% slice (not required to be normalized).
fn vapor_fraction_and_slope(t: f64, wt_pct: &[f64], lib: &ComponentLibrary, s: f64) -> (f64, f64) {
    let mut v = 0.0;
    let mut dv = 0.0;
    for (c, e) in wt_pct.iter().zip(lib.entries()) {
        let sg = sigmoid((t - e.boiling_point_k) / s);
        let w = c / 100.0;
        v += w * sg;
        dv += w * sg * (1.0 - sg);
    }
    (v, dv / s)
}

/// Cumulative vaporized mass fraction at temperature `t`.
pub fn vapor_fraction(t: f64, c: &Composition, lib: &ComponentLibrary, cfg: &SimulatorConfig) -> f64 {
    vapor_fraction_and_slope(t, c.wt_pct(), lib, cfg.smoothing_width_k).0
}

/// Solves `V(T) = p` inside the widened library bracket. Newton steps are
/// taken while they stay inside the shrinking bracket, otherwise bisection.
/// Iteration stops once the update falls below a thousandth of the tolerance.
fn solve_recovery(
    p: f64,
    wt_pct: &[f64],
    lib: &ComponentLibrary,
    cfg: &SimulatorConfig,
) -> Result<f64, SimError> {
    let s = cfg.smoothing_width_k;
    let tol = cfg.root_tolerance_k;
    let (t_min, t_max) = lib.boiling_range();
    let mut lo = t_min - BRACKET_WIDTHS * s;
    let mut hi = t_max + BRACKET_WIDTHS * s;
    let failure = || SimError::BracketFailure {
        recovery: p,
        lo_k: t_min - BRACKET_WIDTHS * s,
        hi_k: t_max + BRACKET_WIDTHS * s,
    };
    let (v_lo, _) = vapor_fraction_and_slope(lo, wt_pct, lib, s);
    let (v_hi, _) = vapor_fraction_and_slope(hi, wt_pct, lib, s);
    if !(v_lo < p && v_hi > p) {
        return Err(failure());
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..MAX_ROOT_ITERATIONS {
        let (v, dv) = vapor_fraction_and_slope(t, wt_pct, lib, s);
        let f = v - p;
        if f == 0.0 {
            return Ok(t);
        }
        if f < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if hi - lo < 1e-3 * tol {
            return Ok(0.5 * (lo + hi));
        }
        let newton = t - f / dv;
        let next = if dv > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - t).abs();
        t = next;
        if step < 1e-3 * tol {
            return Ok(t);
        }
    }
    if t.is_finite() {
        Ok(t)
    } else {
        Err(failure())
    }
}

/// Distillation curve of a composition on the configured recovery grid.
pub fn simulate_curve(
    c: &Composition,
    lib: &ComponentLibrary,
    cfg: &SimulatorConfig,
) -> Result<DistillationCurve, SimError> {
    let temps = curve_slice(c.wt_pct(), lib, cfg)?;
    DistillationCurve::new(temps, cfg.recovery_grid.clone())
}

pub(crate) fn curve_slice(
    wt_pct: &[f64],
    lib: &ComponentLibrary,
    cfg: &SimulatorConfig,
) -> Result<Vec<f64>, SimError> {
    cfg.recovery_grid
        .iter()
        .map(|&p| solve_recovery(p, wt_pct, lib, cfg))
        .collect()
}

/// Free partials `dT_j / dc_i` (rows: curve points, columns: components),
/// holding the other wt% entries fixed.
pub fn curve_sensitivities(
    c: &Composition,
    lib: &ComponentLibrary,
    cfg: &SimulatorConfig,
) -> Result<Vec<Vec<f64>>, SimError> {
    let temps = curve_slice(c.wt_pct(), lib, cfg)?;
    Ok(temps
        .iter()
        .map(|&t| point_sensitivity(t, c.wt_pct(), lib, cfg.smoothing_width_k))
        .collect())
}

fn point_sensitivity(t: f64, wt_pct: &[f64], lib: &ComponentLibrary, s: f64) -> Vec<f64> {
    let (_, slope) = vapor_fraction_and_slope(t, wt_pct, lib, s);
    lib.entries()
        .iter()
        .map(|e| -(sigmoid((t - e.boiling_point_k) / s) / 100.0) / slope)
        .collect()
}

/// Simulated Watson K and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedK {
    pub k: f64,
    pub meabp_k: f64,
    pub sg_mix: f64,
    /// `dk/dc_i` with respect to the composition that was passed in.
    pub gradient: Vec<f64>,
}

/// Watson K of a normalized composition. The gradient holds the other wt%
/// entries fixed (no renormalization).
pub fn simulated_watson_k(
    c: &Composition,
    lib: &ComponentLibrary,
    cfg: &SimulatorConfig,
    kcfg: &WatsonKConfig,
) -> Result<SimulatedK, SimError> {
    simulated_k_slice(c.wt_pct(), lib, cfg, kcfg)
}

/// Watson K of a raw non-negative prediction, normalized internally; the
/// normalization Jacobian is folded into the returned gradient.
pub fn simulated_watson_k_raw(
    raw: &[f64],
    lib: &ComponentLibrary,
    cfg: &SimulatorConfig,
    kcfg: &WatsonKConfig,
) -> Result<SimulatedK, SimError> {
    let c = normalize(raw)?;
    let sum: f64 = raw.iter().sum();
    let mut out = simulated_k_slice(c.wt_pct(), lib, cfg, kcfg)?;
    // dc_j/dr_i = (100 delta_ij - c_j) / S
    let dot: f64 = out
        .gradient
        .iter()
        .zip(c.wt_pct())
        .map(|(g, cj)| g * cj)
        .sum();
    for g in out.gradient.iter_mut() {
        *g = (100.0 * *g - dot) / sum;
    }
    Ok(out)
}

pub(crate) fn simulated_k_slice(
    wt_pct: &[f64],
    lib: &ComponentLibrary,
    cfg: &SimulatorConfig,
    kcfg: &WatsonKConfig,
) -> Result<SimulatedK, SimError> {
    let s = cfg.smoothing_width_k;
    let weights = cfg.meabp_weights();
    let mut meabp = 0.0;
    let mut dmeabp = vec![0.0; N_COMPONENTS.min(wt_pct.len())];
    for (j, &a) in weights.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let t = solve_recovery(cfg.recovery_grid[j], wt_pct, lib, cfg)?;
        meabp += a * t;
        for (d, sens) in dmeabp.iter_mut().zip(point_sensitivity(t, wt_pct, lib, s)) {
            *d += a * sens;
        }
    }
    let (sg, dsg) = blend_sg_gradient(wt_pct, lib);
    let k = watson_k(meabp, sg, kcfg)?.k;
    let (dk_dt, dk_dsg) = watson_k_gradient(meabp, sg, kcfg)?;
    let gradient = dmeabp
        .iter()
        .zip(&dsg)
        .map(|(dt, ds)| dk_dt * dt + dk_dsg * ds)
        .collect();
    Ok(SimulatedK {
        k,
        meabp_k: meabp,
        sg_mix: sg,
        gradient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::property::{blend_specific_gravity, Family};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pure(i: usize) -> Composition {
        let mut raw = [0.0; 25];
        raw[i] = 1.0;
        normalize(&raw).unwrap()
    }

    fn random_composition(rng: &mut ChaCha8Rng) -> Composition {
        let raw: Vec<f64> = (0..25).map(|_| rng.random_range(0.05..10.0)).collect();
        normalize(&raw).unwrap()
    }

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    #[test]
    fn default_grid_endpoints() {
        let g = default_recovery_grid();
        assert_eq!(g.len(), 30);
        assert!((g[0] - 0.01).abs() < 1e-15);
        assert!((g[29] - 0.99).abs() < 1e-15);
        let w = SimulatorConfig::default().meabp_weights();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert_eq!(w.iter().filter(|&&a| a != 0.0).count(), 10);
    }

    #[test]
    fn vapor_fraction_examples() {
        let lib = ComponentLibrary::default();
        let cfg = SimulatorConfig::default();
        let tb = lib.entries()[4].boiling_point_k;
        assert!((vapor_fraction(tb, &pure(4), &lib, &cfg) - 0.5).abs() < 1e-15);
        let t90 = tb + cfg.smoothing_width_k() * 9f64.ln();
        assert!((vapor_fraction(t90, &pure(4), &lib, &cfg) - 0.9).abs() < 1e-12);

        let mut raw = [0.0; 25];
        raw[1] = 50.0;
        raw[20] = 50.0;
        let c = normalize(&raw).unwrap();
        let mid = 0.5 * (lib.entries()[1].boiling_point_k + lib.entries()[20].boiling_point_k);
        assert!((vapor_fraction(mid, &c, &lib, &cfg) - 0.5).abs() < 1e-14);
        assert!(vapor_fraction(mid + 1.0, &c, &lib, &cfg) > vapor_fraction(mid, &c, &lib, &cfg));
    }

    #[test]
    fn pure_component_curve_closed_form() {
        let lib = ComponentLibrary::default();
        let cfg = SimulatorConfig::default();
        for i in 0..25 {
            let curve = simulate_curve(&pure(i), &lib, &cfg).unwrap();
            let tb = lib.entries()[i].boiling_point_k;
            for (t, p) in curve.temperatures_k().iter().zip(curve.recovery_fractions()) {
                let expected = tb + cfg.smoothing_width_k() * logit(*p);
                assert!((t - expected).abs() <= cfg.root_tolerance_k(), "{t} vs {expected}");
            }
            assert!((curve.temperature_at(0.5) - tb).abs() <= 1e-6 + 0.01);
        }
    }

    #[test]
    fn binary_midpoint_and_translation() {
        let lib = ComponentLibrary::default();
        let grid: Vec<f64> = (0..30).map(|j| 0.05 + 0.9 * j as f64 / 29.0).collect();
        // put 0.5 on the grid by using an odd-centred copy
        let mut grid = grid;
        grid[15] = 0.5;
        grid[14] = 0.49;
        let cfg = SimulatorConfig::new(8.0, grid, 1e-9).unwrap();
        let mut raw = [0.0; 25];
        raw[2] = 50.0;
        raw[23] = 50.0;
        let c = normalize(&raw).unwrap();
        let curve = simulate_curve(&c, &lib, &cfg).unwrap();
        let mid = 0.5 * (lib.entries()[2].boiling_point_k + lib.entries()[23].boiling_point_k);
        assert!((curve.temperatures_k()[15] - mid).abs() < 1e-8);

        let shifted = lib.shifted(10.0).unwrap();
        let cfg = SimulatorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = random_composition(&mut rng);
        let a = simulate_curve(&c, &lib, &cfg).unwrap();
        let b = simulate_curve(&c, &shifted, &cfg).unwrap();
        for (x, y) in a.temperatures_k().iter().zip(b.temperatures_k()) {
            assert!((y - x - 10.0).abs() < 2.0 * cfg.root_tolerance_k());
        }
    }

    #[test]
    fn curve_rejects_bad_input() {
        let g = default_recovery_grid();
        assert!(DistillationCurve::new(vec![1.0; 30], g.clone()).is_err());
        assert!(DistillationCurve::new((0..29).map(f64::from).collect(), g.clone()).is_err());
        let mut t: Vec<f64> = (0..30).map(|j| 300.0 + j as f64).collect();
        t[3] = f64::NAN;
        assert!(DistillationCurve::new(t, g).is_err());
        assert!(SimulatorConfig::new(0.0, default_recovery_grid(), 1e-6).is_err());
    }

    #[test]
    fn bracket_failure_on_underweight_mixture() {
        let lib = ComponentLibrary::default();
        let cfg = SimulatorConfig::default();
        // 50 wt% total cannot reach 99% recovery
        let wt = vec![2.0; 25];
        assert!(matches!(
            curve_slice(&wt, &lib, &cfg),
            Err(SimError::BracketFailure { .. })
        ));
    }

    #[test]
    fn sensitivities_match_finite_differences() {
        let lib = ComponentLibrary::default();
        let cfg = SimulatorConfig::new(8.0, default_recovery_grid(), 1e-12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut comps: Vec<Composition> = (0..5).map(|_| random_composition(&mut rng)).collect();
        comps.push(pure(6));
        for c in comps {
            let sens = curve_sensitivities(&c, &lib, &cfg).unwrap();
            let h = 1e-4;
            for i in 0..25 {
                let mut up = c.wt_pct().to_vec();
                let mut dn = c.wt_pct().to_vec();
                up[i] += h;
                dn[i] -= h;
                let tu = curve_slice(&up, &lib, &cfg);
                let td = curve_slice(&dn, &lib, &cfg);
                let (Ok(tu), Ok(td)) = (tu, td) else { continue };
                for j in 0..30 {
                    let fd = (tu[j] - td[j]) / (2.0 * h);
                    let an = sens[j][i];
                    let scale = fd.abs().max(an.abs()).max(1e-3);
                    assert!((fd - an).abs() / scale <= 1e-4, "j={j} i={i}: {an} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn heaviest_component_raises_end_point() {
        let lib = ComponentLibrary::default();
        let cfg = SimulatorConfig::default();
        let heaviest = (0..25)
            .max_by(|&a, &b| {
                lib.entries()[a]
                    .boiling_point_k
                    .total_cmp(&lib.entries()[b].boiling_point_k)
            })
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let c = random_composition(&mut rng);
            let base = simulate_curve(&c, &lib, &cfg).unwrap().temperatures_k()[29];
            let mut raw = c.wt_pct().to_vec();
            raw[heaviest] += 1.0;
            let bumped = simulate_curve(&normalize(&raw).unwrap(), &lib, &cfg).unwrap();
            assert!(bumped.temperatures_k()[29] >= base);
            let sens = curve_sensitivities(&c, &lib, &cfg).unwrap();
            for (j, &t) in simulate_curve(&c, &lib, &cfg).unwrap().temperatures_k().iter().enumerate() {
                let (_, slope) = vapor_fraction_and_slope(t, c.wt_pct(), &lib, 8.0);
                assert!(slope > 0.0);
                assert!(sens[j].iter().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn pure_hexane_k() {
        let lib = ComponentLibrary::default();
        let cfg = SimulatorConfig::default();
        let r = simulated_watson_k(&pure(2), &lib, &cfg, &WatsonKConfig::default()).unwrap();
        assert!((r.meabp_k - 341.9).abs() < 1e-6, "meabp {}", r.meabp_k);
        assert!((r.k - 12.81).abs() < 0.005);
    }

    #[test]
    fn k_gradients_match_finite_differences() {
        let lib = ComponentLibrary::default();
        let cfg = SimulatorConfig::new(8.0, default_recovery_grid(), 1e-12).unwrap();
        let kcfg = WatsonKConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let c = random_composition(&mut rng);
            let r = simulated_watson_k(&c, &lib, &cfg, &kcfg).unwrap();
            let raw: Vec<f64> = c.wt_pct().iter().map(|v| v * rng.random_range(0.5..2.0)).collect();
            let rr = simulated_watson_k_raw(&raw, &lib, &cfg, &kcfg).unwrap();
            let h = 1e-4;
            for i in 0..25 {
                let mut up = c.wt_pct().to_vec();
                let mut dn = c.wt_pct().to_vec();
                up[i] += h;
                dn[i] -= h;
                let fd = (simulated_k_slice(&up, &lib, &cfg, &kcfg).unwrap().k
                    - simulated_k_slice(&dn, &lib, &cfg, &kcfg).unwrap().k)
                    / (2.0 * h);
                let scale = fd.abs().max(1e-6);
                assert!((fd - r.gradient[i]).abs() / scale <= 1e-4, "{fd} vs {}", r.gradient[i]);

                let mut up = raw.clone();
                let mut dn = raw.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (simulated_watson_k_raw(&up, &lib, &cfg, &kcfg).unwrap().k
                    - simulated_watson_k_raw(&dn, &lib, &cfg, &kcfg).unwrap().k)
                    / (2.0 * h);
                let scale = fd.abs().max(1e-6);
                assert!((fd - rr.gradient[i]).abs() / scale <= 1e-4, "{fd} vs {}", rr.gradient[i]);
            }
        }
    }

    #[test]
    fn k_is_scale_invariant_on_raw_input() {
        let lib = ComponentLibrary::default();
        let cfg = SimulatorConfig::default();
        let kcfg = WatsonKConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = random_composition(&mut rng);
        let doubled: Vec<f64> = c.wt_pct().iter().map(|v| 2.0 * v).collect();
        let a = simulated_watson_k(&c, &lib, &cfg, &kcfg).unwrap();
        let b = simulated_watson_k_raw(&doubled, &lib, &cfg, &kcfg).unwrap();
        assert!((a.k - b.k).abs() < 1e-10 * a.k);
        assert!((a.sg_mix - blend_specific_gravity(&c, &lib)).abs() < 1e-15);
        let para = c.family_total(&lib, Family::NParaffin);
        assert!(para > 0.0);
    }
}
