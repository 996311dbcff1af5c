//! Component library, composition arithmetic and the Watson characterization factor.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Number of components in the naphtha roster.
pub const N_COMPONENTS: usize = 25;

/// Tolerance on the wt% sum of a normalized composition.
pub const SUM_TOLERANCE: f64 = 1e-9;

const DEFAULT_LIBRARY_CSV: &str = include_str!("../data/components.csv");
const LIBRARY_HEADER: &str = "name,family,boiling_point_k,specific_gravity";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropertyError {
    #[error("composition sums to zero")]
    AllZero,
    #[error("negative entry {value} at component {index}")]
    NegativeEntry { index: usize, value: f64 },
    #[error("non-finite entry at component {index}")]
    NonFinite { index: usize },
    #[error("expected {expected} components, found {found}")]
    WrongLength { expected: usize, found: usize },
    #[error("composition sums to {sum} wt%, expected 100")]
    NotNormalized { sum: f64 },
    #[error("Watson K inputs must be positive (meabp {meabp_k} K, sg {sg})")]
    NonPositiveInput { meabp_k: f64, sg: f64 },
    #[error("invalid Watson K coefficient {0}")]
    InvalidCoefficient(f64),
    #[error("component library line {line}: {message}")]
    Library { line: usize, message: String },
}

/// Hydrocarbon family of a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    NParaffin,
    Isoparaffin,
    Naphthene,
    Aromatic,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::NParaffin,
        Family::Isoparaffin,
        Family::Naphthene,
        Family::Aromatic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::NParaffin => "n-paraffin",
            Family::Isoparaffin => "isoparaffin",
            Family::Naphthene => "naphthene",
            Family::Aromatic => "aromatic",
        }
    }

    pub fn is_paraffinic(self) -> bool {
        matches!(self, Family::NParaffin | Family::Isoparaffin)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown family `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentEntry {
    pub name: String,
    pub family: Family,
    pub boiling_point_k: f64,
    pub specific_gravity: f64,
}

/// The fixed, ordered roster of naphtha components. Row order is index order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLibrary {
    entries: Vec<ComponentEntry>,
}

impl Default for ComponentLibrary {
    fn default() -> Self {
        Self::from_csv_str(DEFAULT_LIBRARY_CSV).expect("embedded component library is valid")
    }
}

impl ComponentLibrary {
    /// Builds a library from entries, checking the roster invariants.
    pub fn new(entries: Vec<ComponentEntry>) -> Result<Self, PropertyError> {
        let err = |line: usize, message: String| PropertyError::Library { line, message };
        if entries.len() != N_COMPONENTS {
            return Err(err(
                0,
                format!("expected {N_COMPONENTS} components, found {}", entries.len()),
            ));
        }
        let mut names = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            let line = i + 2;
            if !names.insert(e.name.as_str()) {
                return Err(err(line, format!("duplicate component `{}`", e.name)));
            }
            if !(e.boiling_point_k.is_finite() && e.boiling_point_k > 0.0) {
                return Err(err(line, format!("bad boiling point {}", e.boiling_point_k)));
            }
            if !(e.specific_gravity > 0.3 && e.specific_gravity < 1.2) {
                return Err(err(
                    line,
                    format!("specific gravity {} outside (0.3, 1.2)", e.specific_gravity),
                ));
            }
        }
        for family in Family::ALL {
            if !entries.iter().any(|e| e.family == family) {
                return Err(err(0, format!("no component of family {family}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_csv_str(text: &str) -> Result<Self, PropertyError> {
        let err = |line: usize, message: String| PropertyError::Library { line, message };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, header)) if header.trim() == LIBRARY_HEADER => {}
            Some((i, header)) => return Err(err(i + 1, format!("unexpected header `{header}`"))),
            None => return Err(err(1, "empty library file".into())),
        }
        let mut entries = Vec::with_capacity(N_COMPONENTS);
        for (i, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(err(i + 1, format!("expected 4 fields, found {}", fields.len())));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| err(i + 1, format!("bad number `{s}`: {e}")))
            };
            entries.push(ComponentEntry {
                name: fields[0].to_string(),
                family: fields[1].parse().map_err(|m| err(i + 1, m))?,
                boiling_point_k: parse(fields[2])?,
                specific_gravity: parse(fields[3])?,
            });
        }
        Self::new(entries)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(LIBRARY_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.name, e.family, e.boiling_point_k, e.specific_gravity
            ));
        }
        out
    }

    pub fn entries(&self) -> &[ComponentEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn boiling_points(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.boiling_point_k)
    }

    pub fn family_indices(&self, family: Family) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.family == family)
            .map(|(i, _)| i)
            .collect()
    }

    /// Lowest and highest boiling point in the roster.
    pub fn boiling_range(&self) -> (f64, f64) {
        self.boiling_points()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
                (lo.min(t), hi.max(t))
            })
    }

    /// Returns a copy with every boiling point shifted by `delta_k`.
    pub fn shifted(&self, delta_k: f64) -> Result<Self, PropertyError> {
        let entries = self
            .entries
            .iter()
            .map(|e| ComponentEntry {
                boiling_point_k: e.boiling_point_k + delta_k,
                ..e.clone()
            })
            .collect();
        Self::new(entries)
    }
}

/// 25 weight percentages summing to 100.
#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    wt_pct: Vec<f64>,
}

impl Composition {
    /// Accepts an already-normalized vector, checking the invariants.
    pub fn from_wt_pct(wt_pct: Vec<f64>) -> Result<Self, PropertyError> {
        check_entries(&wt_pct)?;
        let sum: f64 = wt_pct.iter().sum();
        if (sum - 100.0).abs() > SUM_TOLERANCE {
            return Err(PropertyError::NotNormalized { sum });
        }
        Ok(Self { wt_pct })
    }

    pub fn wt_pct(&self) -> &[f64] {
        &self.wt_pct
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.wt_pct
    }

    /// Summed wt% of one family.
    pub fn family_total(&self, lib: &ComponentLibrary, family: Family) -> f64 {
        self.wt_pct
            .iter()
            .zip(lib.entries())
            .filter(|(_, e)| e.family == family)
            .map(|(c, _)| c)
            .sum()
    }
}

fn check_entries(raw: &[f64]) -> Result<(), PropertyError> {
    if raw.len() != N_COMPONENTS {
        return Err(PropertyError::WrongLength {
            expected: N_COMPONENTS,
            found: raw.len(),
        });
    }
    for (index, &value) in raw.iter().enumerate() {
        if !value.is_finite() {
            return Err(PropertyError::NonFinite { index });
        }
        if value < 0.0 {
            return Err(PropertyError::NegativeEntry { index, value });
        }
    }
    Ok(())
}

/// Scales non-negative amounts (any unit, e.g. ton/hour) to wt%.
pub fn normalize(raw: &[f64]) -> Result<Composition, PropertyError> {
    check_entries(raw)?;
    let sum: f64 = raw.iter().sum();
    if sum <= 0.0 {
        return Err(PropertyError::AllZero);
    }
    let wt_pct = raw.iter().map(|&r| 100.0 * r / sum).collect();
    Ok(Composition { wt_pct })
}

/// Ideal-volume (weight-fraction harmonic) blend of component specific gravities.
pub fn blend_specific_gravity(c: &Composition, lib: &ComponentLibrary) -> f64 {
    blend_sg_slice(c.wt_pct(), lib)
}

pub(crate) fn blend_sg_slice(wt_pct: &[f64], lib: &ComponentLibrary) -> f64 {
    let inv: f64 = wt_pct
        .iter()
        .zip(lib.entries())
        .map(|(c, e)| (c / 100.0) / e.specific_gravity)
        .sum();
    1.0 / inv
}

/// Partial derivatives of the blended SG with respect to each wt% entry,
/// holding the others fixed.
pub(crate) fn blend_sg_gradient(wt_pct: &[f64], lib: &ComponentLibrary) -> (f64, Vec<f64>) {
    let sg = blend_sg_slice(wt_pct, lib);
    let grad = lib
        .entries()
        .iter()
        .map(|e| -sg * sg / (100.0 * e.specific_gravity))
        .collect();
    (sg, grad)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WatsonKConfig {
    pub b_coefficient: f64,
}

impl Default for WatsonKConfig {
    fn default() -> Self {
        Self { b_coefficient: 1.0 }
    }
}

impl WatsonKConfig {
    pub fn new(b_coefficient: f64) -> Result<Self, PropertyError> {
        if b_coefficient.is_finite() && b_coefficient > 0.0 {
            Ok(Self { b_coefficient })
        } else {
            Err(PropertyError::InvalidCoefficient(b_coefficient))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WatsonKResult {
    pub k: f64,
    pub meabp_k: f64,
    pub sg_mix: f64,
}

fn check_watson_inputs(meabp_k: f64, sg: f64) -> Result<(), PropertyError> {
    if meabp_k > 0.0 && sg > 0.0 && meabp_k.is_finite() && sg.is_finite() {
        Ok(())
    } else {
        Err(PropertyError::NonPositiveInput { meabp_k, sg })
    }
}

/// `k = cbrt(1.8 * meabp * b) / sg`, with the boiling point in Kelvin
/// converted to Rankine by the 1.8 factor.
pub fn watson_k(meabp_k: f64, sg: f64, cfg: &WatsonKConfig) -> Result<WatsonKResult, PropertyError> {
    check_watson_inputs(meabp_k, sg)?;
    let k = (1.8 * meabp_k * cfg.b_coefficient).cbrt() / sg;
    Ok(WatsonKResult {
        k,
        meabp_k,
        sg_mix: sg,
    })
}

/// Returns `(dk/dmeabp, dk/dsg)`.
pub fn watson_k_gradient(
    meabp_k: f64,
    sg: f64,
    cfg: &WatsonKConfig,
) -> Result<(f64, f64), PropertyError> {
    let k = watson_k(meabp_k, sg, cfg)?.k;
    Ok((k / (3.0 * meabp_k), -k / sg))
}
