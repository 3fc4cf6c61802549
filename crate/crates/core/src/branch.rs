//! Continuous logarithms of the integrand factors along paths on the contour, per-sheet
//! branch offsets and monodromy measurement.
//!
//! Factor order is `z_j` (N), `1 - z_j` (N), `z_k - z_j` for `j < k` (row-major pairs).

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::sync::Mutex;

use num_complex::Complex64;

use crate::contour::{Contour, FactorValues};
use crate::error::{Error, Result};
use crate::signature::{Anchor, Facet, ParamSet, Sheet, MAX_DIM};

/// A chosen logarithm for every integrand factor.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchState {
    pub logs: Vec<Complex64>,
}

impl BranchState {
    /// Principal logarithms of the given factor values.
    pub fn principal(values: &[Complex64]) -> Self {
        BranchState { logs: values.iter().map(|v| v.ln()).collect() }
    }

    /// Largest `|exp(log) - value| / |value|`.
    pub fn consistency(&self, values: &[Complex64]) -> f64 {
        self.logs
            .iter()
            .zip(values)
            .map(|(l, v)| (l.exp() - v).norm() / v.norm())
            .fold(0.0, f64::max)
    }

    /// `exp(Σ e_f log_f)`.
    pub fn power_product(&self, exponents: &[Complex64]) -> Complex64 {
        self.logs.iter().zip(exponents).map(|(l, e)| e * l).sum::<Complex64>().exp()
    }
}

/// Wraps an angle difference into `(-π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// The logarithm of `v` whose imaginary part is nearest `prev.im`; also returns the jump.
#[inline]
pub fn nearest_log(v: Complex64, prev: Complex64) -> (Complex64, f64) {
    let d = wrap_angle(v.arg() - prev.im);
    (Complex64::new(v.norm().ln(), prev.im + d), d)
}

const NONVANISHING_FLOOR: f64 = 1e-14;
const MAX_STEPS: usize = 1 << 16;
const START_STEPS: usize = 4;

/// One end of a transport path.
#[derive(Debug, Clone, Copy)]
pub struct Endpoint<'a> {
    pub a: &'a [f64],
    pub sheet: Sheet,
}

struct Path<'c> {
    contour: &'c Contour,
    from: Vec<f64>,
    to: Vec<f64>,
    signs_from: Vec<f64>,
    /// The facet whose sign flips along the path, with its two end signs.
    crossing: Option<(usize, f64, f64)>,
}

impl Path<'_> {
    fn eval(&self, t: f64, rho: &mut [f64], signs: &mut [f64]) -> Result<FactorValues> {
        let d = self.from.len();
        let mut a = [0.0; MAX_DIM];
        for k in 0..d {
            a[k] = self.from[k] + t * (self.to[k] - self.from[k]);
        }
        self.contour.rho(&a[..d], rho)?;
        signs.copy_from_slice(&self.signs_from);
        if let Some((g, s1, s2)) = self.crossing {
            signs[g] = (1.0 - t) * s1 + t * s2;
        }
        Ok(self.contour.factors_with(&a[..d], rho, signs))
    }

    /// Nearest-branch continuation with `n` steps; returns the end logs and the largest jump.
    fn run(&self, start: &[Complex64], n: usize) -> Result<(Vec<Complex64>, f64)> {
        let nf = self.contour.facet_count();
        let mut rho = vec![0.0; nf];
        let mut signs = vec![0.0; nf];
        let mut logs = start.to_vec();
        let mut worst = 0.0f64;
        for step in 1..=n {
            let fv = self.eval(step as f64 / n as f64, &mut rho, &mut signs)?;
            for (f, (l, v)) in logs.iter_mut().zip(fv.factors()).enumerate() {
                let m = v.norm();
                if !(m >= NONVANISHING_FLOOR) {
                    return Err(Error::NonvanishingViolated { factor: f, magnitude: m });
                }
                let (next, jump) = nearest_log(*v, *l);
                worst = worst.max(jump.abs());
                *l = next;
            }
        }
        Ok((logs, worst))
    }
}

/// Continues `state` from `from` to `to` along the straight path in cube coordinates.
///
/// When the sheets differ in one facet, that facet's sign is interpolated linearly, so its
/// `ρ̃` passes through zero and the Pochhammer factor turns half a circle.
pub fn transport(contour: &Contour, state: &BranchState, from: Endpoint, to: Endpoint) -> Result<BranchState> {
    let diff = from.sheet.flipped ^ to.sheet.flipped;
    if diff.count_ones() > 1 {
        return Err(Error::InvalidArgument("transport endpoints differ in more than one facet".into()));
    }
    if from.a == to.a && diff == 0 {
        return Ok(state.clone());
    }
    let signs_from = contour.sheet_signs(from.sheet);
    let crossing = (diff != 0).then(|| {
        let g = diff.trailing_zeros() as usize;
        (g, signs_from[g], -signs_from[g])
    });
    let path = Path { contour, from: from.a.to_vec(), to: to.a.to_vec(), signs_from, crossing };
    let mut n = START_STEPS;
    let mut prev: Option<Vec<Complex64>> = None;
    while n <= MAX_STEPS {
        let (logs, worst) = path.run(&state.logs, n)?;
        if worst < 0.5 * PI {
            if let Some(p) = &prev {
                let agree = p.iter().zip(&logs).all(|(x, y)| (x - y).norm() < 1e-9);
                if agree {
                    return Ok(BranchState { logs });
                }
            }
            prev = Some(logs);
        } else {
            prev = None;
        }
        n *= 2;
    }
    Err(Error::ContourDegenerate("branch transport did not stabilise under step doubling".into()))
}

/// The point where the loop through a facet crosses it: coordinates of the facet subset are
/// moved towards the side where the facet lives (staggered so they stay distinct), the
/// others stay at `1/2`.
pub fn crossing_point(contour: &Contour, facet: &Facet) -> Vec<f64> {
    let sig = contour.signature();
    let n = sig.dim() as f64;
    let (pool1, _) = sig.pools(facet.anchor);
    (0..sig.dim())
        .map(|j| {
            let dist = 0.25 - 0.1 * j as f64 / n;
            if !facet.contains(j) {
                0.5
            } else if pool1 & (1 << j) != 0 {
                1.0 - dist
            } else {
                dist
            }
        })
        .collect()
}

/// Branch data of one sheet, relative to the base sheet at the cube center.
#[derive(Debug, Clone, PartialEq)]
pub struct SheetBranch {
    pub sheet: Sheet,
    /// Imaginary parts of `log_F - log_∅` at the center, per factor.
    pub offsets: Vec<f64>,
    /// `offsets / 2π`, rounded.
    pub windings: Vec<i64>,
    /// Continued logarithms at the cube center on this sheet.
    pub center: BranchState,
}

impl SheetBranch {
    /// `θ_F = Σ_f e_f · offset_f`.
    pub fn phase(&self, exponents: &[Complex64]) -> Complex64 {
        self.offsets.iter().zip(exponents).map(|(o, e)| e * o).sum()
    }
}

/// Principal logarithms at the cube center on the base sheet.
pub fn base_state(contour: &Contour) -> Result<BranchState> {
    let c = vec![0.5; contour.signature().dim()];
    let fv = contour.factors_on_sheet(&c, Sheet::BASE)?;
    Ok(BranchState::principal(fv.factors()))
}

/// Transports `state` from the center on `sheet` through facet `g` to the center on the
/// toggled sheet.
pub fn cross_facet(contour: &Contour, state: &BranchState, sheet: Sheet, g: usize) -> Result<BranchState> {
    let d = contour.signature().dim();
    let center = vec![0.5; d];
    let facet = contour.geometry().facets()[g];
    let p = crossing_point(contour, &facet);
    let next = sheet.toggled(g);
    let s = transport(contour, state, Endpoint { a: &center, sheet }, Endpoint { a: &p, sheet })?;
    let s = transport(contour, &s, Endpoint { a: &p, sheet }, Endpoint { a: &p, sheet: next })?;
    transport(contour, &s, Endpoint { a: &p, sheet: next }, Endpoint { a: &center, sheet: next })
}

fn branch_from_center(sheet: Sheet, base: &BranchState, center: BranchState) -> SheetBranch {
    let offsets: Vec<f64> = center.logs.iter().zip(&base.logs).map(|(a, b)| a.im - b.im).collect();
    let windings = offsets.iter().map(|o| (o / TAU).round() as i64).collect();
    SheetBranch { sheet, offsets, windings, center }
}

/// Branch offsets of a sheet, crossing its facets one at a time in canonical order.
pub fn sheet_branch(contour: &Contour, sheet: Sheet) -> Result<SheetBranch> {
    let base = base_state(contour)?;
    sheet_branch_in_order(contour, &base, sheet, &sheet.facet_indices().collect::<Vec<_>>())
}

/// Like [`sheet_branch`] but crossing the facets in the given order.
pub fn sheet_branch_in_order(
    contour: &Contour,
    base: &BranchState,
    sheet: Sheet,
    order: &[usize],
) -> Result<SheetBranch> {
    let mut cur = Sheet::BASE;
    let mut state = base.clone();
    for &g in order {
        if !sheet.contains(g) || cur.contains(g) {
            return Err(Error::InvalidArgument(format!("facet {g} is not a fresh member of the sheet")));
        }
        state = cross_facet(contour, &state, cur, g)?;
        cur = cur.toggled(g);
    }
    Ok(branch_from_center(sheet, base, state))
}

/// Write-once table of sheet branches.
#[derive(Debug)]
pub struct BranchCache {
    base: BranchState,
    table: Mutex<HashMap<Sheet, SheetBranch>>,
}

impl BranchCache {
    pub fn new(contour: &Contour) -> Result<Self> {
        Ok(BranchCache { base: base_state(contour)?, table: Mutex::new(HashMap::new()) })
    }

    pub fn base(&self) -> &BranchState {
        &self.base
    }

    pub fn get(&self, contour: &Contour, sheet: Sheet) -> Result<SheetBranch> {
        if let Some(b) = self.table.lock().expect("branch cache poisoned").get(&sheet) {
            return Ok(b.clone());
        }
        let order: Vec<usize> = sheet.facet_indices().collect();
        let b = sheet_branch_in_order(contour, &self.base, sheet, &order)?;
        self.table.lock().expect("branch cache poisoned").entry(sheet).or_insert_with(|| b.clone());
        Ok(b)
    }
}

/// Measured monodromy around one facet.
#[derive(Debug, Clone, PartialEq)]
pub struct Monodromy {
    pub facet: Facet,
    /// Accumulated argument change of each factor along the loop.
    pub arg_changes: Vec<f64>,
    pub windings: Vec<i64>,
    /// `θ = Σ_f e_f · Δarg_f`.
    pub theta: Complex64,
}

/// Transports around the loop from the base point through `facet` and back to the center on
/// the flipped sheet, and contracts the argument changes with the exponents.
pub fn measure_monodromy(contour: &Contour, facet: &Facet, params: &ParamSet) -> Result<Monodromy> {
    let g = contour.geometry().facet_index(facet)?;
    let base = base_state(contour)?;
    let end = cross_facet(contour, &base, Sheet::BASE, g)?;
    let arg_changes: Vec<f64> = end.logs.iter().zip(&base.logs).map(|(a, b)| a.im - b.im).collect();
    let windings = arg_changes.iter().map(|o| (o / TAU).round() as i64).collect();
    let exps = params.factor_exponents();
    let theta = arg_changes.iter().zip(&exps).map(|(d, e)| e * d).sum();
    Ok(Monodromy { facet: *facet, arg_changes, windings, theta })
}

/// The exponent sum the monodromy around `facet` should equal `2π` times.
pub fn expected_monodromy(params: &ParamSet, facet: &Facet) -> Complex64 {
    TAU * crate::signature::facet_exponent(params, facet)
}

/// Which anchor a facet monodromy is associated with, for reporting.
pub fn monodromy_label(facet: &Facet) -> &'static str {
    match facet.anchor {
        Anchor::Zero => "alpha_S",
        Anchor::One => "beta_S",
        Anchor::Infinity => "zeta_S",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_is_centered() {
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert!((wrap_angle(-0.25) + 0.25).abs() < 1e-15);
    }

    #[test]
    fn nearest_log_follows_previous_sheet() {
        let prev = Complex64::new(0.0, 2.0 * PI + 3.0);
        let (l, _) = nearest_log(Complex64::from_polar(1.0, -3.0), prev);
        assert!((l.im - (2.0 * PI + 2.0 * PI - 3.0)).abs() < 1e-12);
    }
}
