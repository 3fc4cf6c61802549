//! Adaptive tensor Gauss–Legendre cubature over the open unit cube.
//!
//! Cells are refined globally (largest error first) and the final value is reduced in
//! depth-first cell order with compensated summation, so results do not depend on the
//! number of worker threads.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::signature::MAX_DIM;

/// Cubature settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Budget on the number of cell splits.
    pub max_subdivisions: usize,
    /// Gauss–Legendre nodes per axis per cell; the error estimate uses `base_order - 2`.
    pub base_order: usize,
}

impl QuadSpec {
    pub fn new(rel_tol: f64, abs_tol: f64, max_subdivisions: usize, base_order: usize) -> Result<Self> {
        if !(rel_tol > 0.0) || !(abs_tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if base_order < 4 || base_order > 32 {
            return Err(Error::InvalidArgument(format!("base order {base_order} outside [4, 32]")));
        }
        if max_subdivisions < 1 {
            return Err(Error::InvalidArgument("max_subdivisions must be at least 1".into()));
        }
        Ok(QuadSpec { rel_tol, abs_tol, max_subdivisions, base_order })
    }

    /// Defaults by dimension: relative tolerance `1e-6`, `1e-4`, `5e-3` for `N = 1, 2, 3`.
    pub fn for_dim(dim: usize) -> Self {
        let (rel_tol, max_subdivisions) = match dim {
            1 => (1e-6, 4_000),
            2 => (1e-4, 40_000),
            _ => (5e-3, 40_000),
        };
        QuadSpec { rel_tol, abs_tol: 1e-14, max_subdivisions, base_order: 8 }
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_max_subdivisions(mut self, n: usize) -> Self {
        self.max_subdivisions = n;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: Complex64,
    pub error_estimate: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// An integrand whose evaluation inside a cell may depend on state carried down the
/// subdivision tree (continued branches of logarithms, for instance).
pub trait CellIntegrand: Sync {
    type Ctx: Send + Sync;

    fn root_context(&self, center: &[f64]) -> Result<Self::Ctx>;

    fn child_context(&self, parent: &Self::Ctx, parent_center: &[f64], child_center: &[f64]) -> Result<Self::Ctx>;

    /// `Ok(None)` marks the point as unresolvable at this cell size; the cell is then split.
    fn eval(&self, ctx: &Self::Ctx, a: &[f64]) -> Result<Option<Complex64>>;

    /// Cells for which this returns true are split before any estimate is trusted.
    fn must_refine(&self, _lo: &[f64], _hi: &[f64]) -> bool {
        false
    }
}

struct ClosureIntegrand<F>(F);

impl<F: Fn(&[f64]) -> Complex64 + Sync> CellIntegrand for ClosureIntegrand<F> {
    type Ctx = ();

    fn root_context(&self, _: &[f64]) -> Result<()> {
        Ok(())
    }

    fn child_context(&self, _: &(), _: &[f64], _: &[f64]) -> Result<()> {
        Ok(())
    }

    fn eval(&self, _: &(), a: &[f64]) -> Result<Option<Complex64>> {
        Ok(Some((self.0)(a)))
    }
}

struct Rules {
    hi: (Vec<f64>, Vec<f64>),
    lo: (Vec<f64>, Vec<f64>),
}

struct Cell<C> {
    lo: [f64; MAX_DIM],
    hi: [f64; MAX_DIM],
    path: Vec<u8>,
    ctx: C,
    value: Complex64,
    err: f64,
    evals: usize,
}

const MAX_DEPTH: usize = 48;

/// Compensated sum of complex values (Neumaier, componentwise).
pub fn neumaier_sum(values: impl IntoIterator<Item = Complex64>) -> Complex64 {
    let (mut s_re, mut c_re, mut s_im, mut c_im) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for v in values {
        let t = s_re + v.re;
        c_re += if s_re.abs() >= v.re.abs() { (s_re - t) + v.re } else { (v.re - t) + s_re };
        s_re = t;
        let t = s_im + v.im;
        c_im += if s_im.abs() >= v.im.abs() { (s_im - t) + v.im } else { (v.im - t) + s_im };
        s_im = t;
    }
    Complex64::new(s_re + c_re, s_im + c_im)
}

fn tensor_rule<I: CellIntegrand>(
    f: &I,
    ctx: &I::Ctx,
    dim: usize,
    lo: &[f64],
    hi: &[f64],
    rule: &(Vec<f64>, Vec<f64>),
) -> Result<Option<Complex64>> {
    let (x, w) = rule;
    let n = x.len();
    let total = n.pow(dim as u32);
    let mut half = [0.0; MAX_DIM];
    let mut mid = [0.0; MAX_DIM];
    let mut scale = 1.0;
    for k in 0..dim {
        half[k] = 0.5 * (hi[k] - lo[k]);
        mid[k] = 0.5 * (hi[k] + lo[k]);
        scale *= half[k];
    }
    let mut terms = Vec::with_capacity(total);
    let mut pt = [0.0; MAX_DIM];
    for idx in 0..total {
        let mut r = idx;
        let mut wt = scale;
        for k in 0..dim {
            let i = r % n;
            r /= n;
            pt[k] = mid[k] + half[k] * x[i];
            wt *= w[i];
        }
        match f.eval(ctx, &pt[..dim])? {
            Some(v) => terms.push(v * wt),
            None => return Ok(None),
        }
    }
    Ok(Some(neumaier_sum(terms)))
}

fn evaluate_cell<I: CellIntegrand>(f: &I, dim: usize, rules: &Rules, cell: &mut Cell<I::Ctx>) -> Result<()> {
    let (lo, hi) = (&cell.lo[..dim], &cell.hi[..dim]);
    let n_hi = rules.hi.0.len().pow(dim as u32);
    let n_lo = rules.lo.0.len().pow(dim as u32);
    let q_hi = tensor_rule(f, &cell.ctx, dim, lo, hi, &rules.hi)?;
    let q_lo = match q_hi {
        Some(_) => tensor_rule(f, &cell.ctx, dim, lo, hi, &rules.lo)?,
        None => None,
    };
    cell.evals = n_hi + n_lo;
    match (q_hi, q_lo) {
        (Some(a), Some(b)) => {
            cell.value = a;
            cell.err = (a - b).norm();
        }
        _ => {
            cell.value = Complex64::new(0.0, 0.0);
            cell.err = f64::INFINITY;
        }
    }
    Ok(())
}

fn center(lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect()
}

fn split<I: CellIntegrand>(f: &I, dim: usize, cell: &Cell<I::Ctx>) -> Result<Vec<Cell<I::Ctx>>> {
    let pc = center(&cell.lo[..dim], &cell.hi[..dim]);
    (0..(1usize << dim))
        .map(|child| {
            let mut lo = cell.lo;
            let mut hi = cell.hi;
            for k in 0..dim {
                if child & (1 << k) != 0 {
                    lo[k] = pc[k];
                } else {
                    hi[k] = pc[k];
                }
            }
            let cc = center(&lo[..dim], &hi[..dim]);
            let ctx = f.child_context(&cell.ctx, &pc, &cc)?;
            let mut path = cell.path.clone();
            path.push(child as u8);
            Ok(Cell { lo, hi, path, ctx, value: Complex64::new(0.0, 0.0), err: f64::INFINITY, evals: 0 })
        })
        .collect()
}

fn touches_boundary(dim: usize, lo: &[f64], hi: &[f64]) -> bool {
    (0..dim).any(|k| lo[k] == 0.0 || hi[k] == 1.0)
}

/// Integrates a cell-aware integrand over `[0, 1]^dim`.
pub fn integrate_cells<I: CellIntegrand>(f: &I, dim: usize, spec: &QuadSpec) -> Result<QuadResult>
where
    I::Ctx: Send,
{
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::InvalidArgument(format!("dimension {dim} unsupported")));
    }
    let rules = Rules { hi: gauss_legendre(spec.base_order), lo: gauss_legendre(spec.base_order - 2) };
    let mut root_lo = [0.0; MAX_DIM];
    let mut root_hi = [0.0; MAX_DIM];
    root_hi[..dim].iter_mut().for_each(|v| *v = 1.0);
    for v in root_lo[dim..].iter_mut() {
        *v = 0.0;
    }
    let root_ctx = f.root_context(&center(&root_lo[..dim], &root_hi[..dim]))?;
    let root = Cell {
        lo: root_lo,
        hi: root_hi,
        path: Vec::new(),
        ctx: root_ctx,
        value: Complex64::new(0.0, 0.0),
        err: f64::INFINITY,
        evals: 0,
    };

    // Forced refinement, breadth first.
    let mut done: Vec<Cell<I::Ctx>> = Vec::new();
    let mut pending = vec![root];
    let mut splits = 0usize;
    while !pending.is_empty() {
        let (force, keep): (Vec<_>, Vec<_>) = pending.into_iter().partition(|c| {
            c.path.len() < MAX_DEPTH && f.must_refine(&c.lo[..dim], &c.hi[..dim])
        });
        done.extend(keep);
        splits += force.len();
        let children: Vec<Result<Vec<Cell<I::Ctx>>>> = force.par_iter().map(|c| split(f, dim, c)).collect();
        pending = Vec::new();
        for ch in children {
            pending.extend(ch?);
        }
    }
    let mut cells = done;
    cells.par_iter_mut().map(|c| evaluate_cell(f, dim, &rules, c)).collect::<Result<Vec<()>>>()?;
    let mut evaluations: usize = cells.iter().map(|c| c.evals).sum();

    loop {
        let total = neumaier_sum(cells.iter().map(|c| c.value));
        let err: f64 = cells.iter().map(|c| c.err).sum();
        let target = spec.abs_tol.max(spec.rel_tol * total.norm());
        if err <= target {
            return Ok(finish(cells, evaluations, true));
        }
        let weight = |c: &Cell<I::Ctx>| {
            if touches_boundary(dim, &c.lo[..dim], &c.hi[..dim]) {
                2.0 * c.err
            } else {
                c.err
            }
        };
        let max_w = cells
            .iter()
            .filter(|c| c.path.len() < MAX_DEPTH)
            .map(weight)
            .fold(0.0f64, f64::max);
        if max_w == 0.0 || splits >= spec.max_subdivisions {
            if let Some(c) = cells.iter().find(|c| c.err.is_infinite()) {
                let why = if max_w == 0.0 { "at the maximal subdivision depth" } else { "within the subdivision budget" };
                return Err(Error::Domain(format!(
                    "integrand unresolvable {why} near {:?}",
                    center(&c.lo[..dim], &c.hi[..dim])
                )));
            }
            let partial = finish(cells, evaluations, false);
            return Err(Error::NotConverged(partial));
        }
        let threshold = 0.25 * max_w;
        let budget = spec.max_subdivisions - splits;
        let mut to_split: Vec<usize> = (0..cells.len())
            .filter(|&i| cells[i].path.len() < MAX_DEPTH && weight(&cells[i]) >= threshold)
            .collect();
        if to_split.len() > budget {
            to_split.sort_by(|&a, &b| weight(&cells[b]).total_cmp(&weight(&cells[a])).then(a.cmp(&b)));
            to_split.truncate(budget);
            to_split.sort_unstable();
        }
        splits += to_split.len();
        let mut marked = vec![false; cells.len()];
        for &i in &to_split {
            marked[i] = true;
        }
        let mut parents = Vec::with_capacity(to_split.len());
        let mut kept = Vec::with_capacity(cells.len());
        for (i, c) in cells.into_iter().enumerate() {
            if marked[i] {
                parents.push(c);
            } else {
                kept.push(c);
            }
        }
        let children: Vec<Result<Vec<Cell<I::Ctx>>>> = parents
            .par_iter()
            .map(|c| {
                let mut ch = split(f, dim, c)?;
                for k in ch.iter_mut() {
                    evaluate_cell(f, dim, &rules, k)?;
                }
                Ok(ch)
            })
            .collect();
        cells = kept;
        for ch in children {
            let ch = ch?;
            evaluations += ch.iter().map(|c| c.evals).sum::<usize>();
            cells.extend(ch);
        }
    }
}

fn finish<C>(mut cells: Vec<Cell<C>>, evaluations: usize, converged: bool) -> QuadResult {
    cells.sort_by(|a, b| a.path.cmp(&b.path));
    QuadResult {
        value: neumaier_sum(cells.iter().map(|c| c.value)),
        error_estimate: cells.iter().map(|c| c.err).sum(),
        evaluations,
        converged,
    }
}

/// Integrates `f` over the open unit cube `(0, 1)^dim`.
pub fn integrate<F>(f: F, dim: usize, spec: &QuadSpec) -> Result<QuadResult>
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    integrate_cells(&ClosureIntegrand(f), dim, spec)
}

/// Tail cut for the double-exponential map: the neglected mass is below this.
const DE_TAIL: f64 = 1e-18;
const DE_FLOOR: f64 = 1e-300;

/// `(a, 1 - a, da/dt)` for `a = 1/(1 + e^{-2s})`, `s = (π/2) sinh t`.
fn de_map(t: f64) -> (f64, f64, f64) {
    let s = std::f64::consts::FRAC_PI_2 * t.sinh();
    let e = (-2.0 * s.abs()).exp();
    let (big, small) = (1.0 / (1.0 + e), e / (1.0 + e));
    let (a, b) = if s >= 0.0 { (big, small) } else { (small, big) };
    let w = std::f64::consts::PI * t.cosh() * a * b;
    (a.max(DE_FLOOR), b.max(DE_FLOOR), w)
}

/// Half-width of the `t` interval for one endpoint exponent.
fn de_half_width(hint: f64) -> f64 {
    // integrand ~ a^{hint} and da ~ a dt·π cosh t with a ~ e^{-π sinh t}
    let rate = (hint + 1.0) * std::f64::consts::PI;
    (-DE_TAIL.ln() / rate).asinh() + 0.5
}

/// Integrates `f(a, 1 - a)` over the unit cube after a per-axis double-exponential change of
/// variables sized by the hinted endpoint exponents `(at a = 0, at a = 1)`.
pub fn integrate_endpoint_singular<F>(f: F, dim: usize, spec: &QuadSpec, hints: &[(f64, f64)]) -> Result<QuadResult>
where
    F: Fn(&[f64], &[f64]) -> Complex64 + Sync,
{
    if hints.len() != dim {
        return Err(Error::InvalidArgument(format!("{} hints for dimension {dim}", hints.len())));
    }
    for (axis, &(h0, h1)) in hints.iter().enumerate() {
        for h in [h0, h1] {
            if !(h > -1.0) {
                return Err(Error::HintViolation { axis, re: h });
            }
        }
    }
    let t_max = hints
        .iter()
        .flat_map(|&(a, b)| [a, b])
        .map(de_half_width)
        .fold(0.0f64, f64::max);
    let g = |u: &[f64]| {
        let mut a = [0.0; MAX_DIM];
        let mut b = [0.0; MAX_DIM];
        let mut jac = 2.0f64.powi(dim as i32) * t_max.powi(dim as i32);
        for k in 0..dim {
            let t = t_max * (2.0 * u[k] - 1.0);
            let (ak, bk, w) = de_map(t);
            a[k] = ak;
            b[k] = bk;
            jac *= w;
        }
        if jac == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        f(&a[..dim], &b[..dim]) * jac
    };
    integrate(g, dim, spec)
}
