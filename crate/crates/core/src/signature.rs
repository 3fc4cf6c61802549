//! The triple (ℓ, m, n): index groups, facets, exponent sums and the trigonometric prefactor.
//!
//! Indices are 0-based in the API. Bit `j` of an index mask stands for coordinate `j`
//! (coordinate `j + 1` in the one-based notation of the guide).

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Subset of `{0, .., N-1}` stored as a bitmask.
pub type IndexMask = u32;

/// Largest supported `N`; sheets are stored as 64-bit facet masks.
pub const MAX_DIM: usize = 6;

/// Which interval a coordinate ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    /// `x ∈ [-∞, 0]`
    I1,
    /// `x ∈ [0, 1]`
    I2,
    /// `x ∈ [1, ∞]`
    I3,
}

/// The point of `{0, 1, ∞}` a facet blows down to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Anchor {
    Zero,
    One,
    Infinity,
}

impl Anchor {
    pub const ALL: [Anchor; 3] = [Anchor::Zero, Anchor::One, Anchor::Infinity];
}

impl fmt::Display for Anchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Anchor::Zero => write!(f, "0"),
            Anchor::One => write!(f, "1"),
            Anchor::Infinity => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature {
    pub ell: usize,
    pub m: usize,
    pub n: usize,
}

impl Signature {
    pub fn new(ell: usize, m: usize, n: usize) -> Result<Self> {
        let total = ell + m + n;
        if total == 0 {
            return Err(Error::InvalidSignature("ell, m, n must not all be zero".into()));
        }
        if total > MAX_DIM {
            return Err(Error::InvalidSignature(format!(
                "N = {total} exceeds the supported maximum {MAX_DIM}"
            )));
        }
        Ok(Signature { ell, m, n })
    }

    /// `N = ℓ + m + n`.
    pub fn dim(&self) -> usize {
        self.ell + self.m + self.n
    }

    pub fn group(&self, j: usize) -> Group {
        if j < self.ell {
            Group::I1
        } else if j < self.ell + self.m {
            Group::I2
        } else {
            Group::I3
        }
    }

    pub fn i1(&self) -> IndexMask {
        range_mask(0, self.ell)
    }

    pub fn i2(&self) -> IndexMask {
        range_mask(self.ell, self.ell + self.m)
    }

    pub fn i3(&self) -> IndexMask {
        range_mask(self.ell + self.m, self.dim())
    }

    pub fn full(&self) -> IndexMask {
        range_mask(0, self.dim())
    }

    /// `(pool1, pool2)` for an anchor: coordinates of `pool1` reach the anchor at `a = 1`,
    /// those of `pool2` at `a = 0`.
    pub fn pools(&self, anchor: Anchor) -> (IndexMask, IndexMask) {
        match anchor {
            Anchor::Zero => (self.i1(), self.i2()),
            Anchor::One => (self.i2(), self.i3()),
            Anchor::Infinity => (self.i3(), self.i1()),
        }
    }

    /// Indices allowed in the subset of a facet with this anchor.
    pub fn pool(&self, anchor: Anchor) -> IndexMask {
        let (p1, p2) = self.pools(anchor);
        p1 | p2
    }

    /// Anchor reached by coordinate `j` at `a_j = 0`.
    pub fn lower_anchor(&self, j: usize) -> Anchor {
        match self.group(j) {
            Group::I1 => Anchor::Infinity,
            Group::I2 => Anchor::Zero,
            Group::I3 => Anchor::One,
        }
    }

    /// Anchor reached by coordinate `j` at `a_j = 1`.
    pub fn upper_anchor(&self, j: usize) -> Anchor {
        match self.group(j) {
            Group::I1 => Anchor::Zero,
            Group::I2 => Anchor::One,
            Group::I3 => Anchor::Infinity,
        }
    }

    /// Number of unordered pairs `j < k`.
    pub fn pair_count(&self) -> usize {
        let d = self.dim();
        d * (d.saturating_sub(1)) / 2
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.ell, self.m, self.n)
    }
}

fn range_mask(lo: usize, hi: usize) -> IndexMask {
    (lo..hi).fold(0, |acc, j| acc | (1 << j))
}

/// Indices contained in a mask, ascending.
pub fn mask_indices(mask: IndexMask) -> impl Iterator<Item = usize> {
    (0..32).filter(move |j| mask & (1 << j) != 0)
}

/// Position of the pair `(j, k)`, `j < k`, in the row-major upper triangle.
pub fn pair_index(dim: usize, j: usize, k: usize) -> usize {
    debug_assert!(j < k && k < dim);
    j * (2 * dim - j - 1) / 2 + (k - j - 1)
}

/// Exponent data `(α, β, γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub alpha: Vec<Complex64>,
    pub beta: Vec<Complex64>,
    /// Upper triangle `γ_{j,k}`, `j < k`, row-major.
    gamma: Vec<Complex64>,
}

impl ParamSet {
    pub fn new(
        sig: &Signature,
        alpha: Vec<Complex64>,
        beta: Vec<Complex64>,
        gamma: Vec<Complex64>,
    ) -> Result<Self> {
        let d = sig.dim();
        if alpha.len() != d || beta.len() != d || gamma.len() != sig.pair_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {d} alpha, {d} beta and {} gamma values, got {}, {}, {}",
                sig.pair_count(),
                alpha.len(),
                beta.len(),
                gamma.len()
            )));
        }
        Ok(ParamSet { alpha, beta, gamma })
    }

    /// Real-valued convenience constructor.
    pub fn real(sig: &Signature, alpha: &[f64], beta: &[f64], gamma: &[f64]) -> Result<Self> {
        let c = |v: &[f64]| v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::new(sig, c(alpha), c(beta), c(gamma))
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// `γ_{j,k}`; symmetric in its arguments, undefined on the diagonal.
    pub fn gamma(&self, j: usize, k: usize) -> Result<Complex64> {
        let d = self.dim();
        if j == k || j >= d || k >= d {
            return Err(Error::InvalidArgument(format!("gamma({j},{k}) is undefined")));
        }
        let (a, b) = if j < k { (j, k) } else { (k, j) };
        Ok(self.gamma[pair_index(d, a, b)])
    }

    pub fn gamma_upper(&self) -> &[Complex64] {
        &self.gamma
    }

    /// Replaces `γ_{j,k}`.
    pub fn set_gamma(&mut self, j: usize, k: usize, value: Complex64) -> Result<()> {
        let d = self.dim();
        if j == k || j >= d || k >= d {
            return Err(Error::InvalidArgument(format!("gamma({j},{k}) is undefined")));
        }
        let (a, b) = if j < k { (j, k) } else { (k, j) };
        self.gamma[pair_index(d, a, b)] = value;
        Ok(())
    }

    /// Exponents in factor order: `α_j` on `z_j`, `β_j` on `1 - z_j`, `2γ_{j,k}` on `z_k - z_j`.
    pub fn factor_exponents(&self) -> Vec<Complex64> {
        let mut e = Vec::with_capacity(2 * self.dim() + self.gamma.len());
        e.extend_from_slice(&self.alpha);
        e.extend_from_slice(&self.beta);
        e.extend(self.gamma.iter().map(|g| 2.0 * g));
        e
    }
}

fn pair_sum(params: &ParamSet, include: impl Fn(bool, bool) -> bool, s: IndexMask) -> Complex64 {
    let d = params.dim();
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..d {
        for k in (j + 1)..d {
            let (in_j, in_k) = (s & (1 << j) != 0, s & (1 << k) != 0);
            if include(in_j, in_k) {
                acc += params.gamma[pair_index(d, j, k)];
            }
        }
    }
    acc
}

/// `α_S = Σ_{j∈S} α_j + 2 Σ_{j<k ∈ S} γ_{j,k}`.
pub fn alpha_s(params: &ParamSet, s: IndexMask) -> Complex64 {
    let single: Complex64 = mask_indices(s).map(|j| params.alpha[j]).sum();
    single + 2.0 * pair_sum(params, |a, b| a && b, s)
}

/// `β_S = Σ_{j∈S} β_j + 2 Σ_{j<k ∈ S} γ_{j,k}`.
pub fn beta_s(params: &ParamSet, s: IndexMask) -> Complex64 {
    let single: Complex64 = mask_indices(s).map(|j| params.beta[j]).sum();
    single + 2.0 * pair_sum(params, |a, b| a && b, s)
}

/// `ζ_S = -Σ_{j∈S}(α_j + β_j) - 2 Σ_{j<k, j∈S or k∈S} γ_{j,k}`.
pub fn zeta_s(params: &ParamSet, s: IndexMask) -> Complex64 {
    let single: Complex64 = mask_indices(s).map(|j| params.alpha[j] + params.beta[j]).sum();
    -single - 2.0 * pair_sum(params, |a, b| a || b, s)
}

/// The exponent sum whose `2π` multiple is the monodromy around `facet`.
pub fn facet_exponent(params: &ParamSet, facet: &Facet) -> Complex64 {
    match facet.anchor {
        Anchor::Zero => alpha_s(params, facet.subset),
        Anchor::One => beta_s(params, facet.subset),
        Anchor::Infinity => zeta_s(params, facet.subset),
    }
}

fn two_i_sin_pi(x: Complex64) -> Complex64 {
    // sin(πx) is exactly zero at integer real x.
    if x.im == 0.0 && x.re == x.re.round() {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::new(0.0, 2.0) * (std::f64::consts::PI * x).sin()
}

fn nonempty_subsets(pool: IndexMask) -> impl Iterator<Item = IndexMask> {
    (1..=pool).filter(move |s| s & !pool == 0)
}

/// The product of `2i sin(π·)` factors multiplying the integral in the main identity.
pub fn prefactor(sig: &Signature, params: &ParamSet) -> Complex64 {
    let mut p = Complex64::new(1.0, 0.0);
    for s in nonempty_subsets(sig.i1() | sig.i2()) {
        p *= two_i_sin_pi(alpha_s(params, s));
    }
    for s in nonempty_subsets(sig.i2() | sig.i3()) {
        p *= two_i_sin_pi(beta_s(params, s));
    }
    for s in nonempty_subsets(sig.i1() | sig.i3()) {
        p *= two_i_sin_pi(zeta_s(params, s));
    }
    p
}

/// A boundary hypersurface of the blown-up cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Facet {
    pub subset: IndexMask,
    pub anchor: Anchor,
}

impl Facet {
    pub fn new(sig: &Signature, subset: IndexMask, anchor: Anchor) -> Result<Self> {
        if subset == 0 || subset & !sig.pool(anchor) != 0 {
            return Err(Error::InvalidArgument(format!(
                "subset {subset:#b} is not a valid facet for anchor {anchor} in {sig}"
            )));
        }
        Ok(Facet { subset, anchor })
    }

    pub fn contains(&self, j: usize) -> bool {
        self.subset & (1 << j) != 0
    }
}

impl fmt::Display for Facet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let idx: Vec<String> = mask_indices(self.subset).map(|j| (j + 1).to_string()).collect();
        write!(f, "{{{}}};{}", idx.join(","), self.anchor)
    }
}

/// Sorts subsets lexicographically by their ascending index lists.
fn lex_key(s: IndexMask) -> Vec<usize> {
    mask_indices(s).collect()
}

/// All facets in canonical order: anchor 0, then 1, then ∞; lexicographic by subset within each.
pub fn facets(sig: &Signature) -> Vec<Facet> {
    let mut out = Vec::new();
    for anchor in Anchor::ALL {
        let mut subs: Vec<IndexMask> = nonempty_subsets(sig.pool(anchor)).collect();
        subs.sort_by_key(|&s| lex_key(s));
        out.extend(subs.into_iter().map(|subset| Facet { subset, anchor }));
    }
    out
}

/// `(2^{ℓ+m} - 1) + (2^{m+n} - 1) + (2^{ℓ+n} - 1)`.
pub fn facet_count(sig: &Signature) -> usize {
    (1 << (sig.ell + sig.m)) + (1 << (sig.m + sig.n)) + (1 << (sig.ell + sig.n)) - 3
}

/// One copy of the blown-up cube inside its double, labelled by the facets it is reflected across.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Sheet {
    /// Bit `i` set when canonical facet `i` is flipped.
    pub flipped: u64,
}

impl Sheet {
    pub const BASE: Sheet = Sheet { flipped: 0 };

    pub fn new(flipped: u64) -> Self {
        Sheet { flipped }
    }

    pub fn contains(&self, facet_index: usize) -> bool {
        self.flipped & (1 << facet_index) != 0
    }

    pub fn toggled(&self, facet_index: usize) -> Sheet {
        Sheet { flipped: self.flipped ^ (1 << facet_index) }
    }

    pub fn len(&self) -> usize {
        self.flipped.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.flipped == 0
    }

    /// Orientation sign `(-1)^{|F|}`.
    pub fn sign(&self) -> f64 {
        if self.len() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Canonical facet indices in this sheet, ascending.
    pub fn facet_indices(&self) -> impl Iterator<Item = usize> {
        let f = self.flipped;
        (0..64).filter(move |i| f & (1u64 << i) != 0)
    }
}

/// All sheets of a signature in canonical (mask) order.
pub fn sheets(sig: &Signature) -> Result<Vec<Sheet>> {
    let nf = facet_count(sig);
    if nf > 20 {
        return Err(Error::InvalidArgument(format!(
            "{sig} has {nf} facets; enumerating 2^{nf} sheets is not supported"
        )));
    }
    Ok((0..(1u64 << nf)).map(Sheet::new).collect())
}

/// `N·2^{N-3} - 2^{N-1} + 1` for the double of an `N`-gon.
pub fn genus_of_polygon_double(edge_count: usize) -> Result<i64> {
    if edge_count < 3 {
        return Err(Error::InvalidArgument(format!("a polygon needs at least 3 edges, got {edge_count}")));
    }
    if edge_count > 60 {
        return Err(Error::InvalidArgument("edge count too large".into()));
    }
    let n = edge_count as i64;
    let formula = ((n << (edge_count - 1)) >> 2) - (1i64 << (edge_count - 1)) + 1;
    let cells = genus_from_cells(edge_count);
    if formula != cells {
        return Err(Error::Domain(format!(
            "genus formula {formula} disagrees with cell count {cells} for N = {edge_count}"
        )));
    }
    Ok(formula)
}

/// Genus from the cell decomposition: `2^N` faces, `N·2^{N-1}` edges, `N·2^{N-2}` vertices.
pub fn genus_from_cells(edge_count: usize) -> i64 {
    let n = edge_count as i64;
    let faces = 1i64 << edge_count;
    let edges = n << (edge_count - 1);
    let vertices = n << (edge_count - 2);
    let chi = faces - edges + vertices;
    1 - chi / 2
}
