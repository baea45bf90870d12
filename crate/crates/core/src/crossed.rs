//! Crossed-product elements Σ_γ f_γ u_γ over a ℤ-system with exact,
//! locally constant rational coefficients.
//!
//! Conventions: u_γ f u_γ* = f∘σ^γ, so (f u_γ)(g u_δ) = f·(g∘σ^γ) u_{γ+δ}
//! and (f u_γ)* = (f̄∘σ^{−γ}) u_{−γ}. On an orbit x the regular
//! representation acts by (fξ)(n) = f(σⁿx)ξ(n) and (u_γξ)(n) = ξ(n+γ).

use crate::clopen::Clopen;
use crate::exact::{q_from_f64, q_to_f64, Q};
use crate::group::FiniteGroupSet;
use crate::linalg::{lanczos_largest, spectral_norm, symmetric_function, SparseMatrix};
use crate::system::{System, Word};
use crate::window::OrbitWindow;
use crate::{Error, Result};
use nalgebra::DMatrix;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::Arc;

/// A locally constant rational function on a ℤ-system: a value per
/// admissible radius-`radius` word, zero where absent.
#[derive(Clone)]
pub struct LocFn {
    sys: Arc<System>,
    radius: usize,
    values: BTreeMap<Word, Q>,
}

impl std::fmt::Debug for LocFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let vals: Vec<String> = self
            .values
            .iter()
            .map(|(w, v)| format!("{}:{}", self.sys.format_word_lossy(w, &[self.radius]), v))
            .collect();
        write!(f, "LocFn(r={}, {{{}}})", self.radius, vals.join(", "))
    }
}

impl PartialEq for LocFn {
    fn eq(&self, other: &Self) -> bool {
        self.sub(other).map(|d| d.is_zero()).unwrap_or(false)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum QValue {
    Text(String),
    Number(f64),
}

impl QValue {
    fn to_q(&self) -> Result<Q> {
        match self {
            QValue::Text(s) => Q::from_str(s.trim()).map_err(|_| Error::Parse(format!("bad rational {s:?}"))),
            QValue::Number(x) => q_from_f64(*x).ok_or_else(|| Error::Parse(format!("non-finite value {x}"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LocFnSpec {
    pub radius: usize,
    pub values: BTreeMap<String, QValue>,
}

fn check_z(sys: &Arc<System>) -> Result<()> {
    sys.as_z().map(|_| ())
}

impl LocFn {
    pub fn zero(sys: &Arc<System>) -> Result<Self> {
        check_z(sys)?;
        Ok(LocFn { sys: sys.clone(), radius: 0, values: BTreeMap::new() })
    }

    pub fn constant(sys: &Arc<System>, c: Q) -> Result<Self> {
        LocFn::from_fn(sys, 0, |_| c.clone())
    }

    pub fn indicator(e: &Clopen) -> Result<Self> {
        let sys = e.system().clone();
        check_z(&sys)?;
        Ok(LocFn {
            radius: e.radius(),
            values: e.words().iter().map(|w| (w.clone(), Q::from_integer(1.into()))).collect(),
            sys,
        })
    }

    pub fn from_values(sys: &Arc<System>, radius: usize, values: BTreeMap<Word, Q>) -> Result<Self> {
        check_z(sys)?;
        for w in values.keys() {
            if !sys.is_admissible(w, &[radius])? {
                return Err(Error::InvalidArgument(format!(
                    "word {} is not admissible at radius {radius}",
                    sys.format_word_lossy(w, &[radius])
                )));
            }
        }
        Ok(LocFn {
            sys: sys.clone(),
            radius,
            values: values.into_iter().filter(|(_, v)| !v.is_zero()).collect(),
        })
    }

    pub fn from_fn(sys: &Arc<System>, radius: usize, mut f: impl FnMut(&[u8]) -> Q) -> Result<Self> {
        check_z(sys)?;
        let mut values = BTreeMap::new();
        for w in sys.words(&[radius])? {
            let v = f(&w);
            if !v.is_zero() {
                values.insert(w, v);
            }
        }
        Ok(LocFn { sys: sys.clone(), radius, values })
    }

    pub fn system(&self) -> &Arc<System> {
        &self.sys
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Nonzero values keyed by radius-`radius` word.
    pub fn values(&self) -> &BTreeMap<Word, Q> {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.is_empty()
    }

    fn same(&self, o: &LocFn) -> Result<()> {
        if Arc::ptr_eq(&self.sys, &o.sys) || self.sys.key() == o.sys.key() {
            Ok(())
        } else {
            Err(Error::SystemMismatch)
        }
    }

    pub fn refine(&self, r: usize) -> Result<LocFn> {
        if r < self.radius {
            return Err(Error::InvalidArgument(format!("cannot coarsen radius {} to {r}", self.radius)));
        }
        if r == self.radius {
            return Ok(self.clone());
        }
        let z = self.sys.as_z()?;
        let mut values = BTreeMap::new();
        for (w, v) in &self.values {
            for w2 in z.refinements(w, self.radius, r)? {
                values.insert(w2, v.clone());
            }
        }
        Ok(LocFn { sys: self.sys.clone(), radius: r, values })
    }

    /// Value at a point given by its radius-`r` word, `r ≥ radius`.
    pub fn eval(&self, w: &[u8], r: usize) -> Q {
        self.eval_ref(w, r).cloned().unwrap_or_else(Q::zero)
    }

    fn eval_ref(&self, w: &[u8], r: usize) -> Option<&Q> {
        let z = self.sys.as_z().ok()?;
        if r == self.radius {
            self.values.get(w)
        } else {
            self.values.get(&z.project(w, r, self.radius))
        }
    }

    pub fn eval_f64(&self, w: &[u8], r: usize) -> f64 {
        self.eval_ref(w, r).map(q_to_f64).unwrap_or(0.0)
    }

    fn binary(&self, o: &LocFn, union: bool, op: impl Fn(&Q, &Q) -> Q) -> Result<LocFn> {
        self.same(o)?;
        let r = self.radius.max(o.radius);
        let a = self.refine(r)?;
        let b = o.refine(r)?;
        let zero = Q::zero();
        let mut values = BTreeMap::new();
        for (w, x) in &a.values {
            let y = b.values.get(w).unwrap_or(&zero);
            let v = op(x, y);
            if !v.is_zero() {
                values.insert(w.clone(), v);
            }
        }
        if union {
            for (w, y) in &b.values {
                if !a.values.contains_key(w) {
                    let v = op(&zero, y);
                    if !v.is_zero() {
                        values.insert(w.clone(), v);
                    }
                }
            }
        }
        Ok(LocFn { sys: self.sys.clone(), radius: r, values })
    }

    pub fn add(&self, o: &LocFn) -> Result<LocFn> {
        self.binary(o, true, |x, y| x + y)
    }

    pub fn sub(&self, o: &LocFn) -> Result<LocFn> {
        self.binary(o, true, |x, y| x - y)
    }

    pub fn mul(&self, o: &LocFn) -> Result<LocFn> {
        self.binary(o, false, |x, y| x * y)
    }

    pub fn scale(&self, c: &Q) -> LocFn {
        LocFn {
            sys: self.sys.clone(),
            radius: self.radius,
            values: if c.is_zero() {
                BTreeMap::new()
            } else {
                self.values.iter().map(|(w, v)| (w.clone(), v * c)).collect()
            },
        }
    }

    pub fn neg(&self) -> LocFn {
        self.scale(&Q::from_integer((-1).into()))
    }

    /// 1 − f.
    pub fn one_minus(&self) -> Result<LocFn> {
        LocFn::constant(&self.sys, Q::from_integer(1.into()))?.sub(self)
    }

    /// f∘σ^γ, defined at radius `shift_radius(radius, γ)`.
    pub fn compose_shift(&self, gamma: i64) -> Result<LocFn> {
        if gamma == 0 {
            return Ok(self.clone());
        }
        let z = self.sys.as_z()?;
        let r = z.shift_radius(self.radius, gamma);
        let mut values = BTreeMap::new();
        // σ^γ x ∈ [w]  ⇔  x ∈ σ^{−γ}[w]
        for (w, v) in &self.values {
            for w2 in z.translate_word(w, self.radius, -gamma)? {
                values.insert(w2, v.clone());
            }
        }
        Ok(LocFn { sys: self.sys.clone(), radius: r, values })
    }

    /// sup |f|.
    pub fn max_abs(&self) -> Q {
        self.values.values().map(|v| v.abs()).max().unwrap_or_else(Q::zero)
    }

    pub fn max_value(&self) -> Result<Q> {
        let total = self.sys.count_words(&[self.radius])?;
        let m = self.values.values().max().cloned();
        Ok(match m {
            Some(m) if self.values.len() == total => m,
            Some(m) => m.max(Q::zero()),
            None => Q::zero(),
        })
    }

    pub fn min_value(&self) -> Result<Q> {
        let total = self.sys.count_words(&[self.radius])?;
        let m = self.values.values().min().cloned();
        Ok(match m {
            Some(m) if self.values.len() == total => m,
            Some(m) => m.min(Q::zero()),
            None => Q::zero(),
        })
    }

    /// {x : pred(f(x))} as a clopen.
    pub fn level_set(&self, pred: impl Fn(&Q) -> bool) -> Result<Clopen> {
        let zero = Q::zero();
        let words: Vec<Word> = self
            .sys
            .words(&[self.radius])?
            .into_iter()
            .filter(|w| pred(self.values.get(w).unwrap_or(&zero)))
            .collect();
        Clopen::from_words(&self.sys, self.radius, words)
    }

    pub fn support(&self) -> Result<Clopen> {
        Clopen::from_words(&self.sys, self.radius, self.values.keys().cloned())
    }

    /// The single value of f on a nonempty clopen, if f is constant there.
    pub fn constant_on(&self, c: &Clopen) -> Result<Option<Q>> {
        let r = self.radius.max(c.radius());
        let f = self.refine(r)?;
        let c = c.refine(r)?;
        let zero = Q::zero();
        let mut seen: Option<&Q> = None;
        for w in c.words() {
            let v = f.values.get(w).unwrap_or(&zero);
            match seen {
                None => seen = Some(v),
                Some(s) if s != v => return Ok(None),
                _ => {}
            }
        }
        Ok(seen.cloned())
    }

    /// (f − ε)₊.
    pub fn cut(&self, eps: &Q) -> LocFn {
        LocFn {
            sys: self.sys.clone(),
            radius: self.radius,
            values: self
                .values
                .iter()
                .filter(|(_, v)| *v > eps)
                .map(|(w, v)| (w.clone(), v - eps))
                .collect(),
        }
    }

    pub fn to_spec(&self) -> LocFnSpec {
        LocFnSpec {
            radius: self.radius,
            values: self
                .values
                .iter()
                .map(|(w, v)| (self.sys.format_word(w, &[self.radius]), QValue::Text(v.to_string())))
                .collect(),
        }
    }

    pub fn from_spec(sys: &Arc<System>, spec: &LocFnSpec) -> Result<Self> {
        check_z(sys)?;
        let mut values = BTreeMap::new();
        for (ws, v) in &spec.values {
            let (w, radii) = sys.parse_word(ws)?;
            if radii != [spec.radius] {
                return Err(Error::Parse(format!("word {ws:?} does not have radius {}", spec.radius)));
            }
            values.insert(w, v.to_q()?);
        }
        LocFn::from_values(sys, spec.radius, values)
    }
}

/// Σ_γ f_γ u_γ with finitely many nonzero coefficients.
#[derive(Clone, Debug)]
pub struct CrossedElement {
    sys: Arc<System>,
    coeffs: BTreeMap<i64, LocFn>,
}

impl PartialEq for CrossedElement {
    fn eq(&self, other: &Self) -> bool {
        self.sub(other).map(|d| d.is_zero()).unwrap_or(false)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CrossedSpec {
    pub support: Vec<i64>,
    pub coeffs: BTreeMap<String, LocFnSpec>,
}

impl CrossedElement {
    pub fn zero(sys: &Arc<System>) -> Result<Self> {
        check_z(sys)?;
        Ok(CrossedElement { sys: sys.clone(), coeffs: BTreeMap::new() })
    }

    pub fn one(sys: &Arc<System>) -> Result<Self> {
        CrossedElement::function(&LocFn::constant(sys, Q::from_integer(1.into()))?)
    }

    pub fn scalar(sys: &Arc<System>, c: Q) -> Result<Self> {
        CrossedElement::function(&LocFn::constant(sys, c)?)
    }

    pub fn function(f: &LocFn) -> Result<Self> {
        CrossedElement::term(f, 0)
    }

    pub fn unitary(sys: &Arc<System>, gamma: i64) -> Result<Self> {
        CrossedElement::term(&LocFn::constant(sys, Q::from_integer(1.into()))?, gamma)
    }

    /// f u_γ.
    pub fn term(f: &LocFn, gamma: i64) -> Result<Self> {
        let mut coeffs = BTreeMap::new();
        if !f.is_zero() {
            coeffs.insert(gamma, f.clone());
        }
        Ok(CrossedElement { sys: f.sys.clone(), coeffs })
    }

    pub fn from_coeffs(sys: &Arc<System>, coeffs: BTreeMap<i64, LocFn>) -> Result<Self> {
        check_z(sys)?;
        let mut out = CrossedElement::zero(sys)?;
        for (g, f) in coeffs {
            out = out.add(&CrossedElement::term(&f, g)?)?;
        }
        Ok(out)
    }

    pub fn system(&self) -> &Arc<System> {
        &self.sys
    }

    pub fn coeffs(&self) -> &BTreeMap<i64, LocFn> {
        &self.coeffs
    }

    pub fn coeff(&self, gamma: i64) -> Result<LocFn> {
        match self.coeffs.get(&gamma) {
            Some(f) => Ok(f.clone()),
            None => LocFn::zero(&self.sys),
        }
    }

    pub fn support(&self) -> FiniteGroupSet {
        FiniteGroupSet::from_z(self.coeffs.keys().copied())
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn radius(&self) -> usize {
        self.coeffs.values().map(|f| f.radius).max().unwrap_or(0)
    }

    /// max |γ| over the support.
    pub fn band(&self) -> usize {
        self.coeffs.keys().map(|g| g.unsigned_abs() as usize).max().unwrap_or(0)
    }

    /// max_γ ‖f_γ‖∞.
    pub fn coefficient_bound(&self) -> Q {
        self.coeffs.values().map(|f| f.max_abs()).max().unwrap_or_else(Q::zero)
    }

    fn insert_sum(coeffs: &mut BTreeMap<i64, LocFn>, g: i64, f: LocFn) -> Result<()> {
        let next = match coeffs.remove(&g) {
            Some(old) => old.add(&f)?,
            None => f,
        };
        if !next.is_zero() {
            coeffs.insert(g, next);
        }
        Ok(())
    }

    pub fn add(&self, o: &CrossedElement) -> Result<CrossedElement> {
        if self.sys.key() != o.sys.key() {
            return Err(Error::SystemMismatch);
        }
        let mut coeffs = self.coeffs.clone();
        for (g, f) in &o.coeffs {
            Self::insert_sum(&mut coeffs, *g, f.clone())?;
        }
        Ok(CrossedElement { sys: self.sys.clone(), coeffs })
    }

    pub fn sub(&self, o: &CrossedElement) -> Result<CrossedElement> {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> CrossedElement {
        self.scale(&Q::from_integer((-1).into()))
    }

    pub fn scale(&self, c: &Q) -> CrossedElement {
        CrossedElement {
            sys: self.sys.clone(),
            coeffs: if c.is_zero() {
                BTreeMap::new()
            } else {
                self.coeffs.iter().map(|(g, f)| (*g, f.scale(c))).collect()
            },
        }
    }

    /// (f u_γ)(g u_δ) = f·(g∘σ^γ) u_{γ+δ}.
    pub fn mul(&self, o: &CrossedElement) -> Result<CrossedElement> {
        if self.sys.key() != o.sys.key() {
            return Err(Error::SystemMismatch);
        }
        let mut coeffs = BTreeMap::new();
        for (g, f) in &self.coeffs {
            for (d, h) in &o.coeffs {
                let c = f.mul(&h.compose_shift(*g)?)?;
                if !c.is_zero() {
                    Self::insert_sum(&mut coeffs, g + d, c)?;
                }
            }
        }
        Ok(CrossedElement { sys: self.sys.clone(), coeffs })
    }

    /// (f u_γ)* = (f∘σ^{−γ}) u_{−γ} (real coefficients).
    pub fn adjoint(&self) -> Result<CrossedElement> {
        let mut coeffs = BTreeMap::new();
        for (g, f) in &self.coeffs {
            coeffs.insert(-g, f.compose_shift(-g)?);
        }
        Ok(CrossedElement { sys: self.sys.clone(), coeffs })
    }

    pub fn is_self_adjoint(&self) -> Result<bool> {
        Ok(self.adjoint()? == *self)
    }

    /// 𝔼(a) = f_e.
    pub fn conditional_expectation(&self) -> Result<LocFn> {
        self.coeff(0)
    }

    pub fn to_spec(&self) -> CrossedSpec {
        CrossedSpec {
            support: self.coeffs.keys().copied().collect(),
            coeffs: self.coeffs.iter().map(|(g, f)| (g.to_string(), f.to_spec())).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_spec()).expect("crossed element serializes")
    }

    pub fn from_spec(sys: &Arc<System>, spec: &CrossedSpec) -> Result<Self> {
        check_z(sys)?;
        let mut coeffs = BTreeMap::new();
        for (gs, fs) in &spec.coeffs {
            let g: i64 = gs
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad group element {gs:?}")))?;
            if !spec.support.contains(&g) {
                return Err(Error::Parse(format!("coefficient at {g} outside the declared support")));
            }
            coeffs.insert(g, LocFn::from_spec(sys, fs)?);
        }
        CrossedElement::from_coeffs(sys, coeffs)
    }

    pub fn from_json(sys: &Arc<System>, s: &str) -> Result<Self> {
        let spec: CrossedSpec = serde_json::from_str(s)?;
        CrossedElement::from_spec(sys, &spec)
    }
}

/// Matrix [f_{c₂−c₁}(σ^{c₁} z)] over the given offsets, with z given by a
/// radius-`r` word and `r ≥ shift_radius(a.radius(), max |c|)`.
pub fn orbit_block(a: &CrossedElement, zw: &[u8], r: usize, offsets: &[i64]) -> Result<crate::exact::QMatrix> {
    let z = a.sys.as_z()?;
    let ra = a.radius();
    let reach = offsets.iter().map(|c| c.abs()).max().unwrap_or(0);
    let need = z.shift_radius(ra, reach);
    if r < need {
        return Err(Error::InvalidArgument(format!("point word needs radius ≥ {need}, got {r}")));
    }
    let mut m = crate::exact::qmat_zero(offsets.len());
    for (i, &c1) in offsets.iter().enumerate() {
        let w1 = z.shift_word(zw, r, c1, ra);
        for (j, &c2) in offsets.iter().enumerate() {
            if let Some(coef) = a.coeffs.get(&(c2 - c1)) {
                m[i][j] = coef.eval(&w1, ra);
            }
        }
    }
    Ok(m)
}

/// The regular representation of an element on the valid part of a window.
#[derive(Clone, Debug)]
pub struct RegularRep {
    pub matrix: SparseMatrix,
    /// Window position of row 0.
    pub first: usize,
    pub radius: usize,
    pub band: usize,
    pub window_len: usize,
}

impl RegularRep {
    pub fn size(&self) -> usize {
        self.matrix.n_rows
    }

    /// Spectral norm of the submatrix on rows and columns at least `margin`
    /// away from both ends.
    pub fn interior(&self, margin: usize) -> SparseMatrix {
        let n = self.size();
        let lo = margin.min(n);
        let hi = n.saturating_sub(margin).max(lo);
        let mut m = SparseMatrix::zeros(hi - lo, hi - lo);
        for i in lo..hi {
            for &(j, v) in &self.matrix.rows[i] {
                if (lo..hi).contains(&j) {
                    m.add_entry(i - lo, j - lo, v);
                }
            }
        }
        m
    }
}

/// Words of σⁿx at radius `r` for every valid window position.
pub fn window_words(w: &OrbitWindow, r: usize) -> Result<(usize, Vec<Word>)> {
    let range = w.valid_range(r);
    if range.is_empty() {
        return Err(Error::WindowTooSmall(format!("window of length {} has no positions at radius {r}", w.len())));
    }
    let first = range.start;
    let words = range.map(|n| w.word_at(n, r)).collect::<Result<Vec<_>>>()?;
    Ok((first, words))
}

pub fn represent(a: &CrossedElement, w: &OrbitWindow) -> Result<RegularRep> {
    represent_at(a, w, a.radius())
}

/// Matrix of `a` on positions valid for radius `radius ≥ a.radius()`;
/// entry (n, n+γ) is f_γ(σⁿx), entries leaving the window are dropped.
pub fn represent_at(a: &CrossedElement, w: &OrbitWindow, radius: usize) -> Result<RegularRep> {
    if w.system().key() != a.sys.key() {
        return Err(Error::SystemMismatch);
    }
    if radius < a.radius() {
        return Err(Error::InvalidArgument(format!(
            "representation radius {radius} below coefficient radius {}",
            a.radius()
        )));
    }
    let (first, words) = window_words(w, radius)?;
    represent_words(a, &words, radius, first, w.len())
}

fn represent_words(a: &CrossedElement, words: &[Word], radius: usize, first: usize, window_len: usize) -> Result<RegularRep> {
    let n = words.len();
    let band = a.band();
    if n <= 2 * band {
        return Err(Error::WindowTooSmall(format!(
            "{n} valid positions cannot hold an element of band {band}"
        )));
    }
    let mut m = SparseMatrix::zeros(n, n);
    for (i, word) in words.iter().enumerate() {
        for (g, f) in &a.coeffs {
            let j = i as i64 + g;
            if j < 0 || j >= n as i64 {
                continue;
            }
            let v = f.eval_f64(word, radius);
            m.add_entry(i, j as usize, v);
        }
    }
    Ok(RegularRep { matrix: m, first, radius, band, window_len })
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct NormReport {
    pub value: f64,
    /// sqrt(‖A‖₁‖A‖∞) on the window.
    pub upper: f64,
    /// band / L.
    pub edge_bound: f64,
    pub method: &'static str,
    pub size: usize,
}

pub fn norm(a: &CrossedElement, w: &OrbitWindow) -> Result<NormReport> {
    let rep = represent(a, w)?;
    Ok(rep_norm(&rep))
}

pub fn rep_norm(rep: &RegularRep) -> NormReport {
    let est = spectral_norm(&rep.matrix);
    NormReport {
        value: est.value,
        upper: est.upper,
        edge_bound: rep.band as f64 / rep.window_len as f64,
        method: est.method,
        size: rep.size(),
    }
}

/// Smallest eigenvalue of a symmetric represented matrix.
pub fn min_eigenvalue(m: &SparseMatrix) -> f64 {
    if m.n_rows <= crate::linalg::DENSE_LIMIT {
        let e = nalgebra::SymmetricEigen::new(m.to_dense());
        return e.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    }
    let c = m.schur_bound();
    let (top, _) = lanczos_largest(
        |x| {
            let y = m.matvec(x);
            x.iter().zip(y).map(|(a, b)| c * a - b).collect()
        },
        m.n_cols,
    );
    c - top
}

/// (a − ε)₊ through functional calculus on the window representation of a
/// self-adjoint element. Dense; the window must keep the size moderate.
pub fn cut_down_crossed(a: &CrossedElement, w: &OrbitWindow, eps: f64) -> Result<DMatrix<f64>> {
    if eps < 0.0 || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("ε must be a nonnegative number, got {eps}")));
    }
    if !a.is_self_adjoint()? {
        return Err(Error::Precondition("functional calculus needs a self-adjoint element".into()));
    }
    let rep = represent(a, w)?;
    if rep.size() > 2048 {
        return Err(Error::InvalidArgument(format!(
            "dense functional calculus limited to 2048 positions, window gives {}",
            rep.size()
        )));
    }
    let dense = rep.matrix.to_dense();
    let sym = (&dense + dense.transpose()) * 0.5;
    Ok(symmetric_function(&sym, |t| (t - eps).max(0.0)))
}

#[derive(Clone, Debug, Serialize)]
pub struct SmallDomainReport {
    /// Clopen p with p·(p∘σ^g) = 0 for every nonzero g in the support.
    pub p: crate::clopen::ClopenSpec,
    /// 1/‖𝔼(a)‖ used to normalise a.
    pub normalisation: String,
    pub positive: bool,
    pub min_eigenvalue: f64,
    /// p a p − p² computed formally.
    pub formal_residual_zero: bool,
    /// ‖p a p − p²‖ on the window.
    pub window_residual: f64,
    pub bound: f64,
    pub degenerate: bool,
    pub passed: bool,
}

/// A nonzero positive function h = (p² − 2ε)₊ below a in the Cuntz order:
/// p is the indicator of a cylinder inside a maximiser cell of 𝔼(a) whose
/// translates by the support of a miss it.
pub fn small_domain_element(a: &CrossedElement, w: &OrbitWindow, eps: f64) -> Result<(LocFn, Clopen, SmallDomainReport)> {
    const EXTRA_RADIUS: usize = 8;
    let sys = a.system().clone();
    let fe = a.conditional_expectation()?;
    if fe.is_zero() {
        return Err(Error::Precondition("𝔼(a) = 0".into()));
    }
    let scale = fe.max_abs().recip();
    let an = a.scale(&scale);
    let fe = an.conditional_expectation()?;
    let top = fe.max_value()?;
    let z = sys.as_z()?;
    let shifts: Vec<i64> = an.coeffs.keys().copied().filter(|g| *g != 0).collect();
    let r0 = fe.radius();
    let mut found = None;
    'outer: for r in r0..=r0 + EXTRA_RADIUS {
        for word in z.words(r)?.iter() {
            if fe.eval(word, r) != top {
                continue;
            }
            let p = Clopen::from_words(&sys, r, [word.clone()])?;
            let mut ok = true;
            for g in &shifts {
                if !p.is_disjoint(&p.translate_z(*g)?)? {
                    ok = false;
                    break;
                }
            }
            if ok {
                found = Some(p);
                break 'outer;
            }
        }
    }
    let p = found.ok_or_else(|| {
        Error::Precondition(format!(
            "no cylinder up to radius {} separates the support translates",
            r0 + EXTRA_RADIUS
        ))
    })?;
    let (h, report) = small_domain_with(&an, &p, w, eps, scale)?;
    Ok((h, p, report))
}

/// Verifies a given cylinder p for a normalised element and returns h.
pub fn small_domain_with(a: &CrossedElement, p: &Clopen, w: &OrbitWindow, eps: f64, normalisation: Q) -> Result<(LocFn, SmallDomainReport)> {
    let rep = represent(a, w)?;
    let sym_ok = a.is_self_adjoint()?;
    let min_eig = min_eigenvalue(&rep.matrix);
    let positive = sym_ok && min_eig >= -1e-9;
    if !positive {
        return Err(Error::Precondition(format!(
            "element is not positive on the window (self-adjoint: {sym_ok}, λ_min = {min_eig})"
        )));
    }
    let pf = LocFn::indicator(p)?;
    let pe = CrossedElement::function(&pf)?;
    let pap = pe.mul(a)?.mul(&pe)?;
    let p2 = pe.mul(&pe)?;
    let diff = pap.sub(&p2)?;
    let r = diff.radius().max(p2.radius());
    let residual = if diff.is_zero() {
        0.0
    } else {
        spectral_norm(&represent_at(&diff, w, r)?.matrix).value
    };
    let degenerate = eps >= 0.5;
    let two_eps = q_from_f64(2.0 * eps).ok_or_else(|| Error::InvalidArgument("ε must be finite".into()))?;
    let h = pf.mul(&pf)?.cut(&two_eps);
    let bound = 2.0 * eps;
    let report = SmallDomainReport {
        p: p.to_spec(),
        normalisation: normalisation.to_string(),
        positive,
        min_eigenvalue: min_eig,
        formal_residual_zero: diff.is_zero(),
        window_residual: residual,
        bound,
        degenerate,
        passed: residual < bound || diff.is_zero(),
    };
    Ok((h, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{q_frac, q_int};
    use crate::system::SystemSpec;

    fn odo() -> Arc<System> {
        Arc::new(System::from_spec(&SystemSpec::Odometer { bases: vec![2] }).unwrap())
    }

    fn fib() -> Arc<System> {
        Arc::new(System::from_json(r#"{"kind":"substitution","rules":{"a":"ab","b":"a"}}"#).unwrap())
    }

    #[test]
    fn unitary_relations() {
        let s = fib();
        let u = CrossedElement::unitary(&s, 1).unwrap();
        let us = CrossedElement::unitary(&s, -1).unwrap();
        assert_eq!(u.mul(&us).unwrap(), CrossedElement::one(&s).unwrap());
        assert_eq!(u.adjoint().unwrap(), us);
    }

    #[test]
    fn covariance_gives_composition() {
        let s = fib();
        let f = LocFn::indicator(&Clopen::cylinder(&s, "ab").unwrap()).unwrap();
        let lhs = CrossedElement::unitary(&s, 1)
            .unwrap()
            .mul(&CrossedElement::function(&f).unwrap())
            .unwrap()
            .mul(&CrossedElement::unitary(&s, -1).unwrap())
            .unwrap();
        assert_eq!(lhs, CrossedElement::function(&f.compose_shift(1).unwrap()).unwrap());
        // f∘σ is the indicator of {x : x₁x₂ = ab}
        let ab = s.as_z().unwrap().parse_word("ab").unwrap();
        let expected = LocFn::indicator(&Clopen::cylinder_at(&s, &ab, 1).unwrap()).unwrap();
        assert_eq!(f.compose_shift(1).unwrap(), expected);
    }

    #[test]
    fn expectation_picks_identity_coefficient() {
        let s = odo();
        let u1 = CrossedElement::unitary(&s, 1).unwrap();
        assert!(u1.conditional_expectation().unwrap().is_zero());
        let a = u1
            .add(&CrossedElement::scalar(&s, q_int(2)).unwrap())
            .unwrap()
            .add(&CrossedElement::unitary(&s, -1).unwrap())
            .unwrap();
        assert_eq!(a.conditional_expectation().unwrap(), LocFn::constant(&s, q_int(2)).unwrap());
    }

    #[test]
    fn json_roundtrip() {
        let s = fib();
        let f = LocFn::from_fn(&s, 1, |w| q_frac(w[0] as i64 + 2 * w[2] as i64, 3)).unwrap();
        let a = CrossedElement::term(&f, 2).unwrap().add(&CrossedElement::unitary(&s, -1).unwrap()).unwrap();
        let back = CrossedElement::from_json(&s, &a.to_json()).unwrap();
        assert_eq!(a, back);
        let with_number = r#"{"support":[0],"coeffs":{"0":{"radius":0,"values":{"a":0.5,"b":"1/3"}}}}"#;
        let b = CrossedElement::from_json(&s, with_number).unwrap();
        assert_eq!(b.coeff(0).unwrap().eval(&[0], 0), q_frac(1, 2));
        assert!(CrossedElement::from_json(&s, r#"{"support":[],"coeffs":{"1":{"radius":0,"values":{}}}}"#).is_err());
        assert!(CrossedElement::from_json(&s, r#"{"support":[0],"coeffs":{},"x":1}"#).is_err());
    }

    #[test]
    fn represent_function_and_shift() {
        let s = odo();
        let w = OrbitWindow::generate(&s, 300, 1).unwrap();
        let f = LocFn::from_fn(&s, 1, |word| q_frac(word[0] as i64 + word[1] as i64, 4)).unwrap();
        let n = norm(&CrossedElement::function(&f).unwrap(), &w).unwrap();
        assert!((n.value - 0.5).abs() < 1e-12);
        let u = norm(&CrossedElement::unitary(&s, 1).unwrap(), &w).unwrap();
        assert!(u.value <= 1.0 + 1e-12 && u.value >= 1.0 - 2.0 / 300.0);
        let a = CrossedElement::unitary(&s, 1).unwrap().add(&CrossedElement::unitary(&s, -1).unwrap()).unwrap();
        let rep = represent(&a, &w).unwrap();
        let closed = 2.0 * (std::f64::consts::PI / (rep.size() as f64 + 1.0)).cos();
        assert!((rep_norm(&rep).value - closed).abs() < 1e-9);
    }

    #[test]
    fn small_domain_on_odometer() {
        let s = odo();
        let w = OrbitWindow::generate(&s, 400, 2).unwrap();
        let a = CrossedElement::scalar(&s, q_int(2))
            .unwrap()
            .add(&CrossedElement::unitary(&s, 1).unwrap())
            .unwrap()
            .add(&CrossedElement::unitary(&s, -1).unwrap())
            .unwrap();
        let (h, p, rep) = small_domain_element(&a, &w, 0.1).unwrap();
        assert!(rep.passed && rep.formal_residual_zero && !rep.degenerate);
        assert!(!h.is_zero());
        assert!(p.is_disjoint(&p.translate_z(1).unwrap()).unwrap());
        // the cylinder [01] works as well
        let p01 = Clopen::cylinder(&s, "01").unwrap();
        assert!(p01.is_disjoint(&p01.translate_z(-1).unwrap()).unwrap());
        let (_, r01) = small_domain_with(&a.scale(&q_frac(1, 2)), &p01, &w, 0.1, q_frac(1, 2)).unwrap();
        assert!(r01.passed && r01.formal_residual_zero);
        let (h0, _, r) = small_domain_element(&a, &w, 0.5).unwrap();
        assert!(r.degenerate && h0.is_zero());
    }

    #[test]
    fn cut_down_composes() {
        let s = odo();
        let w = OrbitWindow::generate(&s, 120, 3).unwrap();
        let a = CrossedElement::scalar(&s, q_int(2))
            .unwrap()
            .add(&CrossedElement::unitary(&s, 1).unwrap())
            .unwrap()
            .add(&CrossedElement::unitary(&s, -1).unwrap())
            .unwrap();
        let once = cut_down_crossed(&a, &w, 0.3).unwrap();
        let rep = represent(&a, &w).unwrap().matrix.to_dense();
        let step = symmetric_function(&symmetric_function(&rep, |t| (t - 0.1).max(0.0)), |t| (t - 0.2).max(0.0));
        assert!((once - step).amax() < 1e-9);
        assert!(cut_down_crossed(&a, &w, -1.0).is_err());
    }
}
