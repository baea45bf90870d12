//! Exact arithmetic in the number field generated by a Perron eigenvalue.
//!
//! Elements are rational polynomials in the generator `t`, reduced modulo a
//! squarefree polynomial `q` with `q(λ) = 0`. Whenever a zero test meets a
//! nontrivial common factor with `q`, the modulus is replaced by the factor
//! that still vanishes at `λ`, so the modulus only ever shrinks and stored
//! polynomials stay valid representatives.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt;
use std::sync::{Arc, Mutex};

pub type Q = BigRational;

pub fn q_int(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn q_frac(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn q_to_f64(x: &Q) -> f64 {
    x.to_f64().unwrap_or_else(|| {
        let n = x.numer().to_f64().unwrap_or(f64::NAN);
        let d = x.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

/// Exact rational value of a finite float.
pub fn q_from_f64(x: f64) -> Option<Q> {
    Q::from_float(x)
}

/// Dense polynomial, coefficients from low to high degree, no trailing zeros.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly(pub Vec<Q>);

impl Poly {
    pub fn zero() -> Self {
        Poly(Vec::new())
    }

    pub fn constant(c: Q) -> Self {
        let mut p = Poly(vec![c]);
        p.trim();
        p
    }

    pub fn from_ints(c: &[i64]) -> Self {
        let mut p = Poly(c.iter().map(|&v| q_int(v)).collect());
        p.trim();
        p
    }

    fn trim(&mut self) {
        while self.0.last().is_some_and(|c| c.is_zero()) {
            self.0.pop();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        if self.0.is_empty() {
            None
        } else {
            Some(self.0.len() - 1)
        }
    }

    pub fn lead(&self) -> Q {
        self.0.last().cloned().unwrap_or_else(Q::zero)
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let n = self.0.len().max(o.0.len());
        let mut v = Vec::with_capacity(n);
        for i in 0..n {
            let a = self.0.get(i).cloned().unwrap_or_else(Q::zero);
            let b = o.0.get(i).cloned().unwrap_or_else(Q::zero);
            v.push(a + b);
        }
        let mut p = Poly(v);
        p.trim();
        p
    }

    pub fn neg(&self) -> Poly {
        Poly(self.0.iter().map(|c| -c).collect())
    }

    pub fn sub(&self, o: &Poly) -> Poly {
        self.add(&o.neg())
    }

    pub fn scale(&self, s: &Q) -> Poly {
        let mut p = Poly(self.0.iter().map(|c| c * s).collect());
        p.trim();
        p
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        if self.is_zero() || o.is_zero() {
            return Poly::zero();
        }
        let mut v = vec![Q::zero(); self.0.len() + o.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in o.0.iter().enumerate() {
                v[i + j] += a * b;
            }
        }
        let mut p = Poly(v);
        p.trim();
        p
    }

    /// Quotient and remainder; `d` must be nonzero.
    pub fn divrem(&self, d: &Poly) -> (Poly, Poly) {
        let dd = d.degree().expect("division by zero polynomial");
        let mut r = self.clone();
        let lead = d.lead();
        let mut quo = vec![Q::zero(); self.0.len().saturating_sub(dd).max(1)];
        while let Some(rd) = r.degree() {
            if rd < dd {
                break;
            }
            let c = r.lead() / &lead;
            let shift = rd - dd;
            quo[shift] = c.clone();
            for (i, dc) in d.0.iter().enumerate() {
                r.0[i + shift] -= &c * dc;
            }
            r.trim();
        }
        let mut q = Poly(quo);
        q.trim();
        (q, r)
    }

    pub fn rem(&self, d: &Poly) -> Poly {
        self.divrem(d).1
    }

    pub fn monic(&self) -> Poly {
        if self.is_zero() {
            return Poly::zero();
        }
        let l = self.lead();
        Poly(self.0.iter().map(|c| c / &l).collect())
    }

    pub fn gcd(&self, o: &Poly) -> Poly {
        let mut a = self.clone();
        let mut b = o.clone();
        while !b.is_zero() {
            let r = a.rem(&b);
            a = b;
            b = r;
        }
        a.monic()
    }

    /// Inverse of `self` modulo `m`, if the two are coprime.
    pub fn inverse_mod(&self, m: &Poly) -> Option<Poly> {
        let (mut r0, mut r1) = (m.clone(), self.rem(m));
        let (mut s0, mut s1) = (Poly::zero(), Poly::constant(q_int(1)));
        while !r1.is_zero() {
            let (qt, r) = r0.divrem(&r1);
            let s = s0.sub(&qt.mul(&s1));
            r0 = r1;
            r1 = r;
            s0 = s1;
            s1 = s;
        }
        if r0.degree() != Some(0) {
            return None;
        }
        let inv_lead = Q::one() / r0.lead();
        Some(s0.scale(&inv_lead).rem(m))
    }

    pub fn derivative(&self) -> Poly {
        let mut v = Vec::new();
        for (i, c) in self.0.iter().enumerate().skip(1) {
            v.push(c * q_int(i as i64));
        }
        let mut p = Poly(v);
        p.trim();
        p
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + q_to_f64(c))
    }

    fn abs_eval_f64(&self, x: f64) -> f64 {
        self.0
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * x.abs() + q_to_f64(&c.abs()))
    }
}

/// Characteristic polynomial det(tI − A) by the Faddeev–LeVerrier recursion.
pub fn char_poly(a: &[Vec<i64>]) -> Poly {
    let n = a.len();
    let am: Vec<Vec<Q>> = a
        .iter()
        .map(|r| r.iter().map(|&v| q_int(v)).collect())
        .collect();
    let mut coeffs = vec![Q::zero(); n + 1];
    coeffs[n] = Q::one();
    let mut m = vec![vec![Q::zero(); n]; n];
    for k in 1..=n {
        // M_k = A·M_{k−1} + c_{n−k+1} I
        let mut next = vec![vec![Q::zero(); n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut s = Q::zero();
                for l in 0..n {
                    if !am[i][l].is_zero() && !m[l][j].is_zero() {
                        s += &am[i][l] * &m[l][j];
                    }
                }
                next[i][j] = s;
            }
            next[i][i] += &coeffs[n - k + 1];
        }
        m = next;
        let mut tr = Q::zero();
        for i in 0..n {
            for l in 0..n {
                tr += &am[i][l] * &m[l][i];
            }
        }
        coeffs[n - k] = -tr / q_int(k as i64);
    }
    let mut p = Poly(coeffs);
    p.trim();
    p
}

/// Largest eigenvalue of a nonnegative primitive matrix, by power iteration.
pub fn perron_value(a: &[Vec<i64>]) -> f64 {
    let n = a.len();
    let mut v = vec![1.0f64; n];
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let mut w = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                w[i] += a[i][j] as f64 * v[j];
            }
        }
        let s: f64 = w.iter().sum();
        let vs: f64 = v.iter().sum();
        let next = s / vs;
        for x in w.iter_mut() {
            *x /= s;
        }
        v = w;
        if (next - lambda).abs() <= 1e-15 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda
}

#[derive(Debug)]
pub struct NumberField {
    modulus: Mutex<Poly>,
    lambda: f64,
}

impl NumberField {
    /// The rational numbers, presented as ℚ[t]/(t − 1).
    pub fn rationals() -> Arc<Self> {
        Arc::new(NumberField {
            modulus: Mutex::new(Poly::from_ints(&[-1, 1])),
            lambda: 1.0,
        })
    }

    /// Field generated by the root of `p` closest to `approx`.
    pub fn from_poly(p: &Poly, approx: f64) -> Arc<Self> {
        let sq = p.divrem(&p.gcd(&p.derivative())).0.monic();
        let lambda = newton_polish(&sq, approx);
        Arc::new(NumberField {
            modulus: Mutex::new(sq),
            lambda,
        })
    }

    /// Field of the Perron eigenvalue of a primitive integer matrix.
    pub fn perron(a: &[Vec<i64>]) -> Arc<Self> {
        let cp = char_poly(a);
        NumberField::from_poly(&cp, perron_value(a))
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn modulus(&self) -> Poly {
        self.modulus.lock().expect("modulus lock").clone()
    }

    pub fn degree(&self) -> usize {
        self.modulus().degree().unwrap_or(0)
    }

    pub fn is_rational(&self) -> bool {
        self.degree() <= 1
    }

    fn reduce(&self, p: &Poly) -> Poly {
        p.rem(&self.modulus())
    }

    /// Exact test p(λ) = 0, refining the modulus when needed.
    pub fn vanishes(&self, p: &Poly) -> bool {
        let mut guard = self.modulus.lock().expect("modulus lock");
        let r = p.rem(&guard);
        if r.is_zero() {
            return true;
        }
        let g = r.gcd(&guard);
        if g.degree() == Some(0) {
            return false;
        }
        let h = guard.divrem(&g).0.monic();
        if root_residual(&g, self.lambda) <= root_residual(&h, self.lambda) {
            *guard = g;
            true
        } else {
            *guard = h;
            false
        }
    }
}

fn root_residual(p: &Poly, x: f64) -> f64 {
    let scale = p.abs_eval_f64(x).max(f64::MIN_POSITIVE);
    p.eval_f64(x).abs() / scale
}

fn newton_polish(p: &Poly, x0: f64) -> f64 {
    let d = p.derivative();
    let mut x = x0;
    for _ in 0..50 {
        let fx = p.eval_f64(x);
        let dx = d.eval_f64(x);
        if dx == 0.0 {
            break;
        }
        let step = fx / dx;
        x -= step;
        if step.abs() <= 1e-17 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Element of a [`NumberField`].
#[derive(Clone)]
pub struct Alg {
    field: Arc<NumberField>,
    p: Poly,
}

impl fmt::Debug for Alg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Alg({:?} ≈ {})", self.p.0, self.to_f64())
    }
}

impl fmt::Display for Alg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.as_rational() {
            Some(q) => write!(f, "{q}"),
            None => write!(f, "{}", self.to_f64()),
        }
    }
}

impl Alg {
    pub fn from_rational(field: &Arc<NumberField>, q: Q) -> Self {
        Alg {
            field: field.clone(),
            p: Poly::constant(q),
        }
    }

    pub fn zero(field: &Arc<NumberField>) -> Self {
        Alg::from_rational(field, Q::zero())
    }

    pub fn one(field: &Arc<NumberField>) -> Self {
        Alg::from_rational(field, Q::one())
    }

    /// The generator λ itself.
    pub fn generator(field: &Arc<NumberField>) -> Self {
        let p = field.reduce(&Poly(vec![Q::zero(), Q::one()]));
        Alg {
            field: field.clone(),
            p,
        }
    }

    pub fn field(&self) -> &Arc<NumberField> {
        &self.field
    }

    fn lift(&self, o: &Alg) -> Poly {
        if Arc::ptr_eq(&self.field, &o.field) || o.field.is_rational() {
            o.p.clone()
        } else {
            panic!("mixing elements of distinct number fields")
        }
    }

    fn wrap(field: &Arc<NumberField>, p: Poly) -> Alg {
        Alg {
            field: field.clone(),
            p: field.reduce(&p),
        }
    }

    fn host<'a>(&'a self, o: &'a Alg) -> (&'a Alg, &'a Alg) {
        if self.field.is_rational() && !o.field.is_rational() {
            (o, self)
        } else {
            (self, o)
        }
    }

    pub fn add(&self, o: &Alg) -> Alg {
        let (h, g) = self.host(o);
        Alg::wrap(&h.field, h.p.add(&h.lift(g)))
    }

    pub fn sub(&self, o: &Alg) -> Alg {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Alg {
        Alg {
            field: self.field.clone(),
            p: self.p.neg(),
        }
    }

    pub fn mul(&self, o: &Alg) -> Alg {
        let (h, g) = self.host(o);
        Alg::wrap(&h.field, h.p.mul(&h.lift(g)))
    }

    pub fn scale(&self, q: &Q) -> Alg {
        Alg {
            field: self.field.clone(),
            p: self.p.scale(q),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.field.vanishes(&self.p)
    }

    pub fn inv(&self) -> Option<Alg> {
        if self.is_zero() {
            return None;
        }
        let m = self.field.modulus();
        self.p.inverse_mod(&m).map(|p| Alg {
            field: self.field.clone(),
            p,
        })
    }

    pub fn div(&self, o: &Alg) -> Option<Alg> {
        let (h, _) = self.host(o);
        let field = h.field.clone();
        let a = Alg {
            field: field.clone(),
            p: h.lift(self),
        };
        let b = Alg {
            field: field.clone(),
            p: h.lift(o),
        };
        b.inv().map(|bi| a.mul(&bi))
    }

    pub fn to_f64(&self) -> f64 {
        self.p.eval_f64(self.field.lambda)
    }

    /// Exact rational value if the element is rational.
    pub fn as_rational(&self) -> Option<Q> {
        let r = self.field.reduce(&self.p);
        match r.degree() {
            None => Some(Q::zero()),
            Some(0) => Some(r.0[0].clone()),
            _ => {
                // Degree may exceed 0 while the value is still rational if the
                // modulus has not been refined yet; test against the constant.
                let c = r.0[0].clone();
                let diff = r.sub(&Poly::constant(c.clone()));
                if self.field.vanishes(&diff) {
                    Some(c)
                } else {
                    None
                }
            }
        }
    }

    /// Exact sign: −1, 0 or 1.
    pub fn signum(&self) -> i32 {
        if self.is_zero() {
            return 0;
        }
        let v = self.to_f64();
        if v.abs() > 1e-9 {
            return if v > 0.0 { 1 } else { -1 };
        }
        if let Some(q) = self.as_rational() {
            return if q.is_positive() { 1 } else { -1 };
        }
        if v >= 0.0 {
            1
        } else {
            -1
        }
    }

    pub fn lt(&self, o: &Alg) -> bool {
        self.sub(o).signum() < 0
    }

    pub fn le(&self, o: &Alg) -> bool {
        self.sub(o).signum() <= 0
    }
}

impl PartialEq for Alg {
    fn eq(&self, o: &Self) -> bool {
        self.sub(o).is_zero()
    }
}

pub fn sum_alg<'a, I: IntoIterator<Item = &'a Alg>>(field: &Arc<NumberField>, it: I) -> Alg {
    it.into_iter()
        .fold(Alg::zero(field), |acc, x| acc.add(x))
}

/// Exact rational matrices.
pub type QMatrix = Vec<Vec<Q>>;

pub fn qmat_zero(n: usize) -> QMatrix {
    vec![vec![Q::zero(); n]; n]
}

pub fn qmat_mul(a: &QMatrix, b: &QMatrix) -> QMatrix {
    let n = a.len();
    let mut out = qmat_zero(n);
    for i in 0..n {
        for k in 0..n {
            if a[i][k].is_zero() {
                continue;
            }
            for j in 0..n {
                if !b[k][j].is_zero() {
                    out[i][j] += &a[i][k] * &b[k][j];
                }
            }
        }
    }
    out
}

pub fn qmat_transpose(a: &QMatrix) -> QMatrix {
    let n = a.len();
    (0..n).map(|i| (0..n).map(|j| a[j][i].clone()).collect()).collect()
}

pub fn qmat_is_zero(a: &QMatrix) -> bool {
    a.iter().all(|r| r.iter().all(|v| v.is_zero()))
}

/// Rank by exact Gaussian elimination.
pub fn qmat_rank(a: &QMatrix) -> usize {
    let mut m = a.clone();
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for col in 0..cols {
        let Some(p) = (rank..rows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, p);
        let pivot = m[rank][col].clone();
        for r in 0..rows {
            if r != rank && !m[r][col].is_zero() {
                let f = &m[r][col] / &pivot;
                for c in col..cols {
                    let sub = &f * &m[rank][c];
                    m[r][c] -= sub;
                }
            }
        }
        rank += 1;
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_field_arithmetic() {
        let f = NumberField::perron(&[vec![1, 1], vec![1, 0]]);
        assert_eq!(f.degree(), 2);
        let phi = Alg::generator(&f);
        assert!((phi.to_f64() - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-14);
        // φ² = φ + 1
        let lhs = phi.mul(&phi);
        let rhs = phi.add(&Alg::one(&f));
        assert_eq!(lhs, rhs);
        let inv = phi.inv().unwrap();
        assert_eq!(inv, phi.sub(&Alg::one(&f)));
    }

    #[test]
    fn reducible_modulus_splits_on_demand() {
        // Thue–Morse letter matrix [[1,1],[1,1]] has char poly t² − 2t.
        let f = NumberField::perron(&[vec![1, 1], vec![1, 1]]);
        let two = Alg::from_rational(&f, q_int(2));
        let t = Alg::generator(&f);
        assert_eq!(t, two);
        assert!(f.is_rational());
        assert_eq!(t.as_rational(), Some(q_int(2)));
    }

    #[test]
    fn char_poly_matches_known_values() {
        let p = char_poly(&[vec![1, 1], vec![1, 0]]);
        assert_eq!(p, Poly::from_ints(&[-1, -1, 1]));
        let p3 = char_poly(&[vec![2, 0, 0], vec![0, 3, 0], vec![0, 0, 5]]);
        assert_eq!(p3, Poly::from_ints(&[-30, 31, -10, 1]));
    }

    #[test]
    fn inverse_mod_roundtrip() {
        let m = Poly::from_ints(&[-2, 0, 1]);
        let a = Poly::from_ints(&[3, 1]);
        let inv = a.inverse_mod(&m).unwrap();
        assert_eq!(a.mul(&inv).rem(&m), Poly::constant(q_int(1)));
    }
}
