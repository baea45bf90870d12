//! Clopen subsets of the phase space as sets of admissible words.

use crate::error::{Error, Result};
use crate::exact::Alg;
use crate::group::GroupElement;
use crate::system::{System, Word};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

/// A single radius, or one radius per factor of a product.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RadiusSpec {
    One(usize),
    PerFactor(Vec<usize>),
}

/// Serialized form `{"radius":r,"words":[...]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClopenSpec {
    pub radius: RadiusSpec,
    pub words: Vec<String>,
}

/// A clopen set: the union of the cylinders of its words. Product systems
/// carry one radius per factor.
#[derive(Clone)]
pub struct Clopen {
    sys: Arc<System>,
    radii: Vec<usize>,
    words: BTreeSet<Word>,
}

impl fmt::Debug for Clopen {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let words: Vec<String> = self
            .words
            .iter()
            .map(|w| self.sys.format_word(w, &self.radii))
            .collect();
        f.debug_struct("Clopen")
            .field("radii", &self.radii)
            .field("words", &words)
            .finish()
    }
}

impl PartialEq for Clopen {
    fn eq(&self, other: &Self) -> bool {
        if !self.same_system(other) {
            return false;
        }
        let r = max_radii(&self.radii, &other.radii);
        match (self.refine_radii(&r), other.refine_radii(&r)) {
            (Ok(a), Ok(b)) => a.words == b.words,
            _ => false,
        }
    }
}

fn max_radii(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().zip(b).map(|(x, y)| *x.max(y)).collect()
}

impl Clopen {
    pub fn empty(sys: &Arc<System>, radius: usize) -> Self {
        Clopen {
            sys: sys.clone(),
            radii: vec![radius; sys.rank()],
            words: BTreeSet::new(),
        }
    }

    pub fn full(sys: &Arc<System>) -> Result<Self> {
        let radii = vec![0; sys.rank()];
        Ok(Clopen {
            sys: sys.clone(),
            words: sys.words(&radii)?.into_iter().collect(),
            radii,
        })
    }

    pub fn from_words<I: IntoIterator<Item = Word>>(sys: &Arc<System>, radius: usize, words: I) -> Result<Self> {
        Clopen::from_words_radii(sys, &vec![radius; sys.rank()], words)
    }

    pub fn from_words_radii<I: IntoIterator<Item = Word>>(sys: &Arc<System>, radii: &[usize], words: I) -> Result<Self> {
        sys.check_radii(radii)?;
        let mut set = BTreeSet::new();
        for w in words {
            if !sys.is_admissible(&w, radii)? {
                return Err(Error::InvalidClopen(format!(
                    "word {} is not admissible at radius {radii:?}",
                    sys.format_word_lossy(&w, radii)
                )));
            }
            set.insert(w);
        }
        Ok(Clopen {
            sys: sys.clone(),
            radii: radii.to_vec(),
            words: set,
        })
    }

    /// Points whose symbols at positions `offset..offset+len` spell `word`
    /// (ℤ-systems; odometers need `offset = 0`). Inadmissible words give ∅.
    pub fn cylinder_at(sys: &Arc<System>, word: &[u8], offset: i64) -> Result<Self> {
        let z = sys.as_z()?;
        if word.is_empty() {
            return Clopen::full(sys);
        }
        let len = word.len() as i64;
        let (radius, start) = if z.is_odometer() {
            if offset != 0 {
                return Err(Error::InvalidArgument("odometer cylinders start at digit 0".into()));
            }
            (((len - 1) as usize).div_ceil(2), 0usize)
        } else {
            let r = offset.abs().max((offset + len - 1).abs()) as usize;
            (r, (r as i64 + offset) as usize)
        };
        let words = z.words(radius)?;
        let set = words
            .iter()
            .filter(|w| &w[start..start + word.len()] == word)
            .cloned()
            .collect();
        Ok(Clopen {
            sys: sys.clone(),
            radii: vec![radius],
            words: set,
        })
    }

    /// Cylinder of a word starting at position 0.
    pub fn cylinder(sys: &Arc<System>, word: &str) -> Result<Self> {
        let w = sys.as_z()?.parse_word(word)?;
        Clopen::cylinder_at(sys, &w, 0)
    }

    /// Cylinder of a word centred at the origin.
    pub fn centered_cylinder(sys: &Arc<System>, word: &[u8]) -> Result<Self> {
        let off = -((word.len() / 2) as i64);
        Clopen::cylinder_at(sys, word, off)
    }

    /// The product E₁ × ⋯ × E_d of clopens over the factors of a product system.
    pub fn product(sys: &Arc<System>, parts: &[Clopen]) -> Result<Self> {
        if parts.len() != sys.rank() {
            return Err(Error::InvalidArgument(format!(
                "{} factor clopens for a rank-{} system",
                parts.len(),
                sys.rank()
            )));
        }
        for (f, p) in sys.factors().iter().zip(parts) {
            if p.sys.rank() != 1 || System::Z(f.clone()).key() != p.sys.key() {
                return Err(Error::SystemMismatch);
            }
        }
        let radii: Vec<usize> = parts.iter().map(|p| p.radii[0]).collect();
        let mut words: Vec<Word> = vec![Vec::new()];
        for p in parts {
            let mut next = Vec::with_capacity(words.len() * p.words.len());
            for prefix in &words {
                for w in &p.words {
                    let mut v = prefix.clone();
                    v.extend_from_slice(w);
                    next.push(v);
                }
            }
            words = next;
        }
        Ok(Clopen {
            sys: sys.clone(),
            radii,
            words: words.into_iter().collect(),
        })
    }

    pub fn from_spec(sys: &Arc<System>, spec: &ClopenSpec) -> Result<Self> {
        let radii = match &spec.radius {
            RadiusSpec::One(r) => vec![*r; sys.rank()],
            RadiusSpec::PerFactor(v) => v.clone(),
        };
        sys.check_radii(&radii)?;
        let mut words = Vec::new();
        for s in &spec.words {
            let (w, rs) = sys.parse_word(s)?;
            if rs != radii {
                return Err(Error::InvalidClopen(format!(
                    "word {s:?} does not match radius {radii:?}"
                )));
            }
            words.push(w);
        }
        Clopen::from_words_radii(sys, &radii, words)
    }

    pub fn from_json(sys: &Arc<System>, s: &str) -> Result<Self> {
        let spec: ClopenSpec = serde_json::from_str(s)?;
        Clopen::from_spec(sys, &spec)
    }

    pub fn to_spec(&self) -> ClopenSpec {
        let radius = if self.radii.iter().all(|&r| r == self.radii[0]) {
            RadiusSpec::One(self.radii[0])
        } else {
            RadiusSpec::PerFactor(self.radii.clone())
        };
        ClopenSpec {
            radius,
            words: self
                .words
                .iter()
                .map(|w| self.sys.format_word(w, &self.radii))
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_spec()).expect("clopen serializes")
    }

    pub fn system(&self) -> &Arc<System> {
        &self.sys
    }

    /// The largest factor radius (the radius, for ℤ-systems).
    pub fn radius(&self) -> usize {
        self.radii.iter().copied().max().unwrap_or(0)
    }

    pub fn radii(&self) -> &[usize] {
        &self.radii
    }

    pub fn words(&self) -> &BTreeSet<Word> {
        &self.words
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn same_system(&self, other: &Clopen) -> bool {
        Arc::ptr_eq(&self.sys, &other.sys) || self.sys.key() == other.sys.key()
    }

    fn check(&self, other: &Clopen) -> Result<()> {
        if self.same_system(other) {
            Ok(())
        } else {
            Err(Error::SystemMismatch)
        }
    }

    /// The same set with every factor at radius `radius`.
    pub fn refine(&self, radius: usize) -> Result<Clopen> {
        self.refine_radii(&vec![radius; self.radii.len()])
    }

    pub fn refine_radii(&self, radii: &[usize]) -> Result<Clopen> {
        self.sys.check_radii(radii)?;
        if radii.iter().zip(&self.radii).any(|(a, b)| a < b) {
            return Err(Error::InvalidArgument(format!(
                "cannot refine radius {:?} down to {radii:?}",
                self.radii
            )));
        }
        if radii == self.radii.as_slice() {
            return Ok(self.clone());
        }
        let factors = self.sys.factors();
        let from = self.radii.clone();
        let words = self.expand(|i, part| factors[i].refinements(part, from[i], radii[i]))?;
        Ok(Clopen {
            sys: self.sys.clone(),
            radii: radii.to_vec(),
            words,
        })
    }

    /// Replaces each word by the cartesian product of per-factor images,
    /// memoising the image of every factor part.
    fn expand<F>(&self, mut image: F) -> Result<BTreeSet<Word>>
    where
        F: FnMut(usize, &[u8]) -> Result<Vec<Word>>,
    {
        let d = self.radii.len();
        let mut memo: Vec<HashMap<Word, Vec<Word>>> = vec![HashMap::new(); d];
        let mut out = BTreeSet::new();
        for w in &self.words {
            let mut acc: Vec<Word> = vec![Vec::new()];
            for (i, part) in self.sys.split(w, &self.radii).into_iter().enumerate() {
                if !memo[i].contains_key(part) {
                    let v = image(i, part)?;
                    memo[i].insert(part.to_vec(), v);
                }
                let img = &memo[i][part];
                let mut next = Vec::with_capacity(acc.len() * img.len());
                for prefix in &acc {
                    for y in img {
                        let mut v = prefix.clone();
                        v.extend_from_slice(y);
                        next.push(v);
                    }
                }
                acc = next;
            }
            out.extend(acc);
        }
        Ok(out)
    }

    /// Smallest-radius representation of the same set, reducing factor
    /// radii one coordinate at a time.
    pub fn canonical(&self) -> Result<Clopen> {
        let mut cur = self.clone();
        for i in 0..cur.radii.len() {
            for r in 0..cur.radii[i] {
                let mut to = cur.radii.clone();
                to[i] = r;
                let coarse: BTreeSet<Word> = cur
                    .words
                    .iter()
                    .map(|w| self.sys.project(w, &cur.radii, &to))
                    .collect();
                let c = Clopen {
                    sys: self.sys.clone(),
                    radii: to,
                    words: coarse,
                };
                if c.refine_radii(&cur.radii)?.words == cur.words {
                    cur = c;
                    break;
                }
            }
        }
        Ok(cur)
    }

    fn common(&self, other: &Clopen) -> Result<(Clopen, Clopen)> {
        self.check(other)?;
        let r = max_radii(&self.radii, &other.radii);
        Ok((self.refine_radii(&r)?, other.refine_radii(&r)?))
    }

    fn with_words(&self, words: BTreeSet<Word>) -> Clopen {
        Clopen {
            sys: self.sys.clone(),
            radii: self.radii.clone(),
            words,
        }
    }

    pub fn union(&self, other: &Clopen) -> Result<Clopen> {
        let (a, b) = self.common(other)?;
        Ok(a.with_words(a.words.union(&b.words).cloned().collect()))
    }

    pub fn intersection(&self, other: &Clopen) -> Result<Clopen> {
        let (a, b) = self.common(other)?;
        Ok(a.with_words(a.words.intersection(&b.words).cloned().collect()))
    }

    pub fn difference(&self, other: &Clopen) -> Result<Clopen> {
        let (a, b) = self.common(other)?;
        Ok(a.with_words(a.words.difference(&b.words).cloned().collect()))
    }

    pub fn symmetric_difference(&self, other: &Clopen) -> Result<Clopen> {
        let (a, b) = self.common(other)?;
        Ok(a.with_words(a.words.symmetric_difference(&b.words).cloned().collect()))
    }

    pub fn complement(&self) -> Result<Clopen> {
        let all: BTreeSet<Word> = self.sys.words(&self.radii)?.into_iter().collect();
        Ok(self.with_words(all.difference(&self.words).cloned().collect()))
    }

    pub fn is_subset(&self, other: &Clopen) -> Result<bool> {
        let (a, b) = self.common(other)?;
        Ok(a.words.is_subset(&b.words))
    }

    pub fn is_disjoint(&self, other: &Clopen) -> Result<bool> {
        let (a, b) = self.common(other)?;
        Ok(a.words.is_disjoint(&b.words))
    }

    /// Whether the point with word `w` at uniform radius `r` (at least every
    /// factor radius) lies in the set.
    pub fn contains_point(&self, w: &[u8], r: usize) -> bool {
        if self.radii.iter().all(|&x| x == r) {
            self.words.contains(w)
        } else {
            let from = vec![r; self.radii.len()];
            self.words.contains(&self.sys.project(w, &from, &self.radii))
        }
    }

    pub fn contains_point_radii(&self, w: &[u8], radii: &[usize]) -> bool {
        if radii == self.radii.as_slice() {
            self.words.contains(w)
        } else {
            self.words.contains(&self.sys.project(w, radii, &self.radii))
        }
    }

    /// The image σ^γ(E), computed cylinder by cylinder and factor by factor.
    pub fn translate(&self, gamma: &GroupElement) -> Result<Clopen> {
        if gamma.rank() != self.sys.rank() {
            return Err(Error::InvalidArgument(format!(
                "group element {gamma} has rank {}, system has rank {}",
                gamma.rank(),
                self.sys.rank()
            )));
        }
        if gamma.is_identity() || self.words.is_empty() {
            return Ok(self.clone());
        }
        let factors = self.sys.factors();
        let new_radii: Vec<usize> = factors
            .iter()
            .zip(&gamma.0)
            .zip(&self.radii)
            .map(|((f, &g), &r)| f.shift_radius(r, g))
            .collect();
        let radii = self.radii.clone();
        let out = self.expand(|i, part| factors[i].translate_word(part, radii[i], gamma.0[i]))?;
        Ok(Clopen {
            sys: self.sys.clone(),
            radii: new_radii,
            words: out,
        })
    }

    pub fn translate_z(&self, n: i64) -> Result<Clopen> {
        self.translate(&GroupElement::z(n))
    }

    /// Exact invariant measure (unique for all supported systems).
    pub fn measure(&self) -> Result<Alg> {
        let mut acc = Alg::zero(&self.sys.field());
        for w in &self.words {
            acc = acc.add(&self.sys.word_measure(w, &self.radii)?);
        }
        Ok(acc)
    }

    pub fn measure_f64(&self) -> Result<f64> {
        Ok(self.measure()?.to_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::q_frac;
    use crate::system::SystemSpec;

    fn odo2() -> Arc<System> {
        Arc::new(System::from_spec(&SystemSpec::Odometer { bases: vec![2] }).unwrap())
    }

    fn fib() -> Arc<System> {
        Arc::new(System::from_json(r#"{"kind":"substitution","rules":{"a":"ab","b":"a"}}"#).unwrap())
    }

    #[test]
    fn odometer_translate_flips_first_digit() {
        let s = odo2();
        let e = Clopen::cylinder(&s, "0").unwrap();
        assert_eq!(e.translate_z(1).unwrap(), Clopen::cylinder(&s, "1").unwrap());
        let a = Clopen::cylinder(&s, "0000").unwrap();
        assert_eq!(a.translate_z(3).unwrap(), Clopen::cylinder(&s, "1100").unwrap());
    }

    #[test]
    fn translate_trivial_cases() {
        let s = fib();
        let full = Clopen::full(&s).unwrap();
        assert_eq!(full.translate_z(5).unwrap(), full);
        let e = Clopen::empty(&s, 0);
        assert!(e.translate_z(1).unwrap().is_empty());
        let a = Clopen::cylinder(&s, "ab").unwrap();
        let t = a.translate_z(3).unwrap();
        assert_eq!(t.translate_z(-3).unwrap(), a);
        // σ([ab]) = {y : y₋₁y₀ = ab}
        assert_eq!(a.translate_z(1).unwrap(), Clopen::cylinder_at(&s, &[0, 1], -1).unwrap());
    }

    #[test]
    fn boolean_refinement_example() {
        let s = fib();
        let a = Clopen::cylinder(&s, "a").unwrap();
        let a1 = Clopen::cylinder_at(&s, &[0], 1).unwrap();
        assert_eq!(a.intersection(&a1).unwrap(), Clopen::cylinder(&s, "aa").unwrap());
        assert!(a.intersection(&a.complement().unwrap()).unwrap().is_empty());
    }

    #[test]
    fn measures() {
        let s = odo2();
        assert_eq!(Clopen::cylinder(&s, "0").unwrap().measure().unwrap().as_rational(), Some(q_frac(1, 2)));
        assert_eq!(Clopen::cylinder(&s, "0000").unwrap().measure().unwrap().as_rational(), Some(q_frac(1, 16)));
        let f = fib();
        let b = Clopen::cylinder(&f, "b").unwrap().measure_f64().unwrap();
        assert!((b - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-12);
        assert!(Clopen::empty(&f, 2).measure().unwrap().is_zero());
    }

    #[test]
    fn mismatch_and_json() {
        let e = Clopen::cylinder(&odo2(), "0").unwrap();
        let f = Clopen::cylinder(&fib(), "a").unwrap();
        assert_eq!(e.union(&f).unwrap_err(), Error::SystemMismatch);
        let s = fib();
        let c = Clopen::cylinder_at(&s, &[0, 1], 0).unwrap();
        let back = Clopen::from_json(&s, &c.to_json()).unwrap();
        assert_eq!(back, c);
        assert!(Clopen::from_json(&s, r#"{"radius":0,"words":["bb"]}"#).is_err());
        assert!(Clopen::from_json(&s, r#"{"radius":1,"words":["bbb"]}"#).is_err());
    }

    #[test]
    fn canonical_form() {
        let s = fib();
        let a = Clopen::cylinder(&s, "a").unwrap().refine(3).unwrap();
        assert_eq!(a.canonical().unwrap().radius(), 0);
    }
}
