//! Finite subsets of ℤᵈ and Følner combinatorics.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

/// An element of ℤᵈ.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupElement(pub Vec<i64>);

impl GroupElement {
    pub fn z(n: i64) -> Self {
        GroupElement(vec![n])
    }

    pub fn identity(d: usize) -> Self {
        GroupElement(vec![0; d])
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn add(&self, o: &GroupElement) -> GroupElement {
        GroupElement(self.0.iter().zip(&o.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, o: &GroupElement) -> GroupElement {
        GroupElement(self.0.iter().zip(&o.0).map(|(a, b)| a - b).collect())
    }

    pub fn neg(&self) -> GroupElement {
        GroupElement(self.0.iter().map(|a| -a).collect())
    }

    /// Sup norm.
    pub fn norm(&self) -> u64 {
        self.0.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }

    /// The single coordinate of a ℤ element.
    pub fn as_z(&self) -> i64 {
        self.0[0]
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.len() == 1 {
            write!(f, "{}", self.0[0])
        } else {
            let parts: Vec<String> = self.0.iter().map(|c| c.to_string()).collect();
            write!(f, "({})", parts.join(","))
        }
    }
}

/// Finite subset of ℤᵈ, kept sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FiniteGroupSet(pub BTreeSet<GroupElement>);

impl FiniteGroupSet {
    pub fn new() -> Self {
        FiniteGroupSet(BTreeSet::new())
    }

    pub fn from_z<I: IntoIterator<Item = i64>>(it: I) -> Self {
        FiniteGroupSet(it.into_iter().map(GroupElement::z).collect())
    }

    pub fn interval(lo: i64, hi_inclusive: i64) -> Self {
        FiniteGroupSet::from_z(lo..=hi_inclusive)
    }

    pub fn singleton(g: GroupElement) -> Self {
        FiniteGroupSet(std::iter::once(g).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        self.0.contains(g)
    }

    pub fn iter(&self) -> impl Iterator<Item = &GroupElement> {
        self.0.iter()
    }

    /// The ℤ coordinates, for rank-one sets.
    pub fn z_values(&self) -> Vec<i64> {
        self.0.iter().map(|g| g.as_z()).collect()
    }

    pub fn rank(&self) -> Option<usize> {
        self.0.iter().next().map(|g| g.rank())
    }

    pub fn contains_identity(&self) -> bool {
        self.0.iter().any(|g| g.is_identity())
    }

    pub fn inverse(&self) -> Self {
        FiniteGroupSet(self.0.iter().map(|g| g.neg()).collect())
    }

    pub fn translate(&self, g: &GroupElement) -> Self {
        FiniteGroupSet(self.0.iter().map(|h| h.add(g)).collect())
    }

    /// The product set {a + b : a ∈ self, b ∈ other}.
    pub fn product(&self, o: &FiniteGroupSet) -> Self {
        let mut out = BTreeSet::new();
        for a in &self.0 {
            for b in &o.0 {
                out.insert(a.add(b));
            }
        }
        FiniteGroupSet(out)
    }

    /// n-fold product set Kⁿ, with K⁰ = {e}.
    pub fn power(&self, n: usize, d: usize) -> Self {
        let mut acc = FiniteGroupSet::singleton(GroupElement::identity(d));
        for _ in 0..n {
            acc = acc.product(self);
        }
        acc
    }

    pub fn union(&self, o: &FiniteGroupSet) -> Self {
        FiniteGroupSet(self.0.union(&o.0).cloned().collect())
    }

    pub fn intersection(&self, o: &FiniteGroupSet) -> Self {
        FiniteGroupSet(self.0.intersection(&o.0).cloned().collect())
    }

    pub fn difference(&self, o: &FiniteGroupSet) -> Self {
        FiniteGroupSet(self.0.difference(&o.0).cloned().collect())
    }

    pub fn symmetric_difference(&self, o: &FiniteGroupSet) -> Self {
        FiniteGroupSet(self.0.symmetric_difference(&o.0).cloned().collect())
    }

    pub fn is_subset(&self, o: &FiniteGroupSet) -> bool {
        self.0.is_subset(&o.0)
    }

    pub fn max_norm(&self) -> u64 {
        self.0.iter().map(|g| g.norm()).max().unwrap_or(0)
    }

    pub fn check_rank(&self, d: usize) -> Result<()> {
        if self.0.iter().all(|g| g.rank() == d) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "group elements must have rank {d}"
            )))
        }
    }
}

impl FromIterator<GroupElement> for FiniteGroupSet {
    fn from_iter<T: IntoIterator<Item = GroupElement>>(iter: T) -> Self {
        FiniteGroupSet(iter.into_iter().collect())
    }
}

/// The box {0, …, n−1}ᵈ.
pub fn folner_boxes(d: usize, n: usize) -> Result<FiniteGroupSet> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidArgument("folner box needs d ≥ 1 and n ≥ 1".into()));
    }
    let mut out = vec![Vec::new()];
    for _ in 0..d {
        let mut next = Vec::with_capacity(out.len() * n);
        for prefix in &out {
            for k in 0..n as i64 {
                let mut v: Vec<i64> = prefix.clone();
                v.push(k);
                next.push(v);
            }
        }
        out = next;
    }
    Ok(out.into_iter().map(GroupElement).collect())
}

/// |FK Δ F| / |F|.
pub fn invariance_defect(f: &FiniteGroupSet, k: &FiniteGroupSet) -> Result<f64> {
    let (num, den) = invariance_defect_ratio(f, k)?;
    Ok(num as f64 / den as f64)
}

/// The defect as an exact ratio (|FK Δ F|, |F|).
pub fn invariance_defect_ratio(f: &FiniteGroupSet, k: &FiniteGroupSet) -> Result<(usize, usize)> {
    if f.is_empty() {
        return Err(Error::InvalidArgument("invariance defect of an empty set".into()));
    }
    let fk = f.product(k);
    Ok((fk.symmetric_difference(f).len(), f.len()))
}

/// int_K(F) = {γ ∈ F : γK ⊆ F}.
pub fn interior(f: &FiniteGroupSet, k: &FiniteGroupSet) -> FiniteGroupSet {
    f.0.iter()
        .filter(|g| k.0.iter().all(|h| f.contains(&g.add(h))))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(v: &[i64]) -> FiniteGroupSet {
        FiniteGroupSet::from_z(v.iter().copied())
    }

    #[test]
    fn defect_examples() {
        let f = FiniteGroupSet::interval(0, 9);
        assert_eq!(invariance_defect(&f, &z(&[-1, 0, 1])).unwrap(), 0.2);
        assert_eq!(invariance_defect(&z(&[0]), &z(&[1])).unwrap(), 2.0);
        let f100 = FiniteGroupSet::interval(0, 99);
        assert_eq!(invariance_defect(&f100, &z(&[0, 1])).unwrap(), 0.01);
        for n in 1..20usize {
            let b = folner_boxes(1, n).unwrap();
            let (num, den) = invariance_defect_ratio(&b, &z(&[-1, 0, 1])).unwrap();
            assert_eq!((num, den), (2, n));
        }
    }

    #[test]
    fn interior_examples() {
        let f = FiniteGroupSet::interval(0, 9);
        assert_eq!(interior(&f, &z(&[0, 1])), FiniteGroupSet::interval(0, 8));
        assert_eq!(interior(&f, &z(&[0])), f);
        assert_eq!(interior(&f, &z(&[-1, 0, 1])), FiniteGroupSet::interval(1, 8));
    }

    #[test]
    fn boxes() {
        assert_eq!(folner_boxes(1, 3).unwrap(), z(&[0, 1, 2]));
        let b = folner_boxes(2, 2).unwrap();
        assert_eq!(b.len(), 4);
        assert!(b.contains(&GroupElement(vec![1, 0])));
        assert!(folner_boxes(0, 3).is_err());
    }

    #[test]
    fn powers() {
        let n = z(&[-1, 0, 1]);
        assert_eq!(n.power(3, 1), FiniteGroupSet::interval(-3, 3));
        assert_eq!(n.power(0, 1), z(&[0]));
    }
}
