//! Telescoping partitions of unity for locally constant functions.

use crate::clopen::Clopen;
use crate::crossed::LocFn;
use crate::exact::Q;
use crate::system::System;
use crate::{Error, Result};
use num_traits::{One, Zero};
use std::sync::Arc;

fn check_unit_interval(name: &str, i: usize, g: &LocFn) -> Result<()> {
    if g.min_value()? < Q::zero() || g.max_value()? > Q::one() {
        return Err(Error::InvalidArgument(format!("{name}_{} takes values outside [0, 1]", i + 1)));
    }
    Ok(())
}

fn check_support(name: &str, i: usize, g: &LocFn, v: &Clopen) -> Result<()> {
    let outside = g.support()?.difference(v)?;
    if let Some(w) = outside.words().iter().next() {
        let z = g.system().as_z()?;
        return Err(Error::Precondition(format!(
            "supp({name}_{}) leaves its open set at {}",
            i + 1,
            z.format_word(w)
        )));
    }
    Ok(())
}

fn first_uncovered(d: &Clopen, covered: &Clopen) -> Result<Option<String>> {
    let gap = d.difference(covered)?;
    let z = d.system().as_z()?;
    Ok(gap.words().iter().next().map(|w| z.format_word(w)))
}

/// Σ g_i.
pub fn sum_functions(sys: &Arc<System>, fs: &[LocFn]) -> Result<LocFn> {
    fs.iter().try_fold(LocFn::zero(sys)?, |acc, f| acc.add(f))
}

/// Π (1 − g_i).
pub fn complement_product(sys: &Arc<System>, gs: &[LocFn]) -> Result<LocFn> {
    gs.iter().try_fold(LocFn::constant(sys, Q::one())?, |acc, g| acc.mul(&g.one_minus()?))
}

/// φ_k = (1−g_1)⋯(1−g_{k−1}) g_k, with supp g_i ⊆ V_i and D inside the
/// union of the regions {g_i = 1}.
pub fn partition_of_unity(gs: &[LocFn], vs: &[Clopen], d: &Clopen) -> Result<Vec<LocFn>> {
    if gs.len() != vs.len() {
        return Err(Error::InvalidArgument(format!("{} functions but {} open sets", gs.len(), vs.len())));
    }
    let sys = d.system().clone();
    let mut cores = Clopen::empty(&sys, 0);
    for (i, (g, v)) in gs.iter().zip(vs).enumerate() {
        check_unit_interval("g", i, g)?;
        check_support("g", i, g, v)?;
        cores = cores.union(&g.level_set(|q| q.is_one())?)?;
    }
    if let Some(w) = first_uncovered(d, &cores)? {
        return Err(Error::Precondition(format!("D is not covered by the cores g_i = 1 at {w}")));
    }
    let mut out = Vec::with_capacity(gs.len());
    let mut prefix = LocFn::constant(&sys, Q::one())?;
    for g in gs {
        out.push(prefix.mul(g)?);
        prefix = prefix.mul(&g.one_minus()?)?;
    }
    Ok(out)
}

/// Given φ_V (supp φ_V ⊆ V, g = Σφ_V ≤ 1) and bumps g_i for the sets W_i
/// whose cores cover X∖{g = 1}, returns h_k = (1−g)(1−g_1)⋯(1−g_{k−1}) g_k.
pub fn extend_partition(phis: &[LocFn], vs: &[Clopen], gs: &[LocFn], ws: &[Clopen]) -> Result<Vec<LocFn>> {
    if phis.len() != vs.len() || gs.len() != ws.len() {
        return Err(Error::InvalidArgument("function and open-set lists differ in length".into()));
    }
    let sys = match (phis.first(), gs.first()) {
        (Some(f), _) => f.system().clone(),
        (None, Some(g)) => g.system().clone(),
        (None, None) => return Ok(Vec::new()),
    };
    for (i, (f, v)) in phis.iter().zip(vs).enumerate() {
        check_unit_interval("φ", i, f)?;
        check_support("φ", i, f, v)?;
    }
    let g = sum_functions(&sys, phis)?;
    if g.max_value()? > Q::one() {
        let over = g.level_set(|q| q > &Q::one())?;
        let w = first_uncovered(&over, &Clopen::empty(&sys, 0))?.unwrap_or_default();
        return Err(Error::Precondition(format!("Σφ_V exceeds 1 at {w}")));
    }
    let full = Clopen::full(&sys)?;
    let top = g.level_set(|q| q.is_one())?;
    let mut cover = top.clone();
    for w in ws {
        cover = cover.union(w)?;
    }
    if let Some(w) = first_uncovered(&full, &cover)? {
        return Err(Error::Precondition(format!("{{Σφ_V = 1}} and the W's miss {w}")));
    }
    let mut cores = top;
    for (i, (gi, w)) in gs.iter().zip(ws).enumerate() {
        check_unit_interval("g", i, gi)?;
        check_support("g", i, gi, w)?;
        cores = cores.union(&gi.level_set(|q| q.is_one())?)?;
    }
    if let Some(w) = first_uncovered(&full, &cores)? {
        return Err(Error::Precondition(format!("the cores g_i = 1 miss {w} outside {{Σφ_V = 1}}")));
    }
    let mut out = Vec::with_capacity(gs.len());
    let mut prefix = g.one_minus()?;
    for gi in gs {
        out.push(prefix.mul(gi)?);
        prefix = prefix.mul(&gi.one_minus()?)?;
    }
    Ok(out)
}

/// Clopen sets are their own shrinkings, so indicators serve as bumps.
pub fn indicator_bumps(sets: &[Clopen]) -> Result<Vec<LocFn>> {
    sets.iter().map(LocFn::indicator).collect()
}
