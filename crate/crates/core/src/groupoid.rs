//! Shape functions on ℤ-systems, the small subgroupoids they generate and
//! the block matrix model of their C*-algebras.
//!
//! A cell (F, Z) has 0 ∈ F and base points Z; the point σ^c z (z ∈ Z,
//! c ∈ F) has shape S(σ^c z) = F − c, so the orbit of any point is the
//! column {σ^c z : c ∈ F}.

use crate::clopen::{Clopen, ClopenSpec};
use crate::crossed::{CrossedElement, LocFn};
use crate::exact::Q;
use crate::group::{invariance_defect, FiniteGroupSet, GroupElement};
use crate::system::{System, Word};
use crate::towers::Tiling;
use crate::{Error, Result};
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

#[derive(Clone, Debug)]
pub struct ShapeCell {
    pub shape: FiniteGroupSet,
    pub base: Clopen,
}

/// S given by cells; `pieces` maps every radius-`radius` word of Ω to the
/// cell index and offset c with x ∈ σ^c(Z_i).
#[derive(Clone, Debug)]
pub struct ShapeFunction {
    sys: Arc<System>,
    radius: usize,
    cells: Vec<ShapeCell>,
    domain: Clopen,
    pieces: BTreeMap<Word, (usize, i64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ShapeCellSpec {
    pub shape: Vec<i64>,
    pub base: ClopenSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ShapeFunctionSpec {
    pub cells: Vec<ShapeCellSpec>,
}

impl ShapeFunction {
    /// Builds Ω = ⊔_i ⊔_{c∈F_i} σ^c(Z_i), rejecting shapes without 0 and
    /// overlapping pieces.
    pub fn new(sys: &Arc<System>, cells: Vec<ShapeCell>) -> Result<Self> {
        let z = sys.as_z()?;
        let mut translated = Vec::new();
        for (i, cell) in cells.iter().enumerate() {
            cell.shape.check_rank(1)?;
            if !cell.shape.contains_identity() {
                return Err(Error::Precondition(format!("cell {i}: shape does not contain 0")));
            }
            if cell.base.system().key() != sys.key() {
                return Err(Error::SystemMismatch);
            }
            for c in cell.shape.z_values() {
                translated.push((i, c, cell.base.translate_z(c)?));
            }
        }
        let radius = translated.iter().map(|t| t.2.radius()).max().unwrap_or(0);
        let mut pieces = BTreeMap::new();
        for (i, c, piece) in &translated {
            for w in piece.refine(radius)?.words() {
                if let Some((j, d)) = pieces.insert(w.clone(), (*i, *c)) {
                    return Err(Error::Precondition(format!(
                        "cell {i} offset {c} overlaps cell {j} offset {d} at {}",
                        z.format_word(w)
                    )));
                }
            }
        }
        let domain = Clopen::from_words(sys, radius, pieces.keys().cloned())?;
        Ok(ShapeFunction { sys: sys.clone(), radius, cells, domain, pieces })
    }

    pub fn system(&self) -> &Arc<System> {
        &self.sys
    }

    /// Shared radius of all pieces σ^c(Z_i).
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn cells(&self) -> &[ShapeCell] {
        &self.cells
    }

    pub fn domain(&self) -> &Clopen {
        &self.domain
    }

    /// (cell, offset) of a point given by its radius-`r` word, `r ≥ radius`.
    pub fn piece(&self, w: &[u8], r: usize) -> Option<(usize, i64)> {
        let z = self.sys.as_z().ok()?;
        if r == self.radius {
            self.pieces.get(w).copied()
        } else {
            self.pieces.get(&z.project(w, r, self.radius)).copied()
        }
    }

    /// S(x), or None off Ω.
    pub fn shape_at(&self, w: &[u8], r: usize) -> Option<FiniteGroupSet> {
        self.piece(w, r)
            .map(|(i, c)| self.cells[i].shape.translate(&GroupElement::z(-c)))
    }

    /// ∪ (F_i − F_i).
    pub fn support(&self) -> FiniteGroupSet {
        let mut out = FiniteGroupSet::new();
        for c in &self.cells {
            out = out.union(&c.shape.product(&c.shape.inverse()));
        }
        out
    }

    pub fn covers_space(&self) -> Result<bool> {
        Ok(self.pieces.len() == self.sys.count_words(&[self.radius])?)
    }

    /// Adds the trivial cell ({0}, X∖Ω) when Ω ≠ X.
    pub fn extended(&self) -> Result<ShapeFunction> {
        let rest = self.domain.complement()?;
        if rest.is_empty() {
            return Ok(self.clone());
        }
        let mut cells = self.cells.clone();
        cells.push(ShapeCell { shape: FiniteGroupSet::from_z([0]), base: rest });
        ShapeFunction::new(&self.sys, cells)
    }

    pub fn to_spec(&self) -> ShapeFunctionSpec {
        ShapeFunctionSpec {
            cells: self
                .cells
                .iter()
                .map(|c| ShapeCellSpec { shape: c.shape.z_values(), base: c.base.to_spec() })
                .collect(),
        }
    }

    pub fn from_spec(sys: &Arc<System>, spec: &ShapeFunctionSpec) -> Result<Self> {
        let cells = spec
            .cells
            .iter()
            .map(|c| {
                Ok(ShapeCell {
                    shape: FiniteGroupSet::from_z(c.shape.iter().copied()),
                    base: Clopen::from_spec(sys, &c.base)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ShapeFunction::new(sys, cells)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_spec()).expect("shape function serializes")
    }

    pub fn from_json(sys: &Arc<System>, s: &str) -> Result<Self> {
        let spec: ShapeFunctionSpec = serde_json::from_str(s)?;
        ShapeFunction::from_spec(sys, &spec)
    }
}

/// S(x) = the tile of 𝒯(x) containing 0. Each tile F is anchored at its
/// least element a, giving the cell (F − a, points at offset a).
pub fn shape_from_tiling(t: &Tiling) -> Result<ShapeFunction> {
    let cells_by = t.cells()?;
    let mut cells = Vec::new();
    for (k, tile) in t.tiles.iter().enumerate() {
        let vals = tile.z_values();
        let a = *vals
            .first()
            .ok_or_else(|| Error::InvalidArgument(format!("tile {k} is empty")))?;
        let base = cells_by
            .iter()
            .find(|(tk, i, _)| *tk == k && *i == a)
            .map(|(_, _, c)| c.clone())
            .unwrap_or_else(|| Clopen::empty(&t.sys, t.radius));
        if base.is_empty() {
            continue;
        }
        cells.push(ShapeCell { shape: tile.translate(&GroupElement::z(-a)), base });
    }
    ShapeFunction::new(&t.sys, cells)
}

/// 𝒢 = {(x, γ) : x ∈ Ω, σ^γ x ∈ Ω∖Y_γ}.
#[derive(Clone, Debug)]
pub struct SmallGroupoid {
    pub shape: ShapeFunction,
    /// Y_γ for γ in the support, all at the shape radius.
    pub y_gamma: BTreeMap<i64, Clopen>,
    pub supp: FiniteGroupSet,
    pub extended: bool,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SmallGroupoidSpec {
    pub shape: ShapeFunctionSpec,
    pub support: Vec<i64>,
    pub y_gamma: BTreeMap<String, ClopenSpec>,
    pub extended: bool,
}

/// Y_γ = ⊔_i ⊔_{c ∈ F_i∖(F_i+γ)} σ^c(Z_i).
pub fn build_groupoid(s: &ShapeFunction, extend: bool) -> Result<SmallGroupoid> {
    let shape = if extend { s.extended()? } else { s.clone() };
    let sys = shape.sys.clone();
    let z = sys.as_z()?;
    let supp = shape.support();
    let mut y_gamma = BTreeMap::new();
    for g in supp.z_values() {
        let mut words = BTreeSet::new();
        for (i, cell) in shape.cells.iter().enumerate() {
            let moved = cell.shape.translate(&GroupElement::z(g));
            for c in cell.shape.difference(&moved).z_values() {
                let piece = cell.base.translate_z(c)?.refine(shape.radius)?;
                debug_assert!(piece.words().iter().all(|w| shape.pieces.get(w) == Some(&(i, c))));
                words.extend(piece.words().iter().cloned());
            }
        }
        y_gamma.insert(g, Clopen::from_words(&sys, shape.radius, words)?);
    }
    let mut warnings = Vec::new();
    if !z.is_free() {
        warnings.push(format!(
            "non-free system: orbits are capped at the period {}",
            z.cycle_len().unwrap_or(0)
        ));
        let period = z.cycle_len().unwrap_or(u32::MAX) as usize;
        if shape.cells.iter().any(|c| c.shape.len() > period) {
            return Err(Error::Precondition(format!("a shape is longer than the period {period}")));
        }
    }
    Ok(SmallGroupoid { shape, y_gamma, supp, extended: extend, warnings })
}

impl SmallGroupoid {
    pub fn system(&self) -> &Arc<System> {
        &self.shape.sys
    }

    pub fn radius(&self) -> usize {
        self.shape.radius
    }

    /// Word radius needed to decide membership of (x, γ) for all γ in the support.
    pub fn membership_radius(&self) -> usize {
        let z = self.system().as_z().expect("ℤ-system");
        z.shift_radius(self.radius(), self.supp.max_norm() as i64)
    }

    /// (x, γ) ∈ 𝒢 for x given by a radius-`r` word, `r ≥ shift_radius(R, γ)`.
    pub fn contains(&self, w: &[u8], r: usize, gamma: i64) -> bool {
        let z = match self.system().as_z() {
            Ok(z) => z,
            Err(_) => return false,
        };
        let big = self.radius();
        if self.shape.piece(w, r).is_none() {
            return false;
        }
        if gamma == 0 {
            return true;
        }
        let Some(y) = self.y_gamma.get(&gamma) else {
            return false;
        };
        let yw = z.shift_word(w, r, gamma, big);
        self.shape.pieces.contains_key(&yw) && !y.words().contains(&yw)
    }

    /// Orbit offsets {γ : (x, γ) ∈ 𝒢}, computed from the Y_γ.
    pub fn orbit(&self, w: &[u8], r: usize) -> Result<Vec<i64>> {
        let need = self.membership_radius();
        if r < need {
            return Err(Error::InvalidArgument(format!("point word needs radius ≥ {need}, got {r}")));
        }
        if self.shape.piece(w, r).is_none() {
            return Err(Error::Precondition("point outside the unit space Ω".into()));
        }
        let mut out: Vec<i64> = std::iter::once(0)
            .chain(self.supp.z_values().into_iter().filter(|&g| g != 0 && self.contains(w, r, g)))
            .collect();
        out.sort();
        Ok(out)
    }

    /// Radius-R words of the orbit points σ^γ x.
    pub fn orbit_points(&self, w: &[u8], r: usize) -> Result<Vec<Word>> {
        let z = self.system().as_z()?;
        Ok(self
            .orbit(w, r)?
            .into_iter()
            .map(|g| z.shift_word(w, r, g, self.radius()))
            .collect())
    }

    pub fn to_spec(&self) -> SmallGroupoidSpec {
        SmallGroupoidSpec {
            shape: self.shape.to_spec(),
            support: self.supp.z_values(),
            y_gamma: self.y_gamma.iter().map(|(g, c)| (g.to_string(), c.to_spec())).collect(),
            extended: self.extended,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_spec()).expect("groupoid serializes")
    }

    /// Words of the base Z_i at radius r.
    pub fn cell_points(&self, i: usize, r: usize) -> Result<Vec<Word>> {
        let cell = self
            .shape
            .cells
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("no block {i}")))?;
        Ok(cell.base.refine(r.max(cell.base.radius()))?.words().iter().cloned().collect())
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct AxiomViolation {
    pub axiom: &'static str,
    pub point: String,
    pub g1: i64,
    pub g2: i64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct AxiomReport {
    pub points_checked: usize,
    pub radius: usize,
    pub units: bool,
    pub inverses: bool,
    pub products: bool,
    pub equivariance: bool,
    /// Orbit_𝒢(x) = x·S(x) at every point.
    pub orbits_match_shapes: bool,
    pub violations: Vec<AxiomViolation>,
    pub violation_count: usize,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }
}

/// Exhaustive check of the groupoid axioms, equivariance and the orbit
/// formula over every word of Ω at the radius where all products are decided.
pub fn verify_groupoid_axioms(g: &SmallGroupoid) -> Result<AxiomReport> {
    const MAX_LISTED: usize = 20;
    let sys = g.system().clone();
    let z = sys.as_z()?;
    let big = g.radius();
    let m = g.supp.max_norm() as i64;
    let rg = z.shift_radius(big, m);
    let rx = z.shift_radius(rg, m);
    let supp = g.supp.z_values();

    let mut gmap: BTreeMap<Word, BTreeSet<i64>> = BTreeMap::new();
    for w in z.words(rg)?.iter() {
        if g.shape.piece(w, rg).is_some() {
            let set: BTreeSet<i64> = supp.iter().copied().filter(|&h| g.contains(w, rg, h)).collect();
            gmap.insert(w.clone(), set);
        }
    }

    let mut report = AxiomReport {
        points_checked: 0,
        radius: rx,
        units: true,
        inverses: true,
        products: true,
        equivariance: true,
        orbits_match_shapes: true,
        violations: Vec::new(),
        violation_count: 0,
    };
    let flag = |report: &mut AxiomReport, axiom: &'static str, w: &[u8], g1: i64, g2: i64| {
        match axiom {
            "unit" => report.units = false,
            "inverse" => report.inverses = false,
            "product" => report.products = false,
            "equivariance" => report.equivariance = false,
            _ => report.orbits_match_shapes = false,
        }
        report.violation_count += 1;
        if report.violations.len() < MAX_LISTED {
            report.violations.push(AxiomViolation { axiom, point: z.format_word(w), g1, g2 });
        }
    };

    for x in z.words(rx)?.iter() {
        let Some((i, c)) = g.shape.piece(x, rx) else {
            continue;
        };
        report.points_checked += 1;
        let gx = &gmap[&z.project(x, rx, rg)];
        if !gx.contains(&0) {
            flag(&mut report, "unit", x, 0, 0);
        }
        let sx: BTreeSet<i64> = g.shape.cells[i].shape.z_values().into_iter().map(|v| v - c).collect();
        if *gx != sx {
            flag(&mut report, "orbit", x, 0, 0);
        }
        for &g1 in gx {
            let y = z.shift_word(x, rx, g1, rg);
            let Some(gy) = gmap.get(&y) else {
                flag(&mut report, "inverse", x, g1, 0);
                continue;
            };
            if !gy.contains(&-g1) {
                flag(&mut report, "inverse", x, g1, -g1);
            }
            for &g2 in gy {
                if !gx.contains(&(g1 + g2)) {
                    flag(&mut report, "product", x, g1, g2);
                }
            }
        }
        for &h in &sx {
            let moved = g.shape.shape_at(&z.shift_word(x, rx, h, big), big);
            let expected: BTreeSet<i64> = sx.iter().map(|v| v - h).collect();
            if moved.map(|s| s.z_values().into_iter().collect::<BTreeSet<_>>()) != Some(expected) {
                flag(&mut report, "equivariance", x, h, 0);
            }
        }
    }
    Ok(report)
}

pub use crate::exact::{qmat_is_zero, qmat_mul, qmat_rank, qmat_transpose, qmat_zero, QMatrix};

/// Every nonzero coefficient value f_γ(x) must have (x, γ) ∈ 𝒢.
pub fn check_supported(g: &SmallGroupoid, a: &CrossedElement) -> Result<()> {
    let z = g.system().as_z()?;
    for (gamma, f) in a.coeffs() {
        let r = z.shift_radius(g.radius(), *gamma).max(f.radius());
        let f = f.refine(r)?;
        for w in f.values().keys() {
            if !g.contains(w, r, *gamma) {
                return Err(Error::Precondition(format!(
                    "coefficient at {gamma} is nonzero at {} where (x, {gamma}) ∉ 𝒢",
                    z.format_word(w)
                )));
            }
        }
    }
    Ok(())
}

/// Word radius needed for a base point when evaluating π_{Z_F}(a).
pub fn pi_radius(g: &SmallGroupoid, a: &CrossedElement, block: usize) -> Result<usize> {
    let z = g.system().as_z()?;
    let cell = g
        .shape
        .cells
        .get(block)
        .ok_or_else(|| Error::InvalidArgument(format!("no block {block}")))?;
    Ok(z.shift_radius(a.radius().max(g.radius()), cell.shape.max_norm() as i64))
}

/// π_{Z_F}(a)(z): rows and columns indexed by F in increasing order, entry
/// (c₁, c₂) = f_{c₂−c₁}(σ^{c₁} z).
pub fn pi_zf(g: &SmallGroupoid, a: &CrossedElement, block: usize, zw: &[u8], r: usize) -> Result<QMatrix> {
    check_supported(g, a)?;
    pi_zf_unchecked(g, a, block, zw, r)
}

fn pi_zf_unchecked(g: &SmallGroupoid, a: &CrossedElement, block: usize, zw: &[u8], r: usize) -> Result<QMatrix> {
    let need = pi_radius(g, a, block)?;
    if r < need {
        return Err(Error::InvalidArgument(format!("cell word needs radius ≥ {need}, got {r}")));
    }
    let cell = &g.shape.cells[block];
    if g.shape.piece(zw, r) != Some((block, 0)) {
        return Err(Error::Precondition(format!("point is not in the base of block {block}")));
    }
    crate::crossed::orbit_block(a, zw, r, &cell.shape.z_values())
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct RankReport {
    pub orbit_count: usize,
    pub matrix_rank: usize,
}

/// |Orbit_𝒢(x) ∩ E| for a base point of a block, cross-checked against the
/// rank of π_{Z_F}(φ_E)(x).
pub fn rank_of_open_set(g: &SmallGroupoid, e: &Clopen, block: usize, zw: &[u8], r: usize) -> Result<RankReport> {
    let z = g.system().as_z()?;
    let phi = CrossedElement::function(&LocFn::indicator(e)?)?;
    let m = pi_zf_unchecked(g, &phi, block, zw, r)?;
    let er = e.radius();
    let count = g.shape.cells[block]
        .shape
        .z_values()
        .into_iter()
        .filter(|&c| e.contains_point(&z.shift_word(zw, r, c, er), er))
        .count();
    Ok(RankReport { orbit_count: count, matrix_rank: qmat_rank(&m) })
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CellInvariance {
    pub block: usize,
    pub shape_len: usize,
    pub measure: f64,
    pub defect: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct OrbitInvarianceReport {
    pub eps: f64,
    pub cells: Vec<CellInvariance>,
    pub max_defect: f64,
    pub passed: bool,
}

/// Per-cell (K, ε)-invariance of the orbit shapes; pass iff every defect < ε.
pub fn orbit_invariance_report(g: &SmallGroupoid, k: &FiniteGroupSet, eps: f64) -> Result<OrbitInvarianceReport> {
    let mut cells = Vec::new();
    for (i, c) in g.shape.cells.iter().enumerate() {
        let defect = invariance_defect(&c.shape, k)?;
        cells.push(CellInvariance {
            block: i,
            shape_len: c.shape.len(),
            measure: c.base.measure_f64()?,
            defect,
            pass: defect < eps,
        });
    }
    let max_defect = cells.iter().map(|c| c.defect).fold(0.0, f64::max);
    let passed = cells.iter().all(|c| c.pass);
    Ok(OrbitInvarianceReport { eps, cells, max_defect, passed })
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct NestedCell {
    pub outer: usize,
    pub inner: usize,
    /// Translates γ with F_inner + γ ⊆ F_outer.
    pub placements: Vec<i64>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct BoundaryReport {
    pub cells: usize,
    /// Every decomposition has a single piece.
    pub trivial: bool,
    pub nested: Vec<NestedCell>,
}

/// For clopen cells the closure of a cell is the cell itself, so a cell
/// meets the closure of another only when the two overlap; such pairs are
/// listed with the placements of the inner shape inside the outer one.
pub fn boundary_decomposition_check(cells: &[(FiniteGroupSet, Clopen)]) -> Result<BoundaryReport> {
    let mut nested = Vec::new();
    for (i, (fi, zi)) in cells.iter().enumerate() {
        for (j, (fj, zj)) in cells.iter().enumerate() {
            if i == j || zi.is_disjoint(zj)? {
                continue;
            }
            let fi_vals: BTreeSet<i64> = fi.z_values().into_iter().collect();
            let placements = fi
                .z_values()
                .into_iter()
                .flat_map(|a| fj.z_values().into_iter().map(move |b| a - b))
                .collect::<BTreeSet<i64>>()
                .into_iter()
                .filter(|g| fj.z_values().iter().all(|v| fi_vals.contains(&(v + g))))
                .collect();
            if fj.len() <= fi.len() {
                nested.push(NestedCell { outer: i, inner: j, placements });
            }
        }
    }
    Ok(BoundaryReport { cells: cells.len(), trivial: nested.is_empty(), nested })
}

pub fn shape_cells(s: &ShapeFunction) -> Vec<(FiniteGroupSet, Clopen)> {
    s.cells.iter().map(|c| (c.shape.clone(), c.base.clone())).collect()
}

/// The direct-sum model ⊕_i M_{|F_i|}(C(Z_i)); all boundary cells are empty.
#[derive(Clone, Debug, Serialize)]
pub struct GroupoidMatrixModel {
    pub blocks: Vec<ModelBlock>,
    pub boundary_cells_empty: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelBlock {
    pub shape: Vec<i64>,
    pub size: usize,
    pub base: ClopenSpec,
    pub measure: f64,
}

/// An element of the model: per block, a matrix per base-cell word.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelElement {
    pub radius: usize,
    pub blocks: Vec<BTreeMap<Word, QMatrix>>,
}

impl ModelElement {
    pub fn is_zero(&self) -> bool {
        self.blocks.iter().all(|b| b.values().all(qmat_is_zero))
    }
}

pub fn matrix_model(g: &SmallGroupoid) -> Result<GroupoidMatrixModel> {
    let blocks = g
        .shape
        .cells
        .iter()
        .map(|c| {
            Ok(ModelBlock {
                shape: c.shape.z_values(),
                size: c.shape.len(),
                base: c.base.to_spec(),
                measure: c.base.measure_f64()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    // Clopen cells have empty boundary, so no gluing data arises.
    Ok(GroupoidMatrixModel { blocks, boundary_cells_empty: true })
}

/// Φ(a) = ⊕_i π_{Z_i}(a) at a common radius.
pub fn model_element(g: &SmallGroupoid, a: &CrossedElement, radius: usize) -> Result<ModelElement> {
    check_supported(g, a)?;
    let mut blocks = Vec::new();
    for i in 0..g.shape.cells.len() {
        let r = radius.max(pi_radius(g, a, i)?);
        let mut m = BTreeMap::new();
        for w in g.cell_points(i, r)? {
            m.insert(w.clone(), pi_zf_unchecked(g, a, i, &w, r)?);
        }
        blocks.push(m);
    }
    Ok(ModelElement { radius, blocks })
}

/// Cell measure × orbit size summed over blocks (1 when Ω = X).
pub fn orbit_mass(g: &SmallGroupoid) -> Result<Q> {
    let mut total = Q::zero();
    for c in &g.shape.cells {
        let m = c
            .base
            .measure()?
            .as_rational()
            .ok_or_else(|| Error::Unsupported("irrational cell measure".into()))?;
        total += m * Q::from_integer((c.shape.len() as i64).into());
    }
    Ok(total)
}

/// Same as [`orbit_mass`] in floating point, for irrational measures.
pub fn orbit_mass_f64(g: &SmallGroupoid) -> Result<f64> {
    let mut total = 0.0;
    for c in &g.shape.cells {
        total += c.base.measure_f64()? * c.shape.len() as f64;
    }
    Ok(total)
}

/// Exact Σ_i |F_i| μ(Z_i) − 1 = 0 test in the measure field.
pub fn orbit_partition_exact(g: &SmallGroupoid) -> Result<bool> {
    let field = g.system().field();
    let mut total = crate::exact::Alg::zero(&field);
    for c in &g.shape.cells {
        total = total.add(&c.base.measure()?.scale(&Q::from_integer((c.shape.len() as i64).into())));
    }
    Ok(total.sub(&crate::exact::Alg::one(&field)).is_zero())
}
