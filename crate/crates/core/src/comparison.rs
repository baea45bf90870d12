//! Dynamical subequivalence of clopen sets, orbit-count comparison
//! criteria, and rank-based Cuntz comparison of diagonal elements.

use crate::clopen::Clopen;
use crate::crossed::LocFn;
use crate::exact::{q_frac, q_from_f64, q_int, q_to_f64, sum_alg, Alg, Q};
use crate::group::FiniteGroupSet;
use crate::groupoid::SmallGroupoid;
use crate::system::{CantorSystemZ, System, Word};
use crate::towers::TowerDecomposition;
use crate::{Error, Result};
use num_traits::{Signed, Zero};
use serde::Serialize;
use std::collections::BTreeMap;
use std::sync::Arc;

/// A = ⊔ A_i with σ^{γ_i}(A_i) pairwise disjoint inside B.
#[derive(Clone, Debug)]
pub struct SubequivalenceWitness {
    pub pieces: Vec<(Clopen, i64)>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct WitnessPieceSpec {
    pub gamma: i64,
    pub piece: crate::clopen::ClopenSpec,
}

impl SubequivalenceWitness {
    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Exact check of the partition, disjointness and containment.
    pub fn validate(&self, a: &Clopen, b: &Clopen) -> Result<bool> {
        let sys = a.system().clone();
        let mut union = Clopen::empty(&sys, 0);
        let mut images: Vec<Clopen> = Vec::new();
        for (piece, g) in &self.pieces {
            if !union.is_disjoint(piece)? {
                return Ok(false);
            }
            union = union.union(piece)?;
            let image = piece.translate_z(*g)?;
            if !image.is_subset(b)? {
                return Ok(false);
            }
            for other in &images {
                if !other.is_disjoint(&image)? {
                    return Ok(false);
                }
            }
            images.push(image);
        }
        Ok(union.symmetric_difference(a)?.is_empty())
    }

    pub fn to_specs(&self) -> Vec<WitnessPieceSpec> {
        self.pieces
            .iter()
            .map(|(c, g)| WitnessPieceSpec { gamma: *g, piece: c.to_spec() })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub enum CompareOutcome {
    Found(SubequivalenceWitness),
    /// No witness among partitions into radius-`radius` cylinders moved by
    /// elements of the window; says nothing beyond that.
    NotFound {
        radius: usize,
        window: Vec<i64>,
        unmatched: usize,
        window_limited: bool,
    },
}

impl CompareOutcome {
    pub fn witness(&self) -> Option<&SubequivalenceWitness> {
        match self {
            CompareOutcome::Found(w) => Some(w),
            CompareOutcome::NotFound { .. } => None,
        }
    }
}

/// Word of σ^γ x at the same radius when translation permutes the
/// radius-r cylinders (odometers and cycles).
fn translate_exact(z: &CantorSystemZ, w: &[u8], r: usize, gamma: i64) -> Option<Word> {
    if z.is_odometer() {
        return Some(z.odometer_add(w, gamma));
    }
    let n = z.cycle_len()? as i64;
    let k = w[r] as i64 + gamma;
    Some((-(r as i64)..=r as i64).map(|i| (k + i).rem_euclid(n) as u8).collect())
}

/// Window size beyond which failures are no longer attributed to the window.
pub fn window_threshold(sys: &Arc<System>, radius: usize) -> Result<u64> {
    let z = sys.as_z()?;
    if let Some(p) = z.odometer_period(2 * radius + 1) {
        return Ok(4 * p.min(u64::MAX as u128 / 4) as u64);
    }
    if let Some(n) = z.cycle_len() {
        return Ok(n as u64);
    }
    Ok(4 * z.words(radius)?.len() as u64)
}

/// Augmenting-path matching of A-atoms to disjoint images in B. Atoms are
/// tried in word order and translations by increasing |γ| (ties: smaller γ).
pub fn dynamical_compare(a: &Clopen, b: &Clopen, translations: &FiniteGroupSet) -> Result<CompareOutcome> {
    if translations.is_empty() {
        return Err(Error::InvalidArgument("empty translation set".into()));
    }
    translations.check_rank(1)?;
    if !a.same_system(b) {
        return Err(Error::SystemMismatch);
    }
    if a.is_empty() {
        return Ok(CompareOutcome::Found(SubequivalenceWitness { pieces: Vec::new() }));
    }
    let sys = a.system().clone();
    let z = sys.as_z()?;
    let mut window = translations.z_values();
    window.sort_by_key(|g| (g.abs(), *g));
    let reach = translations.max_norm() as i64;
    let base = a.radius().max(b.radius());
    let exact = z.is_odometer() || z.is_cycle();
    // Shift systems: sources at rt + reach map into single target words at
    // rt; finer targets are tried until matching succeeds.
    let extra = if exact { 0 } else { reach as usize };
    let mut last = None;
    for rt in base..=base + extra {
        let rs = if exact { rt } else { z.shift_radius(rt, reach) };
        let (sources, choice, unmatched) = match_atoms(z, a, b, &window, rs, rt, exact)?;
        if unmatched == 0 {
            return finish(&sys, a, b, rs, sources, choice);
        }
        last = Some((rs, unmatched, rt));
    }
    let (rs, unmatched, rt) = last.expect("at least one radius tried");
    let threshold = window_threshold(&sys, rt)?;
    Ok(CompareOutcome::NotFound {
        radius: rs,
        window: translations.z_values(),
        unmatched,
        window_limited: (2 * reach as u64 + 1) < threshold,
    })
}

type Matching = (Vec<Word>, Vec<Option<(usize, i64)>>, usize);

fn match_atoms(
    z: &CantorSystemZ,
    a: &Clopen,
    b: &Clopen,
    window: &[i64],
    rs: usize,
    rt: usize,
    exact: bool,
) -> Result<Matching> {
    let sources: Vec<Word> = a.refine(rs)?.words().iter().cloned().collect();
    let targets: BTreeMap<Word, usize> = b
        .refine(rt)?
        .words()
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i))
        .collect();
    let edges: Vec<Vec<(usize, i64)>> = sources
        .iter()
        .map(|w| {
            window
                .iter()
                .filter_map(|&g| {
                    let t = if exact { translate_exact(z, w, rs, g)? } else { z.shift_word(w, rs, g, rt) };
                    targets.get(&t).map(|&i| (i, g))
                })
                .collect()
        })
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; targets.len()];
    let mut choice: Vec<Option<(usize, i64)>> = vec![None; sources.len()];
    let mut unmatched = 0;
    for s in 0..sources.len() {
        let mut seen = vec![false; targets.len()];
        if !augment(s, &edges, &mut owner, &mut choice, &mut seen) {
            unmatched += 1;
        }
    }
    Ok((sources, choice, unmatched))
}

fn finish(
    sys: &Arc<System>,
    a: &Clopen,
    b: &Clopen,
    rs: usize,
    sources: Vec<Word>,
    choice: Vec<Option<(usize, i64)>>,
) -> Result<CompareOutcome> {
    let mut by_gamma: BTreeMap<i64, Vec<Word>> = BTreeMap::new();
    for (s, c) in choice.iter().enumerate() {
        let (_, g) = c.expect("all sources matched");
        by_gamma.entry(g).or_default().push(sources[s].clone());
    }
    let mut keys: Vec<i64> = by_gamma.keys().copied().collect();
    keys.sort_by_key(|g| (g.abs(), *g));
    let pieces = keys
        .into_iter()
        .map(|g| Ok((Clopen::from_words(sys, rs, by_gamma[&g].clone())?, g)))
        .collect::<Result<Vec<_>>>()?;
    let witness = SubequivalenceWitness { pieces };
    if !witness.validate(a, b)? {
        return Err(Error::Internal("matching produced an invalid witness".into()));
    }
    Ok(CompareOutcome::Found(witness))
}

fn augment(
    s: usize,
    edges: &[Vec<(usize, i64)>],
    owner: &mut [Option<usize>],
    choice: &mut [Option<(usize, i64)>],
    seen: &mut [bool],
) -> bool {
    for &(t, g) in &edges[s] {
        if seen[t] {
            continue;
        }
        seen[t] = true;
        let free = match owner[t] {
            None => true,
            Some(o) => augment(o, edges, owner, choice, seen),
        };
        if free {
            owner[t] = Some(s);
            choice[s] = Some((t, g));
            return true;
        }
    }
    false
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct GapCheck {
    pub mu_e: f64,
    pub mu_f: f64,
    pub lambda: f64,
    pub holds: bool,
}

/// μ(E) < λ μ(F), decided exactly in the measure field.
pub fn measure_gap_check(e: &Clopen, f: &Clopen, lambda: f64) -> Result<GapCheck> {
    let lq = q_from_f64(lambda).ok_or_else(|| Error::InvalidArgument(format!("λ = {lambda} is not finite")))?;
    let me = e.measure()?;
    let mf = f.measure()?;
    let holds = mf.scale(&lq).sub(&me).signum() > 0;
    Ok(GapCheck { mu_e: me.to_f64(), mu_f: mf.to_f64(), lambda, holds })
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct QuarterRow {
    pub block: usize,
    pub orbit_size: usize,
    pub max_in_e: usize,
    pub min_in_f: usize,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct QuarterReport {
    pub lambda: f64,
    pub rows: Vec<QuarterRow>,
    /// min over x of λ|O(x)∩F| − |O(x)∩E|.
    pub slack_counts: f64,
    /// min_x |O(x)∩F|/(4|O(x)|) − max_{x₀} 1/|O(x₀)|.
    pub slack_sizes: f64,
    pub counts_ok: bool,
    pub sizes_ok: bool,
    pub passed: bool,
}

/// Checks |O(x)∩E| < λ|O(x)∩F| for every x and
/// 1/|O(x₀)| < |O(x)∩F|/(4|O(x)|) for every pair, with λ = ¼ by default.
pub fn quarter_criterion(g: &SmallGroupoid, e: &Clopen, f: &Clopen) -> Result<QuarterReport> {
    quarter_criterion_with(g, e, f, &q_frac(1, 4))
}

pub fn quarter_criterion_with(g: &SmallGroupoid, e: &Clopen, f: &Clopen, lambda: &Q) -> Result<QuarterReport> {
    let z = g.system().as_z()?;
    let re = e.radius().max(f.radius());
    let quarter = q_frac(1, 4);
    let mut rows = Vec::new();
    let mut slack_counts: Option<Q> = None;
    let mut min_ratio: Option<Q> = None;
    let mut max_inv: Option<Q> = None;
    for (i, cell) in g.shape.cells().iter().enumerate() {
        let offsets = cell.shape.z_values();
        let size = offsets.len();
        let r = z.shift_radius(re, cell.shape.max_norm() as i64).max(cell.base.radius());
        let mut row = QuarterRow { block: i, orbit_size: size, max_in_e: 0, min_in_f: usize::MAX };
        for w in cell.base.refine(r)?.words() {
            let mut ce = 0;
            let mut cf = 0;
            for &c in &offsets {
                if e.contains_point(&z.shift_word(w, r, c, e.radius()), e.radius()) {
                    ce += 1;
                }
                if f.contains_point(&z.shift_word(w, r, c, f.radius()), f.radius()) {
                    cf += 1;
                }
            }
            row.max_in_e = row.max_in_e.max(ce);
            row.min_in_f = row.min_in_f.min(cf);
            let slack = lambda * q_int(cf as i64) - q_int(ce as i64);
            if slack_counts.as_ref().map_or(true, |s| &slack < s) {
                slack_counts = Some(slack);
            }
            let ratio = &quarter * q_frac(cf as i64, size as i64);
            if min_ratio.as_ref().map_or(true, |m| &ratio < m) {
                min_ratio = Some(ratio);
            }
        }
        let inv = q_frac(1, size as i64);
        if max_inv.as_ref().map_or(true, |m| &inv > m) {
            max_inv = Some(inv);
        }
        if row.min_in_f == usize::MAX {
            row.min_in_f = 0;
        }
        rows.push(row);
    }
    let slack_counts = slack_counts.unwrap_or_else(Q::zero);
    let slack_sizes = match (min_ratio, max_inv) {
        (Some(m), Some(i)) => m - i,
        _ => Q::zero(),
    };
    let counts_ok = slack_counts.is_positive();
    let sizes_ok = slack_sizes.is_positive();
    Ok(QuarterReport {
        lambda: q_to_f64(lambda),
        rows,
        slack_counts: q_to_f64(&slack_counts),
        slack_sizes: q_to_f64(&slack_sizes),
        counts_ok,
        sizes_ok,
        passed: counts_ok && sizes_ok,
    })
}

/// Diagonal entries of one block: base cell words ↦ entries at σ^c z.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagBlock {
    pub base: Clopen,
    pub offsets: Vec<i64>,
    pub radius: usize,
    pub entries: BTreeMap<Word, Vec<Q>>,
}

#[derive(Clone, Debug)]
pub struct DiagonalElement {
    pub sys: Arc<System>,
    pub blocks: Vec<DiagBlock>,
}

impl PartialEq for DiagonalElement {
    fn eq(&self, o: &Self) -> bool {
        self.sys.key() == o.sys.key() && self.blocks == o.blocks
    }
}

impl DiagonalElement {
    /// The image of f ∈ C(X) in ⊕ M_{|F|}(C(Z)) for cells (Z, F).
    pub fn from_function(cells: &[(Clopen, Vec<i64>)], f: &LocFn) -> Result<Self> {
        let sys = f.system().clone();
        let z = sys.as_z()?;
        let mut blocks = Vec::new();
        for (base, offsets) in cells {
            let reach = offsets.iter().map(|c| c.abs()).max().unwrap_or(0);
            let r = z.shift_radius(f.radius(), reach).max(base.radius());
            let mut entries = BTreeMap::new();
            for w in base.refine(r)?.words() {
                let vals: Vec<Q> = offsets
                    .iter()
                    .map(|&c| f.eval(&z.shift_word(w, r, c, f.radius()), f.radius()))
                    .collect();
                if vals.iter().any(|v| v.is_negative()) {
                    return Err(Error::InvalidArgument("diagonal entries must be nonnegative".into()));
                }
                entries.insert(w.clone(), vals);
            }
            blocks.push(DiagBlock { base: base.clone(), offsets: offsets.clone(), radius: r, entries });
        }
        Ok(DiagonalElement { sys, blocks })
    }

    pub fn on_groupoid(g: &SmallGroupoid, f: &LocFn) -> Result<Self> {
        let cells: Vec<(Clopen, Vec<i64>)> = g
            .shape
            .cells()
            .iter()
            .map(|c| (c.base.clone(), c.shape.z_values()))
            .collect();
        DiagonalElement::from_function(&cells, f)
    }

    pub fn on_towers(td: &TowerDecomposition, f: &LocFn) -> Result<Self> {
        let cells: Vec<(Clopen, Vec<i64>)> = td
            .towers
            .iter()
            .map(|t| (t.base.clone(), t.shape.z_values()))
            .collect();
        DiagonalElement::from_function(&cells, f)
    }

    /// Entries of block `i` at a base word of radius `r ≥` the block radius.
    pub fn entries_at(&self, i: usize, w: &[u8], r: usize) -> Result<&Vec<Q>> {
        let z = self.sys.as_z()?;
        let b = &self.blocks[i];
        let key = z.project(w, r, b.radius);
        b.entries
            .get(&key)
            .ok_or_else(|| Error::InvalidArgument("point outside the block base".into()))
    }

    /// (a − ε)₊ entrywise.
    pub fn cut_down(&self, eps: &Q) -> Result<DiagonalElement> {
        if eps.is_negative() {
            return Err(Error::InvalidArgument("ε must be nonnegative".into()));
        }
        let blocks = self
            .blocks
            .iter()
            .map(|b| DiagBlock {
                base: b.base.clone(),
                offsets: b.offsets.clone(),
                radius: b.radius,
                entries: b
                    .entries
                    .iter()
                    .map(|(w, v)| {
                        let cut = v
                            .iter()
                            .map(|x| if x > eps { x - eps } else { Q::zero() })
                            .collect();
                        (w.clone(), cut)
                    })
                    .collect(),
            })
            .collect();
        Ok(DiagonalElement { sys: self.sys.clone(), blocks })
    }

    fn check_same_model(&self, o: &DiagonalElement) -> Result<()> {
        if self.sys.key() != o.sys.key() || self.blocks.len() != o.blocks.len() {
            return Err(Error::InvalidArgument("diagonal elements live in different models".into()));
        }
        for (a, b) in self.blocks.iter().zip(&o.blocks) {
            if a.offsets != b.offsets || a.base != b.base {
                return Err(Error::InvalidArgument("block structures differ".into()));
            }
        }
        Ok(())
    }

    /// Cells of each block at the finer radius of the two elements.
    fn joint_cells(&self, o: &DiagonalElement) -> Result<Vec<(usize, usize, Vec<Word>)>> {
        self.check_same_model(o)?;
        let mut out = Vec::new();
        for (i, (a, b)) in self.blocks.iter().zip(&o.blocks).enumerate() {
            let r = a.radius.max(b.radius);
            out.push((i, r, a.base.refine(r)?.words().iter().cloned().collect()));
        }
        Ok(out)
    }

    /// Σ over blocks and cells of μ(cell) · #{nonzero entries}.
    pub fn support_trace(&self) -> Result<Alg> {
        let field = self.sys.field();
        let mut terms = Vec::new();
        for b in &self.blocks {
            for (w, v) in &b.entries {
                let cell = Clopen::from_words(&self.sys, b.radius, [w.clone()])?;
                let n = v.iter().filter(|x| !x.is_zero()).count();
                terms.push(cell.measure()?.scale(&q_int(n as i64)));
            }
        }
        Ok(sum_alg(&field, terms.iter()))
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct RankRow {
    pub block: usize,
    pub cell: String,
    pub rank_a: usize,
    pub rank_b: usize,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct RankCompareReport {
    pub rows: Vec<RankRow>,
    /// rank a(x) ≤ rank b(x) everywhere.
    pub le_pass: bool,
    /// a(x) = 0 or rank a(x) < ¼ rank b(x) everywhere.
    pub quarter_pass: bool,
}

fn rank(v: &[Q]) -> usize {
    v.iter().filter(|x| !x.is_zero()).count()
}

pub fn rank_compare_diagonal(a: &DiagonalElement, b: &DiagonalElement) -> Result<RankCompareReport> {
    let z = a.sys.as_z()?;
    let mut rows = Vec::new();
    let mut le_pass = true;
    let mut quarter_pass = true;
    for (i, r, words) in a.joint_cells(b)? {
        for w in words {
            let ra = rank(a.entries_at(i, &w, r)?);
            let rb = rank(b.entries_at(i, &w, r)?);
            le_pass &= ra <= rb;
            quarter_pass &= ra == 0 || 4 * ra < rb;
            rows.push(RankRow { block: i, cell: z.format_word(&w), rank_a: ra, rank_b: rb });
        }
    }
    Ok(RankCompareReport { rows, le_pass, quarter_pass })
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct WitnessCell {
    pub block: usize,
    pub cell: String,
    pub size: usize,
    /// Nonzero entries (row in b's slots, column in a's slots, value).
    pub entries: Vec<(usize, usize, f64)>,
    pub norm: f64,
    /// Schur bound of s*bs − (a−ε)₊.
    pub error: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CuntzWitness {
    pub eps: f64,
    pub cells: Vec<WitnessCell>,
    pub max_norm: f64,
    pub max_error: f64,
    pub valid: bool,
}

/// Per cell, matches the slots where a > ε to slots where b > 0 (largest
/// values paired first) with weights √((α−ε)/β), so that s*bs = (a−ε)₊.
pub fn cuntz_witness_diagonal(a: &DiagonalElement, b: &DiagonalElement, eps: f64) -> Result<CuntzWitness> {
    let eq = q_from_f64(eps)
        .filter(|q| !q.is_negative())
        .ok_or_else(|| Error::InvalidArgument(format!("ε must be a nonnegative number, got {eps}")))?;
    let z = a.sys.as_z()?;
    let mut cells = Vec::new();
    for (i, r, words) in a.joint_cells(b)? {
        for w in words {
            let av = a.entries_at(i, &w, r)?;
            let bv = b.entries_at(i, &w, r)?;
            let n = av.len();
            let mut sa: Vec<usize> = (0..n).filter(|&k| av[k] > eq).collect();
            let mut sb: Vec<usize> = (0..n).filter(|&k| !bv[k].is_zero()).collect();
            if sa.len() > sb.len() {
                return Err(Error::Precondition(format!(
                    "block {i} cell {}: rank of (a−ε)₊ is {} but rank of b is {}",
                    z.format_word(&w),
                    sa.len(),
                    sb.len()
                )));
            }
            sa.sort_by(|&x, &y| av[y].cmp(&av[x]).then(x.cmp(&y)));
            sb.sort_by(|&x, &y| bv[y].cmp(&bv[x]).then(x.cmp(&y)));
            let mut s = nalgebra::DMatrix::<f64>::zeros(n, n);
            let mut entries = Vec::new();
            for (&k, &j) in sa.iter().zip(&sb) {
                let v = (q_to_f64(&(&av[k] - &eq)) / q_to_f64(&bv[j])).sqrt();
                s[(j, k)] = v;
                entries.push((j, k, v));
            }
            let bm = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, bv.iter().map(q_to_f64)));
            let target = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                n,
                av.iter().map(|x| if x > &eq { q_to_f64(&(x - &eq)) } else { 0.0 }),
            ));
            let diff = s.transpose() * bm * &s - target;
            let row_max = diff.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
            let col_max = diff.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
            let norm = entries.iter().map(|e| e.2).fold(0.0, f64::max);
            cells.push(WitnessCell {
                block: i,
                cell: z.format_word(&w),
                size: n,
                entries,
                norm,
                error: (row_max * col_max).sqrt(),
            });
        }
    }
    let max_norm = cells.iter().map(|c| c.norm).fold(0.0, f64::max);
    let max_error = cells.iter().map(|c| c.error).fold(0.0, f64::max);
    Ok(CuntzWitness { eps, cells, max_norm, max_error, valid: max_error <= eps + 1e-9 })
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct DivisibleReport {
    pub r: f64,
    pub eps: f64,
    pub whole: usize,
    /// Selected levels per tower.
    pub selected: Vec<usize>,
    pub d_levels: f64,
    pub d_trace: f64,
    pub agree_exactly: bool,
    pub mu_f: f64,
    pub within_eps: bool,
}

#[derive(Clone, Debug)]
pub struct DivisibleElement {
    /// h₀ as an element of the tower model.
    pub h0: DiagonalElement,
    pub h0_function: LocFn,
    /// Number of unit blocks beside h₀.
    pub whole: usize,
    pub f: Clopen,
    pub d_mu: Alg,
    pub report: DivisibleReport,
}

/// h = diag(h₀, 1, …, 1) with ⌊r⌋ units and h₀ the indicator of the first
/// ⌈{r}·|Γ_s|⌉ levels of each tower.
pub fn build_divisible_element(td: &TowerDecomposition, r: f64, eps: f64) -> Result<DivisibleElement> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!("r must be positive, got {r}")));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("ε must be positive, got {eps}")));
    }
    let rq = q_from_f64(r).expect("finite");
    let whole = rq.floor();
    let frac = &rq - &whole;
    let whole: usize = whole.to_integer().try_into().map_err(|_| Error::InvalidArgument("r too large".into()))?;
    let need = 1.0 / eps;
    if let Some(t) = td.towers.iter().find(|t| t.shape.len() as f64 <= need) {
        return Err(Error::Precondition(format!(
            "tower of height {} is too short; heights must exceed {need}",
            t.shape.len()
        )));
    }
    let sys = td.system().clone();
    let field = sys.field();
    let mut h0 = LocFn::zero(&sys)?;
    let mut f = Clopen::empty(&sys, 0);
    let mut selected = Vec::new();
    let mut d_levels = Alg::from_rational(&field, q_int(whole as i64));
    for t in &td.towers {
        let k = t.shape.len();
        let n = (&frac * q_int(k as i64)).ceil().to_integer();
        let n: usize = n.try_into().expect("bounded by the height");
        let levels: Vec<i64> = t.shape.z_values().into_iter().take(n).collect();
        for g in &levels {
            let level = t.base.translate_z(*g)?;
            f = f.union(&level)?;
            h0 = h0.add(&LocFn::indicator(&level)?)?;
        }
        d_levels = d_levels.add(&t.base.measure()?.scale(&q_int(n as i64)));
        selected.push(n);
    }
    let diag = DiagonalElement::on_towers(td, &h0)?;
    let d_trace = diag.support_trace()?.add(&Alg::from_rational(&field, q_int(whole as i64)));
    let agree = d_levels.sub(&d_trace).is_zero();
    let d = d_levels.to_f64();
    let report = DivisibleReport {
        r,
        eps,
        whole,
        selected,
        d_levels: d,
        d_trace: d_trace.to_f64(),
        agree_exactly: agree,
        mu_f: f.measure_f64()?,
        within_eps: (d - r).abs() < eps,
    };
    Ok(DivisibleElement { h0: diag, h0_function: h0, whole, f, d_mu: d_levels, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groupoid::{build_groupoid, shape_from_tiling};
    use crate::system::SystemSpec;
    use crate::towers::{first_return_analysis, kakutani_rokhlin, tiling_from_returns};

    fn odo() -> Arc<System> {
        Arc::new(System::from_spec(&SystemSpec::Odometer { bases: vec![2] }).unwrap())
    }

    fn fib() -> Arc<System> {
        Arc::new(System::from_json(r#"{"kind":"substitution","rules":{"a":"ab","b":"a"}}"#).unwrap())
    }

    fn tower_groupoid(s: &Arc<System>, y: &str) -> SmallGroupoid {
        let y = Clopen::cylinder(s, y).unwrap();
        let t = tiling_from_returns(&first_return_analysis(s, &y).unwrap()).unwrap();
        build_groupoid(&shape_from_tiling(&t).unwrap(), true).unwrap()
    }

    #[test]
    fn odometer_carry_witness() {
        let s = odo();
        let a = Clopen::cylinder(&s, "0000").unwrap();
        let b = Clopen::cylinder(&s, "11").unwrap();
        let out = dynamical_compare(&a, &b, &FiniteGroupSet::interval(-16, 16)).unwrap();
        let w = out.witness().unwrap();
        assert_eq!(w.pieces.len(), 1);
        assert_eq!(w.pieces[0].1, -1);
        assert!(w.validate(&a, &b).unwrap());
    }

    #[test]
    fn trivial_comparisons() {
        let s = odo();
        let b = Clopen::cylinder(&s, "1").unwrap();
        let empty = Clopen::empty(&s, 0);
        assert!(dynamical_compare(&empty, &b, &FiniteGroupSet::from_z([0])).unwrap().witness().unwrap().is_empty());
        let a = Clopen::cylinder(&s, "11").unwrap();
        let w = dynamical_compare(&a, &b, &FiniteGroupSet::interval(-3, 3)).unwrap();
        let w = w.witness().unwrap();
        assert_eq!(w.pieces.len(), 1);
        assert_eq!(w.pieces[0].1, 0);
        assert!(dynamical_compare(&a, &b, &FiniteGroupSet::new()).is_err());
    }

    #[test]
    fn not_found_is_window_relative() {
        let s = odo();
        let a = Clopen::cylinder(&s, "0").unwrap();
        let b = Clopen::cylinder(&s, "11").unwrap();
        match dynamical_compare(&a, &b, &FiniteGroupSet::interval(-4, 4)).unwrap() {
            CompareOutcome::NotFound { unmatched, .. } => assert!(unmatched > 0),
            CompareOutcome::Found(_) => panic!("μ(A) > μ(B)"),
        }
    }

    #[test]
    fn fibonacci_witness_is_valid() {
        let s = fib();
        let a = Clopen::cylinder(&s, "b").unwrap();
        let b = Clopen::cylinder(&s, "a").unwrap();
        let out = dynamical_compare(&a, &b, &FiniteGroupSet::interval(-3, 3)).unwrap();
        assert!(out.witness().unwrap().validate(&a, &b).unwrap());
    }

    #[test]
    fn measure_gaps() {
        let s = odo();
        let e = Clopen::cylinder(&s, "0000").unwrap();
        let f = Clopen::cylinder(&s, "0").unwrap();
        assert!(measure_gap_check(&e, &f, 0.25).unwrap().holds);
        assert!(!measure_gap_check(&f, &f, 0.25).unwrap().holds);
        let fs = fib();
        let g = measure_gap_check(&Clopen::cylinder(&fs, "b").unwrap(), &Clopen::cylinder(&fs, "a").unwrap(), 0.25).unwrap();
        assert!(!g.holds);
        assert!((g.mu_e - 0.381966).abs() < 1e-5);
    }

    #[test]
    fn quarter_on_height_16() {
        let s = odo();
        let g = tower_groupoid(&s, "0000");
        let e = Clopen::cylinder(&s, "0000").unwrap();
        let f = Clopen::cylinder(&s, "0").unwrap();
        let rep = quarter_criterion(&g, &e, &f).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert_eq!(rep.rows[0].max_in_e, 1);
        assert_eq!(rep.rows[0].min_in_f, 8);
        assert_eq!(rep.slack_counts, 1.0);
        assert_eq!(rep.slack_sizes, 8.0 / 64.0 - 1.0 / 16.0);
        assert!(!quarter_criterion(&g, &f, &f).unwrap().passed);
    }

    #[test]
    fn ranks_and_witness() {
        let s = odo();
        let (td, _) = kakutani_rokhlin(&s, &Clopen::cylinder(&s, "0000").unwrap()).unwrap();
        let a = DiagonalElement::on_towers(&td, &LocFn::indicator(&Clopen::cylinder(&s, "0000").unwrap()).unwrap()).unwrap();
        let b = DiagonalElement::on_towers(&td, &LocFn::indicator(&Clopen::cylinder(&s, "0").unwrap()).unwrap()).unwrap();
        let rep = rank_compare_diagonal(&a, &b).unwrap();
        assert!(rep.le_pass && rep.quarter_pass);
        assert!(rep.rows.iter().all(|r| r.rank_a == 1 && r.rank_b == 8));
        let same = rank_compare_diagonal(&b, &b).unwrap();
        assert!(same.le_pass && !same.quarter_pass);
        let w = cuntz_witness_diagonal(&a, &b, 1e-6).unwrap();
        assert!(w.valid && w.max_error <= 1e-6);
        assert!(w.cells.iter().all(|c| c.entries.len() == 1));
        let none = cuntz_witness_diagonal(&a, &b, 2.0).unwrap();
        assert!(none.cells.iter().all(|c| c.entries.is_empty()));
        assert!(matches!(cuntz_witness_diagonal(&b, &a, 0.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn cut_down_composes() {
        let s = odo();
        let (td, _) = kakutani_rokhlin(&s, &Clopen::cylinder(&s, "0").unwrap()).unwrap();
        let f = LocFn::from_fn(&s, 1, |w| q_frac(w[0] as i64 + 2 * w[1] as i64 + 1, 8)).unwrap();
        let a = DiagonalElement::on_towers(&td, &f).unwrap();
        let lhs = a.cut_down(&q_frac(1, 10)).unwrap().cut_down(&q_frac(1, 5)).unwrap();
        assert_eq!(lhs, a.cut_down(&q_frac(3, 10)).unwrap());
        assert_eq!(a.cut_down(&Q::zero()).unwrap(), a);
    }

    #[test]
    fn divisible_examples() {
        let s = odo();
        let (t16, _) = kakutani_rokhlin(&s, &Clopen::cylinder(&s, "0000").unwrap()).unwrap();
        let d = build_divisible_element(&t16, 0.3, 0.1);
        let d = d.unwrap_or_else(|e| panic!("{e}"));
        assert_eq!(d.report.selected, vec![5]);
        assert_eq!(d.report.d_levels, 5.0 / 16.0);
        assert!(d.report.agree_exactly && d.report.within_eps);
        let one = build_divisible_element(&t16, 1.0, 0.1).unwrap();
        assert_eq!(one.report.d_levels, 1.0);
        assert_eq!(one.whole, 1);
        let (t32, _) = kakutani_rokhlin(&s, &Clopen::cylinder(&s, "00000").unwrap()).unwrap();
        let h = build_divisible_element(&t32, 2.5, 0.1).unwrap();
        assert_eq!((h.whole, h.report.selected.clone()), (2, vec![16]));
        let (t2, _) = kakutani_rokhlin(&s, &Clopen::cylinder(&s, "0").unwrap()).unwrap();
        assert!(matches!(build_divisible_element(&t2, 0.3, 0.1), Err(Error::Precondition(_))));
    }
}
