//! First returns, Kakutani–Rokhlin partitions, URP towers, the tower
//! construction from a level function, and tilings from return times.

use crate::clopen::{Clopen, ClopenSpec};
use crate::error::{Error, Result};
use crate::group::{invariance_defect, invariance_defect_ratio, FiniteGroupSet, GroupElement};
use crate::system::{CantorSystemZ, System, Word};
use crate::window::OrbitWindow;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

const MAX_RETURN_EXTRA: usize = 1 << 14;
const MAX_ODOMETER_PERIOD: u128 = 1 << 22;

/// First-return data of a clopen Y: times J₁ < ⋯ < J_K and sets Z_k ⊆ Y.
#[derive(Clone, Debug)]
pub struct ReturnData {
    pub y: Clopen,
    pub returns: Vec<(usize, Clopen)>,
    /// Largest number of steps searched before every point of Y had returned.
    pub horizon: usize,
}

impl ReturnData {
    pub fn times(&self) -> Vec<usize> {
        self.returns.iter().map(|(j, _)| *j).collect()
    }

    pub fn max_time(&self) -> usize {
        self.returns.last().map(|(j, _)| *j).unwrap_or(0)
    }
}

/// Exact first-return analysis of a nonempty clopen set.
pub fn first_return_analysis(sys: &Arc<System>, y: &Clopen) -> Result<ReturnData> {
    let z = sys.as_z()?;
    if y.is_empty() {
        return Err(Error::InvalidArgument("first returns to the empty set".into()));
    }
    if !y.same_system(&Clopen::empty(sys, 0)) {
        return Err(Error::SystemMismatch);
    }
    let (radius, per_word, horizon) = if z.is_odometer() {
        odometer_returns(z, y)?
    } else {
        shift_returns(z, y)?
    };
    let mut groups: BTreeMap<usize, Vec<Word>> = BTreeMap::new();
    for (w, j) in per_word {
        groups.entry(j).or_default().push(w);
    }
    let returns = groups
        .into_iter()
        .map(|(j, ws)| Clopen::from_words(sys, radius, ws).map(|c| (j, c)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReturnData {
        y: y.clone(),
        returns,
        horizon,
    })
}

fn odometer_returns(z: &CantorSystemZ, y: &Clopen) -> Result<(usize, Vec<(Word, usize)>, usize)> {
    let r = y.radius();
    let m = 2 * r + 1;
    let p = z
        .odometer_period(m)
        .filter(|&p| p <= MAX_ODOMETER_PERIOD)
        .ok_or_else(|| Error::Unsupported(format!("odometer period at radius {r} too large")))? as usize;
    let inside: Vec<bool> = (0..p)
        .map(|v| y.contains_point(&z.int_to_digits(v as u128, m), r))
        .collect();
    let first = inside.iter().position(|&b| b).expect("Y nonempty");
    let mut out = Vec::new();
    let mut horizon = 0;
    // walk the cycle of residues once, starting at a point of Y
    let mut last = first;
    for step in 1..=p {
        let v = (first + step) % p;
        if inside[v] {
            let j = (v + p - last) % p;
            let j = if j == 0 { p } else { j };
            out.push((z.int_to_digits(last as u128, m), j));
            horizon = horizon.max(j);
            last = v;
        }
    }
    Ok((r, out, horizon))
}

fn shift_returns(z: &CantorSystemZ, y: &Clopen) -> Result<(usize, Vec<(Word, usize)>, usize)> {
    let r = y.radius();
    let mut extra = 1;
    loop {
        let big = r + extra;
        let words = z.words(big)?;
        let mut out = Vec::new();
        let mut resolved = true;
        for w in words.iter() {
            if !y.contains_point(&w[extra..extra + 2 * r + 1], r) {
                continue;
            }
            let hit = (1..=extra).find(|&j| y.contains_point(&w[extra + j..extra + j + 2 * r + 1], r));
            match hit {
                Some(j) => out.push((w.clone(), j)),
                None => {
                    resolved = false;
                    break;
                }
            }
        }
        if resolved {
            // the return time only depends on positions −r..=J+r
            let horizon = out.iter().map(|(_, j)| *j).max().unwrap_or(0);
            let tight = r + horizon;
            let mut seen = BTreeMap::new();
            for (w, j) in out {
                seen.insert(z.project(&w, big, tight), j);
            }
            return Ok((tight, seen.into_iter().collect(), horizon));
        }
        extra *= 2;
        if extra > MAX_RETURN_EXTRA {
            return Err(Error::Internal(format!(
                "return time exceeds {MAX_RETURN_EXTRA} (no returning orbit found)"
            )));
        }
    }
}

/// A Rokhlin tower: base B with shape Γ, meaning the sets B·γ, γ ∈ Γ.
#[derive(Clone, Debug)]
pub struct Tower {
    pub base: Clopen,
    pub shape: FiniteGroupSet,
}

#[derive(Clone, Debug)]
pub struct TowerDecomposition {
    pub towers: Vec<Tower>,
    pub complement: Clopen,
}

#[derive(Clone, Debug, Serialize)]
pub struct TowerSpec {
    pub base: ClopenSpec,
    pub shape: FiniteGroupSet,
}

#[derive(Clone, Debug, Serialize)]
pub struct TowerDecompositionSpec {
    pub towers: Vec<TowerSpec>,
    pub complement: ClopenSpec,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct TowerCheck {
    pub disjoint: bool,
    pub covers: bool,
    pub shapes_contain_identity: bool,
    /// Σ_s |Γ_s| μ(B_s) + μ(complement), expected to be exactly 1.
    pub total_measure_is_one: bool,
    pub overlaps: Vec<(usize, String, usize, String)>,
}

impl TowerCheck {
    pub fn passed(&self) -> bool {
        self.disjoint && self.covers && self.shapes_contain_identity && self.total_measure_is_one
    }
}

impl TowerDecomposition {
    pub fn system(&self) -> &Arc<System> {
        self.complement.system()
    }

    pub fn heights(&self) -> Vec<usize> {
        self.towers.iter().map(|t| t.shape.len()).collect()
    }

    pub fn to_spec(&self) -> TowerDecompositionSpec {
        TowerDecompositionSpec {
            towers: self
                .towers
                .iter()
                .map(|t| TowerSpec {
                    base: t.base.to_spec(),
                    shape: t.shape.clone(),
                })
                .collect(),
            complement: self.complement.to_spec(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_spec()).expect("towers serialize")
    }

    /// All levels B_s·γ as clopens, with their (tower, γ) labels.
    pub fn levels(&self) -> Result<Vec<(usize, GroupElement, Clopen)>> {
        let mut out = Vec::new();
        for (s, t) in self.towers.iter().enumerate() {
            for g in t.shape.iter() {
                out.push((s, g.clone(), t.base.translate(g)?));
            }
        }
        Ok(out)
    }

    /// Exhaustive clopen check of disjointness, covering and total measure.
    pub fn verify(&self) -> Result<TowerCheck> {
        let sys = self.system().clone();
        let levels = self.levels()?;
        let mut r = self.complement.radii().to_vec();
        for (_, _, c) in &levels {
            for (a, b) in r.iter_mut().zip(c.radii()) {
                *a = (*a).max(*b);
            }
        }
        let mut owner: BTreeMap<Word, (usize, GroupElement)> = BTreeMap::new();
        let mut overlaps = Vec::new();
        for (s, g, c) in &levels {
            for w in c.refine_radii(&r)?.words() {
                if let Some((s0, g0)) = owner.insert(w.clone(), (*s, g.clone())) {
                    if overlaps.len() < 16 {
                        overlaps.push((s0, g0.to_string(), *s, g.to_string()));
                    }
                }
            }
        }
        let comp = self.complement.refine_radii(&r)?;
        let mut complement_overlap = false;
        for w in comp.words() {
            if owner.contains_key(w) {
                complement_overlap = true;
            }
        }
        let total = sys.count_words(&r)?;
        let covered: BTreeSet<&Word> = owner.keys().chain(comp.words().iter()).collect();
        let mut mass = self.complement.measure()?;
        for t in &self.towers {
            let m = t.base.measure()?;
            for _ in 0..t.shape.len() {
                mass = mass.add(&m);
            }
        }
        Ok(TowerCheck {
            disjoint: overlaps.is_empty() && !complement_overlap,
            covers: covered.len() == total,
            shapes_contain_identity: self.towers.iter().all(|t| t.shape.contains_identity()),
            total_measure_is_one: mass.as_rational() == Some(crate::exact::q_int(1)),
            overlaps,
        })
    }

    /// Largest invariance defect among the shapes.
    pub fn max_defect(&self, k: &FiniteGroupSet) -> Result<f64> {
        let mut m: f64 = 0.0;
        for t in &self.towers {
            m = m.max(invariance_defect(&t.shape, k)?);
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct KrReport {
    /// Every boundary set W_{t₁…t_s} is empty (clopen bases have no boundary).
    pub boundary_sets_empty: bool,
    pub boundary_sets_checked: usize,
}

/// The Kakutani–Rokhlin partition over a clopen base.
pub fn kakutani_rokhlin(sys: &Arc<System>, y: &Clopen) -> Result<(TowerDecomposition, KrReport)> {
    let rd = first_return_analysis(sys, y)?;
    kakutani_rokhlin_from(&rd)
}

pub fn kakutani_rokhlin_from(rd: &ReturnData) -> Result<(TowerDecomposition, KrReport)> {
    let sys = rd.y.system().clone();
    let towers: Vec<Tower> = rd
        .returns
        .iter()
        .map(|(j, zk)| Tower {
            base: zk.clone(),
            shape: FiniteGroupSet::interval(0, *j as i64 - 1),
        })
        .collect();
    // ∂Z_k = closure minus interior, empty for every clopen Z_k.
    let mut checked = 0;
    let mut empty = true;
    for (_, zk) in &rd.returns {
        let closure = zk.clone();
        let interior = zk.clone();
        checked += 1;
        if !closure.difference(&interior)?.is_empty() {
            empty = false;
        }
    }
    Ok((
        TowerDecomposition {
            towers,
            complement: Clopen::empty(&sys, 0),
        },
        KrReport {
            boundary_sets_empty: empty,
            boundary_sets_checked: checked,
        },
    ))
}

/// Towers whose interval shapes are (K, ε)-invariant, built by shrinking a
/// cylinder base until its shortest return exceeds 2|K|/ε.
pub fn urp_towers(sys: &Arc<System>, k: &FiniteGroupSet, eps: f64) -> Result<TowerDecomposition> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("ε must be positive".into()));
    }
    if k.is_empty() {
        return Err(Error::InvalidArgument("K must be nonempty".into()));
    }
    k.check_rank(sys.rank())?;
    match sys.as_ref() {
        System::Z(z) => {
            if !z.is_free() {
                return Err(Error::Precondition(
                    "finite cycles are not free; URP towers need a free action".into(),
                ));
            }
            let threshold = 2.0 * k.len() as f64 / eps;
            for m in 1..64 {
                let y = if z.is_odometer() {
                    Clopen::cylinder_at(sys, &vec![0u8; m], 0)?
                } else {
                    let mut w = vec![0u8];
                    for _ in 0..m {
                        w = z.substitute(&w);
                    }
                    Clopen::centered_cylinder(sys, &w)?
                };
                let rd = first_return_analysis(sys, &y)?;
                if (rd.returns[0].0 as f64) <= threshold {
                    continue;
                }
                let (t, _) = kakutani_rokhlin_from(&rd)?;
                if t.max_defect(k)? < eps {
                    return Ok(t);
                }
            }
            Err(Error::Internal("URP search did not reach the required height".into()))
        }
        System::Product(p) => {
            let d = p.factors.len();
            let mut factor_eps = eps / (2.0 * d as f64);
            for _ in 0..8 {
                let mut factor_towers = Vec::new();
                for (i, f) in p.factors.iter().enumerate() {
                    let single = Arc::new(System::Z(f.clone()));
                    let ki: FiniteGroupSet = k.iter().map(|g| GroupElement::z(g.0[i])).collect();
                    factor_towers.push(urp_towers(&single, &ki, factor_eps)?);
                }
                let t = product_towers(sys, &factor_towers)?;
                if t.max_defect(k)? < eps {
                    return Ok(t);
                }
                factor_eps /= 2.0;
            }
            Err(Error::Internal("product URP search did not converge".into()))
        }
    }
}

/// Products of factor towers: bases B₁ × ⋯ × B_d with box shapes.
pub fn product_towers(sys: &Arc<System>, factors: &[TowerDecomposition]) -> Result<TowerDecomposition> {
    let mut combos: Vec<Vec<usize>> = vec![Vec::new()];
    for f in factors {
        let mut next = Vec::new();
        for c in &combos {
            for s in 0..f.towers.len() {
                let mut v = c.clone();
                v.push(s);
                next.push(v);
            }
        }
        combos = next;
    }
    let mut towers = Vec::new();
    for c in combos {
        let bases: Vec<Clopen> = c
            .iter()
            .zip(factors)
            .map(|(&s, f)| f.towers[s].base.clone())
            .collect();
        let mut shape: Vec<Vec<i64>> = vec![Vec::new()];
        for (&s, f) in c.iter().zip(factors) {
            let mut next = Vec::new();
            for prefix in &shape {
                for g in f.towers[s].shape.iter() {
                    let mut v = prefix.clone();
                    v.push(g.as_z());
                    next.push(v);
                }
            }
            shape = next;
        }
        towers.push(Tower {
            base: Clopen::product(sys, &bases)?,
            shape: shape.into_iter().map(GroupElement).collect(),
        });
    }
    Ok(TowerDecomposition {
        towers,
        complement: Clopen::empty(sys, 0),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LrtReport {
    pub n_levels: usize,
    pub window_len: usize,
    pub bad_root_count: usize,
    pub bad_count: usize,
    pub base_count: usize,
    pub towers_disjoint: bool,
    /// Width of the excluded band at each end of the window.
    pub edge_band: usize,
    pub complement_interior: usize,
    pub interior_len: usize,
    pub complement_fraction: f64,
    /// Largest complement density over sliding blocks of length 2N.
    pub complement_block_max: f64,
    pub delta: Option<f64>,
    pub bound: Option<f64>,
    pub within_bound: Option<bool>,
}

/// The tower construction from an integer level function on a window:
/// E'_k = n⁻¹(k), F = ⋃_{|k|<N} σᵏ(F₀) with F₀ = {n∘σ ≠ n+1},
/// E_l = ⋃_i E'_{iN+l}, B = ⋂_{t<N} σ^{−t}(E_t ∖ F). `None` marks
/// non-integer values.
pub fn build_tower_from_level_function(
    window: &OrbitWindow,
    n_values: &[Option<u64>],
    n: usize,
    delta: Option<f64>,
) -> Result<(Vec<usize>, LrtReport)> {
    let len = window.len();
    if n_values.len() != len {
        return Err(Error::InvalidArgument(format!(
            "level function has {} values for a window of length {len}",
            n_values.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("N must be ≥ 1".into()));
    }
    let edge = 2 * n;
    if len <= 2 * edge {
        return Err(Error::WindowTooSmall(format!(
            "window of length {len} too short for N = {n}"
        )));
    }
    let f0: Vec<bool> = (0..len)
        .map(|j| {
            j + 1 < len
                && match (n_values[j], n_values[j + 1]) {
                    (Some(a), Some(b)) => b != a + 1,
                    _ => true,
                }
        })
        .collect();
    let mut bad = vec![false; len];
    for (j, &b) in f0.iter().enumerate() {
        if b {
            let lo = j.saturating_sub(n - 1);
            let hi = (j + n - 1).min(len - 1);
            for v in bad.iter_mut().take(hi + 1).skip(lo) {
                *v = true;
            }
        }
    }
    let class = |j: usize| n_values[j].map(|v| (v % n as u64) as usize);
    let base: Vec<usize> = (0..len.saturating_sub(n - 1))
        .filter(|&j| (0..n).all(|t| class(j + t) == Some(t) && !bad[j + t]))
        .collect();
    let mut owner = vec![usize::MAX; len];
    let mut disjoint = true;
    for &b in &base {
        for l in 0..n {
            if owner[b + l] != usize::MAX {
                disjoint = false;
            }
            owner[b + l] = l;
        }
    }
    let interior = edge..len - edge;
    let comp: Vec<bool> = (0..len).map(|j| owner[j] == usize::MAX).collect();
    let complement_interior = interior.clone().filter(|&j| comp[j]).count();
    let interior_len = interior.len();
    let frac = complement_interior as f64 / interior_len as f64;
    let block = 2 * n;
    let ind: Vec<u32> = interior.clone().map(|j| comp[j] as u32).collect();
    let mut block_max = 0u32;
    if ind.len() >= block {
        let mut s: u32 = ind[..block].iter().sum();
        block_max = s;
        for i in block..ind.len() {
            s = s + ind[i] - ind[i - block];
            block_max = block_max.max(s);
        }
    }
    let bound = delta.map(|d| d + (n * (2 * n + 1)) as f64 * d);
    let report = LrtReport {
        n_levels: n,
        window_len: len,
        bad_root_count: f0.iter().filter(|&&b| b).count(),
        bad_count: bad.iter().filter(|&&b| b).count(),
        base_count: base.len(),
        towers_disjoint: disjoint,
        edge_band: edge,
        complement_interior,
        interior_len,
        complement_fraction: frac,
        complement_block_max: block_max as f64 / block as f64,
        delta,
        bound,
        within_bound: bound.map(|b| frac <= b),
    };
    Ok((base, report))
}

/// A tiling of ℤ given locally: each radius-`radius` cell word says which
/// tile contains the origin and at which offset.
#[derive(Clone, Debug)]
pub struct Tiling {
    pub sys: Arc<System>,
    pub radius: usize,
    pub tiles: Vec<FiniteGroupSet>,
    /// word ↦ (tile index, i) meaning the origin sits at position i of the
    /// tile, so the tile containing 0 is F − i.
    pub assignment: BTreeMap<Word, (usize, i64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TilingCell {
    pub word: String,
    pub tile: usize,
    pub offset: i64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TilingSpec {
    pub radius: usize,
    pub tiles: Vec<FiniteGroupSet>,
    pub cells: Vec<TilingCell>,
}

impl Tiling {
    pub fn to_spec(&self) -> TilingSpec {
        TilingSpec {
            radius: self.radius,
            tiles: self.tiles.clone(),
            cells: self
                .assignment
                .iter()
                .map(|(w, &(t, i))| TilingCell {
                    word: self.sys.format_word(w, &[self.radius]),
                    tile: t,
                    offset: i,
                })
                .collect(),
        }
    }

    /// The tile of 𝒯(x) containing the origin, for x with radius-`radius` word w.
    pub fn tile_at(&self, w: &[u8]) -> Option<FiniteGroupSet> {
        self.assignment
            .get(w)
            .map(|&(t, i)| self.tiles[t].translate(&GroupElement::z(-i)))
    }

    /// Cells of the tiling as clopens: (tile index, offset i, cell).
    pub fn cells(&self) -> Result<Vec<(usize, i64, Clopen)>> {
        let mut by: BTreeMap<(usize, i64), Vec<Word>> = BTreeMap::new();
        for (w, &(t, i)) in &self.assignment {
            by.entry((t, i)).or_default().push(w.clone());
        }
        by.into_iter()
            .map(|((t, i), ws)| Clopen::from_words(&self.sys, self.radius, ws).map(|c| (t, i, c)))
            .collect()
    }
}

/// 𝒯(x) from visits to Y: tiles {0,…,J_k−1}, with x ∈ σⁱ(Z_k) at offset i.
pub fn tiling_from_returns(rd: &ReturnData) -> Result<Tiling> {
    let sys = rd.y.system().clone();
    let mut pieces = Vec::new();
    for (k, (j, zk)) in rd.returns.iter().enumerate() {
        for i in 0..*j {
            pieces.push((k, i as i64, zk.translate_z(i as i64)?));
        }
    }
    let radius = pieces.iter().map(|(_, _, c)| c.radius()).max().unwrap_or(0);
    let mut assignment = BTreeMap::new();
    for (k, i, c) in pieces {
        for w in c.refine(radius)?.words() {
            if assignment.insert(w.clone(), (k, i)).is_some() {
                return Err(Error::Internal("tower levels overlap".into()));
            }
        }
    }
    if assignment.len() != sys.count_words(&[radius])? {
        return Err(Error::Internal("tower levels do not cover X".into()));
    }
    Ok(Tiling {
        sys,
        radius,
        tiles: rd
            .returns
            .iter()
            .map(|(j, _)| FiniteGroupSet::interval(0, *j as i64 - 1))
            .collect(),
        assignment,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TilingReport {
    pub tile_defects: Vec<f64>,
    pub tiles_invariant: bool,
    pub samples: usize,
    pub exact: bool,
    /// (sample, box position) pairs where the induced partition failed.
    pub exactness_failures: Vec<(usize, i64)>,
    pub equivariant: bool,
    pub continuity_radius: usize,
}

impl TilingReport {
    pub fn passed(&self) -> bool {
        self.tiles_invariant && self.exact && self.equivariant
    }
}

/// Checks tile invariance and, on sampled orbit windows, that the tiles
/// meeting `bx` partition it and move equivariantly.
pub fn verify_tiling(t: &Tiling, k: &FiniteGroupSet, eps: f64, bx: &FiniteGroupSet, samples: usize, seed: u64) -> Result<TilingReport> {
    let sys = &t.sys;
    sys.as_z()?;
    let tile_defects = t
        .tiles
        .iter()
        .map(|f| invariance_defect(f, k))
        .collect::<Result<Vec<_>>>()?;
    let tiles_invariant = tile_defects.iter().all(|&d| d < eps);
    let zs = bx.z_values();
    let (lo, hi) = match (zs.first(), zs.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::InvalidArgument("verification box is empty".into())),
    };
    let reach = t.tiles.iter().map(|f| f.max_norm()).max().unwrap_or(0) as i64 + 1;
    let r = t.radius as i64;
    let len = (hi - lo + 1 + 2 * reach + 2 * r + 2) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let equivariant = tiling_equivariant(t)?;
    for s in 0..samples {
        let w = OrbitWindow::generate(sys, len, rng.gen())?;
        let origin = r + reach - lo;
        // absolute tiles through every box site, for x and for σx
        let tile_abs = |pos: i64| -> Result<Option<FiniteGroupSet>> {
            let word = w.word_at(pos as usize, t.radius)?;
            Ok(t.tile_at(&word).map(|f| f.translate(&GroupElement::z(pos))))
        };
        for g in lo..=hi {
            let pos = origin + g;
            let Some(tile) = tile_abs(pos)? else {
                failures.push((s, g));
                continue;
            };
            if !tile.contains(&GroupElement::z(pos)) {
                failures.push((s, g));
                continue;
            }
            for m in tile.iter() {
                let q = m.as_z();
                if q - origin < lo - reach || q - origin > hi + reach {
                    continue;
                }
                if tile_abs(q)?.as_ref() != Some(&tile) {
                    failures.push((s, g));
                    break;
                }
            }
        }
    }
    failures.sort();
    failures.dedup();
    Ok(TilingReport {
        tile_defects,
        tiles_invariant,
        samples,
        exact: failures.is_empty(),
        exactness_failures: failures,
        equivariant,
        continuity_radius: t.radius,
    })
}

/// 𝒯(σx) = 𝒯(x) − 1 on every cell: inside a tile the offset advances by
/// one, and from the last site of a tile σx starts a new tile.
fn tiling_equivariant(t: &Tiling) -> Result<bool> {
    let z = t.sys.as_z()?;
    let big = z.shift_radius(t.radius, 1);
    for w in z.words(big)?.iter() {
        let here = z.project(w, big, t.radius);
        let next = z.shift_word(w, big, 1, t.radius);
        let (Some(&(k, i)), Some(&(k2, i2))) = (t.assignment.get(&here), t.assignment.get(&next)) else {
            return Ok(false);
        };
        let ok = if (i + 1) < t.tiles[k].len() as i64 {
            k2 == k && i2 == i + 1
        } else {
            i2 == 0
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The level function n(x) = i on σⁱ(Z_k), read off a window; `None` outside
/// the valid range.
pub fn levels_from_returns(window: &OrbitWindow, t: &Tiling) -> Result<Vec<Option<u64>>> {
    let range = window.valid_range(t.radius);
    (0..window.len())
        .map(|j| {
            if range.contains(&j) {
                let w = window.word_at(j, t.radius)?;
                Ok(t.assignment.get(&w).map(|&(_, i)| i as u64))
            } else {
                Ok(None)
            }
        })
        .collect()
}

/// |FKΔF| and |F| of every tower shape.
pub fn shape_defects(t: &TowerDecomposition, k: &FiniteGroupSet) -> Result<Vec<(usize, usize)>> {
    t.towers
        .iter()
        .map(|tw| invariance_defect_ratio(&tw.shape, k))
        .collect()
}
