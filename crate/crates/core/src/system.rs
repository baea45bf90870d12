//! Cantor ℤ-systems (odometers, primitive substitutions, finite cycles) and
//! their coordinatewise products.
//!
//! Points are coded by words centred at the origin. A radius-`r` cylinder is
//! a word of length `2r+1`:
//! * shift-type systems (substitutions, cycles) use the symbols at positions
//!   `−r..=r` of the orbit coding, with `σ` the left shift;
//! * odometers use the first `2r+1` digits, least significant first, with `σ`
//!   adding one with carry.

use crate::error::{Error, Result};
use crate::exact::{q_frac, q_int, Alg, NumberField, Q};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Mutex};

pub type Word = Vec<u8>;

/// Characters used to print digits and cycle states.
pub const DIGITS: &[u8] = b"0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ+/";

const MAX_ITERATE_LEN: usize = 4_000_000;
const APERIODICITY_PROBE: usize = 64;

/// JSON description of a system.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SystemSpec {
    Odometer { bases: Vec<u32> },
    Substitution { rules: BTreeMap<String, String> },
    Cycle { n: u32 },
    Product { factors: Vec<SystemSpec> },
}

#[derive(Clone, Debug)]
enum Kind {
    Odometer { bases: Vec<u32> },
    Substitution { letters: Vec<char>, rules: Vec<Word> },
    Cycle { n: u32 },
}

#[derive(Default, Debug)]
struct Cache {
    factors: HashMap<usize, Arc<Vec<Word>>>,
    reversed: HashMap<usize, Arc<Vec<Word>>>,
    freqs: HashMap<usize, Arc<BTreeMap<Word, Alg>>>,
    long_word: Option<Arc<Vec<u8>>>,
}

/// A minimal (or, for cycles, periodic) homeomorphism of a Cantor set.
#[derive(Clone, Debug)]
pub struct CantorSystemZ {
    kind: Kind,
    spec: SystemSpec,
    field: Arc<NumberField>,
    cache: Arc<Mutex<Cache>>,
}

impl CantorSystemZ {
    pub fn odometer(bases: Vec<u32>) -> Result<Self> {
        CantorSystemZ::from_spec(&SystemSpec::Odometer { bases })
    }

    pub fn cycle(n: u32) -> Result<Self> {
        CantorSystemZ::from_spec(&SystemSpec::Cycle { n })
    }

    pub fn substitution(rules: &[(char, &str)]) -> Result<Self> {
        let map = rules
            .iter()
            .map(|(c, w)| (c.to_string(), w.to_string()))
            .collect();
        CantorSystemZ::from_spec(&SystemSpec::Substitution { rules: map })
    }

    pub fn fibonacci() -> Self {
        CantorSystemZ::substitution(&[('a', "ab"), ('b', "a")]).expect("fibonacci is primitive")
    }

    pub fn from_spec(spec: &SystemSpec) -> Result<Self> {
        let (kind, field) = match spec {
            SystemSpec::Odometer { bases } => {
                if bases.is_empty() {
                    return Err(Error::InvalidSystem("odometer needs at least one base".into()));
                }
                if let Some(b) = bases.iter().find(|&&b| b < 2 || b as usize > DIGITS.len()) {
                    return Err(Error::InvalidSystem(format!(
                        "odometer base {b} outside 2..={}",
                        DIGITS.len()
                    )));
                }
                (Kind::Odometer { bases: bases.clone() }, NumberField::rationals())
            }
            SystemSpec::Cycle { n } => {
                if *n == 0 || *n as usize > DIGITS.len() {
                    return Err(Error::InvalidSystem(format!(
                        "cycle length {n} outside 1..={}",
                        DIGITS.len()
                    )));
                }
                (Kind::Cycle { n: *n }, NumberField::rationals())
            }
            SystemSpec::Substitution { rules } => {
                let (letters, rules) = parse_rules(rules)?;
                let a = letter_matrix(letters.len(), &rules);
                if !is_primitive(&a) {
                    return Err(Error::InvalidSystem("substitution is not primitive".into()));
                }
                (
                    Kind::Substitution { letters, rules },
                    NumberField::perron(&a),
                )
            }
            SystemSpec::Product { .. } => {
                return Err(Error::InvalidSystem(
                    "a product is not a single ℤ-system".into(),
                ))
            }
        };
        let sys = CantorSystemZ {
            kind,
            spec: spec.clone(),
            field,
            cache: Arc::new(Mutex::new(Cache::default())),
        };
        if sys.is_substitution() {
            for len in 1..=APERIODICITY_PROBE {
                if sys.factors(len)?.len() <= len {
                    return Err(Error::InvalidSystem(format!(
                        "substitution is periodic (only {} words of length {len})",
                        sys.factors(len)?.len()
                    )));
                }
            }
        }
        Ok(sys)
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn field(&self) -> &Arc<NumberField> {
        &self.field
    }

    pub fn is_odometer(&self) -> bool {
        matches!(self.kind, Kind::Odometer { .. })
    }

    pub fn is_substitution(&self) -> bool {
        matches!(self.kind, Kind::Substitution { .. })
    }

    pub fn is_cycle(&self) -> bool {
        matches!(self.kind, Kind::Cycle { .. })
    }

    /// Shift-type systems translate by sliding the window.
    pub fn is_shift_type(&self) -> bool {
        !self.is_odometer()
    }

    pub fn cycle_len(&self) -> Option<u32> {
        match self.kind {
            Kind::Cycle { n } => Some(n),
            _ => None,
        }
    }

    /// Minimal on an infinite space (cycles are minimal but finite).
    pub fn is_minimal(&self) -> bool {
        true
    }

    /// Free action; false for finite cycles.
    pub fn is_free(&self) -> bool {
        !self.is_cycle()
    }

    pub fn alphabet_size(&self) -> usize {
        match &self.kind {
            Kind::Odometer { bases } => *bases.iter().max().unwrap_or(&2) as usize,
            Kind::Substitution { letters, .. } => letters.len(),
            Kind::Cycle { n } => *n as usize,
        }
    }

    /// Base of digit `i` (bases repeat periodically).
    pub fn base(&self, i: usize) -> u32 {
        match &self.kind {
            Kind::Odometer { bases } => bases[i % bases.len()],
            _ => self.alphabet_size() as u32,
        }
    }

    /// Number of residues fixed by a prefix of `m` digits.
    pub fn odometer_period(&self, m: usize) -> Option<u128> {
        if !self.is_odometer() {
            return None;
        }
        let mut p: u128 = 1;
        for i in 0..m {
            p = p.checked_mul(self.base(i) as u128)?;
        }
        Some(p)
    }

    pub fn symbol_char(&self, s: u8) -> char {
        match &self.kind {
            Kind::Substitution { letters, .. } => letters[s as usize],
            _ => DIGITS[s as usize] as char,
        }
    }

    pub fn char_symbol(&self, c: char) -> Option<u8> {
        match &self.kind {
            Kind::Substitution { letters, .. } => letters.iter().position(|&l| l == c).map(|i| i as u8),
            Kind::Odometer { .. } | Kind::Cycle { .. } => {
                DIGITS.iter().position(|&d| d as char == c).map(|i| i as u8)
            }
        }
    }

    pub fn format_word(&self, w: &[u8]) -> String {
        w.iter().map(|&s| self.symbol_char(s)).collect()
    }

    pub fn parse_word(&self, s: &str) -> Result<Word> {
        s.chars()
            .map(|c| {
                self.char_symbol(c)
                    .ok_or_else(|| Error::InvalidClopen(format!("unknown symbol {c:?}")))
            })
            .collect()
    }

    // ----- odometer digit arithmetic -----

    pub fn digits_to_int(&self, w: &[u8]) -> u128 {
        let mut v: u128 = 0;
        for i in (0..w.len()).rev() {
            v = v * self.base(i) as u128 + w[i] as u128;
        }
        v
    }

    pub fn int_to_digits(&self, mut v: u128, m: usize) -> Word {
        let mut w = Vec::with_capacity(m);
        for i in 0..m {
            let b = self.base(i) as u128;
            w.push((v % b) as u8);
            v /= b;
        }
        w
    }

    /// Adds `n` to an odometer prefix, discarding the carry past its end.
    pub fn odometer_add(&self, w: &[u8], n: i64) -> Word {
        let p = self.odometer_period(w.len()).expect("odometer prefix period fits u128") as i128;
        let v = self.digits_to_int(w) as i128;
        let r = (v + n as i128).rem_euclid(p);
        self.int_to_digits(r as u128, w.len())
    }

    // ----- substitutions -----

    fn rules(&self) -> Option<&Vec<Word>> {
        match &self.kind {
            Kind::Substitution { rules, .. } => Some(rules),
            _ => None,
        }
    }

    /// The substitution applied to a word.
    pub fn substitute(&self, w: &[u8]) -> Word {
        let rules = self.rules().expect("substitution system");
        let mut out = Vec::new();
        for &c in w {
            out.extend_from_slice(&rules[c as usize]);
        }
        out
    }

    /// Column-stochastic letter matrix A[i][j] = |σ(j)|_i.
    pub fn letter_matrix(&self) -> Option<Vec<Vec<i64>>> {
        self.rules().map(|r| letter_matrix(r.len(), r))
    }

    /// Smallest power p with every |σᵖ(c)| ≥ 2.
    fn growth_power(&self) -> usize {
        let rules = self.rules().expect("substitution system");
        let k = rules.len();
        let mut words: Vec<Word> = (0..k as u8).map(|c| vec![c]).collect();
        for p in 1.. {
            words = words.iter().map(|w| self.substitute(w)).collect();
            if words.iter().all(|w| w.len() >= 2) {
                return p;
            }
            if p > 4 * k + 4 {
                break;
            }
        }
        1
    }

    fn iterate_letter(&self, c: u8, n: usize) -> Result<Word> {
        let mut w = vec![c];
        for _ in 0..n {
            w = self.substitute(&w);
            if w.len() > MAX_ITERATE_LEN {
                return Err(Error::Internal("substitution iterate too long".into()));
            }
        }
        Ok(w)
    }

    /// A legal word of length at least `min_len` (shift-type systems).
    pub fn long_word(&self, min_len: usize) -> Result<Arc<Vec<u8>>> {
        {
            let cache = self.cache.lock().expect("cache lock");
            if let Some(w) = &cache.long_word {
                if w.len() >= min_len {
                    return Ok(w.clone());
                }
            }
        }
        let w = match &self.kind {
            Kind::Cycle { n } => (0..min_len.max(1)).map(|i| (i % *n as usize) as u8).collect(),
            Kind::Substitution { .. } => {
                let mut w = vec![0u8];
                while w.len() < min_len {
                    w = self.substitute(&w);
                    if w.len() > MAX_ITERATE_LEN.max(min_len * 4) {
                        return Err(Error::Internal("substitution iterate too long".into()));
                    }
                }
                w
            }
            Kind::Odometer { .. } => {
                return Err(Error::Unsupported("odometers have no symbolic coding".into()))
            }
        };
        let w = Arc::new(w);
        self.cache.lock().expect("cache lock").long_word = Some(w.clone());
        Ok(w)
    }

    /// All admissible words of the given length, sorted.
    ///
    /// Odometers: all digit prefixes. Shift-type systems: the factors of the
    /// language, computed for substitutions by iterating until the factor set
    /// is identical for two successive powers.
    pub fn factors(&self, len: usize) -> Result<Arc<Vec<Word>>> {
        if len == 0 {
            return Err(Error::InvalidArgument("word length must be ≥ 1".into()));
        }
        if let Some(v) = self.cache.lock().expect("cache lock").factors.get(&len) {
            return Ok(v.clone());
        }
        let words: Vec<Word> = match &self.kind {
            Kind::Odometer { .. } => {
                let p = self
                    .odometer_period(len)
                    .filter(|&p| p <= 1 << 22)
                    .ok_or_else(|| Error::InvalidArgument(format!("too many odometer words of length {len}")))?;
                let mut v: Vec<Word> = (0..p).map(|i| self.int_to_digits(i, len)).collect();
                v.sort();
                v
            }
            Kind::Cycle { n } => {
                let n = *n as usize;
                let mut set = BTreeSet::new();
                for k in 0..n {
                    set.insert((0..len).map(|i| ((k + i) % n) as u8).collect::<Word>());
                }
                set.into_iter().collect()
            }
            Kind::Substitution { .. } if len > 8 && !len.is_power_of_two() => {
                // every legal word extends to the right
                let longer = self.factors(len.next_power_of_two())?;
                let mut v: Vec<Word> = longer.iter().map(|w| w[..len].to_vec()).collect();
                v.dedup();
                v
            }
            Kind::Substitution { rules, .. } => {
                let k = rules.len();
                let mut n = 0;
                loop {
                    let shortest = (0..k as u8)
                        .map(|c| self.iterate_letter(c, n).map(|w| w.len()))
                        .collect::<Result<Vec<_>>>()?;
                    if shortest.iter().all(|&l| l >= len) {
                        break;
                    }
                    n += 1;
                }
                let collect = |n: usize| -> Result<BTreeSet<Word>> {
                    let mut set = BTreeSet::new();
                    for c in 0..k as u8 {
                        let w = self.iterate_letter(c, n)?;
                        for win in w.windows(len) {
                            set.insert(win.to_vec());
                        }
                    }
                    Ok(set)
                };
                let mut prev = collect(n)?;
                loop {
                    n += 1;
                    let next = collect(n)?;
                    if next == prev {
                        break next.into_iter().collect();
                    }
                    prev = next;
                }
            }
        };
        let words = Arc::new(words);
        self.cache
            .lock()
            .expect("cache lock")
            .factors
            .insert(len, words.clone());
        Ok(words)
    }

    fn reversed_factors(&self, len: usize) -> Result<Arc<Vec<Word>>> {
        if let Some(v) = self.cache.lock().expect("cache lock").reversed.get(&len) {
            return Ok(v.clone());
        }
        let mut v: Vec<Word> = self
            .factors(len)?
            .iter()
            .map(|w| w.iter().rev().copied().collect())
            .collect();
        v.sort();
        let v = Arc::new(v);
        self.cache
            .lock()
            .expect("cache lock")
            .reversed
            .insert(len, v.clone());
        Ok(v)
    }

    /// Admissible words `w·u` with `|u| = k` (shift-type systems).
    pub fn right_extensions(&self, w: &[u8], k: usize) -> Result<Vec<Word>> {
        if k == 0 {
            return Ok(vec![w.to_vec()]);
        }
        let all = self.factors(w.len() + k)?;
        Ok(prefix_range(&all, w).to_vec())
    }

    /// Admissible words `u·w` with `|u| = k` (shift-type systems).
    pub fn left_extensions(&self, w: &[u8], k: usize) -> Result<Vec<Word>> {
        if k == 0 {
            return Ok(vec![w.to_vec()]);
        }
        let all = self.reversed_factors(w.len() + k)?;
        let rw: Word = w.iter().rev().copied().collect();
        Ok(prefix_range(&all, &rw)
            .iter()
            .map(|v| v.iter().rev().copied().collect())
            .collect())
    }

    /// Radius-`to` words whose radius-`from` restriction is `w` (`to ≥ from`).
    pub fn refinements(&self, w: &[u8], from: usize, to: usize) -> Result<Vec<Word>> {
        let k = to - from;
        if k == 0 {
            return Ok(vec![w.to_vec()]);
        }
        if self.is_odometer() {
            let mut out = Vec::new();
            let extra = self.odometer_period_from(2 * from + 1, 2 * k);
            for v in 0..extra {
                let mut x = w.to_vec();
                let mut rest = v;
                for i in 0..2 * k {
                    let b = self.base(2 * from + 1 + i) as u128;
                    x.push((rest % b) as u8);
                    rest /= b;
                }
                out.push(x);
            }
            return Ok(out);
        }
        let mut out = Vec::new();
        for r in self.right_extensions(w, k)? {
            out.extend(self.left_extensions(&r, k)?);
        }
        out.sort();
        Ok(out)
    }

    fn odometer_period_from(&self, start: usize, m: usize) -> u128 {
        (start..start + m).map(|i| self.base(i) as u128).product()
    }

    /// Radius-`r + |γ|` words of σ^γ([w]) for a radius-`r` word w.
    pub fn translate_word(&self, w: &[u8], r: usize, gamma: i64) -> Result<Vec<Word>> {
        if self.is_odometer() {
            return Ok(vec![self.odometer_add(w, gamma)]);
        }
        debug_assert_eq!(w.len(), 2 * r + 1);
        let k = 2 * gamma.unsigned_abs() as usize;
        if gamma >= 0 {
            self.right_extensions(w, k)
        } else {
            self.left_extensions(w, k)
        }
    }

    /// Admissible radius-`r` words.
    pub fn words(&self, r: usize) -> Result<Arc<Vec<Word>>> {
        self.factors(2 * r + 1)
    }

    pub fn is_admissible(&self, w: &[u8]) -> Result<bool> {
        if w.is_empty() {
            return Ok(false);
        }
        match &self.kind {
            Kind::Odometer { .. } => Ok(w
                .iter()
                .enumerate()
                .all(|(i, &d)| (d as u32) < self.base(i))),
            _ => Ok(self.factors(w.len())?.binary_search(&w.to_vec()).is_ok()),
        }
    }

    /// Restriction of a radius-`from` word to radius `to ≤ from`.
    pub fn project(&self, w: &[u8], from: usize, to: usize) -> Word {
        debug_assert!(to <= from);
        if self.is_odometer() {
            w[..2 * to + 1].to_vec()
        } else {
            w[from - to..from + to + 1].to_vec()
        }
    }

    /// Word of `σ^γ x` at radius `to` given the word of `x` at radius `from`.
    /// Shift-type systems need `from ≥ to + |γ|`.
    pub fn shift_word(&self, w: &[u8], from: usize, gamma: i64, to: usize) -> Word {
        if self.is_odometer() {
            self.odometer_add(&w[..2 * to + 1], gamma)
        } else {
            let start = (from as i64 + gamma - to as i64) as usize;
            w[start..start + 2 * to + 1].to_vec()
        }
    }

    /// Radius needed at the source so that `shift_word` can produce radius `to`.
    pub fn shift_radius(&self, to: usize, gamma: i64) -> usize {
        if self.is_odometer() {
            to
        } else {
            to + gamma.unsigned_abs() as usize
        }
    }

    /// Exact frequency of every admissible word of length `len`.
    pub fn frequencies(&self, len: usize) -> Result<Arc<BTreeMap<Word, Alg>>> {
        if let Some(v) = self.cache.lock().expect("cache lock").freqs.get(&len) {
            return Ok(v.clone());
        }
        let words = self.factors(len)?;
        let map: BTreeMap<Word, Alg> = match &self.kind {
            Kind::Odometer { .. } => {
                let p = self.odometer_period(len).expect("checked by factors");
                let mu = Alg::from_rational(&self.field, Q::new(1.into(), p.into()));
                words.iter().map(|w| (w.clone(), mu.clone())).collect()
            }
            Kind::Cycle { n } => {
                let mu = Alg::from_rational(&self.field, q_frac(1, *n as i64));
                words.iter().map(|w| (w.clone(), mu.clone())).collect()
            }
            Kind::Substitution { .. } => self.substitution_frequencies(len)?,
        };
        let map = Arc::new(map);
        self.cache
            .lock()
            .expect("cache lock")
            .freqs
            .insert(len, map.clone());
        Ok(map)
    }

    fn substitution_frequencies(&self, len: usize) -> Result<BTreeMap<Word, Alg>> {
        if len == 1 {
            let two = self.frequencies(2)?;
            let mut out: BTreeMap<Word, Alg> = BTreeMap::new();
            for (w, f) in two.iter() {
                let e = out.entry(vec![w[0]]).or_insert_with(|| Alg::zero(&self.field));
                *e = e.add(f);
            }
            return Ok(out);
        }
        if len == 2 {
            return self.two_word_eigenvector();
        }
        // Desubstitution: every occurrence of an ℓ-word sits at a unique
        // offset inside τ(u₀) for the τ-preimage u of length m.
        let p = self.growth_power();
        let min_len = (0..self.alphabet_size() as u8)
            .map(|c| self.iterate_letter(c, p).map(|w| w.len()))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .min()
            .unwrap_or(2);
        let m = (len - 1).div_ceil(min_len) + 1;
        debug_assert!(m < len);
        let base = self.frequencies(m)?;
        let lambda = Alg::generator(&self.field);
        let mut big_lambda = Alg::one(&self.field);
        for _ in 0..p {
            big_lambda = big_lambda.mul(&lambda);
        }
        let inv = big_lambda
            .inv()
            .ok_or_else(|| Error::Internal("Perron eigenvalue vanished".into()))?;
        let mut acc: BTreeMap<Word, Alg> = BTreeMap::new();
        for (u, fu) in base.iter() {
            let mut image = u.clone();
            for _ in 0..p {
                image = self.substitute(&image);
            }
            let mut head = vec![u[0]];
            for _ in 0..p {
                head = self.substitute(&head);
            }
            for j in 0..head.len() {
                let w = image[j..j + len].to_vec();
                let e = acc.entry(w).or_insert_with(|| Alg::zero(&self.field));
                *e = e.add(fu);
            }
        }
        let words = self.factors(len)?;
        let mut out = BTreeMap::new();
        for w in words.iter() {
            let f = acc
                .remove(w)
                .ok_or_else(|| Error::Internal(format!("legal word {w:?} has no preimage")))?;
            out.insert(w.clone(), f.mul(&inv));
        }
        if !acc.is_empty() {
            return Err(Error::Internal("desubstitution produced an illegal word".into()));
        }
        Ok(out)
    }

    /// Perron eigenvector of the 2-block substitution matrix, normalised.
    fn two_word_eigenvector(&self) -> Result<BTreeMap<Word, Alg>> {
        let words = self.factors(2)?;
        let n = words.len();
        let index: HashMap<&Word, usize> = words.iter().enumerate().map(|(i, w)| (w, i)).collect();
        let mut mat = vec![vec![0i64; n]; n];
        for (j, w) in words.iter().enumerate() {
            let image = self.substitute(w);
            let head = self.substitute(&w[..1]).len();
            for s in 0..head {
                let v = image[s..s + 2].to_vec();
                let i = *index
                    .get(&v)
                    .ok_or_else(|| Error::Internal("2-block image not legal".into()))?;
                mat[i][j] += 1;
            }
        }
        let lambda = Alg::generator(&self.field);
        let mut m: Vec<Vec<Alg>> = mat
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        let a = Alg::from_rational(&self.field, q_int(v));
                        if i == j {
                            a.sub(&lambda)
                        } else {
                            a
                        }
                    })
                    .collect()
            })
            .collect();
        let x = kernel_vector(&mut m, &self.field)?;
        let total = x.iter().fold(Alg::zero(&self.field), |a, b| a.add(b));
        let inv = total
            .inv()
            .ok_or_else(|| Error::Internal("eigenvector sums to zero".into()))?;
        Ok(words
            .iter()
            .cloned()
            .zip(x.into_iter().map(|v| v.mul(&inv)))
            .collect())
    }

    /// Exact measure of a single radius-`r` cylinder.
    pub fn word_measure(&self, w: &[u8]) -> Result<Alg> {
        let f = self.frequencies(w.len())?;
        Ok(f.get(w).cloned().unwrap_or_else(|| Alg::zero(&self.field)))
    }
}

fn prefix_range<'a>(sorted: &'a [Word], prefix: &[u8]) -> &'a [Word] {
    let lo = sorted.partition_point(|v| v.as_slice() < prefix);
    let hi = lo + sorted[lo..].partition_point(|v| v.starts_with(prefix));
    &sorted[lo..hi]
}

/// A nonzero vector in the kernel of a singular matrix over a number field.
fn kernel_vector(m: &mut [Vec<Alg>], field: &Arc<NumberField>) -> Result<Vec<Alg>> {
    let n = m.len();
    let mut pivots: Vec<Option<usize>> = vec![None; n];
    let mut row = 0;
    let mut pivot_cols = Vec::new();
    for col in 0..n {
        let Some(p) = (row..n).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(row, p);
        let inv = m[row][col]
            .inv()
            .ok_or_else(|| Error::Internal("pivot not invertible".into()))?;
        for c in col..n {
            m[row][c] = m[row][c].mul(&inv);
        }
        for r in 0..n {
            if r != row && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in col..n {
                    let v = m[r][c].sub(&f.mul(&m[row][c]));
                    m[r][c] = v;
                }
            }
        }
        pivots[col] = Some(row);
        pivot_cols.push(col);
        row += 1;
    }
    let free = (0..n)
        .find(|c| pivots[*c].is_none())
        .ok_or_else(|| Error::Internal("matrix is not singular at λ".into()))?;
    let mut x = vec![Alg::zero(field); n];
    x[free] = Alg::one(field);
    for &c in &pivot_cols {
        let r = pivots[c].expect("pivot row");
        x[c] = m[r][free].neg();
    }
    Ok(x)
}

fn parse_rules(rules: &BTreeMap<String, String>) -> Result<(Vec<char>, Vec<Word>)> {
    if rules.is_empty() {
        return Err(Error::InvalidSystem("substitution has no rules".into()));
    }
    let mut letters = Vec::new();
    for k in rules.keys() {
        let mut it = k.chars();
        match (it.next(), it.next()) {
            (Some(c), None) if c != '|' => letters.push(c),
            _ => {
                return Err(Error::InvalidSystem(format!(
                    "substitution key {k:?} must be a single letter"
                )))
            }
        }
    }
    if letters.len() > 255 {
        return Err(Error::InvalidSystem("alphabet too large".into()));
    }
    let mut out = Vec::new();
    for img in rules.values() {
        if img.is_empty() {
            return Err(Error::InvalidSystem("substitution image must be nonempty".into()));
        }
        let mut w = Vec::new();
        for c in img.chars() {
            let i = letters
                .iter()
                .position(|&l| l == c)
                .ok_or_else(|| Error::InvalidSystem(format!("letter {c:?} has no rule")))?;
            w.push(i as u8);
        }
        out.push(w);
    }
    Ok((letters, out))
}

fn letter_matrix(k: usize, rules: &[Word]) -> Vec<Vec<i64>> {
    let mut a = vec![vec![0i64; k]; k];
    for (j, img) in rules.iter().enumerate() {
        for &c in img {
            a[c as usize][j] += 1;
        }
    }
    a
}

/// Some power of the matrix is strictly positive (Wielandt bound).
fn is_primitive(a: &[Vec<i64>]) -> bool {
    let k = a.len();
    let b: Vec<Vec<bool>> = a.iter().map(|r| r.iter().map(|&v| v > 0).collect()).collect();
    let mut p = b.clone();
    let limit = (k - 1) * (k - 1) + 1;
    for _ in 0..limit {
        if p.iter().all(|r| r.iter().all(|&v| v)) {
            return true;
        }
        let mut next = vec![vec![false; k]; k];
        for i in 0..k {
            for j in 0..k {
                next[i][j] = (0..k).any(|l| p[i][l] && b[l][j]);
            }
        }
        p = next;
    }
    p.iter().all(|r| r.iter().all(|&v| v))
}

/// A ℤ-system or a coordinatewise ℤᵈ product of ℤ-systems.
#[derive(Clone, Debug)]
pub enum System {
    Z(CantorSystemZ),
    Product(ProductSystem),
}

#[derive(Clone, Debug)]
pub struct ProductSystem {
    pub factors: Vec<CantorSystemZ>,
}

impl System {
    pub fn from_spec(spec: &SystemSpec) -> Result<Self> {
        match spec {
            SystemSpec::Product { factors } => {
                if factors.is_empty() {
                    return Err(Error::InvalidSystem("product needs at least one factor".into()));
                }
                let fs = factors
                    .iter()
                    .map(CantorSystemZ::from_spec)
                    .collect::<Result<Vec<_>>>()?;
                let irrational = fs.iter().filter(|f| !f.field().is_rational()).count();
                if irrational > 1 {
                    return Err(Error::Unsupported(
                        "products with more than one irrational frequency field".into(),
                    ));
                }
                Ok(System::Product(ProductSystem { factors: fs }))
            }
            other => Ok(System::Z(CantorSystemZ::from_spec(other)?)),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: SystemSpec = serde_json::from_str(s)?;
        System::from_spec(&spec)
    }

    pub fn spec(&self) -> SystemSpec {
        match self {
            System::Z(z) => z.spec().clone(),
            System::Product(p) => SystemSpec::Product {
                factors: p.factors.iter().map(|f| f.spec().clone()).collect(),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.spec()).expect("spec serializes")
    }

    /// Stable identifier used to reject mixing clopens of different systems.
    pub fn key(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.to_json().hash(&mut h);
        h.finish()
    }

    pub fn factors(&self) -> &[CantorSystemZ] {
        match self {
            System::Z(z) => std::slice::from_ref(z),
            System::Product(p) => &p.factors,
        }
    }

    /// Rank of the acting group.
    pub fn rank(&self) -> usize {
        self.factors().len()
    }

    pub fn as_z(&self) -> Result<&CantorSystemZ> {
        match self {
            System::Z(z) => Ok(z),
            System::Product(_) => Err(Error::Unsupported(
                "operation needs a ℤ-system, got a product".into(),
            )),
        }
    }

    pub fn field(&self) -> Arc<NumberField> {
        self.factors()
            .iter()
            .find(|f| !f.field().is_rational())
            .map(|f| f.field().clone())
            .unwrap_or_else(|| self.factors()[0].field().clone())
    }

    pub fn is_free(&self) -> bool {
        self.factors().iter().all(|f| f.is_free())
    }

    /// Words of a cylinder with per-factor radii: concatenated factor words.
    pub fn words(&self, radii: &[usize]) -> Result<Vec<Word>> {
        self.check_radii(radii)?;
        let per: Vec<Arc<Vec<Word>>> = self
            .factors()
            .iter()
            .zip(radii)
            .map(|(f, &r)| f.words(r))
            .collect::<Result<_>>()?;
        let mut out: Vec<Word> = vec![Vec::new()];
        for ws in per {
            let mut next = Vec::with_capacity(out.len() * ws.len());
            for prefix in &out {
                for w in ws.iter() {
                    let mut v = prefix.clone();
                    v.extend_from_slice(w);
                    next.push(v);
                }
            }
            out = next;
        }
        Ok(out)
    }

    pub fn count_words(&self, radii: &[usize]) -> Result<usize> {
        self.check_radii(radii)?;
        let mut n = 1usize;
        for (f, &r) in self.factors().iter().zip(radii) {
            n = n.saturating_mul(f.words(r)?.len());
        }
        Ok(n)
    }

    pub fn check_radii(&self, radii: &[usize]) -> Result<()> {
        if radii.len() == self.rank() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "{} radii for a rank-{} system",
                radii.len(),
                self.rank()
            )))
        }
    }

    /// Total word length for the given radii.
    pub fn word_len(radii: &[usize]) -> usize {
        radii.iter().map(|r| 2 * r + 1).sum()
    }

    pub fn split<'a>(&self, w: &'a [u8], radii: &[usize]) -> Vec<&'a [u8]> {
        let mut out = Vec::with_capacity(radii.len());
        let mut at = 0;
        for &r in radii {
            let end = (at + 2 * r + 1).min(w.len());
            out.push(&w[at..end]);
            at = end;
        }
        out
    }

    pub fn format_word(&self, w: &[u8], radii: &[usize]) -> String {
        self.factors()
            .iter()
            .zip(self.split(w, radii))
            .map(|(f, part)| f.format_word(part))
            .collect::<Vec<_>>()
            .join("|")
    }

    /// Like `format_word` but tolerant of out-of-range symbols.
    pub fn format_word_lossy(&self, w: &[u8], radii: &[usize]) -> String {
        self.factors()
            .iter()
            .zip(self.split(w, radii))
            .map(|(f, part)| {
                part.iter()
                    .map(|&s| {
                        if (s as usize) < f.alphabet_size() {
                            f.symbol_char(s)
                        } else {
                            '?'
                        }
                    })
                    .collect::<String>()
            })
            .collect::<Vec<_>>()
            .join("|")
    }

    /// Parses `w₁|w₂|…`, returning the word and the radius of each part.
    pub fn parse_word(&self, s: &str) -> Result<(Word, Vec<usize>)> {
        let parts: Vec<&str> = s.split('|').collect();
        if parts.len() != self.rank() {
            return Err(Error::InvalidClopen(format!(
                "word {s:?} has {} factor parts, expected {}",
                parts.len(),
                self.rank()
            )));
        }
        let mut out = Vec::new();
        let mut radii = Vec::new();
        for (f, p) in self.factors().iter().zip(parts) {
            let w = f.parse_word(p)?;
            if w.len() % 2 == 0 {
                return Err(Error::InvalidClopen(format!(
                    "factor word {p:?} has even length"
                )));
            }
            radii.push(w.len() / 2);
            out.extend(w);
        }
        Ok((out, radii))
    }

    pub fn is_admissible(&self, w: &[u8], radii: &[usize]) -> Result<bool> {
        self.check_radii(radii)?;
        if w.len() != System::word_len(radii) {
            return Ok(false);
        }
        for (f, part) in self.factors().iter().zip(self.split(w, radii)) {
            if !f.is_admissible(part)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn project(&self, w: &[u8], from: &[usize], to: &[usize]) -> Word {
        let mut out = Vec::with_capacity(System::word_len(to));
        for ((f, part), (&a, &b)) in self
            .factors()
            .iter()
            .zip(self.split(w, from))
            .zip(from.iter().zip(to))
        {
            out.extend(f.project(part, a, b));
        }
        out
    }

    pub fn word_measure(&self, w: &[u8], radii: &[usize]) -> Result<Alg> {
        let field = self.field();
        let mut acc = Alg::one(&field);
        for (f, part) in self.factors().iter().zip(self.split(w, radii)) {
            acc = acc.mul(&f.word_measure(part)?);
        }
        Ok(acc)
    }
}

/// Distinct length-`len` windows of a symbol sequence.
pub fn distinct_windows(seq: &[u8], len: usize) -> usize {
    let set: HashSet<&[u8]> = seq.windows(len).collect();
    set.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fibonacci_words_of_length_two() {
        let f = CantorSystemZ::fibonacci();
        let w: Vec<String> = f.factors(2).unwrap().iter().map(|w| f.format_word(w)).collect();
        assert_eq!(w, vec!["aa", "ab", "ba"]);
        // independent: factors of σ¹⁰(a)
        let mut s = String::from("a");
        for _ in 0..10 {
            s = s.chars().map(|c| if c == 'a' { "ab" } else { "a" }).collect();
        }
        let set: BTreeSet<&str> = (0..s.len() - 1).map(|i| &s[i..i + 2]).collect();
        assert_eq!(set.into_iter().collect::<Vec<_>>(), vec!["aa", "ab", "ba"]);
    }

    #[test]
    fn sturmian_complexity() {
        let f = CantorSystemZ::fibonacci();
        for n in 1..40 {
            assert_eq!(f.factors(n).unwrap().len(), n + 1);
        }
    }

    #[test]
    fn small_languages() {
        let o = CantorSystemZ::odometer(vec![2]).unwrap();
        assert_eq!(o.factors(1).unwrap().len(), 2);
        let c = CantorSystemZ::cycle(3).unwrap();
        let w: Vec<String> = c.factors(2).unwrap().iter().map(|w| c.format_word(w)).collect();
        assert_eq!(w, vec!["01", "12", "20"]);
    }

    #[test]
    fn golden_letter_frequency() {
        let f = CantorSystemZ::fibonacci();
        let a = f.word_measure(&[0]).unwrap();
        let closed = (5f64.sqrt() - 1.0) / 2.0;
        assert!((a.to_f64() - closed).abs() < 1e-12);
        // a and b frequencies sum to one exactly
        let b = f.word_measure(&[1]).unwrap();
        assert_eq!(a.add(&b), Alg::one(f.field()));
        // letter counts of σ²⁰(a)
        let w = f.iterate_letter(0, 20).unwrap();
        let ca = w.iter().filter(|&&c| c == 0).count() as f64 / w.len() as f64;
        assert!((ca - closed).abs() < 1e-6);
    }

    #[test]
    fn frequencies_are_consistent_across_lengths() {
        let f = CantorSystemZ::fibonacci();
        for len in 1..12 {
            let short = f.frequencies(len).unwrap();
            let long = f.frequencies(len + 1).unwrap();
            for (w, fw) in short.iter() {
                let right = long
                    .iter()
                    .filter(|(v, _)| v[..len] == w[..])
                    .fold(Alg::zero(f.field()), |a, (_, x)| a.add(x));
                let left = long
                    .iter()
                    .filter(|(v, _)| v[1..] == w[..])
                    .fold(Alg::zero(f.field()), |a, (_, x)| a.add(x));
                assert_eq!(&right, fw);
                assert_eq!(&left, fw);
            }
        }
    }

    #[test]
    fn thue_morse_frequencies_are_rational() {
        let tm = CantorSystemZ::substitution(&[('a', "ab"), ('b', "ba")]).unwrap();
        let f = tm.frequencies(2).unwrap();
        let aa = f.get(&vec![0, 0]).unwrap();
        assert_eq!(aa.as_rational(), Some(q_frac(1, 6)));
        let ab = f.get(&vec![0, 1]).unwrap();
        assert_eq!(ab.as_rational(), Some(q_frac(1, 3)));
        let f5 = tm.frequencies(5).unwrap();
        let total = f5.values().fold(Alg::zero(tm.field()), |a, b| a.add(b));
        assert_eq!(total.as_rational(), Some(q_int(1)));
    }

    #[test]
    fn rejects_bad_substitutions() {
        assert!(CantorSystemZ::substitution(&[('a', "a"), ('b', "b")]).is_err());
        assert!(CantorSystemZ::substitution(&[('a', "ab"), ('b', "ab")]).is_err());
        assert!(CantorSystemZ::substitution(&[('a', "ac")]).is_err());
        assert!(CantorSystemZ::odometer(vec![1]).is_err());
        assert!(CantorSystemZ::cycle(0).is_err());
    }

    #[test]
    fn odometer_add_carries() {
        let o = CantorSystemZ::odometer(vec![2]).unwrap();
        assert_eq!(o.odometer_add(&[0, 0, 0, 0], 3), vec![1, 1, 0, 0]);
        assert_eq!(o.odometer_add(&[1, 1, 1], 1), vec![0, 0, 0]);
        assert_eq!(o.odometer_add(&[0, 0, 0], -1), vec![1, 1, 1]);
    }

    #[test]
    fn json_roundtrip() {
        let s = r#"{"kind":"product","factors":[{"kind":"odometer","bases":[2,3]},{"kind":"substitution","rules":{"a":"ab","b":"a"}}]}"#;
        let sys = System::from_json(s).unwrap();
        assert_eq!(sys.rank(), 2);
        assert_eq!(sys.to_json(), s);
        assert!(System::from_json(r#"{"kind":"cycle","n":4,"extra":1}"#).is_err());
        assert!(System::from_json(r#"{"kind":"torus"}"#).is_err());
    }
}
