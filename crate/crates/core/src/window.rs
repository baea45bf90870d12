//! Finite orbit segments and the estimators built on them.

use crate::clopen::Clopen;
use crate::error::{Error, Result};
use crate::group::folner_boxes;
use crate::system::{CantorSystemZ, System, Word};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::sync::Arc;

const ODOMETER_START_DIGITS: usize = 48;
const EXHAUSTIVE_LIMIT: usize = 100_000;

#[derive(Clone, Debug)]
enum Source {
    /// Legal symbols x_0..x_{L−1} together with enough context to answer
    /// radius queries near the ends of the valid range.
    Shift { symbols: Vec<u8> },
    /// Digits of the start point, least significant first.
    Odometer { start: Vec<u8> },
}

/// The orbit segment x, σx, …, σ^{L−1}x of a ℤ-system.
#[derive(Clone, Debug)]
pub struct OrbitWindow {
    sys: Arc<System>,
    len: usize,
    source: Source,
}

impl OrbitWindow {
    /// Seeded window. Shift-type systems draw a segment of a long legal
    /// word; odometers draw the start point's digits.
    pub fn generate(sys: &Arc<System>, len: usize, seed: u64) -> Result<Self> {
        let z = sys.as_z()?;
        if len == 0 {
            return Err(Error::WindowTooSmall("window length must be ≥ 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let source = if z.is_odometer() {
            let start = (0..ODOMETER_START_DIGITS)
                .map(|i| rng.gen_range(0..z.base(i)) as u8)
                .collect();
            Source::Odometer { start }
        } else {
            let w = z.long_word(4 * len + 64)?;
            let off = rng.gen_range(0..=w.len() - len);
            Source::Shift {
                symbols: w[off..off + len].to_vec(),
            }
        };
        Ok(OrbitWindow {
            sys: sys.clone(),
            len,
            source,
        })
    }

    /// Odometer window starting at the point with the given leading digits
    /// (remaining digits zero).
    pub fn odometer_from(sys: &Arc<System>, len: usize, digits: &[u8]) -> Result<Self> {
        let z = sys.as_z()?;
        if !z.is_odometer() {
            return Err(Error::InvalidArgument("not an odometer".into()));
        }
        if len == 0 {
            return Err(Error::WindowTooSmall("window length must be ≥ 1".into()));
        }
        let mut start = vec![0u8; ODOMETER_START_DIGITS.max(digits.len())];
        for (i, &d) in digits.iter().enumerate() {
            if d as u32 >= z.base(i) {
                return Err(Error::InvalidArgument(format!("digit {d} exceeds base at {i}")));
            }
            start[i] = d;
        }
        Ok(OrbitWindow {
            sys: sys.clone(),
            len,
            source: Source::Odometer { start },
        })
    }

    /// Window over explicit shift-type symbols; every length-`min(L,32)`
    /// subword must be admissible.
    pub fn from_symbols(sys: &Arc<System>, symbols: Vec<u8>) -> Result<Self> {
        let z = sys.as_z()?;
        if z.is_odometer() {
            return Err(Error::InvalidArgument("odometer windows are built from digits".into()));
        }
        if symbols.is_empty() {
            return Err(Error::WindowTooSmall("window length must be ≥ 1".into()));
        }
        let k = symbols.len().min(32);
        for w in symbols.windows(k) {
            if !z.is_admissible(w)? {
                return Err(Error::InvalidArgument(format!(
                    "window contains the inadmissible word {}",
                    z.format_word(w)
                )));
            }
        }
        Ok(OrbitWindow {
            sys: sys.clone(),
            len: symbols.len(),
            source: Source::Shift { symbols },
        })
    }

    pub fn system(&self) -> &Arc<System> {
        &self.sys
    }

    fn z(&self) -> &CantorSystemZ {
        &self.sys.factors()[0]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Symbol at time n (first digit for odometers).
    pub fn symbol(&self, n: usize) -> u8 {
        match &self.source {
            Source::Shift { symbols } => symbols[n],
            Source::Odometer { start } => self.z().odometer_add(&start[..1], n as i64)[0],
        }
    }

    pub fn symbols(&self) -> Vec<u8> {
        (0..self.len).map(|n| self.symbol(n)).collect()
    }

    /// Valid positions for radius-`r` queries: `r..L−r`.
    pub fn valid_range(&self, r: usize) -> std::ops::Range<usize> {
        r..self.len.saturating_sub(r).max(r)
    }

    /// The radius-`r` word of σⁿx.
    pub fn word_at(&self, n: usize, r: usize) -> Result<Word> {
        if !self.valid_range(r).contains(&n) {
            return Err(Error::WindowTooSmall(format!(
                "position {n} outside the valid range for radius {r} in a window of length {}",
                self.len
            )));
        }
        Ok(self.word_at_unchecked(n, r))
    }

    fn word_at_unchecked(&self, n: usize, r: usize) -> Word {
        match &self.source {
            Source::Shift { symbols } => symbols[n - r..=n + r].to_vec(),
            Source::Odometer { start } => {
                let m = 2 * r + 1;
                let mut digits = start.clone();
                digits.resize(m.max(start.len()), 0);
                self.z().odometer_add(&digits[..m], n as i64)
            }
        }
    }

    /// Membership of σⁿx in E over the valid range; `None` outside it.
    pub fn membership(&self, e: &Clopen) -> Result<Vec<Option<bool>>> {
        self.check(e)?;
        let r = e.radius();
        let range = self.valid_range(r);
        Ok((0..self.len)
            .map(|n| {
                if range.contains(&n) {
                    Some(e.contains_point(&self.word_at_unchecked(n, r), r))
                } else {
                    None
                }
            })
            .collect())
    }

    fn check(&self, e: &Clopen) -> Result<()> {
        if Arc::ptr_eq(&self.sys, e.system()) || self.sys.key() == e.system().key() {
            Ok(())
        } else {
            Err(Error::SystemMismatch)
        }
    }

    /// Birkhoff frequency of E over the valid range, with the number of
    /// positions used.
    pub fn frequency(&self, e: &Clopen) -> Result<(f64, usize)> {
        let m = self.membership(e)?;
        let used: Vec<bool> = m.into_iter().flatten().collect();
        if used.is_empty() {
            return Err(Error::WindowTooSmall(format!(
                "no valid positions for radius {}",
                e.radius()
            )));
        }
        let hits = used.iter().filter(|&&b| b).count();
        Ok((hits as f64 / used.len() as f64, used.len()))
    }
}

pub fn generate_window(sys: &Arc<System>, len: usize, seed: u64) -> Result<OrbitWindow> {
    OrbitWindow::generate(sys, len, seed)
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct OcapEstimate {
    pub value: f64,
    pub n: usize,
    /// True when the maximum ranges over every configuration.
    pub exhaustive: bool,
    pub configurations: usize,
}

/// Finite-n orbit capacity: the largest visit frequency of E over the box
/// {0,…,n−1}ᵈ among the configurations examined.
pub fn estimate_ocap(sys: &Arc<System>, e: &Clopen, n: usize, sample_count: usize, seed: u64) -> Result<OcapEstimate> {
    if n == 0 {
        return Err(Error::InvalidArgument("ocap needs n ≥ 1".into()));
    }
    if sample_count == 0 {
        return Err(Error::InvalidArgument("sample_count must be ≥ 1".into()));
    }
    if !(Arc::ptr_eq(sys, e.system()) || sys.key() == e.system().key()) {
        return Err(Error::SystemMismatch);
    }
    let r = e.radius();
    if e.is_empty() {
        return Ok(OcapEstimate { value: 0.0, n, exhaustive: true, configurations: 0 });
    }
    match sys.as_ref() {
        System::Z(z) if z.is_odometer() => ocap_odometer(z, e, n, sample_count, seed),
        System::Z(z) => {
            let l = n + 2 * r;
            if l <= 2000 {
                let words = z.factors(l)?;
                if words.len() <= EXHAUSTIVE_LIMIT {
                    let mut best = 0usize;
                    for w in words.iter() {
                        let c = (0..n).filter(|&k| e.contains_point(&w[k..k + 2 * r + 1], r)).count();
                        best = best.max(c);
                    }
                    return Ok(OcapEstimate {
                        value: best as f64 / n as f64,
                        n,
                        exhaustive: true,
                        configurations: words.len(),
                    });
                }
            }
            let w = z.long_word((16 * l).max(200_000))?;
            let ind: Vec<u32> = (r..w.len() - r)
                .map(|i| e.contains_point(&w[i - r..=i + r], r) as u32)
                .collect();
            let best = sliding_max(&ind, n);
            Ok(OcapEstimate {
                value: best as f64 / n as f64,
                n,
                exhaustive: false,
                configurations: ind.len() + 1 - n,
            })
        }
        System::Product(_) => ocap_product(sys, e, n, sample_count, seed),
    }
}

fn sliding_max(ind: &[u32], n: usize) -> u32 {
    let mut sum: u32 = ind[..n].iter().sum();
    let mut best = sum;
    for i in n..ind.len() {
        sum = sum + ind[i] - ind[i - n];
        best = best.max(sum);
    }
    best
}

fn ocap_odometer(z: &CantorSystemZ, e: &Clopen, n: usize, sample_count: usize, seed: u64) -> Result<OcapEstimate> {
    let r = e.radius();
    let m = 2 * r + 1;
    let period = z.odometer_period(m).filter(|&p| p as usize <= EXHAUSTIVE_LIMIT);
    if let Some(p) = period {
        let p = p as usize;
        let ind: Vec<u64> = (0..p)
            .map(|v| e.contains_point(&z.int_to_digits(v as u128, m), r) as u64)
            .collect();
        let total: u64 = ind.iter().sum();
        let (q, rem) = (n / p, n % p);
        // cyclic sliding sums of length rem
        let mut sum: u64 = ind[..rem].iter().sum();
        let mut best = sum;
        for s in 1..p {
            sum = sum + ind[(s + rem - 1) % p] - ind[s - 1];
            best = best.max(sum);
        }
        let value = (q as u64 * total + best) as f64 / n as f64;
        return Ok(OcapEstimate { value, n, exhaustive: true, configurations: p });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0usize;
    for _ in 0..sample_count {
        let start: Vec<u8> = (0..m).map(|i| rng.gen_range(0..z.base(i)) as u8).collect();
        let c = (0..n)
            .filter(|&k| e.contains_point(&z.odometer_add(&start, k as i64), r))
            .count();
        best = best.max(c);
    }
    Ok(OcapEstimate {
        value: best as f64 / n as f64,
        n,
        exhaustive: false,
        configurations: sample_count,
    })
}

fn ocap_product(sys: &Arc<System>, e: &Clopen, n: usize, sample_count: usize, seed: u64) -> Result<OcapEstimate> {
    let r = e.radius();
    let d = sys.rank();
    let boxes = folner_boxes(d, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0usize;
    for _ in 0..sample_count {
        // per-factor words for every coordinate offset 0..n−1
        let mut per: Vec<Vec<Word>> = Vec::with_capacity(d);
        for f in sys.factors() {
            let s = rng.gen::<u64>();
            let single = Arc::new(System::Z(f.clone()));
            let w = OrbitWindow::generate(&single, n + 2 * r, s)?;
            per.push((0..n).map(|k| w.word_at_unchecked(k + r, r)).collect());
        }
        let mut c = 0usize;
        for g in boxes.iter() {
            let mut word = Vec::with_capacity(d * (2 * r + 1));
            for (i, &k) in g.0.iter().enumerate() {
                word.extend_from_slice(&per[i][k as usize]);
            }
            if e.contains_point(&word, r) {
                c += 1;
            }
        }
        best = best.max(c);
    }
    Ok(OcapEstimate {
        value: best as f64 / boxes.len() as f64,
        n,
        exhaustive: false,
        configurations: sample_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(s: &str) -> Arc<System> {
        Arc::new(System::from_json(s).unwrap())
    }

    #[test]
    fn cycle_window_is_periodic() {
        let s = sys(r#"{"kind":"cycle","n":4}"#);
        let w = OrbitWindow::generate(&s, 8, 3).unwrap();
        let v = w.symbols();
        for i in 0..4 {
            assert_eq!(v[i], v[i + 4]);
        }
    }

    #[test]
    fn odometer_window_from_zero() {
        let s = sys(r#"{"kind":"odometer","bases":[2]}"#);
        let w = OrbitWindow::odometer_from(&s, 4, &[]).unwrap();
        assert_eq!(w.symbols(), vec![0, 1, 0, 1]);
        assert_eq!(w.word_at(2, 1).unwrap(), vec![0, 1, 0]);
        assert!(w.word_at(3, 1).is_err());
        assert!(w.word_at(3, 2).is_err());
    }

    #[test]
    fn membership_covers_complement() {
        let s = sys(r#"{"kind":"substitution","rules":{"a":"ab","b":"a"}}"#);
        let e = Clopen::cylinder(&s, "ab").unwrap();
        let c = e.complement().unwrap();
        let w = OrbitWindow::generate(&s, 100, 1).unwrap();
        let a = w.membership(&e).unwrap();
        let b = w.membership(&c).unwrap();
        for (x, y) in a.iter().zip(&b) {
            if let (Some(x), Some(y)) = (x, y) {
                assert!(x ^ y);
            }
        }
    }

    #[test]
    fn ocap_trivial_and_fibonacci() {
        let s = sys(r#"{"kind":"substitution","rules":{"a":"ab","b":"a"}}"#);
        let empty = Clopen::empty(&s, 0);
        assert_eq!(estimate_ocap(&s, &empty, 10, 1, 0).unwrap().value, 0.0);
        let full = Clopen::full(&s).unwrap();
        assert_eq!(estimate_ocap(&s, &full, 10, 1, 0).unwrap().value, 1.0);
        let b = Clopen::cylinder(&s, "b").unwrap();
        let o = estimate_ocap(&s, &b, 10_000, 4, 7).unwrap();
        assert!((o.value - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-2);
        assert!(estimate_ocap(&s, &b, 10, 0, 7).is_err());
    }

    #[test]
    fn ocap_odometer_exhaustive() {
        let s = sys(r#"{"kind":"odometer","bases":[2]}"#);
        let e = Clopen::cylinder(&s, "000").unwrap();
        // one visit per 8 steps; windows of 4 see at most one visit
        let o = estimate_ocap(&s, &e, 4, 1, 0).unwrap();
        assert!(o.exhaustive);
        assert_eq!(o.value, 0.25);
    }
}
