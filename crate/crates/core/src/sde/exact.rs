//! Exact-rational oracle for the moment system.
//!
//! When every density parameter is a Gaussian rational (dyadic floats
//! qualify exactly), the truncated system can be rebuilt over `Q(i)` and its
//! rank computed by exact Gaussian elimination, removing any rank-threshold
//! ambiguity from the floating-point corank.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::density::{Density, Mode};
use crate::error::{Error, Result};
use crate::sde::Slot;

/// Element of `Q(i)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QC {
    pub re: BigRational,
    pub im: BigRational,
}

impl QC {
    pub fn zero() -> QC {
        QC { re: BigRational::zero(), im: BigRational::zero() }
    }

    pub fn one() -> QC {
        QC { re: BigRational::one(), im: BigRational::zero() }
    }

    pub fn from_int(n: i64) -> QC {
        QC { re: BigRational::from_integer(BigInt::from(n)), im: BigRational::zero() }
    }

    /// Exact conversion: every finite f64 is a dyadic rational.
    pub fn from_f64_pair(re: f64, im: f64) -> Option<QC> {
        Some(QC { re: BigRational::from_float(re)?, im: BigRational::from_float(im)? })
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn scale_int(&self, n: i64) -> QC {
        let f = BigRational::from_integer(BigInt::from(n));
        QC { re: &self.re * &f, im: &self.im * &f }
    }

    pub fn inv(&self) -> QC {
        let d = &self.re * &self.re + &self.im * &self.im;
        assert!(!d.is_zero(), "division by zero in Q(i)");
        QC { re: &self.re / &d, im: -&self.im / &d }
    }

    /// Integer power, negative allowed.
    pub fn powi(&self, e: i64) -> QC {
        if e == 0 {
            return QC::one();
        }
        let base = if e < 0 { self.inv() } else { self.clone() };
        let mut acc = QC::one();
        for _ in 0..e.unsigned_abs() {
            acc = &acc * &base;
        }
        acc
    }
}

impl Add for &QC {
    type Output = QC;
    fn add(self, rhs: &QC) -> QC {
        QC { re: &self.re + &rhs.re, im: &self.im + &rhs.im }
    }
}

impl Sub for &QC {
    type Output = QC;
    fn sub(self, rhs: &QC) -> QC {
        QC { re: &self.re - &rhs.re, im: &self.im - &rhs.im }
    }
}

impl Mul for &QC {
    type Output = QC;
    fn mul(self, rhs: &QC) -> QC {
        QC {
            re: &self.re * &rhs.re - &self.im * &rhs.im,
            im: &self.re * &rhs.im + &self.im * &rhs.re,
        }
    }
}

impl Neg for &QC {
    type Output = QC;
    fn neg(self) -> QC {
        QC { re: -&self.re, im: -&self.im }
    }
}

fn binomial_exact(m: i64, k: u32) -> BigRational {
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for i in 0..i64::from(k) {
        num *= BigInt::from(m - i);
        den *= BigInt::from(i + 1);
    }
    BigRational::new(num, den)
}

fn reduce_exact(n: i64, b: &QC, r: u32) -> (Vec<(i64, QC)>, Vec<(u32, QC)>) {
    let mut e: Vec<(i64, QC)> = Vec::new();
    let mut g: Vec<(u32, QC)> = Vec::new();
    if b.is_zero() {
        assert!(n >= 0);
        if n >= i64::from(r) {
            e.push((n - i64::from(r), QC::one()));
        } else {
            g.push((r - n as u32, QC::one()));
        }
        return (e, g);
    }
    if n >= 0 {
        let mut poly_q: Vec<QC> = Vec::new();
        for j in 0..=n {
            let coef = QC {
                re: binomial_exact(n, j as u32),
                im: BigRational::zero(),
            };
            let coef = &coef * &b.powi(n - j);
            if j < i64::from(r) {
                g.push((r - j as u32, coef));
            } else {
                let s = (j - i64::from(r)) as usize;
                if poly_q.len() <= s {
                    poly_q.resize(s + 1, QC::zero());
                }
                poly_q[s] = coef;
            }
        }
        let mut e_acc: Vec<QC> = vec![QC::zero(); poly_q.len()];
        let minus_b = -b;
        for (s, coef) in poly_q.iter().enumerate() {
            if coef.is_zero() {
                continue;
            }
            for t in 0..=s {
                let term = QC { re: binomial_exact(s as i64, (s - t) as u32), im: BigRational::zero() };
                let term = &(&term * &minus_b.powi((s - t) as i64)) * coef;
                e_acc[t] = &e_acc[t] + &term;
            }
        }
        for (t, coef) in e_acc.into_iter().enumerate() {
            if !coef.is_zero() {
                e.push((t as i64, coef));
            }
        }
    } else {
        let minus_b = -b;
        for j in 1..=(-n) {
            let coef = QC { re: binomial_exact(-i64::from(r), (-n - j) as u32), im: BigRational::zero() };
            let coef = &coef * &minus_b.powi(n - i64::from(r) + j);
            e.push((-j, coef));
        }
        for j in 1..=i64::from(r) {
            let coef = QC { re: binomial_exact(n, (i64::from(r) - j) as u32), im: BigRational::zero() };
            let coef = &coef * &b.powi(n - i64::from(r) + j);
            g.push((j as u32, coef));
        }
    }
    (e, g)
}

struct ExactDensity {
    mode: Mode,
    gamma: i64,
    factors: Vec<(QC, i64)>,
    exp_poly: Vec<(i64, QC)>,
    principal: Vec<(QC, Vec<QC>)>,
}

fn exactify(d: &Density) -> Result<ExactDensity> {
    let conv = |re: f64, im: f64| {
        QC::from_f64_pair(re, im)
            .ok_or_else(|| Error::Unsupported("non-finite density parameter".into()))
    };
    Ok(ExactDensity {
        mode: d.mode(),
        gamma: i64::from(d.gamma_power()),
        factors: d
            .poly_factors()
            .iter()
            .map(|f| Ok((conv(f.a.re, f.a.im)?, i64::from(f.alpha))))
            .collect::<Result<_>>()?,
        exp_poly: d
            .exp_poly()
            .iter()
            .map(|(&k, c)| Ok((i64::from(k), conv(c.re, c.im)?)))
            .collect::<Result<_>>()?,
        principal: d
            .exp_principal()
            .iter()
            .map(|p| {
                Ok((
                    conv(p.b.re, p.b.im)?,
                    p.d.iter().map(|c| conv(c.re, c.im)).collect::<Result<_>>()?,
                ))
            })
            .collect::<Result<_>>()?,
    })
}

/// F slot merged onto G when the factor sits on an essential singularity.
fn f_slot_exact(ed: &ExactDensity, l: usize) -> Slot {
    let a = &ed.factors[l].0;
    for (m, (b, _)) in ed.principal.iter().enumerate() {
        if (a - b).is_zero() {
            return Slot::G(m, 1);
        }
    }
    Slot::F(l)
}

/// Build the truncated system over `Q(i)` and return (slots, rows).
pub fn build_system_exact(d: &Density, n_max: usize) -> Result<(Vec<Slot>, Vec<BTreeMap<usize, QC>>)> {
    let ed = exactify(d)?;
    let n_range: Vec<i64> = match ed.mode {
        Mode::Line => (0..=n_max as i64).collect(),
        Mode::Cylinder => (-(n_max as i64)..=n_max as i64).collect(),
    };

    let mut raw_rows: Vec<BTreeMap<Slot, QC>> = Vec::with_capacity(n_range.len());
    for &n in &n_range {
        let mut row: BTreeMap<Slot, QC> = BTreeMap::new();
        let mut add = |slot: Slot, coef: QC| {
            if !coef.is_zero() {
                let e = row.entry(slot).or_insert_with(QC::zero);
                *e = &*e + &coef;
            }
        };
        match ed.mode {
            Mode::Line => {
                if n >= 1 {
                    add(Slot::E(n - 1), QC::from_int(n));
                }
                for (l, (a, alpha)) in ed.factors.iter().enumerate() {
                    let (e, g) = reduce_exact(n, a, 1);
                    for (p, coef) in e {
                        add(Slot::E(p), coef.scale_int(*alpha));
                    }
                    for (_, coef) in g {
                        add(f_slot_exact(&ed, l), coef.scale_int(*alpha));
                    }
                }
                for (k, ck) in &ed.exp_poly {
                    if *k >= 1 {
                        add(Slot::E(n + k - 1), ck.scale_int(*k));
                    }
                }
                for (m, (b, ds)) in ed.principal.iter().enumerate() {
                    for (ri, dr) in ds.iter().enumerate() {
                        let r = ri as u32 + 1;
                        let coef0 = (-dr).scale_int(i64::from(r));
                        let (e, g) = reduce_exact(n, b, r + 1);
                        for (p, coef) in e {
                            add(Slot::E(p), &coef0 * &coef);
                        }
                        for (order, coef) in g {
                            add(Slot::G(m, order), &coef0 * &coef);
                        }
                    }
                }
            }
            Mode::Cylinder => {
                add(Slot::E(n), QC::from_int(n + ed.gamma));
                for (l, (a, alpha)) in ed.factors.iter().enumerate() {
                    let (e, g) = reduce_exact(n + 1, a, 1);
                    for (p, coef) in e {
                        add(Slot::E(p), coef.scale_int(*alpha));
                    }
                    for (_, coef) in g {
                        add(f_slot_exact(&ed, l), coef.scale_int(*alpha));
                    }
                }
                for (k, ck) in &ed.exp_poly {
                    if *k != 0 {
                        add(Slot::E(n + k), ck.scale_int(*k));
                    }
                }
                for (m, (b, ds)) in ed.principal.iter().enumerate() {
                    for (ri, dr) in ds.iter().enumerate() {
                        let r = ri as u32 + 1;
                        let coef0 = (-dr).scale_int(i64::from(r));
                        let (e, g) = reduce_exact(n + 1, b, r + 1);
                        for (p, coef) in e {
                            add(Slot::E(p), &coef0 * &coef);
                        }
                        for (order, coef) in g {
                            add(Slot::G(m, order), &coef0 * &coef);
                        }
                    }
                }
            }
        }
        raw_rows.push(row);
    }

    for row in &mut raw_rows {
        row.retain(|_, coef| !coef.is_zero());
    }
    let mut slot_set: std::collections::BTreeSet<Slot> =
        raw_rows.iter().flat_map(|r| r.keys().copied()).collect();
    let e_lo = slot_set.iter().filter_map(|s| match s { Slot::E(n) => Some(*n), _ => None }).min();
    let e_hi = slot_set.iter().filter_map(|s| match s { Slot::E(n) => Some(*n), _ => None }).max();
    if let (Some(lo), Some(hi)) = (e_lo, e_hi) {
        for n in lo..=hi {
            slot_set.insert(Slot::E(n));
        }
    }
    let slots: Vec<Slot> = slot_set.into_iter().collect();
    let index: BTreeMap<Slot, usize> = slots.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let rows = raw_rows
        .into_iter()
        .map(|r| r.into_iter().map(|(s, c)| (index[&s], c)).collect())
        .collect();
    Ok((slots, rows))
}

/// Exact rank by Gaussian elimination over `Q(i)`.
pub fn rank_exact(n_cols: usize, rows: &[BTreeMap<usize, QC>]) -> usize {
    let mut work: Vec<BTreeMap<usize, QC>> = rows.to_vec();
    let mut rank = 0;
    for col in 0..n_cols {
        // pick the row with the structurally smallest entry count as pivot
        let pivot = (rank..work.len())
            .filter(|&i| work[i].get(&col).is_some_and(|v| !v.is_zero()))
            .min_by_key(|&i| work[i].len());
        let Some(p) = pivot else { continue };
        work.swap(rank, p);
        let pivot_inv = work[rank][&col].inv();
        let pivot_row: BTreeMap<usize, QC> = work[rank]
            .iter()
            .map(|(j, v)| (*j, v * &pivot_inv))
            .collect();
        for row in work.iter_mut().skip(rank + 1) {
            let Some(f) = row.get(&col).cloned() else { continue };
            if f.is_zero() {
                continue;
            }
            for (j, pv) in &pivot_row {
                let delta = pv * &f;
                let e = row.entry(*j).or_insert_with(QC::zero);
                *e = &*e - &delta;
                if e.is_zero() {
                    row.remove(j);
                }
            }
            row.remove(&col);
        }
        work[rank] = pivot_row;
        rank += 1;
    }
    rank
}

/// Exact corank of the truncated system: columns minus exact rank.
pub fn corank_exact(d: &Density, n_max: usize) -> Result<usize> {
    let (slots, rows) = build_system_exact(d, n_max)?;
    Ok(slots.len() - rank_exact(slots.len(), &rows))
}
