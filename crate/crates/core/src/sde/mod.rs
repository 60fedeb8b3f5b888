//! Truncated Schwinger-Dyson moment systems.
//!
//! Applying the operator `A f = f' + v f` to the monomial basis (`z^n` on the
//! line, `ω^n` on the cylinder) and demanding `⟨A z^n⟩ = 0` produces a linear
//! recursion among the basic coefficients
//!
//! ```text
//! E_n = ⟨z^n⟩,    F_l = ⟨1/(z - a_l)⟩,    G_{m,r} = ⟨1/(z - b_m)^r⟩.
//! ```
//!
//! For a window of equations large enough to enter the steady
//! one-new-variable-per-equation regime, the corank of the truncated system
//! stabilizes at `N_SDE = codim A𝒟`, and the nullspace gives a basis of
//! solution functionals.

pub mod exact;

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::cnum::cr;
use crate::contour::{integrate_with, PathSpec, QuadratureConfig};
use crate::density::{Density, Mode};
use crate::error::{Error, Result};

/// One unknown of the moment recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Slot {
    /// `⟨z^n⟩` (line) or `⟨ω^n⟩` (cylinder; `n` may be negative).
    E(i64),
    /// `⟨1/(z - a_l)⟩` by factor index.
    F(usize),
    /// `⟨1/(z - b_m)^r⟩` by principal-part index and order `r ≥ 1`.
    G(usize, u32),
}

/// Coefficients of a linear functional on the slot basis.
#[derive(Debug, Clone, Default)]
pub struct MomentVector {
    pub e: BTreeMap<i64, Complex64>,
    pub f: BTreeMap<usize, Complex64>,
    pub g: BTreeMap<(usize, u32), Complex64>,
}

impl Serialize for MomentVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let pair = |v: &Complex64| [v.re, v.im];
        let e: BTreeMap<String, [f64; 2]> =
            self.e.iter().map(|(n, v)| (n.to_string(), pair(v))).collect();
        let f: BTreeMap<String, [f64; 2]> =
            self.f.iter().map(|(l, v)| (l.to_string(), pair(v))).collect();
        let g: BTreeMap<String, [f64; 2]> =
            self.g.iter().map(|((m, r), v)| (format!("{m},{r}"), pair(v))).collect();
        let mut st = s.serialize_struct("MomentVector", 3)?;
        st.serialize_field("e", &e)?;
        st.serialize_field("f", &f)?;
        st.serialize_field("g", &g)?;
        st.end()
    }
}

impl MomentVector {
    pub fn get(&self, slot: Slot) -> Complex64 {
        match slot {
            Slot::E(n) => self.e.get(&n).copied().unwrap_or(Complex64::ZERO),
            Slot::F(l) => self.f.get(&l).copied().unwrap_or(Complex64::ZERO),
            Slot::G(m, r) => self.g.get(&(m, r)).copied().unwrap_or(Complex64::ZERO),
        }
    }

    pub fn set(&mut self, slot: Slot, v: Complex64) {
        match slot {
            Slot::E(n) => {
                self.e.insert(n, v);
            }
            Slot::F(l) => {
                self.f.insert(l, v);
            }
            Slot::G(m, r) => {
                self.g.insert((m, r), v);
            }
        }
    }

    pub fn norm(&self) -> f64 {
        let s: f64 = self
            .e
            .values()
            .chain(self.f.values())
            .chain(self.g.values())
            .map(|v| v.norm_sqr())
            .sum();
        s.sqrt()
    }
}

/// Exact reduction of `w^n / (w - b)^r` onto monomials and pole powers.
#[derive(Debug, Clone, Default)]
pub struct Reduction {
    /// `(power, coefficient)` monomial terms; negative powers only for `n < 0`.
    pub e: Vec<(i64, Complex64)>,
    /// `(order, coefficient)` pole terms `1/(w-b)^order`.
    pub g: Vec<(u32, Complex64)>,
}

/// Binomial coefficient with integer (possibly negative) upper index.
fn binomial(m: i64, k: u32) -> f64 {
    let mut acc = 1.0f64;
    for i in 0..i64::from(k) {
        acc = acc * (m - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Expand `w^n / (w - b)^r` over `{w^j} ∪ {1/(w-b)^j}`.
///
/// For `n ≥ 0` this is the binomial expansion of `w^n = ((w-b) + b)^n`; for
/// `n < 0` (cylinder mode) the negative-power expansion applies and requires
/// `b ≠ 0`.
pub fn reduce_monomial_over_pole(n: i64, b: Complex64, r: u32) -> Reduction {
    assert!(r >= 1, "pole order must be at least 1");
    let mut red = Reduction::default();
    if b == Complex64::ZERO {
        assert!(n >= 0, "b = 0 reduction is restricted to n >= 0 (line mode)");
        // w^n / w^r is a single term
        if n >= i64::from(r) {
            red.e.push((n - i64::from(r), cr(1.0)));
        } else {
            red.g.push((r - n as u32, cr(1.0)));
        }
        return red;
    }
    if n >= 0 {
        // polynomial coefficients in q = w - b, then re-expanded to monomials
        let mut poly_q: Vec<Complex64> = Vec::new();
        for j in 0..=n {
            let coef = binomial(n, j as u32) * b.powi((n - j) as i32);
            if j < i64::from(r) {
                red.g.push((r - j as u32, coef));
            } else {
                let s = (j - i64::from(r)) as usize;
                if poly_q.len() <= s {
                    poly_q.resize(s + 1, Complex64::ZERO);
                }
                poly_q[s] = coef;
            }
        }
        let mut e_acc: Vec<Complex64> = vec![Complex64::ZERO; poly_q.len()];
        for (s, coef) in poly_q.iter().enumerate() {
            if *coef == Complex64::ZERO {
                continue;
            }
            // q^s = (w - b)^s
            for t in 0..=s {
                e_acc[t] += coef * binomial(s as i64, (s - t) as u32) * (-b).powi((s - t) as i32);
            }
        }
        for (t, coef) in e_acc.into_iter().enumerate() {
            if coef != Complex64::ZERO {
                red.e.push((t as i64, coef));
            }
        }
    } else {
        for j in 1..=(-n) {
            let coef = binomial(-i64::from(r), (-n - j) as u32) * (-b).powi((n - i64::from(r) + j) as i32);
            red.e.push((-j, coef));
        }
        for j in 1..=i64::from(r) {
            let coef = binomial(n, (i64::from(r) - j) as u32) * b.powi((n - i64::from(r) + j) as i32);
            red.g.push((j as u32, coef));
        }
    }
    red
}

/// Truncated linear system `⟨A w^n⟩ = 0`.
#[derive(Debug, Clone)]
pub struct SdeSystem {
    pub mode: Mode,
    /// Ordered unknowns (columns).
    pub slots: Vec<Slot>,
    index: HashMap<Slot, usize>,
    /// Sparse rows over `slots`, one per equation index `n`.
    pub rows: Vec<Vec<(usize, Complex64)>>,
    /// Equation indices, in row order.
    pub n_values: Vec<i64>,
    pub n_max: usize,
}

impl SdeSystem {
    pub fn slot_index(&self, slot: Slot) -> Option<usize> {
        self.index.get(&slot).copied()
    }

    /// Residuals `⟨A w^n⟩` of a moment vector against every row.
    pub fn residuals(&self, mv: &MomentVector) -> Vec<Complex64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, coef)| coef * mv.get(self.slots[j])).sum())
            .collect()
    }

    /// Max row coefficient magnitude, for scaling residual tolerances.
    pub fn row_scale(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|(_, c)| c.norm()).fold(0.0, f64::max)
    }
}

/// Map a factor's pole slot to the shared `G` slot when `a_l` coincides with
/// some `b_m` (then `F_l ≡ G_{m,1}`).
fn f_slot(d: &Density, l: usize) -> Slot {
    let a = d.poly_factors()[l].a;
    for (m, p) in d.exp_principal().iter().enumerate() {
        if (a - p.b).norm() <= 1e-12 * (1.0 + p.b.norm()) {
            return Slot::G(m, 1);
        }
    }
    Slot::F(l)
}

/// Window size heuristic: enough equations to pass the transient regime.
pub fn default_n_max(d: &Density) -> usize {
    let n_q = match d.mode() {
        Mode::Line => d.n_q() as usize,
        Mode::Cylinder => (d.n_q_plus() - d.n_q_minus()) as usize,
    };
    let sum_beta: usize = d.exp_principal().iter().map(|p| p.beta() as usize).sum();
    let n = 4 * (n_q + sum_beta + d.poly_factors().len() + d.gamma_power().unsigned_abs() as usize + 4);
    n.min(2048)
}

/// Assemble the truncated system with equations `n = 0..=n_max` (line) or
/// `n = -n_max..=n_max` (cylinder).
pub fn build_system(d: &Density, n_max: usize) -> Result<SdeSystem> {
    let mode = d.mode();
    let n_range: Vec<i64> = match mode {
        Mode::Line => (0..=n_max as i64).collect(),
        Mode::Cylinder => (-(n_max as i64)..=n_max as i64).collect(),
    };

    let mut raw_rows: Vec<BTreeMap<Slot, Complex64>> = Vec::with_capacity(n_range.len());
    for &n in &n_range {
        let mut row: BTreeMap<Slot, Complex64> = BTreeMap::new();
        let mut add = |slot: Slot, coef: Complex64| {
            if coef != Complex64::ZERO {
                *row.entry(slot).or_insert(Complex64::ZERO) += coef;
            }
        };
        match mode {
            Mode::Line => {
                // <A z^n> = n E_{n-1} + sum_l alpha_l <z^n/p_l>
                //          + sum_k k c_k E_{n+k-1} - sum_{m,r} r d_{m,r} <z^n/q_m^{r+1}>
                if n >= 1 {
                    add(Slot::E(n - 1), cr(n as f64));
                }
                for (l, fac) in d.poly_factors().iter().enumerate() {
                    let red = reduce_monomial_over_pole(n, fac.a, 1);
                    let alpha = cr(f64::from(fac.alpha));
                    for (p, coef) in red.e {
                        add(Slot::E(p), alpha * coef);
                    }
                    for (_, coef) in red.g {
                        add(f_slot(d, l), alpha * coef);
                    }
                }
                for (&k, &ck) in d.exp_poly() {
                    if k >= 1 {
                        add(Slot::E(n + i64::from(k) - 1), ck * f64::from(k));
                    }
                }
                for (m, part) in d.exp_principal().iter().enumerate() {
                    for (ri, &dr) in part.d.iter().enumerate() {
                        let r = ri as u32 + 1;
                        let coef0 = -dr * f64::from(r);
                        let red = reduce_monomial_over_pole(n, part.b, r + 1);
                        for (p, coef) in red.e {
                            add(Slot::E(p), coef0 * coef);
                        }
                        for (order, coef) in red.g {
                            add(Slot::G(m, order), coef0 * coef);
                        }
                    }
                }
            }
            Mode::Cylinder => {
                // <-iA ω^n> = (n+γ) E_n + sum_l alpha_l <ω^{n+1}/p_l>
                //            + sum_k k c_k E_{n+k} - sum_{m,r} r d_{m,r} <ω^{n+1}/q_m^{r+1}>
                add(Slot::E(n), cr((n + i64::from(d.gamma_power())) as f64));
                for (l, fac) in d.poly_factors().iter().enumerate() {
                    let red = reduce_monomial_over_pole(n + 1, fac.a, 1);
                    let alpha = cr(f64::from(fac.alpha));
                    for (p, coef) in red.e {
                        add(Slot::E(p), alpha * coef);
                    }
                    for (_, coef) in red.g {
                        add(f_slot(d, l), alpha * coef);
                    }
                }
                for (&k, &ck) in d.exp_poly() {
                    if k != 0 {
                        add(Slot::E(n + i64::from(k)), ck * f64::from(k));
                    }
                }
                for (m, part) in d.exp_principal().iter().enumerate() {
                    for (ri, &dr) in part.d.iter().enumerate() {
                        let r = ri as u32 + 1;
                        let coef0 = -dr * f64::from(r);
                        let red = reduce_monomial_over_pole(n + 1, part.b, r + 1);
                        for (p, coef) in red.e {
                            add(Slot::E(p), coef0 * coef);
                        }
                        for (order, coef) in red.g {
                            add(Slot::G(m, order), coef0 * coef);
                        }
                    }
                }
            }
        }
        raw_rows.push(row);
    }

    // exact cancellations (e.g. the vanishing E_{n-1} coefficient of the
    // all-pole degenerate equation) must not linger as explicit zeroes
    for row in &mut raw_rows {
        row.retain(|_, coef| *coef != Complex64::ZERO);
    }

    let mut slot_set: std::collections::BTreeSet<Slot> =
        raw_rows.iter().flat_map(|r| r.keys().copied()).collect();
    // every E between the touched extremes is an unknown of the recursion,
    // even if its coefficient happens to vanish in every equation
    let e_lo = slot_set.iter().filter_map(|s| match s { Slot::E(n) => Some(*n), _ => None }).min();
    let e_hi = slot_set.iter().filter_map(|s| match s { Slot::E(n) => Some(*n), _ => None }).max();
    if let (Some(lo), Some(hi)) = (e_lo, e_hi) {
        for n in lo..=hi {
            slot_set.insert(Slot::E(n));
        }
    }
    let slots: Vec<Slot> = slot_set.into_iter().collect();
    let index: HashMap<Slot, usize> = slots.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let rows = raw_rows
        .into_iter()
        .map(|r| r.into_iter().map(|(s, coef)| (index[&s], coef)).collect())
        .collect();

    Ok(SdeSystem { mode, slots, index, rows, n_values: n_range, n_max })
}

/// Unknowns of a row subset: the touched slots, with the `E` range gap-filled.
fn window_columns(slots: &[Slot], rows: &[Vec<(usize, Complex64)>]) -> Vec<usize> {
    let mut touched: std::collections::BTreeSet<usize> =
        rows.iter().flat_map(|r| r.iter().map(|&(j, _)| j)).collect();
    let e_of = |j: &usize| match slots[*j] {
        Slot::E(n) => Some((n, *j)),
        _ => None,
    };
    let lo = touched.iter().filter_map(|j| e_of(j)).min();
    let hi = touched.iter().filter_map(|j| e_of(j)).max();
    if let (Some((lo, _)), Some((hi, _))) = (lo, hi) {
        for (j, s) in slots.iter().enumerate() {
            if let Slot::E(n) = s {
                if *n >= lo && *n <= hi {
                    touched.insert(j);
                }
            }
        }
    }
    touched.into_iter().collect()
}

/// Row- and column-equilibrated dense window matrix, with the column scales
/// used (null vectors must be multiplied by them afterwards).
fn window_matrix(
    slots: &[Slot],
    rows: &[Vec<(usize, Complex64)>],
) -> (DMatrix<Complex64>, Vec<usize>, Vec<f64>) {
    let cols = window_columns(slots, rows);
    let col_of: HashMap<usize, usize> = cols.iter().enumerate().map(|(i, j)| (*j, i)).collect();
    let mut m = DMatrix::<Complex64>::zeros(rows.len(), cols.len());
    for (i, row) in rows.iter().enumerate() {
        let scale = row.iter().map(|(_, c)| c.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            continue;
        }
        for &(j, coef) in row {
            m[(i, col_of[&j])] = coef / scale;
        }
    }
    let mut col_scale = vec![1.0f64; cols.len()];
    for (j, s) in col_scale.iter_mut().enumerate() {
        let max = m.column(j).iter().map(|v| v.norm()).fold(0.0f64, f64::max);
        if max > 0.0 {
            *s = 1.0 / max;
            for i in 0..rows.len() {
                m[(i, j)] *= *s;
            }
        }
    }
    (m, cols, col_scale)
}

/// Orthonormal row-space basis built row by row in recursion order.
///
/// The moment recursion is graded: its truncated window admits spurious
/// almost-null directions whose components explode factorially, so any global
/// rank decision (SVD or pivoted-QR thresholds) over-counts the corank once
/// the window is large, even though the exact rank (cf. [`exact`]) is full.
/// Processing the equations outward from `n = 0` instead judges each row
/// against the span of its predecessors, mirroring the
/// one-new-variable-per-equation structure: an independent row keeps an
/// `O(1/poly(n))` residual while a genuinely redundant row projects to
/// rounding level. Verified against the rational-arithmetic oracle.
fn row_space_basis(
    m: &DMatrix<Complex64>,
    order: &[usize],
    tol_rank: f64,
) -> Vec<nalgebra::DVector<Complex64>> {
    let mut basis: Vec<nalgebra::DVector<Complex64>> = Vec::new();
    for &i in order {
        let mut v: nalgebra::DVector<Complex64> = m.row(i).transpose();
        let scale = v.norm();
        if scale == 0.0 {
            continue;
        }
        v /= cr(scale);
        for _ in 0..2 {
            for q in &basis {
                let coef = q.dotc(&v);
                v.axpy(-coef, q, cr(1.0));
            }
        }
        let resid = v.norm();
        if resid > tol_rank {
            basis.push(v / cr(resid));
        }
    }
    basis
}

/// Row order for the rank sweep: outward from the lowest equation index.
fn recursion_order(n_values: &[i64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_values.len()).collect();
    order.sort_by_key(|&i| (n_values[i].abs(), n_values[i] < 0));
    order
}

/// Corank of the row-scaled truncated system over the window's unknowns.
fn corank_raw(
    slots: &[Slot],
    rows: &[Vec<(usize, Complex64)>],
    n_values: &[i64],
    tol_rank: f64,
) -> usize {
    let (m, cols, _) = window_matrix(slots, rows);
    if cols.is_empty() {
        return 0;
    }
    let rank = row_space_basis(&m, &recursion_order(n_values), tol_rank).len();
    cols.len() - rank
}

/// The corank window-drop used for the stabilization check.
fn shrunken_rows(sys: &SdeSystem) -> (Vec<Vec<(usize, Complex64)>>, Vec<i64>) {
    let delta = (sys.n_max / 8).max(2) as i64;
    let keep = sys.n_max as i64 - delta;
    sys.rows
        .iter()
        .zip(&sys.n_values)
        .filter(|(_, &n)| n.abs() <= keep)
        .map(|(r, &n)| (r.clone(), n))
        .unzip()
}

/// Stabilized corank `N_SDE` and a unit-norm nullspace basis.
///
/// The rank sweep is [`row_space_basis`] at the relative residual threshold
/// `tol_rank`; the nullspace basis is the orthogonal complement of the row
/// space within the window's unknowns, mapped back through the column
/// equilibration. Fails with [`Error::NotStabilized`] if the corank still
/// changes between the shrunken and the full window.
pub fn corank(sys: &SdeSystem, tol_rank: f64) -> Result<(usize, Vec<MomentVector>)> {
    let full = corank_raw(&sys.slots, &sys.rows, &sys.n_values, tol_rank);
    let (rows_s, ns_s) = shrunken_rows(sys);
    let shrunk = corank_raw(&sys.slots, &rows_s, &ns_s, tol_rank);
    if full != shrunk {
        return Err(Error::NotStabilized { coranks: vec![shrunk, full] });
    }

    let (m, cols, col_scale) = window_matrix(&sys.slots, &sys.rows);
    let n_cols = cols.len();
    let row_basis = row_space_basis(&m, &recursion_order(&sys.n_values), tol_rank);

    // orthogonal complement of the row space: project unit vectors and keep
    // the independent remainders
    let mut kept: Vec<nalgebra::DVector<Complex64>> = Vec::new();
    for j in 0..n_cols {
        if kept.len() == full {
            break;
        }
        let mut v = nalgebra::DVector::<Complex64>::zeros(n_cols);
        v[j] = cr(1.0);
        for _ in 0..2 {
            for q in row_basis.iter().chain(kept.iter()) {
                let coef = q.dotc(&v);
                v.axpy(-coef, q, cr(1.0));
            }
        }
        let resid = v.norm();
        if resid < 0.1 {
            continue;
        }
        kept.push(v / cr(resid));
    }

    // Shifted inverse subspace iteration pulls the complement onto the true
    // nullspace: exact null directions sit at sigma ~ 0 while the spurious
    // almost-null directions of the graded truncation stay orders above.
    if !kept.is_empty() {
        let svd = m.clone().svd(false, true);
        let v_t = svd.v_t.expect("thin svd with v requested");
        let vmat = v_t.adjoint();
        let sig = &svd.singular_values;
        let s_max = sig.iter().copied().fold(0.0f64, f64::max).max(1.0);
        let mu2 = (20.0 * f64::EPSILON * s_max).powi(2);
        for _ in 0..2 {
            for v in kept.iter_mut() {
                let proj = &v_t * &*v;
                let mut shrunk = proj.clone();
                for (i, s) in shrunk.iter_mut().enumerate() {
                    *s = proj[i] * (mu2 / (sig[i] * sig[i] + mu2));
                }
                // v <- (mu^2 (M^H M + mu^2)^{-1}) v, kept O(1) on null directions
                let out = (&*v - &vmat * proj) + &vmat * shrunk;
                *v = out;
            }
            // re-orthonormalize the subspace
            let mut ortho: Vec<nalgebra::DVector<Complex64>> = Vec::with_capacity(kept.len());
            for v in &kept {
                let mut w = v.clone();
                for q in &ortho {
                    let coef = q.dotc(&w);
                    w.axpy(-coef, q, cr(1.0));
                }
                let n = w.norm();
                if n > 1e-8 {
                    ortho.push(w / cr(n));
                }
            }
            kept = ortho;
        }
    }

    let mut basis: Vec<MomentVector> = Vec::with_capacity(kept.len());
    for v in &kept {
        // undo the equilibration and renormalize
        let mut w: Vec<Complex64> = (0..n_cols).map(|k| v[k] * col_scale[k]).collect();
        let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in &mut w {
            *z /= norm;
        }
        let mut mv = MomentVector::default();
        for (k, z) in w.iter().enumerate() {
            if z.norm() > 0.0 {
                mv.set(sys.slots[cols[k]], *z);
            }
        }
        basis.push(mv);
    }
    Ok((full, basis))
}

/// One `dimension_check` stage.
#[derive(Debug, Clone, Serialize)]
pub struct DimensionEntry {
    pub n_max: usize,
    pub n_sde: usize,
}

/// Report of the `N_SDE = N_Γ` verification over a ladder of window sizes.
#[derive(Debug, Clone, Serialize)]
pub struct DimensionReport {
    pub n_gamma: usize,
    pub entries: Vec<DimensionEntry>,
    pub stabilized: bool,
    pub n_sde: usize,
    pub pass: bool,
}

/// Run census + system assembly + corank over increasing window sizes and
/// compare `N_SDE` against `N_Γ`.
pub fn dimension_check(d: &Density, n_max_list: &[usize], tol_rank: f64) -> Result<DimensionReport> {
    if n_max_list.is_empty() {
        return Err(Error::Unsupported("dimension_check needs at least one window size".into()));
    }
    let census = d.census()?;
    let mut entries = Vec::new();
    for &n_max in n_max_list {
        let sys = build_system(d, n_max)?;
        entries.push(DimensionEntry { n_max, n_sde: corank_raw(&sys.slots, &sys.rows, &sys.n_values, tol_rank) });
    }
    let k = entries.len();
    let stabilized = k >= 2 && entries[k - 1].n_sde == entries[k - 2].n_sde;
    let n_sde = entries[k - 1].n_sde;
    Ok(DimensionReport {
        n_gamma: census.n_gamma,
        entries,
        stabilized,
        n_sde,
        pass: stabilized && n_sde == census.n_gamma,
    })
}

/// Integrand `1/(w - a)` style factors for the slot moments.
fn slot_integrand(d: &Density, slot: Slot) -> Box<dyn Fn(Complex64) -> Complex64 + Sync> {
    let mode = d.mode();
    match slot {
        Slot::E(n) => match mode {
            Mode::Line => Box::new(move |z: Complex64| z.powi(n as i32)),
            Mode::Cylinder => Box::new(move |z: Complex64| (crate::cnum::I * (n as f64) * z).exp()),
        },
        Slot::F(l) => {
            let a = d.poly_factors()[l].a;
            match mode {
                Mode::Line => Box::new(move |z: Complex64| (z - a).inv()),
                Mode::Cylinder => Box::new(move |z: Complex64| ((crate::cnum::I * z).exp() - a).inv()),
            }
        }
        Slot::G(m, r) => {
            let b = d.exp_principal()[m].b;
            match mode {
                Mode::Line => Box::new(move |z: Complex64| (z - b).powi(-(r as i32))),
                Mode::Cylinder => {
                    Box::new(move |z: Complex64| ((crate::cnum::I * z).exp() - b).powi(-(r as i32)))
                }
            }
        }
    }
}

/// Quadrature values of one slot integrand over a path.
///
/// Large moments (e.g. `⟨ω^{-n}⟩` on a winding path below the real axis) sit
/// above the floating-point floor of the absolute tolerance; they are
/// accepted at `1e-10` relative accuracy instead.
pub fn moments_for_slots(
    d: &Density,
    path: &PathSpec,
    slots: &[Slot],
    cfg: &QuadratureConfig,
) -> Result<Vec<Complex64>> {
    slots
        .iter()
        .map(|&slot| {
            let f = slot_integrand(d, slot);
            match integrate_with(d, path, f.as_ref(), cfg) {
                Ok(q) => Ok(q.value),
                Err(Error::QuadratureFail { est_err, .. }) => {
                    let mut relaxed = *cfg;
                    relaxed.tol = 4.0 * est_err;
                    let q = integrate_with(d, path, f.as_ref(), &relaxed)?;
                    if q.abs_err <= 1e-10 * (1.0 + q.integrand_l1) {
                        Ok(q.value)
                    } else {
                        Err(Error::QuadratureFail {
                            label: path.label.clone(),
                            est_err: q.abs_err,
                            tol: cfg.tol,
                        })
                    }
                }
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// The moment vector of the path functional `T_γ`: every `E_n` up to `n_max`
/// plus all `F_l` and `G_{m,r}` slots required on `ℋ = 𝒟 + A𝒟`.
pub fn moments_of_functional(
    d: &Density,
    path: &PathSpec,
    n_max: usize,
    cfg: &QuadratureConfig,
) -> Result<MomentVector> {
    let mut slots: Vec<Slot> = Vec::new();
    match d.mode() {
        Mode::Line => slots.extend((0..=n_max as i64).map(Slot::E)),
        Mode::Cylinder => slots.extend((-(n_max as i64)..=n_max as i64).map(Slot::E)),
    }
    for (l, _) in d.poly_factors().iter().enumerate() {
        slots.push(f_slot(d, l));
    }
    for (m, p) in d.exp_principal().iter().enumerate() {
        for r in 1..=p.beta() + 1 {
            slots.push(Slot::G(m, r));
        }
    }
    slots.dedup();
    let values = moments_for_slots(d, path, &slots, cfg)?;
    let mut mv = MomentVector::default();
    for (slot, v) in slots.iter().zip(values) {
        mv.set(*slot, v);
        // a factor sitting on an essential singularity shares its moment
        if let Slot::G(m, 1) = slot {
            for (l, _) in d.poly_factors().iter().enumerate() {
                if f_slot(d, l) == Slot::G(*m, 1) {
                    mv.f.insert(l, v);
                }
            }
        }
    }
    Ok(mv)
}

/// Least-squares residual of expressing row `row_idx` through all earlier
/// rows, relative to the row norm. Rows are unit-max-norm scaled first.
pub fn row_in_span_residual(sys: &SdeSystem, row_idx: usize) -> f64 {
    assert!(row_idx > 0 && row_idx < sys.rows.len());
    let scale_row = |row: &Vec<(usize, Complex64)>| -> Vec<(usize, Complex64)> {
        let s = row.iter().map(|(_, c)| c.norm()).fold(0.0, f64::max);
        row.iter().map(|&(j, c)| (j, c / s)).collect()
    };
    let target = scale_row(&sys.rows[row_idx]);
    let earlier: Vec<Vec<(usize, Complex64)>> = sys.rows[..row_idx].iter().map(scale_row).collect();

    let n_cols = sys.slots.len();
    let mut a = DMatrix::<Complex64>::zeros(n_cols, earlier.len());
    for (k, row) in earlier.iter().enumerate() {
        for &(j, coef) in row {
            a[(j, k)] = coef;
        }
    }
    let mut b = DMatrix::<Complex64>::zeros(n_cols, 1);
    for &(j, coef) in &target {
        b[(j, 0)] = coef;
    }
    let svd = a.clone().svd(true, true);
    let x = svd.solve(&b, 1e-13).expect("svd solve");
    let resid = (&a * x - &b).norm();
    resid / b.norm()
}
