//! Exact two-phase simplex over the rationals.
//!
//! Problems are in standard form: minimise `c·x` subject to `A x = b`, `x ≥ 0`.
//! Arithmetic uses machine-word fractions and promotes to big rationals on
//! overflow, so every answer is exact. Pricing is Dantzig's rule, switching to
//! Bland's rule after a run of degenerate pivots; Bland's rule guarantees
//! termination.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::value::Rational;

/// A rational that stays in machine words while it can.
#[derive(Clone, Debug)]
pub(crate) enum Q {
    Small(i64, i64),
    Big(Box<Rational>),
}

fn gcd_u64(mut a: u64, mut b: u64) -> u64 {
    if a == 0 {
        return b;
    }
    if b == 0 {
        return a;
    }
    let shift = (a | b).trailing_zeros();
    a >>= a.trailing_zeros();
    loop {
        b >>= b.trailing_zeros();
        if a > b {
            core::mem::swap(&mut a, &mut b);
        }
        b -= a;
        if b == 0 {
            return a << shift;
        }
    }
}

fn gcd_u128(mut a: u128, mut b: u128) -> u128 {
    if a == 0 {
        return b;
    }
    if b == 0 {
        return a;
    }
    let shift = (a | b).trailing_zeros();
    a >>= a.trailing_zeros();
    loop {
        b >>= b.trailing_zeros();
        if a > b {
            core::mem::swap(&mut a, &mut b);
        }
        b -= a;
        if b == 0 {
            return a << shift;
        }
    }
}

impl Q {
    pub(crate) fn zero() -> Q {
        Q::Small(0, 1)
    }

    #[cfg(test)]
    pub(crate) fn int(n: i64) -> Q {
        Q::Small(n, 1)
    }

    fn from_i128(n: i128, d: i128) -> Q {
        debug_assert!(d != 0);
        let (mut n, mut d) = if d < 0 { (-n, -d) } else { (n, d) };
        if n == 0 {
            return Q::zero();
        }
        if d == 1 {
            if let Ok(n64) = i64::try_from(n) {
                return Q::Small(n64, 1);
            }
        }
        if let (Ok(n64), Ok(d64)) = (i64::try_from(n), u64::try_from(d)) {
            let g = gcd_u64(n64.unsigned_abs(), d64);
            let (n2, d2) = (n64 / g as i64, d64 / g);
            if let Ok(d2) = i64::try_from(d2) {
                return Q::Small(n2, d2);
            }
        }
        let g = gcd_u128(n.unsigned_abs(), d as u128) as i128;
        if g > 1 {
            n /= g;
            d /= g;
        }
        if let (Ok(n64), Ok(d64)) = (i64::try_from(n), i64::try_from(d)) {
            Q::Small(n64, d64)
        } else {
            Q::Big(Box::new(Rational::new_raw(BigInt::from(n), BigInt::from(d))))
        }
    }

    pub(crate) fn from_rational(r: &Rational) -> Q {
        match (r.numer().to_i64(), r.denom().to_i64()) {
            (Some(n), Some(d)) => Q::Small(n, d),
            _ => Q::Big(Box::new(r.clone())),
        }
    }

    fn from_big(r: Rational) -> Q {
        match (r.numer().to_i64(), r.denom().to_i64()) {
            (Some(n), Some(d)) => Q::Small(n, d),
            _ => Q::Big(Box::new(r)),
        }
    }

    pub(crate) fn to_rational(&self) -> Rational {
        match self {
            Q::Small(n, d) => Rational::new_raw(BigInt::from(*n), BigInt::from(*d)),
            Q::Big(b) => (**b).clone(),
        }
    }

    pub(crate) fn is_zero(&self) -> bool {
        match self {
            Q::Small(n, _) => *n == 0,
            Q::Big(b) => b.is_zero(),
        }
    }

    pub(crate) fn signum(&self) -> i32 {
        match self {
            Q::Small(n, _) => n.signum() as i32,
            Q::Big(b) => {
                if b.is_positive() {
                    1
                } else if b.is_negative() {
                    -1
                } else {
                    0
                }
            }
        }
    }

    pub(crate) fn is_positive(&self) -> bool {
        self.signum() > 0
    }

    pub(crate) fn is_negative(&self) -> bool {
        self.signum() < 0
    }

    pub(crate) fn add(&self, o: &Q) -> Q {
        match (self, o) {
            (Q::Small(a, b), Q::Small(c, d)) => {
                if *b == 1 && *d == 1 {
                    return match a.checked_add(*c) {
                        Some(s) => Q::Small(s, 1),
                        None => Q::from_i128(*a as i128 + *c as i128, 1),
                    };
                }
                let (a, b, c, d) = (*a as i128, *b as i128, *c as i128, *d as i128);
                if b == d {
                    return Q::from_i128(a + c, b);
                }
                Q::from_i128(a * d + c * b, b * d)
            }
            _ => Q::from_big(self.to_rational() + o.to_rational()),
        }
    }

    pub(crate) fn neg(&self) -> Q {
        match self {
            Q::Small(a, b) if *a != i64::MIN => Q::Small(-a, *b),
            _ => Q::from_big(-self.to_rational()),
        }
    }

    pub(crate) fn sub(&self, o: &Q) -> Q {
        self.add(&o.neg())
    }

    pub(crate) fn mul(&self, o: &Q) -> Q {
        match (self, o) {
            (Q::Small(a, b), Q::Small(c, d)) => {
                if *a == 0 || *c == 0 {
                    return Q::zero();
                }
                Q::from_i128(*a as i128 * *c as i128, *b as i128 * *d as i128)
            }
            _ => Q::from_big(self.to_rational() * o.to_rational()),
        }
    }

    pub(crate) fn div(&self, o: &Q) -> Q {
        match (self, o) {
            (Q::Small(a, b), Q::Small(c, d)) => {
                assert!(*c != 0, "division by zero");
                Q::from_i128(*a as i128 * *d as i128, *b as i128 * *c as i128)
            }
            _ => Q::from_big(self.to_rational() / o.to_rational()),
        }
    }

    /// `self - f * o`.
    pub(crate) fn sub_mul(&self, f: &Q, o: &Q) -> Q {
        if let (Q::Small(a, b), Q::Small(fnum, fden), Q::Small(c, d)) = (self, f, o) {
            // (a/b) - (fnum*c)/(fden*d)
            let (a, b) = (*a as i128, *b as i128);
            if let (Some(pn), Some(pd)) = ((*fnum as i128).checked_mul(*c as i128), (*fden as i128).checked_mul(*d as i128)) {
                if b == pd {
                    if let Some(s) = a.checked_sub(pn) {
                        return Q::from_i128(s, b);
                    }
                }
                if b == 1 && pd == 1 {
                    if let Some(s) = a.checked_sub(pn) {
                        return Q::from_i128(s, 1);
                    }
                }
                let p = Q::from_i128(pn, pd);
                return self.sub(&p);
            }
        }
        self.sub(&f.mul(o))
    }

    pub(crate) fn cmp_q(&self, o: &Q) -> Ordering {
        match (self, o) {
            (Q::Small(a, b), Q::Small(c, d)) => (*a as i128 * *d as i128).cmp(&(*c as i128 * *b as i128)),
            _ => self.to_rational().cmp(&o.to_rational()),
        }
    }
}

/// A linear program in standard form with sparse equality rows.
#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    n_cols: usize,
    rows: Vec<(Vec<(usize, Rational)>, Rational)>,
    objective: Vec<(usize, Rational)>,
}

/// Result of [`LinearProgram::solve`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LpOutcome {
    Optimal { value: Rational, x: Vec<Rational> },
    Infeasible,
    Unbounded,
}

/// Pivot statistics for diagnostics.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LpStats {
    pub rows: usize,
    pub cols: usize,
    pub pivots: usize,
    pub bland_pivots: usize,
    pub redundant_rows: usize,
}

impl LinearProgram {
    pub fn new(n_cols: usize) -> Self {
        LinearProgram { n_cols, rows: Vec::new(), objective: Vec::new() }
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_col(&mut self) -> usize {
        self.n_cols += 1;
        self.n_cols - 1
    }

    /// Adds the row `Σ coef·x_col = rhs`; repeated columns are summed.
    pub fn add_row(&mut self, mut coefs: Vec<(usize, Rational)>, rhs: Rational) {
        coefs.sort_by_key(|(c, _)| *c);
        let mut merged: Vec<(usize, Rational)> = Vec::with_capacity(coefs.len());
        for (c, v) in coefs {
            assert!(c < self.n_cols, "column {c} out of range");
            match merged.last_mut() {
                Some((lc, lv)) if *lc == c => *lv += v,
                _ => merged.push((c, v)),
            }
        }
        merged.retain(|(_, v)| !v.is_zero());
        self.rows.push((merged, rhs));
    }

    pub fn set_objective(&mut self, coefs: Vec<(usize, Rational)>) {
        let mut dense = vec![Rational::zero(); self.n_cols];
        for (c, v) in coefs {
            dense[c] += v;
        }
        self.objective = dense.into_iter().enumerate().filter(|(_, v)| !v.is_zero()).collect();
    }

    pub fn rows(&self) -> &[(Vec<(usize, Rational)>, Rational)] {
        &self.rows
    }

    pub fn objective(&self) -> &[(usize, Rational)] {
        &self.objective
    }

    /// Exact residual check of `x` against the rows and `x ≥ 0`.
    pub fn is_feasible_point(&self, x: &[Rational]) -> bool {
        x.len() == self.n_cols
            && x.iter().all(|v| !v.is_negative())
            && self.rows.iter().all(|(coefs, rhs)| {
                let s: Rational = coefs.iter().map(|(c, v)| v * &x[*c]).sum();
                s == *rhs
            })
    }

    pub fn objective_value(&self, x: &[Rational]) -> Rational {
        self.objective.iter().map(|(c, v)| v * &x[*c]).sum()
    }

    pub fn solve(&self) -> LpOutcome {
        self.solve_with_stats().0
    }

    pub fn solve_with_stats(&self) -> (LpOutcome, LpStats) {
        let mut t = Tableau::new(self);
        let mut stats = LpStats { rows: self.rows.len(), cols: self.n_cols, ..LpStats::default() };
        // phase 1: minimise the sum of artificials
        let mut cost = vec![Q::zero(); self.n_cols];
        for row in &t.rows {
            for (c, v) in row {
                cost[*c as usize] = cost[*c as usize].sub(v);
            }
        }
        let mut obj = t.rhs.iter().fold(Q::zero(), |acc, r| acc.sub(r));
        t.run(&mut cost, &mut obj, &mut stats);
        // obj holds -(phase-1 value)
        if !obj.is_zero() {
            return (LpOutcome::Infeasible, stats);
        }
        stats.redundant_rows = t.drive_out_artificials();
        // phase 2
        let mut cost = vec![Q::zero(); self.n_cols];
        for (c, v) in &self.objective {
            cost[*c] = Q::from_rational(v);
        }
        let mut obj = Q::zero();
        for (i, &b) in t.basis.iter().enumerate() {
            let cb = cost[b].clone();
            if cb.is_zero() {
                continue;
            }
            for (c, v) in &t.rows[i] {
                cost[*c as usize] = cost[*c as usize].sub_mul(&cb, v);
            }
            obj = obj.sub_mul(&cb, &t.rhs[i]);
        }
        if !t.run(&mut cost, &mut obj, &mut stats) {
            return (LpOutcome::Unbounded, stats);
        }
        let mut x = vec![Rational::zero(); self.n_cols];
        for (i, &b) in t.basis.iter().enumerate() {
            x[b] = t.rhs[i].to_rational();
        }
        let value = -obj.to_rational();
        debug_assert!(self.is_feasible_point(&x));
        debug_assert_eq!(self.objective_value(&x), value);
        (LpOutcome::Optimal { value, x }, stats)
    }
}

const ARTIFICIAL: usize = usize::MAX;
/// Consecutive degenerate pivots tolerated before the perturbation is used.
const DEGENERATE_STREAK: usize = 20;
/// Degenerate pivots under perturbation before falling back to Bland's rule
/// (a safeguard against ties in the random perturbation).
const BLAND_AFTER: usize = 5000;

/// The right-hand side is carried as `rhs + ε·pert` for an infinitesimal
/// `ε > 0` and a random positive `pert` (a symbolic perturbation). The ratio
/// test compares lexicographically, so the exact part `rhs` evolves like an
/// ordinary simplex while degenerate stalling is avoided.
struct Tableau {
    n_cols: usize,
    rows: Vec<Vec<(u32, Q)>>,
    rhs: Vec<Q>,
    pert: Vec<Q>,
    seed: u64,
    basis: Vec<usize>,
    /// row index of each basic column
    basic_row: Vec<usize>,
    /// rows touching each column (superset; entries may have been cancelled)
    col_rows: Vec<Vec<u32>>,
}

impl Tableau {
    fn new(lp: &LinearProgram) -> Self {
        let mut rows = Vec::with_capacity(lp.rows.len());
        let mut rhs = Vec::with_capacity(lp.rows.len());
        let mut col_rows = vec![Vec::new(); lp.n_cols];
        for (i, (coefs, b)) in lp.rows.iter().enumerate() {
            let flip = b.is_negative();
            let row: Vec<(u32, Q)> = coefs
                .iter()
                .map(|(c, v)| {
                    col_rows[*c].push(i as u32);
                    let q = Q::from_rational(v);
                    (*c as u32, if flip { q.neg() } else { q })
                })
                .collect();
            rows.push(row);
            rhs.push(if flip { Q::from_rational(&-b) } else { Q::from_rational(b) });
        }
        Tableau {
            n_cols: lp.n_cols,
            pert: vec![Q::zero(); rows.len()],
            seed: 0x9E37_79B9_7F4A_7C15,
            basis: vec![ARTIFICIAL; rows.len()],
            basic_row: vec![usize::MAX; lp.n_cols],
            rows,
            rhs,
            col_rows,
        }
    }

    /// Replaces the perturbation by fresh positive values; valid whenever the
    /// basis is feasible for the exact right-hand side.
    fn reperturb(&mut self) {
        for p in self.pert.iter_mut() {
            // xorshift64*
            self.seed ^= self.seed >> 12;
            self.seed ^= self.seed << 25;
            self.seed ^= self.seed >> 27;
            let r = self.seed.wrapping_mul(0x2545_F491_4F6C_DD1D);
            *p = Q::Small(((r >> 44) as i64) + 1, 1);
        }
    }

    fn entry(&self, row: usize, col: usize) -> Option<&Q> {
        let r = &self.rows[row];
        r.binary_search_by_key(&(col as u32), |(c, _)| *c).ok().map(|p| &r[p].1)
    }

    /// Runs simplex iterations on reduced costs `cost` and objective `obj`
    /// (holding minus the current value). Returns `false` when unbounded.
    fn run(&mut self, cost: &mut [Q], obj: &mut Q, stats: &mut LpStats) -> bool {
        let mut streak = 0usize;
        let mut lex = false;
        let mut lex_pivots = 0usize;
        loop {
            if !lex && streak >= DEGENERATE_STREAK {
                // stalled: switch on the symbolic perturbation
                self.reperturb();
                lex = true;
                lex_pivots = 0;
            }
            let bland = lex && lex_pivots >= BLAND_AFTER;
            let entering = if bland {
                (0..self.n_cols).find(|&j| cost[j].is_negative())
            } else {
                let mut best: Option<usize> = None;
                for j in 0..self.n_cols {
                    if cost[j].is_negative() && best.is_none_or(|b| cost[j].cmp_q(&cost[b]) == Ordering::Less) {
                        best = Some(j);
                    }
                }
                best
            };
            let Some(e) = entering else { return true };
            // ratio test; ties broken by smallest basic column (artificials first)
            let mut leave: Option<(usize, Q, Q)> = None;
            let mut candidates = core::mem::take(&mut self.col_rows[e]);
            candidates.sort_unstable();
            candidates.dedup();
            candidates.retain(|&i| self.entry(i as usize, e).is_some());
            for &i in &candidates {
                let i = i as usize;
                let Some(a) = self.entry(i, e) else { continue };
                if !a.is_positive() {
                    continue;
                }
                let ratio = self.rhs[i].div(a);
                let better = match &leave {
                    None => true,
                    Some((li, lr, lp)) => match ratio.cmp_q(lr) {
                        Ordering::Less => true,
                        Ordering::Equal if lex => match self.pert[i].div(a).cmp_q(lp) {
                            Ordering::Less => true,
                            Ordering::Equal => basis_key(self.basis[i]) < basis_key(self.basis[*li]),
                            Ordering::Greater => false,
                        },
                        Ordering::Equal => basis_key(self.basis[i]) < basis_key(self.basis[*li]),
                        Ordering::Greater => false,
                    },
                };
                if better {
                    let pr = if lex { self.pert[i].div(a) } else { Q::zero() };
                    leave = Some((i, ratio, pr));
                }
            }
            self.col_rows[e] = candidates;
            let Some((r, ratio, _)) = leave else { return false };
            if ratio.is_zero() {
                streak += 1;
                lex_pivots += 1;
            } else {
                streak = 0;
                lex = false;
            }
            stats.pivots += 1;
            if bland {
                stats.bland_pivots += 1;
            }
            self.pivot(r, e, Some((cost, obj)));
        }
    }

    fn pivot(&mut self, r: usize, e: usize, objective: Option<(&mut [Q], &mut Q)>) {
        let pv = self.entry(r, e).expect("pivot entry").clone();
        if !(matches!(pv, Q::Small(1, 1))) {
            for (_, v) in self.rows[r].iter_mut() {
                *v = v.div(&pv);
            }
            self.rhs[r] = self.rhs[r].div(&pv);
            self.pert[r] = self.pert[r].div(&pv);
        }
        let prow = core::mem::take(&mut self.rows[r]);
        let prhs = self.rhs[r].clone();
        let ppert = self.pert[r].clone();
        let touching = core::mem::take(&mut self.col_rows[e]);
        for &i in &touching {
            let i = i as usize;
            if i == r {
                continue;
            }
            let Some(f) = self.entry(i, e).cloned() else { continue };
            let old = core::mem::take(&mut self.rows[i]);
            let mut merged = Vec::with_capacity(old.len() + prow.len());
            let (mut a, mut b) = (0, 0);
            while a < old.len() || b < prow.len() {
                let ca = old.get(a).map(|x| x.0).unwrap_or(u32::MAX);
                let cb = prow.get(b).map(|x| x.0).unwrap_or(u32::MAX);
                match ca.cmp(&cb) {
                    Ordering::Less => {
                        merged.push(old[a].clone());
                        a += 1;
                    }
                    Ordering::Greater => {
                        let v = Q::zero().sub_mul(&f, &prow[b].1);
                        self.col_rows[cb as usize].push(i as u32);
                        merged.push((cb, v));
                        b += 1;
                    }
                    Ordering::Equal => {
                        let v = old[a].1.sub_mul(&f, &prow[b].1);
                        if !v.is_zero() {
                            merged.push((ca, v));
                        }
                        a += 1;
                        b += 1;
                    }
                }
            }
            self.rows[i] = merged;
            self.rhs[i] = self.rhs[i].sub_mul(&f, &prhs);
            self.pert[i] = self.pert[i].sub_mul(&f, &ppert);
        }
        if let Some((cost, obj)) = objective {
            let f = cost[e].clone();
            if !f.is_zero() {
                for (c, v) in &prow {
                    cost[*c as usize] = cost[*c as usize].sub_mul(&f, v);
                }
                *obj = obj.sub_mul(&f, &prhs);
            }
        }
        self.rows[r] = prow;
        self.col_rows[e] = vec![r as u32];
        let old = self.basis[r];
        if old != ARTIFICIAL {
            self.basic_row[old] = usize::MAX;
        }
        self.basis[r] = e;
        self.basic_row[e] = r;
    }

    /// Pivots zero-level artificials out of the basis; deletes rows that are
    /// redundant. Returns the number of deleted rows.
    fn drive_out_artificials(&mut self) -> usize {
        let mut removed = Vec::new();
        for r in 0..self.rows.len() {
            if self.basis[r] != ARTIFICIAL {
                continue;
            }
            debug_assert!(self.rhs[r].is_zero());
            let col = self.rows[r].iter().find(|(_, v)| !v.is_zero()).map(|(c, _)| *c as usize);
            match col {
                Some(c) => self.pivot(r, c, None),
                None => removed.push(r),
            }
        }
        if removed.is_empty() {
            return 0;
        }
        let keep: Vec<usize> = (0..self.rows.len()).filter(|r| !removed.contains(r)).collect();
        let mut remap = vec![usize::MAX; self.rows.len()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        self.rows = keep.iter().map(|&r| core::mem::take(&mut self.rows[r])).collect();
        self.rhs = keep.iter().map(|&r| self.rhs[r].clone()).collect();
        self.pert = keep.iter().map(|&r| self.pert[r].clone()).collect();
        self.basis = keep.iter().map(|&r| self.basis[r]).collect();
        for (i, &b) in self.basis.iter().enumerate() {
            self.basic_row[b] = i;
        }
        for list in self.col_rows.iter_mut() {
            let mut l: Vec<u32> = list
                .iter()
                .filter_map(|&r| {
                    let m = remap[r as usize];
                    (m != usize::MAX).then_some(m as u32)
                })
                .collect();
            l.sort_unstable();
            l.dedup();
            *list = l;
        }
        removed.len()
    }
}

fn basis_key(b: usize) -> (u8, usize) {
    if b == ARTIFICIAL {
        (0, 0)
    } else {
        (1, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::{rat, ratio};
    use proptest::prelude::*;

    #[test]
    fn small_rational_arithmetic() {
        let a = Q::Small(1, 3);
        let b = Q::Small(1, 6);
        assert_eq!(a.add(&b).to_rational(), ratio(1, 2));
        assert_eq!(a.sub_mul(&Q::int(2), &b).to_rational(), rat(0));
        let huge = Q::Small(i64::MAX, 1);
        assert_eq!(huge.add(&huge).to_rational(), Rational::from_integer(BigInt::from(i64::MAX) * 2));
        assert_eq!(huge.mul(&huge).div(&huge).to_rational(), Rational::from_integer(BigInt::from(i64::MAX)));
        assert_eq!(Q::Small(i64::MIN, 1).neg().to_rational(), -Rational::from_integer(BigInt::from(i64::MIN)));
    }

    #[test]
    fn tiny_lp() {
        // min -x - y  s.t. x + 2y + s1 = 4, 3x + y + s2 = 6
        let mut lp = LinearProgram::new(4);
        lp.add_row(vec![(0, rat(1)), (1, rat(2)), (2, rat(1))], rat(4));
        lp.add_row(vec![(0, rat(3)), (1, rat(1)), (3, rat(1))], rat(6));
        lp.set_objective(vec![(0, rat(-1)), (1, rat(-1))]);
        match lp.solve() {
            LpOutcome::Optimal { value, x } => {
                assert_eq!(value, ratio(-14, 5));
                assert_eq!(x[0], ratio(8, 5));
                assert_eq!(x[1], ratio(6, 5));
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.add_row(vec![(0, rat(1))], rat(-1));
        assert_eq!(lp.solve(), LpOutcome::Infeasible);
        let mut lp = LinearProgram::new(2);
        lp.add_row(vec![(0, rat(1)), (1, rat(-1))], rat(0));
        lp.set_objective(vec![(0, rat(-1))]);
        assert_eq!(lp.solve(), LpOutcome::Unbounded);
    }

    #[test]
    fn redundant_rows_are_removed() {
        let mut lp = LinearProgram::new(2);
        lp.add_row(vec![(0, rat(1)), (1, rat(1))], rat(1));
        lp.add_row(vec![(0, rat(2)), (1, rat(2))], rat(2));
        lp.set_objective(vec![(0, rat(1))]);
        let (out, stats) = lp.solve_with_stats();
        assert_eq!(out, LpOutcome::Optimal { value: rat(0), x: vec![rat(0), rat(1)] });
        assert_eq!(stats.redundant_rows, 1);
    }

    #[test]
    fn empty_program() {
        let lp = LinearProgram::new(0);
        assert_eq!(lp.solve(), LpOutcome::Optimal { value: rat(0), x: vec![] });
    }

    /// Brute-force optimum over all bases of a small dense program.
    fn vertex_oracle(a: &[Vec<i64>], b: &[i64], c: &[i64]) -> Option<Rational> {
        let m = a.len();
        let n = c.len();
        let mut best: Option<Rational> = None;
        let mut subset = vec![0usize; 0];
        fn rec(start: usize, n: usize, k: usize, subset: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if subset.len() == k {
                out.push(subset.clone());
                return;
            }
            for j in start..n {
                subset.push(j);
                rec(j + 1, n, k, subset, out);
                subset.pop();
            }
        }
        let mut all = Vec::new();
        for k in 0..=m.min(n) {
            rec(0, n, k, &mut subset, &mut all);
        }
        for cols in all {
            // least-squares-free: solve A_cols x = b exactly if consistent
            let mut mat: Vec<Vec<Rational>> = (0..m)
                .map(|i| {
                    let mut row: Vec<Rational> = cols.iter().map(|&j| rat(a[i][j])).collect();
                    row.push(rat(b[i]));
                    row
                })
                .collect();
            let k = cols.len();
            let mut piv_row = 0;
            let mut pivots = Vec::new();
            for col in 0..k {
                let Some(p) = (piv_row..m).find(|&r| !mat[r][col].is_zero()) else { continue };
                mat.swap(piv_row, p);
                let pv = mat[piv_row][col].clone();
                for x in mat[piv_row].iter_mut() {
                    *x = &*x / &pv;
                }
                for r in 0..m {
                    if r != piv_row && !mat[r][col].is_zero() {
                        let f = mat[r][col].clone();
                        let pivot = mat[piv_row].clone();
                        for (x, y) in mat[r].iter_mut().zip(&pivot).take(k + 1) {
                            *x -= &f * y;
                        }
                    }
                }
                pivots.push(col);
                piv_row += 1;
            }
            if pivots.len() != k {
                continue;
            }
            if (piv_row..m).any(|r| !mat[r][k].is_zero()) {
                continue;
            }
            let mut x = vec![rat(0); n];
            for (r, &col) in pivots.iter().enumerate() {
                x[cols[col]] = mat[r][k].clone();
            }
            if x.iter().any(|v| v.is_negative()) {
                continue;
            }
            let val: Rational = (0..n).map(|j| rat(c[j]) * &x[j]).sum();
            if best.as_ref().is_none_or(|b| val < *b) {
                best = Some(val);
            }
        }
        best
    }

    proptest! {
        #[test]
        fn matches_vertex_enumeration(
            a in proptest::collection::vec(proptest::collection::vec(-3i64..4, 5), 1..4),
            b in proptest::collection::vec(0i64..5, 3),
            c in proptest::collection::vec(0i64..5, 5),
        ) {
            // nonnegative costs keep the program bounded
            let m = a.len();
            let mut lp = LinearProgram::new(5);
            for i in 0..m {
                lp.add_row((0..5).map(|j| (j, rat(a[i][j]))).collect(), rat(b[i]));
            }
            lp.set_objective((0..5).map(|j| (j, rat(c[j]))).collect());
            let oracle = vertex_oracle(&a, &b[..m], &c);
            match lp.solve() {
                LpOutcome::Optimal { value, x } => {
                    prop_assert!(lp.is_feasible_point(&x));
                    prop_assert_eq!(Some(value), oracle);
                }
                LpOutcome::Infeasible => prop_assert!(oracle.is_none()),
                LpOutcome::Unbounded => prop_assert!(false, "bounded program reported unbounded"),
            }
        }
    }
}
