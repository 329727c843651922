//! Operations on a finite domain, polymorphisms, fractional polymorphisms,
//! `supp(Γ)`, cores, weak near-unanimity checks and the crisp language that
//! kills a finite set of operations.
//!
//! Fractional polymorphisms are found with the exact simplex, so every
//! "optimum > 0" decision is a sign test on an exact rational.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_traits::{One, Zero};

use crate::caps::{sat_pow, Caps};
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpOutcome};
use crate::model::{decode_tuple, encode_tuple, Instance, Language, WeightedRelation};
use crate::value::{ExtValue, Rational};

/// An `m`-ary operation `f: D^m → D`, tabulated in lexicographic argument order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Operation {
    name: String,
    arity: usize,
    domain: usize,
    table: Vec<usize>,
}

impl Operation {
    pub fn new(name: impl Into<String>, arity: usize, domain: usize, table: Vec<usize>) -> Result<Self> {
        if arity == 0 || domain == 0 {
            return Err(Error::Arity("operations need arity and domain at least 1".into()));
        }
        let size = sat_pow(domain as u128, arity as u128);
        if size != table.len() as u128 {
            return Err(Error::Arity(format!("operation table has {} entries, expected {size}", table.len())));
        }
        if let Some(v) = table.iter().find(|&&v| v >= domain) {
            return Err(Error::DomainMismatch(format!("operation value {v} outside domain of size {domain}")));
        }
        Ok(Operation { name: name.into(), arity, domain, table })
    }

    pub fn from_fn(name: impl Into<String>, arity: usize, domain: usize, f: impl Fn(&[usize]) -> usize) -> Result<Self> {
        let size = sat_pow(domain as u128, arity as u128);
        if size > Caps::default().table {
            return Err(Error::cap("operation table", size, Caps::default().table));
        }
        let table = (0..size as usize).map(|c| f(&decode_tuple(c, domain, arity))).collect();
        Self::new(name, arity, domain, table)
    }

    pub fn projection(arity: usize, domain: usize, i: usize) -> Self {
        assert!(i < arity);
        Self::from_fn(format!("proj{i}"), arity, domain, |t| t[i]).expect("projection")
    }

    pub fn identity(domain: usize) -> Self {
        Self::from_fn("id", 1, domain, |t| t[0]).expect("identity")
    }

    pub fn constant(arity: usize, domain: usize, c: usize) -> Self {
        Self::from_fn(format!("const{c}"), arity, domain, |_| c).expect("constant")
    }

    pub fn min(domain: usize) -> Self {
        Self::from_fn("min", 2, domain, |t| t[0].min(t[1])).expect("min")
    }

    pub fn max(domain: usize) -> Self {
        Self::from_fn("max", 2, domain, |t| t[0].max(t[1])).expect("max")
    }

    /// Ternary majority; returns the first argument when all three differ.
    pub fn majority(domain: usize) -> Self {
        Self::from_fn("majority", 3, domain, |t| if t[1] == t[2] { t[1] } else { t[0] }).expect("majority")
    }

    /// Ternary minority; returns the first argument when all three differ.
    pub fn minority(domain: usize) -> Self {
        Self::from_fn("minority", 3, domain, |t| {
            if t[0] == t[1] {
                t[2]
            } else if t[0] == t[2] {
                t[1]
            } else {
                t[0]
            }
        })
        .expect("minority")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn domain(&self) -> usize {
        self.domain
    }

    pub fn table(&self) -> &[usize] {
        &self.table
    }

    pub fn apply(&self, args: &[usize]) -> usize {
        debug_assert_eq!(args.len(), self.arity);
        self.table[encode_tuple(args, self.domain)]
    }

    /// Coordinatewise application to `m` tuples of equal length.
    pub fn apply_columns(&self, tuples: &[&[usize]]) -> Vec<usize> {
        let r = tuples.first().map_or(0, |t| t.len());
        (0..r)
            .map(|j| {
                let col: Vec<usize> = tuples.iter().map(|t| t[j]).collect();
                self.apply(&col)
            })
            .collect()
    }

    pub fn is_idempotent(&self) -> bool {
        (0..self.domain).all(|a| self.apply(&vec![a; self.arity]) == a)
    }

    /// Labels attained by the operation.
    pub fn image(&self) -> Vec<usize> {
        let mut seen = vec![false; self.domain];
        for &v in &self.table {
            seen[v] = true;
        }
        (0..self.domain).filter(|&a| seen[a]).collect()
    }

    /// Unary bijection test (an `m`-ary operation is never treated as bijective).
    pub fn is_bijective(&self) -> bool {
        self.arity == 1 && self.image().len() == self.domain
    }

    /// Weak near-unanimity identities `f(y,x,…,x) = f(x,y,x,…,x) = … = f(x,…,x,y)`
    /// for all `x, y`; idempotency is additionally required when asked.
    pub fn is_wnu(&self, idempotent: bool) -> bool {
        if self.arity < 2 || (idempotent && !self.is_idempotent()) {
            return false;
        }
        let m = self.arity;
        for x in 0..self.domain {
            for y in 0..self.domain {
                let mut args = vec![x; m];
                args[0] = y;
                let first = self.apply(&args);
                for p in 1..m {
                    args[p - 1] = x;
                    args[p] = y;
                    if self.apply(&args) != first {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// `g(x_0,…,x_{m-1}) = f(x_{π(0)},…,x_{π(m-1)})`.
    pub fn permute_args(&self, perm: &[usize]) -> Self {
        let map = permutation_index(self.arity, self.domain, perm);
        Operation {
            name: self.name.clone(),
            arity: self.arity,
            domain: self.domain,
            table: map.iter().map(|&c| self.table[c]).collect(),
        }
    }

    /// `self ∘ inner` for unary operations.
    pub fn compose_unary(&self, inner: &Operation) -> Result<Self> {
        if self.arity != 1 || inner.arity != 1 || self.domain != inner.domain {
            return Err(Error::Arity("unary composition needs unary operations on one domain".into()));
        }
        Ok(Operation {
            name: format!("{}∘{}", self.name, inner.name),
            arity: 1,
            domain: self.domain,
            table: inner.table.iter().map(|&v| self.table[v]).collect(),
        })
    }

    /// Renames labels by the bijection `perm`: the result is `perm ∘ f ∘ perm⁻¹`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let mut inv = vec![usize::MAX; self.domain];
        for (a, &b) in perm.iter().enumerate() {
            if b >= self.domain || inv[b] != usize::MAX {
                return Err(Error::DomainMismatch("not a permutation".into()));
            }
            inv[b] = a;
        }
        Self::from_fn(self.name.clone(), self.arity, self.domain, |t| {
            let orig: Vec<usize> = t.iter().map(|&b| inv[b]).collect();
            perm[self.apply(&orig)]
        })
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[", self.name)?;
        for (i, v) in self.table.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str("]")
    }
}

/// For each code `c` of `x`, the code of `(x_{π(0)},…,x_{π(m-1)})`.
fn permutation_index(m: usize, d: usize, perm: &[usize]) -> Vec<usize> {
    let size = d.pow(m as u32);
    (0..size)
        .map(|c| {
            let x = decode_tuple(c, d, m);
            let y: Vec<usize> = perm.iter().map(|&p| x[p]).collect();
            encode_tuple(&y, d)
        })
        .collect()
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; m], &mut out);
    out
}

/// A probability distribution over `m`-ary operations with exact weights.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FractionalOperation {
    arity: usize,
    domain: usize,
    weights: Vec<(Operation, Rational)>,
}

impl FractionalOperation {
    /// Weights must be positive and sum to one; operations must be distinct.
    pub fn new(weights: Vec<(Operation, Rational)>) -> Result<Self> {
        let Some((first, _)) = weights.first() else {
            return Err(Error::Value("empty fractional operation".into()));
        };
        let (arity, domain) = (first.arity, first.domain);
        let mut total = Rational::zero();
        for (i, (op, w)) in weights.iter().enumerate() {
            if op.arity != arity || op.domain != domain {
                return Err(Error::Arity("fractional operation mixes arities or domains".into()));
            }
            if *w <= Rational::zero() {
                return Err(Error::Value(format!("non-positive weight {w}")));
            }
            if weights[..i].iter().any(|(o, _)| o.table == op.table) {
                return Err(Error::Value(format!("operation {op} listed twice")));
            }
            total += w;
        }
        if !total.is_one() {
            return Err(Error::Value(format!("weights sum to {total}, not 1")));
        }
        Ok(FractionalOperation { arity, domain, weights })
    }

    pub fn point_mass(op: Operation) -> Self {
        FractionalOperation { arity: op.arity, domain: op.domain, weights: vec![(op, Rational::one())] }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn domain(&self) -> usize {
        self.domain
    }

    pub fn weights(&self) -> &[(Operation, Rational)] {
        &self.weights
    }

    pub fn support(&self) -> impl Iterator<Item = &Operation> {
        self.weights.iter().map(|(o, _)| o)
    }

    /// Total weight of the operations satisfying `pred`.
    pub fn mass(&self, pred: impl Fn(&Operation) -> bool) -> Rational {
        self.weights.iter().filter(|(o, _)| pred(o)).map(|(_, w)| w.clone()).sum()
    }
}

/// Why a fractional operation fails to be a fractional polymorphism.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FpolViolation {
    /// A support operation maps feasible tuples outside `feas(φ)`.
    Support { relation: String, operation: Operation, tuples: Vec<Vec<usize>> },
    /// `E[φ(f(x̄))] > avg φ(x̄_i)`.
    Inequality { relation: String, tuples: Vec<Vec<usize>>, expected: Rational, average: Rational },
}

impl FpolViolation {
    pub fn tuples(&self) -> &[Vec<usize>] {
        match self {
            FpolViolation::Support { tuples, .. } | FpolViolation::Inequality { tuples, .. } => tuples,
        }
    }
}

/// Feasible codes of `φ` and the number of `m`-tuples drawn from them.
fn feasible_power(phi: &WeightedRelation, m: usize, caps: &Caps, what: &'static str) -> Result<Vec<usize>> {
    let feas = phi.feasible_codes();
    let count = sat_pow(feas.len() as u128, m as u128);
    if count > caps.tuple_combinations {
        return Err(Error::cap(what, count, caps.tuple_combinations));
    }
    Ok(feas)
}

/// Advances an index odometer over `0..base`; non-decreasing sequences only when `sorted`.
fn next_index(idx: &mut [usize], base: usize, sorted: bool) -> bool {
    for p in (0..idx.len()).rev() {
        if idx[p] + 1 < base {
            idx[p] += 1;
            let v = if sorted { idx[p] } else { 0 };
            for q in idx[p + 1..].iter_mut() {
                *q = v;
            }
            return true;
        }
    }
    false
}

/// Column codes `encode(x_1[j],…,x_m[j])` of the matrix whose rows are the tuples.
fn column_codes(rows: &[Vec<usize>], d: usize, r: usize) -> Vec<usize> {
    (0..r)
        .map(|j| rows.iter().fold(0usize, |acc, t| acc * d + t[j]))
        .collect()
}

fn image_code(op_table: &[usize], cols: &[usize], d: usize) -> usize {
    cols.iter().fold(0usize, |acc, &c| acc * d + op_table[c])
}

/// Is `f` a polymorphism of `φ`?
pub fn is_polymorphism(f: &Operation, phi: &WeightedRelation, caps: &Caps) -> Result<bool> {
    Ok(polymorphism_witness(f, phi, caps)?.is_none())
}

/// The lexicographically first `m`-tuple of feasible tuples that `f` maps outside `feas(φ)`.
pub fn polymorphism_witness(f: &Operation, phi: &WeightedRelation, caps: &Caps) -> Result<Option<Vec<Vec<usize>>>> {
    if f.domain != phi.domain() {
        return Err(Error::DomainMismatch(format!(
            "operation on {} labels, relation {} on {}",
            f.domain,
            phi.name(),
            phi.domain()
        )));
    }
    let (d, r, m) = (f.domain, phi.arity(), f.arity);
    let feas = feasible_power(phi, m, caps, "polymorphism tuple combinations")?;
    if feas.is_empty() {
        return Ok(None);
    }
    let tuples: Vec<Vec<usize>> = feas.iter().map(|&c| decode_tuple(c, d, r)).collect();
    let mut idx = vec![0usize; m];
    loop {
        let rows: Vec<Vec<usize>> = idx.iter().map(|&i| tuples[i].clone()).collect();
        let cols = column_codes(&rows, d, r);
        if !phi.value_at(image_code(&f.table, &cols, d)).is_finite() {
            return Ok(Some(rows));
        }
        if !next_index(&mut idx, feas.len(), false) {
            return Ok(None);
        }
    }
}

/// Result of [`check_fractional_polymorphism`].
pub type FpolCheck = core::result::Result<(), FpolViolation>;

/// Checks Definition-style membership of `ω` in `fpol(Γ)` exactly.
pub fn check_fractional_polymorphism(omega: &FractionalOperation, lang: &Language, caps: &Caps) -> Result<FpolCheck> {
    if omega.domain != lang.domain() {
        return Err(Error::DomainMismatch("fractional operation and language domains differ".into()));
    }
    let (d, m) = (omega.domain, omega.arity);
    for phi in lang.relations() {
        let r = phi.arity();
        let feas = feasible_power(phi, m, caps, "fractional polymorphism tuple combinations")?;
        if feas.is_empty() {
            continue;
        }
        let tuples: Vec<Vec<usize>> = feas.iter().map(|&c| decode_tuple(c, d, r)).collect();
        let mut idx = vec![0usize; m];
        let m_rat = Rational::from_integer(m.into());
        loop {
            let rows: Vec<Vec<usize>> = idx.iter().map(|&i| tuples[i].clone()).collect();
            let cols = column_codes(&rows, d, r);
            let mut expected = Rational::zero();
            for (op, w) in &omega.weights {
                match phi.value_at(image_code(&op.table, &cols, d)) {
                    ExtValue::Finite(v) => expected += w * v,
                    ExtValue::Infinite => {
                        return Ok(Err(FpolViolation::Support {
                            relation: phi.name().to_string(),
                            operation: op.clone(),
                            tuples: rows,
                        }))
                    }
                }
            }
            let average: Rational = idx
                .iter()
                .map(|&i| phi.value_at(feas[i]).finite().expect("feasible").clone())
                .sum::<Rational>()
                / &m_rat;
            if expected > average {
                return Ok(Err(FpolViolation::Inequality {
                    relation: phi.name().to_string(),
                    tuples: rows,
                    expected,
                    average,
                }));
            }
            if !next_index(&mut idx, feas.len(), false) {
                break;
            }
        }
    }
    Ok(Ok(()))
}

/// Every `m`-ary polymorphism of `Γ`, found by backtracking over the operation
/// table (entries in code order, each check fired when its last entry is set).
/// Fails when more than `caps.operations` polymorphisms exist.
pub fn polymorphisms(lang: &Language, m: usize, caps: &Caps) -> Result<Vec<Operation>> {
    if m == 0 {
        return Err(Error::Arity("operations need arity at least 1".into()));
    }
    let d = lang.domain();
    let size = sat_pow(d as u128, m as u128);
    if size > Caps::default().table {
        return Err(Error::cap("operation table", size, Caps::default().table));
    }
    let size = size as usize;
    // checks[e]: (relation, column codes) completed by entry e
    let mut checks: Vec<Vec<(usize, Vec<usize>)>> = vec![Vec::new(); size];
    let mut total: u128 = 0;
    for (ri, phi) in lang.relations().iter().enumerate() {
        let feas = phi.feasible_codes();
        if feas.len() == phi.table().len() {
            continue;
        }
        total = total.saturating_add(sat_pow(feas.len() as u128, m as u128));
        if total > caps.tuple_combinations {
            return Err(Error::cap("polymorphism tuple combinations", total, caps.tuple_combinations));
        }
        if feas.is_empty() {
            continue;
        }
        let tuples: Vec<Vec<usize>> = feas.iter().map(|&c| decode_tuple(c, d, phi.arity())).collect();
        let mut idx = vec![0usize; m];
        loop {
            let rows: Vec<Vec<usize>> = idx.iter().map(|&i| tuples[i].clone()).collect();
            let cols = column_codes(&rows, d, phi.arity());
            let last = *cols.iter().max().expect("positive arity");
            checks[last].push((ri, cols));
            if !next_index(&mut idx, feas.len(), false) {
                break;
            }
        }
    }
    for list in checks.iter_mut() {
        list.sort();
        list.dedup();
    }
    let mut out = Vec::new();
    let mut table = vec![0usize; size];
    let mut nodes: u128 = 0;
    let rels = lang.relations();
    // iterative depth-first search; `table[e]` is the value being tried at depth e
    let mut e = 0usize;
    let mut fresh = true;
    loop {
        if fresh {
            table[e] = 0;
        } else {
            table[e] += 1;
        }
        if table[e] >= d {
            if e == 0 {
                break;
            }
            e -= 1;
            fresh = false;
            continue;
        }
        nodes += 1;
        if nodes > caps.tuple_combinations {
            return Err(Error::cap("polymorphism search nodes", nodes, caps.tuple_combinations));
        }
        let ok = checks[e]
            .iter()
            .all(|(ri, cols)| rels[*ri].value_at(image_code(&table, cols, d)).is_finite());
        if !ok {
            fresh = false;
            continue;
        }
        if e + 1 == size {
            out.push(Operation { name: format!("pol{}", out.len()), arity: m, domain: d, table: table.clone() });
            if out.len() as u128 > caps.operations {
                return Err(Error::cap("polymorphisms", sat_pow(d as u128, size as u128), caps.operations));
            }
            fresh = false;
            continue;
        }
        e += 1;
        fresh = true;
    }
    Ok(out)
}

/// Candidate operations with uniform weight inside each group. Groups are
/// argument-permutation orbits when enumerating all polymorphisms, singletons
/// for user-supplied candidates.
struct Groups {
    groups: Vec<Vec<Operation>>,
    symmetric: bool,
}

fn candidate_groups(lang: &Language, m: usize, candidates: Option<&[Operation]>, caps: &Caps) -> Result<Groups> {
    match candidates {
        Some(cands) => {
            let mut groups = Vec::new();
            for f in cands {
                if f.arity != m || f.domain != lang.domain() {
                    return Err(Error::Arity(format!("candidate {} has the wrong arity or domain", f.name)));
                }
                let mut pol = true;
                for phi in lang.relations() {
                    if !is_polymorphism(f, phi, caps)? {
                        pol = false;
                        break;
                    }
                }
                if pol && !groups.iter().any(|g: &Vec<Operation>| g[0].table == f.table) {
                    groups.push(vec![f.clone()]);
                }
            }
            Ok(Groups { groups, symmetric: false })
        }
        None => {
            let pols = polymorphisms(lang, m, caps)?;
            let perms: Vec<Vec<usize>> = permutations(m);
            let maps: Vec<Vec<usize>> = perms.iter().map(|p| permutation_index(m, lang.domain(), p)).collect();
            let mut orbits: BTreeMap<Vec<usize>, Vec<Vec<usize>>> = BTreeMap::new();
            for f in &pols {
                let images: Vec<Vec<usize>> = maps.iter().map(|map| map.iter().map(|&c| f.table[c]).collect()).collect();
                let canon = images.iter().min().expect("identity permutation").clone();
                orbits.entry(canon).or_insert_with(|| {
                    let mut members = images;
                    members.sort();
                    members.dedup();
                    members
                });
            }
            let groups = orbits
                .into_values()
                .map(|members| {
                    members
                        .into_iter()
                        .map(|table| Operation { name: String::new(), arity: m, domain: lang.domain(), table })
                        .collect()
                })
                .collect();
            Ok(Groups { groups, symmetric: true })
        }
    }
}

/// Solves `max Σ_{G ∈ target} ω(G)` over fractional polymorphisms supported on
/// the groups. `None` when no fractional polymorphism is supported there.
fn fpol_lp(lang: &Language, m: usize, g: &Groups, target: &[bool], caps: &Caps) -> Result<Option<(Rational, FractionalOperation)>> {
    if g.groups.is_empty() {
        return Ok(None);
    }
    let d = lang.domain();
    let n_groups = g.groups.len();
    let m_rat = Rational::from_integer(m.into());
    let mut rows: Vec<(Vec<(usize, Rational)>, Rational)> = Vec::new();
    let mut total: u128 = 0;
    for phi in lang.relations() {
        if phi.is_crisp() {
            // polymorphisms already keep every value at 0
            continue;
        }
        let r = phi.arity();
        let feas = phi.feasible_codes();
        total = total.saturating_add(sat_pow(feas.len() as u128, m as u128));
        if total > caps.tuple_combinations {
            return Err(Error::cap("fractional polymorphism tuple combinations", total, caps.tuple_combinations));
        }
        if feas.is_empty() {
            continue;
        }
        let tuples: Vec<Vec<usize>> = feas.iter().map(|&c| decode_tuple(c, d, r)).collect();
        let values: Vec<Rational> = feas.iter().map(|&c| phi.value_at(c).finite().expect("feasible").clone()).collect();
        let mut idx = vec![0usize; m];
        loop {
            let rows_t: Vec<Vec<usize>> = idx.iter().map(|&i| tuples[i].clone()).collect();
            let cols = column_codes(&rows_t, d, r);
            let rhs: Rational = idx.iter().map(|&i| values[i].clone()).sum::<Rational>() / &m_rat;
            let mut coefs = Vec::with_capacity(n_groups);
            let mut binding = false;
            for (gi, group) in g.groups.iter().enumerate() {
                let mut s = Rational::zero();
                for f in group {
                    s += phi.value_at(image_code(&f.table, &cols, d)).finite().expect("polymorphism").clone();
                }
                let c = s / Rational::from_integer(group.len().into());
                if c > rhs {
                    binding = true;
                }
                coefs.push((gi, c));
            }
            if binding {
                rows.push((coefs, rhs));
            }
            if !next_index(&mut idx, feas.len(), g.symmetric) {
                break;
            }
        }
    }
    let mut lp = LinearProgram::new(n_groups + rows.len());
    lp.add_row((0..n_groups).map(|gi| (gi, Rational::one())).collect(), Rational::one());
    for (ri, (mut coefs, rhs)) in rows.into_iter().enumerate() {
        coefs.push((n_groups + ri, Rational::one()));
        lp.add_row(coefs, rhs);
    }
    lp.set_objective((0..n_groups).filter(|&gi| target[gi]).map(|gi| (gi, -Rational::one())).collect());
    match lp.solve() {
        LpOutcome::Optimal { value, x } => {
            let mut weights = Vec::new();
            for (gi, group) in g.groups.iter().enumerate() {
                if x[gi].is_zero() {
                    continue;
                }
                let w = &x[gi] / Rational::from_integer(group.len().into());
                for f in group {
                    weights.push((f.clone(), w.clone()));
                }
            }
            weights.sort_by(|a, b| a.0.table.cmp(&b.0.table));
            for (i, (f, _)) in weights.iter_mut().enumerate() {
                if f.name.is_empty() {
                    f.name = format!("f{i}");
                }
            }
            Ok(Some((-value, FractionalOperation::new(weights)?)))
        }
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Unbounded => unreachable!("weights lie in [0, 1]"),
    }
}

/// Some `m`-ary fractional polymorphism of `Γ` supported on `candidates`
/// (all `m`-ary polymorphisms by default), or `None` when none exists.
pub fn find_fractional_polymorphism(
    lang: &Language,
    m: usize,
    candidates: Option<&[Operation]>,
    caps: &Caps,
) -> Result<Option<FractionalOperation>> {
    let g = candidate_groups(lang, m, candidates, caps)?;
    let target = vec![false; g.groups.len()];
    Ok(fpol_lp(lang, m, &g, &target, caps)?.map(|(_, w)| w))
}

/// A fractional polymorphism with `f` in its support, if `f ∈ supp(Γ)`.
pub fn supp_witness(lang: &Language, f: &Operation, caps: &Caps) -> Result<Option<FractionalOperation>> {
    if f.domain != lang.domain() {
        return Err(Error::DomainMismatch("operation and language domains differ".into()));
    }
    for phi in lang.relations() {
        if !is_polymorphism(f, phi, caps)? {
            return Ok(None);
        }
    }
    let g = candidate_groups(lang, f.arity, None, caps)?;
    let target: Vec<bool> = g.groups.iter().map(|grp| grp.iter().any(|o| o.table == f.table)).collect();
    match fpol_lp(lang, f.arity, &g, &target, caps)? {
        Some((mass, w)) if mass > Rational::zero() => Ok(Some(w)),
        _ => Ok(None),
    }
}

/// `f ∈ supp(Γ)` (exact, per arity).
pub fn supp_membership(lang: &Language, f: &Operation, caps: &Caps) -> Result<bool> {
    Ok(supp_witness(lang, f, caps)?.is_some())
}

/// Outcome of [`compute_core`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoreReport {
    /// The input language was already a core.
    pub is_core: bool,
    /// A unary fractional polymorphism of the input with a non-bijective
    /// operation in its support (first step of the chain).
    pub witness: Option<FractionalOperation>,
    /// Core domain `D′ ⊆ D` in original labels.
    pub core_domain: Vec<usize>,
    /// Composite restriction map `D → D′` (original labels).
    pub map: Vec<usize>,
    /// `Γ[D′]`, relabelled so `core_domain[i] ↦ i`.
    pub core: Language,
}

/// Repeatedly restricts `Γ` along non-bijective unary operations of `supp(Γ)`.
pub fn compute_core(lang: &Language, caps: &Caps) -> Result<CoreReport> {
    let d0 = lang.domain();
    let mut current = lang.clone();
    let mut domain: Vec<usize> = (0..d0).collect();
    let mut map: Vec<usize> = (0..d0).collect();
    let mut witness = None;
    'outer: loop {
        let d = current.domain();
        let count = sat_pow(d as u128, d as u128);
        if count > caps.operations {
            return Err(Error::cap("unary operations", count, caps.operations));
        }
        let g = candidate_groups(&current, 1, None, caps)?;
        // Non-bijective candidates in lexicographic table order; one LP decides each.
        for (gi, grp) in g.groups.iter().enumerate() {
            let f = &grp[0];
            if f.is_bijective() {
                continue;
            }
            let mut target = vec![false; g.groups.len()];
            target[gi] = true;
            let Some((mass, w)) = fpol_lp(&current, 1, &g, &target, caps)? else { continue };
            if mass.is_zero() {
                continue;
            }
            if witness.is_none() {
                witness = Some(w);
            }
            let image = f.image();
            // local label a of `current` is original label domain[a]
            for slot in map.iter_mut() {
                let local = domain.iter().position(|&o| o == *slot).expect("label in domain");
                *slot = domain[f.table[local]];
            }
            domain = image.iter().map(|&a| domain[a]).collect();
            current = current.restrict(&image)?;
            continue 'outer;
        }
        break;
    }
    Ok(CoreReport { is_core: witness.is_none(), witness, core_domain: domain, map, core: current })
}

/// Options for WNU searches.
#[derive(Clone, Debug)]
pub struct WnuOptions {
    /// Require idempotency (the stricter reading); off allows any WNU.
    pub idempotent: bool,
    /// Restrict the search to these candidates instead of all polymorphisms.
    pub candidates: Option<Vec<Operation>>,
}

impl Default for WnuOptions {
    fn default() -> Self {
        WnuOptions { idempotent: true, candidates: None }
    }
}

/// A fractional polymorphism putting positive mass on `m`-ary WNUs, or `None`
/// when `supp(Γ)` has no `m`-ary WNU.
pub fn find_wnu_in_supp(lang: &Language, m: usize, opts: &WnuOptions, caps: &Caps) -> Result<Option<FractionalOperation>> {
    if m < 2 {
        return Err(Error::Arity("WNU arity must be at least 2".into()));
    }
    let g = candidate_groups(lang, m, opts.candidates.as_deref(), caps)?;
    let target: Vec<bool> = g.groups.iter().map(|grp| grp[0].is_wnu(opts.idempotent)).collect();
    let Some(first) = target.iter().position(|&t| t) else {
        return Ok(None);
    };
    if lang.relations().iter().all(|r| r.is_crisp()) {
        // every polymorphism of a crisp language is a fractional polymorphism on its own
        let f = g.groups[first][0].clone().with_name("wnu");
        return Ok(Some(FractionalOperation::point_mass(f)));
    }
    match fpol_lp(lang, m, &g, &target, caps)? {
        Some((mass, w)) if mass > Rational::zero() => Ok(Some(w)),
        _ => Ok(None),
    }
}

/// Per-arity WNU results for `m ∈ {3,…,m_max}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BwcReport {
    pub m_max: usize,
    pub entries: Vec<(usize, Option<FractionalOperation>)>,
}

impl BwcReport {
    /// First arity without a WNU in `supp(Γ)`.
    pub fn first_violation(&self) -> Option<usize> {
        self.entries.iter().find(|(_, w)| w.is_none()).map(|(m, _)| *m)
    }

    pub fn satisfied(&self) -> bool {
        self.first_violation().is_none()
    }

    pub fn verdict(&self) -> String {
        match self.first_violation() {
            None => format!("BWC satisfied up to {}", self.m_max),
            Some(m) => format!("BWC violated at arity {m}"),
        }
    }
}

/// Bounded check of the bounded width condition up to `m_max`.
pub fn bwc_report(lang: &Language, m_max: usize, opts: &WnuOptions, caps: &Caps) -> Result<BwcReport> {
    let mut entries = Vec::new();
    for m in 3..=m_max {
        let mut o = opts.clone();
        if let Some(c) = &opts.candidates {
            o.candidates = Some(c.iter().filter(|f| f.arity == m).cloned().collect());
        }
        entries.push((m, find_wnu_in_supp(lang, m, &o, caps)?));
    }
    Ok(BwcReport { m_max, entries })
}

/// Search bounds for [`kill_operations`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KillBudget {
    pub max_vars: usize,
    pub max_constraints: usize,
    /// Total instances examined per operation.
    pub max_instances: usize,
}

impl Default for KillBudget {
    fn default() -> Self {
        KillBudget { max_vars: 3, max_constraints: 3, max_instances: 100_000 }
    }
}

/// A crisp language `Δ` with `pol(Δ) ∩ F = ∅`: `feas(φ)` for every `φ ∈ Γ`,
/// plus `opt(φ_{I_f})` for each `f ∈ F ∩ pol(Γ)`, where `I_f` is the first
/// `Γ`-instance (by variables, then constraints, then lexicographic choice)
/// whose optimal set is not preserved by `f`.
pub fn kill_operations(lang: &Language, ops: &[Operation], budget: &KillBudget, caps: &Caps) -> Result<Language> {
    let d = lang.domain();
    let mut delta = Language::new(d);
    for phi in lang.relations() {
        delta.add(phi.feas())?;
    }
    for (fi, f) in ops.iter().enumerate() {
        let mut preserved = true;
        for phi in delta.relations() {
            if !is_polymorphism(f, phi, caps)? {
                preserved = false;
                break;
            }
        }
        if !preserved {
            continue;
        }
        let killer = find_killing_instance(lang, f, budget, caps)?.ok_or_else(|| {
            Error::BudgetExhausted(format!("no instance within budget eliminates operation {}", f.name))
        })?;
        let name = format!("kill{fi}_{}", f.name);
        if !delta.relations().iter().any(|r| r.same_table(&killer)) {
            delta.add(killer.with_name(name))?;
        }
    }
    for f in ops {
        let mut killed = false;
        for phi in delta.relations() {
            if !is_polymorphism(f, phi, caps)? {
                killed = true;
                break;
            }
        }
        assert!(killed, "operation {} survived the construction", f.name);
    }
    Ok(delta)
}

fn find_killing_instance(lang: &Language, f: &Operation, budget: &KillBudget, caps: &Caps) -> Result<Option<WeightedRelation>> {
    let d = lang.domain();
    let mut examined = 0usize;
    for n in 1..=budget.max_vars {
        let mut choices: Vec<(usize, Vec<usize>)> = Vec::new();
        for (ri, phi) in lang.relations().iter().enumerate() {
            let mut scope = vec![0usize; phi.arity()];
            loop {
                choices.push((ri, scope.clone()));
                if !crate::model::next_tuple(&mut scope, n) {
                    break;
                }
            }
        }
        if choices.is_empty() {
            return Ok(None);
        }
        for c in 1..=budget.max_constraints {
            let mut idx = vec![0usize; c];
            loop {
                examined += 1;
                if examined > budget.max_instances {
                    return Ok(None);
                }
                let mut inst = Instance::new(n, d);
                for &i in &idx {
                    let (ri, scope) = &choices[i];
                    inst.add(Arc::clone(&lang.relations()[*ri]), scope.clone())?;
                }
                let (_, optimal) = inst.optimal_assignments(caps)?;
                if !optimal.is_empty() {
                    let rel = WeightedRelation::crisp("opt", n, d, &optimal)?;
                    if !is_polymorphism(f, &rel, caps)? {
                        return Ok(Some(rel));
                    }
                }
                if !next_index(&mut idx, choices.len(), true) {
                    break;
                }
            }
        }
    }
    Ok(None)
}
