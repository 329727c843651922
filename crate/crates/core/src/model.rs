//! Weighted relations, languages, instances and the brute-force oracle.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Add;

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};

use crate::caps::{sat_pow, Caps};
use crate::error::{Error, Result};
use crate::value::{denominator_lcm, ExtValue, Rational};

/// Lexicographic code of `tuple` over `{0,…,d-1}` (first coordinate most significant).
pub fn encode_tuple(tuple: &[usize], d: usize) -> usize {
    tuple.iter().fold(0usize, |acc, &t| acc * d + t)
}

/// Inverse of [`encode_tuple`].
pub fn decode_tuple(mut code: usize, d: usize, r: usize) -> Vec<usize> {
    let mut out = vec![0; r];
    for slot in out.iter_mut().rev() {
        *slot = code % d;
        code /= d;
    }
    out
}

/// Advances `tuple` to its lexicographic successor; returns `false` after the last one.
pub fn next_tuple(tuple: &mut [usize], d: usize) -> bool {
    for slot in tuple.iter_mut().rev() {
        *slot += 1;
        if *slot < d {
            return true;
        }
        *slot = 0;
    }
    false
}

/// All tuples of `D^r` in lexicographic order.
pub fn all_tuples(d: usize, r: usize) -> Vec<Vec<usize>> {
    let count = d.pow(r as u32);
    (0..count).map(|c| decode_tuple(c, d, r)).collect()
}

/// All `k`-element subsets of `items` (in lexicographic order of positions).
pub fn combinations<T: Clone>(items: &[T], k: usize) -> Vec<Vec<T>> {
    fn rec<T: Clone>(items: &[T], k: usize, start: usize, cur: &mut Vec<T>, out: &mut Vec<Vec<T>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            if items.len() - i < k - cur.len() {
                break;
            }
            cur.push(items[i].clone());
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= items.len() {
        rec(items, k, 0, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

/// Sorted union of two sorted, duplicate-free lists.
pub fn sorted_union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i] < b[j]) {
            out.push(a[i]);
            i += 1;
        } else if i == a.len() || b[j] < a[i] {
            out.push(b[j]);
            j += 1;
        } else {
            out.push(a[i]);
            i += 1;
            j += 1;
        }
    }
    out
}

/// `a ⊆ b` for sorted lists.
pub fn is_sorted_subset(a: &[usize], b: &[usize]) -> bool {
    let mut j = 0;
    for &x in a {
        while j < b.len() && b[j] < x {
            j += 1;
        }
        if j == b.len() || b[j] != x {
            return false;
        }
        j += 1;
    }
    true
}

/// Positions of the entries of `sub` inside `sup` (both sorted, `sub ⊆ sup`).
pub fn positions_in(sub: &[usize], sup: &[usize]) -> Vec<usize> {
    sub.iter().map(|v| sup.binary_search(v).expect("subset")).collect()
}

/// A weighted relation `φ: D^r → Q ∪ {∞}` stored as an explicit table.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WeightedRelation {
    name: String,
    arity: usize,
    domain: usize,
    table: Vec<ExtValue>,
}

impl WeightedRelation {
    /// Builds a relation from a table indexed by [`encode_tuple`].
    ///
    /// Domain size 1 is accepted so that cores of languages can be represented.
    pub fn new(name: impl Into<String>, arity: usize, domain: usize, table: Vec<ExtValue>) -> Result<Self> {
        let name = name.into();
        if arity == 0 {
            return Err(Error::InvalidRelation(format!("{name}: arity must be positive")));
        }
        if domain == 0 {
            return Err(Error::InvalidRelation(format!("{name}: empty domain")));
        }
        let size = table_size(domain, arity)?;
        if table.len() != size {
            return Err(Error::InvalidRelation(format!(
                "{name}: table has {} entries, expected {size}",
                table.len()
            )));
        }
        Ok(WeightedRelation { name, arity, domain, table })
    }

    pub fn from_fn(
        name: impl Into<String>,
        arity: usize,
        domain: usize,
        mut f: impl FnMut(&[usize]) -> ExtValue,
    ) -> Result<Self> {
        let size = table_size(domain.max(1), arity.max(1))?;
        let mut table = Vec::with_capacity(size);
        if arity > 0 && domain > 0 {
            let mut t = vec![0; arity];
            loop {
                table.push(f(&t));
                if !next_tuple(&mut t, domain) {
                    break;
                }
            }
        }
        Self::new(name, arity, domain, table)
    }

    /// Crisp relation: 0 on the listed tuples, ∞ elsewhere.
    pub fn crisp(name: impl Into<String>, arity: usize, domain: usize, tuples: &[Vec<usize>]) -> Result<Self> {
        let name = name.into();
        let size = table_size(domain, arity)?;
        let mut table = vec![ExtValue::Infinite; size];
        for t in tuples {
            if t.len() != arity || t.iter().any(|&x| x >= domain) {
                return Err(Error::InvalidRelation(format!("{name}: bad tuple {t:?}")));
            }
            table[encode_tuple(t, domain)] = ExtValue::zero();
        }
        Self::new(name, arity, domain, table)
    }

    /// Crisp relation from a predicate.
    pub fn crisp_fn(
        name: impl Into<String>,
        arity: usize,
        domain: usize,
        mut pred: impl FnMut(&[usize]) -> bool,
    ) -> Result<Self> {
        Self::from_fn(name, arity, domain, |t| {
            if pred(t) {
                ExtValue::zero()
            } else {
                ExtValue::Infinite
            }
        })
    }

    /// The equality relation `eq_D`.
    pub fn equality(domain: usize) -> Self {
        Self::crisp_fn("eq", 2, domain, |t| t[0] == t[1]).expect("binary table fits")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn domain(&self) -> usize {
        self.domain
    }

    pub fn table(&self) -> &[ExtValue] {
        &self.table
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn value(&self, tuple: &[usize]) -> &ExtValue {
        debug_assert_eq!(tuple.len(), self.arity);
        &self.table[encode_tuple(tuple, self.domain)]
    }

    pub fn value_at(&self, code: usize) -> &ExtValue {
        &self.table[code]
    }

    pub fn is_feasible(&self, tuple: &[usize]) -> bool {
        self.value(tuple).is_finite()
    }

    pub fn is_crisp(&self) -> bool {
        self.table.iter().all(|v| v.is_infinite() || v.is_zero())
    }

    /// True when every entry is 0 (a null constraint's relation).
    pub fn is_null(&self) -> bool {
        self.table.iter().all(ExtValue::is_zero)
    }

    pub fn feasible_codes(&self) -> Vec<usize> {
        (0..self.table.len()).filter(|&c| self.table[c].is_finite()).collect()
    }

    pub fn feasible_tuples(&self) -> Vec<Vec<usize>> {
        self.feasible_codes()
            .into_iter()
            .map(|c| decode_tuple(c, self.domain, self.arity))
            .collect()
    }

    pub fn min_finite(&self) -> Option<Rational> {
        self.table.iter().filter_map(ExtValue::finite).min().cloned()
    }

    pub fn max_finite(&self) -> Option<Rational> {
        self.table.iter().filter_map(ExtValue::finite).max().cloned()
    }

    /// Tables agree (names are ignored).
    pub fn same_table(&self, other: &Self) -> bool {
        self.arity == other.arity && self.domain == other.domain && self.table == other.table
    }

    fn derived(&self, prefix: &str, table: Vec<ExtValue>) -> Self {
        if table == self.table {
            return self.clone();
        }
        WeightedRelation {
            name: format!("{prefix}({})", self.name),
            arity: self.arity,
            domain: self.domain,
            table,
        }
    }

    /// `feas(φ)`: 0 where φ is finite, ∞ elsewhere.
    pub fn feas(&self) -> Self {
        let table = self
            .table
            .iter()
            .map(|v| if v.is_finite() { ExtValue::zero() } else { ExtValue::Infinite })
            .collect();
        self.derived("feas", table)
    }

    /// `opt(φ)`: 0 on the minimising feasible tuples, ∞ elsewhere.
    pub fn opt(&self) -> Self {
        let min = self.min_finite();
        let table = self
            .table
            .iter()
            .map(|v| match (v.finite(), &min) {
                (Some(x), Some(m)) if x == m => ExtValue::zero(),
                _ => ExtValue::Infinite,
            })
            .collect();
        self.derived("opt", table)
    }

    /// The sub-relation induced by `subset` (relabelled so `subset[i] ↦ i`).
    pub fn restrict_domain(&self, subset: &[usize]) -> Result<Self> {
        if subset.is_empty() || subset.iter().any(|&a| a >= self.domain) {
            return Err(Error::DomainMismatch(format!("bad subset {subset:?}")));
        }
        let d = subset.len();
        Self::from_fn(self.name.clone(), self.arity, d, |t| {
            let orig: Vec<usize> = t.iter().map(|&i| subset[i]).collect();
            self.value(&orig).clone()
        })
    }

    /// Renames labels by the bijection `perm`: the result maps `perm(t)` to `φ(t)`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.domain {
            return Err(Error::DomainMismatch("permutation length".to_string()));
        }
        let mut inv = vec![usize::MAX; self.domain];
        for (a, &b) in perm.iter().enumerate() {
            if b >= self.domain || inv[b] != usize::MAX {
                return Err(Error::DomainMismatch("not a permutation".to_string()));
            }
            inv[b] = a;
        }
        Self::from_fn(self.name.clone(), self.arity, self.domain, |t| {
            let orig: Vec<usize> = t.iter().map(|&b| inv[b]).collect();
            self.value(&orig).clone()
        })
    }
}

fn table_size(domain: usize, arity: usize) -> Result<usize> {
    let size = sat_pow(domain as u128, arity as u128);
    let cap = Caps::default().table;
    if size > cap {
        return Err(Error::cap("relation table", size, cap));
    }
    Ok(size as usize)
}

/// `feas(φ)`.
pub fn feas_of(phi: &WeightedRelation) -> WeightedRelation {
    phi.feas()
}

/// `opt(φ)`.
pub fn opt_of(phi: &WeightedRelation) -> WeightedRelation {
    phi.opt()
}

/// A valued constraint `φ(x̄)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    relation: Arc<WeightedRelation>,
    scope: Vec<usize>,
    scope_set: Vec<usize>,
}

impl Constraint {
    pub fn new(relation: Arc<WeightedRelation>, scope: Vec<usize>) -> Result<Self> {
        if scope.len() != relation.arity() {
            return Err(Error::Arity(format!(
                "{} has arity {} but scope has length {}",
                relation.name(),
                relation.arity(),
                scope.len()
            )));
        }
        let mut scope_set = scope.clone();
        scope_set.sort_unstable();
        scope_set.dedup();
        Ok(Constraint { relation, scope, scope_set })
    }

    pub fn relation(&self) -> &Arc<WeightedRelation> {
        &self.relation
    }

    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    /// Sorted, duplicate-free variables of the scope.
    pub fn scope_set(&self) -> &[usize] {
        &self.scope_set
    }

    /// `φ(σ(x̄))` for a total assignment.
    pub fn value_total(&self, sigma: &[usize]) -> &ExtValue {
        let d = self.relation.domain();
        let code = self.scope.iter().fold(0usize, |acc, &v| acc * d + sigma[v]);
        self.relation.value_at(code)
    }

    /// `φ(σ(x̄))` for σ given on the sorted scope-set.
    pub fn value_on_set(&self, labels: &[usize]) -> &ExtValue {
        debug_assert_eq!(labels.len(), self.scope_set.len());
        let d = self.relation.domain();
        let code = self.scope.iter().fold(0usize, |acc, v| {
            let pos = self.scope_set.binary_search(v).expect("scope var in scope-set");
            acc * d + labels[pos]
        });
        self.relation.value_at(code)
    }
}

/// A VCSP instance: `n` variables over `{0,…,d-1}` and a list of constraints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    n: usize,
    d: usize,
    constraints: Vec<Constraint>,
}

impl Instance {
    pub fn new(n: usize, d: usize) -> Self {
        Instance { n, d, constraints: Vec::new() }
    }

    pub fn add(&mut self, relation: Arc<WeightedRelation>, scope: Vec<usize>) -> Result<usize> {
        self.push(Constraint::new(relation, scope)?)
    }

    pub fn push(&mut self, c: Constraint) -> Result<usize> {
        if c.relation().domain() != self.d {
            return Err(Error::DomainMismatch(format!(
                "{} has domain {} but instance has {}",
                c.relation().name(),
                c.relation().domain(),
                self.d
            )));
        }
        if let Some(&v) = c.scope().iter().find(|&&v| v >= self.n) {
            return Err(Error::InvalidInstance(format!("variable {v} out of range (n = {})", self.n)));
        }
        self.constraints.push(c);
        Ok(self.constraints.len() - 1)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn max_arity(&self) -> usize {
        self.constraints.iter().map(|c| c.relation().arity()).max().unwrap_or(0)
    }

    /// Distinct relations in order of first use.
    pub fn relations(&self) -> Vec<Arc<WeightedRelation>> {
        let mut out: Vec<Arc<WeightedRelation>> = Vec::new();
        for c in &self.constraints {
            if !out.iter().any(|r| r == c.relation()) {
                out.push(c.relation().clone());
            }
        }
        out
    }

    /// `vcspval(I, σ)`; panics if σ is not total.
    pub fn evaluate(&self, sigma: &[usize]) -> ExtValue {
        assert_eq!(sigma.len(), self.n, "assignment must be total");
        let mut acc = ExtValue::zero();
        for c in &self.constraints {
            acc += c.value_total(sigma);
            if acc.is_infinite() {
                break;
            }
        }
        acc
    }

    /// `vcspopt(I)` with the lexicographically smallest optimal assignment.
    pub fn brute_force_opt(&self, caps: &Caps) -> Result<(ExtValue, Option<Vec<usize>>)> {
        let mut out = (ExtValue::Infinite, None);
        self.search(caps, Mode::Best, &mut |v, s| out = (v, Some(s.to_vec())))?;
        Ok(out)
    }

    /// Every optimal assignment (empty when unsatisfiable), in lexicographic order.
    pub fn optimal_assignments(&self, caps: &Caps) -> Result<(ExtValue, Vec<Vec<usize>>)> {
        let (best, _) = self.brute_force_opt(caps)?;
        let mut all = Vec::new();
        if let ExtValue::Finite(b) = &best {
            self.search(caps, Mode::AtMost(b.clone()), &mut |_, s| all.push(s.to_vec()))?;
        }
        Ok((best, all))
    }

    fn search(&self, caps: &Caps, mode: Mode, sink: &mut dyn FnMut(ExtValue, &[usize])) -> Result<()> {
        let count = sat_pow(self.d as u128, self.n as u128);
        if count > caps.enumeration {
            return Err(Error::cap("assignment enumeration", count, caps.enumeration));
        }
        if self.d == 0 {
            return Ok(());
        }
        let finite: Vec<&Rational> = self
            .constraints
            .iter()
            .flat_map(|c| c.relation().table().iter().filter_map(ExtValue::finite))
            .collect();
        let lcm = denominator_lcm(finite.iter().copied());
        let scaled: Option<Vec<Vec<Option<i128>>>> = self
            .constraints
            .iter()
            .map(|c| {
                c.relation()
                    .table()
                    .iter()
                    .map(|v| match v {
                        ExtValue::Infinite => Some(None),
                        ExtValue::Finite(r) => {
                            let s = (r * Rational::from_integer(lcm.clone())).to_integer();
                            s.to_i64().map(|x| Some(x as i128))
                        }
                    })
                    .collect()
            })
            .collect();
        match scaled {
            Some(tables) => {
                let lcm_r = Rational::from_integer(lcm);
                let threshold = match &mode {
                    Mode::Best => None,
                    Mode::AtMost(b) => Some((b * &lcm_r).to_integer().to_i128().ok_or_else(|| {
                        Error::Overflow("optimum does not fit the scaled search".to_string())
                    })?),
                };
                let unscale = |x: &i128| ExtValue::Finite(Rational::new(BigInt::from(*x), lcm_r.numer().clone()));
                dfs_driver(self, tables, threshold, &mut |v, s| sink(unscale(v), s));
            }
            None => {
                let tables: Vec<Vec<Option<Rational>>> = self
                    .constraints
                    .iter()
                    .map(|c| c.relation().table().iter().map(|v| v.finite().cloned()).collect())
                    .collect();
                let threshold = match mode {
                    Mode::Best => None,
                    Mode::AtMost(b) => Some(b),
                };
                dfs_driver(self, tables, threshold, &mut |v, s| sink(ExtValue::Finite(v.clone()), s));
            }
        }
        Ok(())
    }
}

enum Mode {
    Best,
    AtMost(Rational),
}

struct Dfs<'a, T> {
    d: usize,
    n: usize,
    /// constraints completed at each variable
    at: Vec<Vec<usize>>,
    scopes: Vec<&'a [usize]>,
    tables: Vec<Vec<Option<T>>>,
    suffix_lb: Vec<T>,
    sigma: Vec<usize>,
    best: Option<T>,
    /// `None`: keep only strict improvements; `Some(t)`: report everything ≤ t.
    threshold: Option<T>,
}

fn dfs_driver<T>(inst: &Instance, tables: Vec<Vec<Option<T>>>, threshold: Option<T>, sink: &mut dyn FnMut(&T, &[usize]))
where
    T: Clone + Ord + Zero + Add<Output = T>,
{
    let n = inst.n;
    let mut at = vec![Vec::new(); n.max(1)];
    let mut lb_at = vec![T::zero(); n.max(1)];
    for (ci, c) in inst.constraints.iter().enumerate() {
        let min = match tables[ci].iter().flatten().min() {
            Some(m) => m.clone(),
            None => return, // an all-∞ constraint: unsatisfiable
        };
        // scopes are never empty since arities are positive
        let v = *c.scope_set().last().expect("non-empty scope");
        at[v].push(ci);
        lb_at[v] = lb_at[v].clone() + min;
    }
    let mut suffix_lb = vec![T::zero(); n + 1];
    for v in (0..n).rev() {
        suffix_lb[v] = suffix_lb[v + 1].clone() + lb_at[v].clone();
    }
    let mut st = Dfs {
        d: inst.d,
        n,
        at,
        scopes: inst.constraints.iter().map(|c| c.scope()).collect(),
        tables,
        suffix_lb,
        sigma: vec![0; n],
        best: None,
        threshold,
    };
    st.run(0, T::zero(), sink);
}

impl<T> Dfs<'_, T>
where
    T: Clone + Ord + Zero + Add<Output = T>,
{
    fn bound_ok(&self, partial: &T, next: usize) -> bool {
        let lb = partial.clone() + self.suffix_lb[next].clone();
        match (&self.threshold, &self.best) {
            (Some(t), _) => lb <= *t,
            (None, Some(b)) => lb < *b,
            (None, None) => true,
        }
    }

    fn run(&mut self, v: usize, partial: T, sink: &mut dyn FnMut(&T, &[usize])) {
        if v == self.n {
            let accept = match (&self.threshold, &self.best) {
                (Some(t), _) => partial <= *t,
                (None, Some(b)) => partial < *b,
                (None, None) => true,
            };
            if accept {
                sink(&partial, &self.sigma);
                if self.threshold.is_none() {
                    self.best = Some(partial);
                }
            }
            return;
        }
        'label: for a in 0..self.d {
            self.sigma[v] = a;
            let mut acc = partial.clone();
            for &ci in &self.at[v] {
                let code = self.scopes[ci].iter().fold(0usize, |x, &u| x * self.d + self.sigma[u]);
                match &self.tables[ci][code] {
                    Some(x) => acc = acc + x.clone(),
                    None => continue 'label,
                }
            }
            if self.bound_ok(&acc, v + 1) {
                self.run(v + 1, acc, sink);
            }
        }
    }
}

/// A finite set of weighted relations over a common domain.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Language {
    domain: usize,
    relations: Vec<Arc<WeightedRelation>>,
}

impl Language {
    pub fn new(domain: usize) -> Self {
        Language { domain, relations: Vec::new() }
    }

    pub fn from_relations(domain: usize, relations: impl IntoIterator<Item = WeightedRelation>) -> Result<Self> {
        let mut l = Language::new(domain);
        for r in relations {
            l.add(r)?;
        }
        Ok(l)
    }

    pub fn add(&mut self, relation: WeightedRelation) -> Result<Arc<WeightedRelation>> {
        if relation.domain() != self.domain {
            return Err(Error::DomainMismatch(format!(
                "{} has domain {} but language has {}",
                relation.name(),
                relation.domain(),
                self.domain
            )));
        }
        if self.get(relation.name()).is_some() {
            return Err(Error::InvalidRelation(format!("duplicate relation name {}", relation.name())));
        }
        let r = Arc::new(relation);
        self.relations.push(r.clone());
        Ok(r)
    }

    pub fn domain(&self) -> usize {
        self.domain
    }

    pub fn relations(&self) -> &[Arc<WeightedRelation>] {
        &self.relations
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Arc<WeightedRelation>> {
        self.relations.iter().find(|r| r.name() == name)
    }

    pub fn max_arity(&self) -> usize {
        self.relations.iter().map(|r| r.arity()).max().unwrap_or(0)
    }

    /// `Γ[S]`, relabelled so `subset[i] ↦ i`.
    pub fn restrict(&self, subset: &[usize]) -> Result<Self> {
        let mut l = Language::new(subset.len());
        for r in &self.relations {
            l.add(r.restrict_domain(subset)?)?;
        }
        Ok(l)
    }

    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let mut l = Language::new(self.domain);
        for r in &self.relations {
            l.add(r.relabel(perm)?)?;
        }
        Ok(l)
    }
}

/// A partial assignment `σ: X → D`, stored sorted by variable.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PartialAssignment {
    vars: Vec<usize>,
    labels: Vec<usize>,
}

impl PartialAssignment {
    pub fn new(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let map: BTreeMap<usize, usize> = {
            let mut m = BTreeMap::new();
            for (v, a) in pairs {
                if let Some(old) = m.insert(v, a) {
                    if old != a {
                        return Err(Error::InvalidInstance(format!("variable {v} assigned twice")));
                    }
                }
            }
            m
        };
        Ok(PartialAssignment {
            vars: map.keys().copied().collect(),
            labels: map.values().copied().collect(),
        })
    }

    /// From a sorted duplicate-free variable list and matching labels.
    pub fn from_sorted(vars: Vec<usize>, labels: Vec<usize>) -> Self {
        debug_assert!(vars.windows(2).all(|w| w[0] < w[1]));
        debug_assert_eq!(vars.len(), labels.len());
        PartialAssignment { vars, labels }
    }

    pub fn empty() -> Self {
        PartialAssignment { vars: Vec::new(), labels: Vec::new() }
    }

    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn get(&self, v: usize) -> Option<usize> {
        self.vars.binary_search(&v).ok().map(|p| self.labels[p])
    }

    /// `σ|_Y` for `Y ⊆ X`; variables outside X are ignored.
    pub fn restrict(&self, to: &[usize]) -> Self {
        let mut vars = Vec::new();
        let mut labels = Vec::new();
        for (&v, &a) in self.vars.iter().zip(&self.labels) {
            if to.contains(&v) {
                vars.push(v);
                labels.push(a);
            }
        }
        PartialAssignment { vars, labels }
    }

    pub fn agrees_with(&self, other: &Self) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.vars.len() && j < other.vars.len() {
            match self.vars[i].cmp(&other.vars[j]) {
                core::cmp::Ordering::Less => i += 1,
                core::cmp::Ordering::Greater => j += 1,
                core::cmp::Ordering::Equal => {
                    if self.labels[i] != other.labels[j] {
                        return false;
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        true
    }

    /// `σ ∘ τ`, defined only when the two agree on the common variables.
    pub fn compose(&self, other: &Self) -> Option<Self> {
        if !self.agrees_with(other) {
            return None;
        }
        let mut m: BTreeMap<usize, usize> = self.vars.iter().copied().zip(self.labels.iter().copied()).collect();
        for (&v, &a) in other.vars.iter().zip(&other.labels) {
            m.entry(v).or_insert(a);
        }
        Some(PartialAssignment {
            vars: m.keys().copied().collect(),
            labels: m.values().copied().collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::ratio;
    use proptest::prelude::*;
    use std::string::ToString;

    fn rel(name: &str, arity: usize, vals: &[ExtValue]) -> Arc<WeightedRelation> {
        Arc::new(WeightedRelation::new(name, arity, 2, vals.to_vec()).unwrap())
    }

    fn parity(a: usize) -> Arc<WeightedRelation> {
        Arc::new(WeightedRelation::crisp_fn(a.to_string(), 2, 2, |t| (t[0] + t[1]) % 2 == a).unwrap())
    }

    #[test]
    fn evaluate_examples() {
        let caps = Caps::default();
        let empty = Instance::new(3, 2);
        assert_eq!(empty.evaluate(&[1, 0, 1]), ExtValue::zero());
        assert_eq!(empty.brute_force_opt(&caps).unwrap(), (ExtValue::zero(), Some(vec![0, 0, 0])));

        let mut single = Instance::new(1, 2);
        single.add(rel("u", 1, &[ExtValue::int(0), ExtValue::Infinite]), vec![0]).unwrap();
        assert_eq!(single.evaluate(&[1]), ExtValue::Infinite);

        let phi = rel("phi", 2, &[ExtValue::int(0), ExtValue::ratio(1, 2), ExtValue::ratio(1, 3), ExtValue::int(0)]);
        let mut two = Instance::new(2, 2);
        two.add(phi.clone(), vec![0, 1]).unwrap();
        two.add(phi, vec![1, 0]).unwrap();
        assert_eq!(two.evaluate(&[0, 1]), ExtValue::ratio(5, 6));
    }

    #[test]
    fn brute_force_examples() {
        let caps = Caps::default();
        let mut contra = Instance::new(2, 2);
        contra.add(parity(0), vec![0, 1]).unwrap();
        contra.add(parity(1), vec![0, 1]).unwrap();
        assert_eq!(contra.brute_force_opt(&caps).unwrap(), (ExtValue::Infinite, None));

        let mut unary = Instance::new(1, 2);
        unary.add(rel("u", 1, &[ExtValue::int(1), ExtValue::ratio(1, 2)]), vec![0]).unwrap();
        assert_eq!(unary.brute_force_opt(&caps).unwrap(), (ExtValue::ratio(1, 2), Some(vec![1])));
    }

    #[test]
    fn brute_force_cap() {
        let caps = Caps { enumeration: 100, ..Caps::default() };
        let inst = Instance::new(7, 2);
        assert!(inst.brute_force_opt(&caps).unwrap_err().is_cap_exceeded());
    }

    #[test]
    fn brute_force_handles_huge_denominators() {
        let big = Rational::new(BigInt::from(1), BigInt::from(10u64).pow(30));
        let r = Arc::new(
            WeightedRelation::new("tiny", 1, 2, vec![ExtValue::Finite(big.clone()), ExtValue::Finite(big.clone() * Rational::from_integer(BigInt::from(2)))]).unwrap(),
        );
        let mut inst = Instance::new(2, 2);
        inst.add(r.clone(), vec![0]).unwrap();
        inst.add(r, vec![1]).unwrap();
        let (v, s) = inst.brute_force_opt(&Caps::default()).unwrap();
        assert_eq!(v, ExtValue::Finite(big * Rational::from_integer(BigInt::from(2))));
        assert_eq!(s, Some(vec![0, 0]));
    }

    #[test]
    fn feas_and_opt_examples() {
        let phi = WeightedRelation::new("phi", 2, 2, vec![ExtValue::int(2), ExtValue::Infinite, ExtValue::int(0), ExtValue::Infinite]).unwrap();
        assert_eq!(phi.feas().feasible_tuples(), vec![vec![0, 0], vec![1, 0]]);
        assert_eq!(phi.opt().feasible_tuples(), vec![vec![1, 0]]);
        let crisp = WeightedRelation::crisp("c", 2, 2, &[vec![0, 1]]).unwrap();
        assert_eq!(crisp.feas(), crisp);
        assert_eq!(crisp.opt(), crisp);
        let finite = WeightedRelation::from_fn("f", 2, 2, |t| ExtValue::int(t[0] as i64)).unwrap();
        assert!(finite.feas().is_null());
        let dead = WeightedRelation::new("dead", 1, 2, vec![ExtValue::Infinite; 2]).unwrap();
        assert_eq!(dead.opt(), dead);
    }

    #[test]
    fn relation_validation() {
        assert!(WeightedRelation::new("x", 2, 2, vec![ExtValue::zero(); 3]).is_err());
        assert!(WeightedRelation::new("x", 0, 2, vec![]).is_err());
        let r = parity(0);
        let mut inst = Instance::new(2, 2);
        assert!(matches!(inst.add(r.clone(), vec![0]), Err(Error::Arity(_))));
        assert!(matches!(inst.add(r, vec![0, 2]), Err(Error::InvalidInstance(_))));
        let r3 = Arc::new(WeightedRelation::equality(3));
        assert!(matches!(inst.add(r3, vec![0, 1]), Err(Error::DomainMismatch(_))));
    }

    #[test]
    fn partial_assignments_compose() {
        let a = PartialAssignment::new([(0, 1), (2, 0)]).unwrap();
        let b = PartialAssignment::new([(2, 0), (3, 1)]).unwrap();
        let c = PartialAssignment::new([(2, 1)]).unwrap();
        assert_eq!(a.compose(&b).unwrap(), PartialAssignment::new([(0, 1), (2, 0), (3, 1)]).unwrap());
        assert!(a.compose(&c).is_none());
        assert_eq!(a.restrict(&[2, 3]), PartialAssignment::new([(2, 0)]).unwrap());
    }

    #[test]
    fn repeated_variables_in_scope() {
        let phi = rel("neq", 2, &[ExtValue::Infinite, ExtValue::zero(), ExtValue::zero(), ExtValue::Infinite]);
        let mut inst = Instance::new(1, 2);
        inst.add(phi, vec![0, 0]).unwrap();
        assert_eq!(inst.brute_force_opt(&Caps::default()).unwrap().0, ExtValue::Infinite);
    }

    #[test]
    fn optimal_assignment_listing() {
        let mut inst = Instance::new(2, 2);
        inst.add(parity(1), vec![0, 1]).unwrap();
        let (v, all) = inst.optimal_assignments(&Caps::default()).unwrap();
        assert_eq!(v, ExtValue::zero());
        assert_eq!(all, vec![vec![0, 1], vec![1, 0]]);
    }

    fn value_strategy() -> impl Strategy<Value = ExtValue> {
        prop_oneof![
            3 => (-6i64..7, 1i64..4).prop_map(|(n, d)| ExtValue::Finite(ratio(n, d))),
            1 => Just(ExtValue::Infinite),
        ]
    }

    fn instance_strategy() -> impl Strategy<Value = Instance> {
        (1usize..6, 0usize..6).prop_flat_map(|(n, q)| {
            proptest::collection::vec(
                (1usize..4).prop_flat_map(move |r| {
                    (
                        proptest::collection::vec(value_strategy(), 1usize << r),
                        proptest::collection::vec(0..n, r),
                    )
                }),
                q,
            )
            .prop_map(move |cs| {
                let mut inst = Instance::new(n, 2);
                for (i, (table, scope)) in cs.into_iter().enumerate() {
                    let r = scope.len();
                    let rel = WeightedRelation::new(format!("r{i}"), r, 2, table).unwrap();
                    inst.add(Arc::new(rel), scope).unwrap();
                }
                inst
            })
        })
    }

    fn naive_opt(inst: &Instance) -> (ExtValue, Option<Vec<usize>>) {
        let mut best = (ExtValue::Infinite, None);
        for s in all_tuples(inst.d(), inst.n()) {
            let v = inst.evaluate(&s);
            if v.is_finite() && (best.1.is_none() || v < best.0) {
                best = (v, Some(s));
            }
        }
        best
    }

    proptest! {
        #[test]
        fn brute_force_matches_naive_enumeration(inst in instance_strategy()) {
            let caps = Caps::default();
            let got = inst.brute_force_opt(&caps).unwrap();
            prop_assert_eq!(&got, &naive_opt(&inst));
            for s in all_tuples(inst.d(), inst.n()) {
                prop_assert!(inst.evaluate(&s) >= got.0);
            }
            let (_, all) = inst.optimal_assignments(&caps).unwrap();
            let expected: Vec<Vec<usize>> = all_tuples(inst.d(), inst.n())
                .into_iter()
                .filter(|s| got.0.is_finite() && inst.evaluate(s) == got.0)
                .collect();
            prop_assert_eq!(all, expected);
        }

        #[test]
        fn feas_opt_laws(table in proptest::collection::vec(value_strategy(), 4)) {
            let phi = WeightedRelation::new("p", 2, 2, table).unwrap();
            let f = phi.feas();
            let o = phi.opt();
            prop_assert!(f.feas().same_table(&f));
            for c in 0..4 {
                if o.value_at(c).is_finite() {
                    prop_assert!(f.value_at(c).is_finite());
                }
            }
            if !o.feasible_codes().is_empty() {
                prop_assert!(o.opt().same_table(&o));
            }
        }
    }
}
