//! Finite Abelian groups, the linear-equation languages `E_{G,r}`, Tseitin
//! and random XOR instances, an exact satisfiability oracle, and the search
//! for Lasserre gap instances.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::SubsetMode;
use crate::caps::{sat_pow, Caps};
use crate::error::{Error, Result};
use crate::lasserre::{build_las, check_residuals, solve_sdp, verify_l7, SdpDiagnostics, SdpOptions, SdpOutcome};
use crate::model::{Instance, Language, WeightedRelation};
use crate::value::ExtValue;

/// `Z_{m_1} × … × Z_{m_t}`; elements are indexed mixed-radix, little-endian
/// (`index = r_1 + m_1·(r_2 + m_2·(…))`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbelianGroup {
    moduli: Vec<usize>,
    order: usize,
}

impl AbelianGroup {
    pub fn new(moduli: Vec<usize>) -> Result<Self> {
        if moduli.is_empty() {
            return Err(Error::Group("no cyclic factors".into()));
        }
        if let Some(m) = moduli.iter().find(|&&m| m < 2) {
            return Err(Error::Group(format!("cyclic factor Z{m} is trivial")));
        }
        let order = moduli
            .iter()
            .try_fold(1usize, |acc, &m| acc.checked_mul(m))
            .ok_or_else(|| Error::Group("order overflows".into()))?;
        Ok(AbelianGroup { moduli, order })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn moduli(&self) -> &[usize] {
        &self.moduli
    }

    /// The prime `p` when the group is `Z_p`.
    pub fn prime_cyclic(&self) -> Option<usize> {
        match self.moduli[..] {
            [p] if (2..p).take_while(|q| q * q <= p).all(|q| p % q != 0) => Some(p),
            _ => None,
        }
    }

    pub fn residues(&self, mut index: usize) -> Vec<usize> {
        self.moduli
            .iter()
            .map(|&m| {
                let r = index % m;
                index /= m;
                r
            })
            .collect()
    }

    pub fn index(&self, residues: &[usize]) -> usize {
        self.moduli.iter().zip(residues).rev().fold(0, |acc, (&m, &r)| acc * m + r % m)
    }

    pub fn zero(&self) -> usize {
        0
    }

    pub fn add(&self, a: usize, b: usize) -> usize {
        let (ra, rb) = (self.residues(a), self.residues(b));
        let sum: Vec<usize> = ra.iter().zip(&rb).zip(&self.moduli).map(|((x, y), m)| (x + y) % m).collect();
        self.index(&sum)
    }

    pub fn neg(&self, a: usize) -> usize {
        let r: Vec<usize> = self.residues(a).iter().zip(&self.moduli).map(|(x, m)| (m - x) % m).collect();
        self.index(&r)
    }

    pub fn sum(&self, items: impl IntoIterator<Item = usize>) -> usize {
        items.into_iter().fold(0, |acc, x| self.add(acc, x))
    }
}

impl fmt::Display for AbelianGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, m) in self.moduli.iter().enumerate() {
            if i > 0 {
                f.write_str("x")?;
            }
            write!(f, "Z{m}")?;
        }
        Ok(())
    }
}

/// Parses `Z2`, `Z3`, `Z2xZ4`, ….
pub fn make_group(spec: &str) -> Result<AbelianGroup> {
    let moduli = spec
        .split(['x', 'X', '*'])
        .map(|part| {
            let part = part.trim();
            part.strip_prefix('Z')
                .and_then(|m| m.parse::<usize>().ok())
                .ok_or_else(|| Error::Group(format!("cannot parse `{part}` in `{spec}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    AbelianGroup::new(moduli)
}

/// `E_{G,r}`: the crisp relations `R^m_a = {x̄ ∈ G^m : Σ x_i = a}` for
/// `1 ≤ m ≤ r`, named `R{m}_{a}` with `a` an element index.
#[derive(Clone, Debug)]
pub struct EquationLanguage {
    group: AbelianGroup,
    r: usize,
    language: Language,
}

impl EquationLanguage {
    pub fn group(&self) -> &AbelianGroup {
        &self.group
    }

    pub fn max_arity(&self) -> usize {
        self.r
    }

    pub fn language(&self) -> &Language {
        &self.language
    }

    /// `R^m_a`.
    pub fn relation(&self, m: usize, a: usize) -> Result<&Arc<WeightedRelation>> {
        if m == 0 || m > self.r || a >= self.group.order() {
            return Err(Error::Arity(format!("no relation R{m}_{a} in E_{{{},{}}}", self.group, self.r)));
        }
        Ok(&self.language.relations()[(m - 1) * self.group.order() + a])
    }

    /// `(m, a)` if `rel` is some `R^m_a` of this language.
    pub fn classify(&self, rel: &WeightedRelation) -> Option<(usize, usize)> {
        let m = rel.arity();
        if m > self.r || rel.domain() != self.group.order() {
            return None;
        }
        let first = rel.feasible_tuples().into_iter().next()?;
        let a = self.group.sum(first);
        self.relation(m, a).ok().filter(|r| r.same_table(rel)).map(|_| (m, a))
    }
}

pub fn build_equation_language(group: &AbelianGroup, r: usize, caps: &Caps) -> Result<EquationLanguage> {
    if r == 0 {
        return Err(Error::Arity("equation arity bound must be positive".into()));
    }
    let g = group.order();
    let size = sat_pow(g as u128, r as u128);
    if size > caps.table {
        return Err(Error::cap("equation relation table", size, caps.table));
    }
    let mut language = Language::new(g);
    for m in 1..=r {
        for a in 0..g {
            let rel = WeightedRelation::crisp_fn(format!("R{m}_{a}"), m, g, |t| group.sum(t.iter().copied()) == a)?;
            language.add(rel)?;
        }
    }
    Ok(EquationLanguage { group: group.clone(), r, language })
}

/// One equation `Σ x_i = rhs` (variables may repeat).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Equation {
    pub vars: Vec<usize>,
    pub rhs: usize,
}

/// Reads the equations of an instance over `E_{G,r}`.
pub fn equations_of(inst: &Instance, lang: &EquationLanguage) -> Result<Vec<Equation>> {
    inst.constraints()
        .iter()
        .map(|c| {
            let (_, a) = lang.classify(c.relation()).ok_or_else(|| {
                Error::InvalidInstance(format!("`{}` is not a relation of E_{{{},{}}}", c.relation().name(), lang.group, lang.r))
            })?;
            Ok(Equation { vars: c.scope().to_vec(), rhs: a })
        })
        .collect()
}

/// Exact satisfiability: Gaussian elimination over `Z_p`, enumeration otherwise.
pub fn linear_satisfiable(inst: &Instance, lang: &EquationLanguage, caps: &Caps) -> Result<bool> {
    let eqs = equations_of(inst, lang)?;
    match lang.group.prime_cyclic() {
        Some(p) => Ok(eliminate(inst.n(), &eqs, p)),
        None => {
            let count = sat_pow(lang.group.order() as u128, inst.n() as u128);
            if count > caps.enumeration {
                return Err(Error::cap("equation enumeration", count, caps.enumeration));
            }
            Ok(inst.brute_force_opt(caps)?.0.is_finite())
        }
    }
}

fn eliminate(n: usize, eqs: &[Equation], p: usize) -> bool {
    let inv = |a: usize| -> usize {
        // a^(p-2) mod p
        let (mut base, mut e, mut acc) = (a % p, p - 2, 1usize);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base % p;
            }
            base = base * base % p;
            e >>= 1;
        }
        acc
    };
    let mut rows: Vec<Vec<usize>> = eqs
        .iter()
        .map(|e| {
            let mut row = vec![0usize; n + 1];
            for &v in &e.vars {
                row[v] = (row[v] + 1) % p;
            }
            row[n] = e.rhs % p;
            row
        })
        .collect();
    let mut rank = 0;
    for col in 0..n {
        let Some(pivot) = (rank..rows.len()).find(|&r| rows[r][col] != 0) else { continue };
        rows.swap(rank, pivot);
        let f = inv(rows[rank][col]);
        for x in rows[rank].iter_mut() {
            *x = *x * f % p;
        }
        let pivot_row = rows[rank].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && row[col] != 0 {
                let c = row[col];
                for (x, &y) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *x = (*x + p * p - c * y % p) % p;
                }
            }
        }
        rank += 1;
    }
    rows[rank..].iter().all(|r| r[n] == 0)
}

/// One variable per edge and `R^{deg v}_{charge v}` on the edges at each vertex.
pub fn tseitin(lang: &EquationLanguage, n_vertices: usize, edges: &[(usize, usize)], charges: &[usize]) -> Result<Instance> {
    if charges.len() != n_vertices {
        return Err(Error::InvalidInstance(format!("{} charges for {n_vertices} vertices", charges.len())));
    }
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n_vertices];
    for (e, &(u, v)) in edges.iter().enumerate() {
        if u >= n_vertices || v >= n_vertices || u == v {
            return Err(Error::InvalidInstance(format!("bad edge ({u}, {v})")));
        }
        incident[u].push(e);
        incident[v].push(e);
    }
    let mut inst = Instance::new(edges.len(), lang.group.order());
    for (v, inc) in incident.into_iter().enumerate() {
        if inc.is_empty() {
            if charges[v] != 0 {
                return Err(Error::InvalidInstance(format!("isolated vertex {v} has nonzero charge")));
            }
            continue;
        }
        if inc.len() > lang.r {
            return Err(Error::Arity(format!("vertex {v} has degree {} > {}", inc.len(), lang.r)));
        }
        inst.add(lang.relation(inc.len(), charges[v])?.clone(), inc)?;
    }
    Ok(inst)
}

/// The complete graph on four vertices.
pub fn k4() -> Vec<(usize, usize)> {
    vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
}

/// A uniformly paired random 3-regular simple graph on `n` (even, ≥ 4) vertices.
pub fn random_cubic_graph(n: usize, rng: &mut impl Rng) -> Result<Vec<(usize, usize)>> {
    if n < 4 || n % 2 == 1 {
        return Err(Error::InvalidInstance(format!("no 3-regular graph on {n} vertices")));
    }
    'retry: for _ in 0..10_000 {
        let mut points: Vec<usize> = (0..3 * n).map(|p| p / 3).collect();
        for i in (1..points.len()).rev() {
            let j = rng.random_range(0..=i);
            points.swap(i, j);
        }
        let mut edges: Vec<(usize, usize)> = Vec::with_capacity(3 * n / 2);
        for pair in points.chunks(2) {
            let (u, v) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if u == v || edges.contains(&(u, v)) {
                continue 'retry;
            }
            edges.push((u, v));
        }
        edges.sort_unstable();
        return Ok(edges);
    }
    Err(Error::BudgetExhausted("random 3-regular pairing".into()))
}

/// `m` equations of the given arity on distinct random variables with random
/// right-hand sides, deterministic in `seed`.
pub fn random_kxor(lang: &EquationLanguage, n: usize, m: usize, arity: usize, seed: u64) -> Result<Instance> {
    if arity == 0 || arity > lang.r {
        return Err(Error::Arity(format!("arity {arity} outside 1..={}", lang.r)));
    }
    if m > 0 && arity > n {
        return Err(Error::Arity(format!("{arity} distinct variables out of {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inst = Instance::new(n, lang.group.order());
    for _ in 0..m {
        let mut scope: Vec<usize> = Vec::with_capacity(arity);
        while scope.len() < arity {
            let v = rng.random_range(0..n);
            if !scope.contains(&v) {
                scope.push(v);
            }
        }
        let a = rng.random_range(0..lang.group.order());
        inst.add(lang.relation(arity, a)?.clone(), scope)?;
    }
    Ok(inst)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GapVerdict {
    Gap,
    NoGap,
    Inconclusive,
}

impl fmt::Display for GapVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GapVerdict::Gap => "gap",
            GapVerdict::NoGap => "no-gap",
            GapVerdict::Inconclusive => "inconclusive",
        })
    }
}

/// The examination of one instance.
#[derive(Clone, Debug)]
pub struct GapReport {
    pub label: String,
    pub instance: Instance,
    pub level: usize,
    pub mode: SubsetMode,
    pub vcspopt: ExtValue,
    /// `SDPopt`, `∞` when infeasible, `None` when the solver did not converge.
    pub sdp_value: Option<f64>,
    pub exact_infeasible: bool,
    pub residual: Option<f64>,
    pub l7_residual: Option<f64>,
    pub verdict: GapVerdict,
    pub diagnostics: SdpDiagnostics,
    pub note: String,
}

/// Instance family of the search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// Tseitin instances on random 3-regular graphs with one odd charge;
    /// `n` counts vertices.
    Tseitin,
    /// Random equations of the largest arity with `ratio·n` equations; `n`
    /// counts variables.
    Kxor { ratio: usize },
}

#[derive(Clone, Debug)]
pub struct GapSearch {
    pub family: Family,
    pub level: usize,
    pub mode: SubsetMode,
    pub n_min: usize,
    pub n_max: usize,
    pub samples: usize,
    pub seed: u64,
    /// Instances to examine before giving up.
    pub budget: usize,
    pub sdp: SdpOptions,
}

/// All reports of a search and its overall verdict.
#[derive(Clone, Debug)]
pub struct GapSearchOutcome {
    pub reports: Vec<GapReport>,
    /// `Gap` if any instance is a re-verified gap; `NoGap` only when every
    /// planned instance was examined conclusively; otherwise `Inconclusive`.
    pub verdict: GapVerdict,
    pub exhausted: bool,
}

/// Examines one instance: exact oracle, Las(k), residual and (L7) re-checks.
pub fn examine(lang: &EquationLanguage, inst: &Instance, level: usize, mode: SubsetMode, opts: &SdpOptions, caps: &Caps) -> Result<GapReport> {
    let vcspopt = if linear_satisfiable(inst, lang, caps)? { ExtValue::zero() } else { ExtValue::Infinite };
    let model = build_las(inst, level, mode, caps)?;
    let tol = 10.0 * opts.eps;
    let mut rep = GapReport {
        label: String::new(),
        instance: inst.clone(),
        level,
        mode,
        vcspopt: vcspopt.clone(),
        sdp_value: None,
        exact_infeasible: false,
        residual: None,
        l7_residual: None,
        verdict: GapVerdict::Inconclusive,
        diagnostics: SdpDiagnostics::default(),
        note: String::new(),
    };
    match solve_sdp(&model, opts) {
        SdpOutcome::Feasible(sol) => {
            let res = check_residuals(&model, &sol.gram).max();
            let l7 = verify_l7(&model, &sol.gram).max_residual;
            rep.sdp_value = Some(sol.value);
            rep.residual = Some(res);
            rep.l7_residual = Some(l7);
            rep.diagnostics = sol.diagnostics;
            let below = match &vcspopt {
                ExtValue::Infinite => true,
                ExtValue::Finite(v) => sol.value < crate::value::rational_to_f64(v) - tol,
            };
            rep.verdict = if !below {
                GapVerdict::NoGap
            } else if res <= tol && l7 <= tol {
                GapVerdict::Gap
            } else {
                rep.note = format!("candidate gap failed re-verification (residual {res:e}, L7 {l7:e})");
                GapVerdict::Inconclusive
            };
        }
        SdpOutcome::Infeasible { exact, diagnostics } => {
            rep.sdp_value = Some(f64::INFINITY);
            rep.exact_infeasible = exact;
            rep.diagnostics = diagnostics;
            rep.verdict = if vcspopt.is_infinite() {
                GapVerdict::NoGap
            } else {
                rep.note = "relaxation reported infeasible on a satisfiable instance".into();
                GapVerdict::Inconclusive
            };
        }
        SdpOutcome::NotConverged(d) => {
            rep.diagnostics = d;
            rep.note = "solver did not converge".into();
        }
    }
    if mode == SubsetMode::Scopes {
        rep.note = if rep.note.is_empty() { "weaker relaxation (scopes mode)".into() } else { format!("weaker relaxation (scopes mode); {}", rep.note) };
    }
    Ok(rep)
}

/// Iterates the family over `n_min..=n_max` (`samples` instances each).
pub fn gap_search(lang: &EquationLanguage, params: &GapSearch, caps: &Caps) -> Result<GapSearchOutcome> {
    if params.level < lang.r {
        return Err(Error::Arity(format!("level {} below the language arity {}", params.level, lang.r)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut reports = Vec::new();
    let mut exhausted = false;
    'outer: for n in params.n_min..=params.n_max {
        if params.family == Family::Tseitin && (n < 4 || n % 2 == 1) {
            continue;
        }
        for s in 0..params.samples {
            if reports.len() >= params.budget {
                exhausted = true;
                break 'outer;
            }
            let (inst, label) = match params.family {
                Family::Tseitin => {
                    let edges = if n == 4 { k4() } else { random_cubic_graph(n, &mut rng)? };
                    let mut charges = vec![0; n];
                    charges[rng.random_range(0..n)] = 1.min(lang.group.order() - 1);
                    (tseitin(lang, n, &edges, &charges)?, format!("tseitin n={n} sample={s} edges={edges:?} charges={charges:?}"))
                }
                Family::Kxor { ratio } => {
                    let seed = rng.random();
                    (random_kxor(lang, n, ratio * n, lang.r, seed)?, format!("kxor n={n} m={} seed={seed}", ratio * n))
                }
            };
            let mut rep = match examine(lang, &inst, params.level, params.mode, &params.sdp, caps) {
                Ok(r) => r,
                Err(e) if e.is_cap_exceeded() => {
                    exhausted = true;
                    break 'outer;
                }
                Err(e) => return Err(e),
            };
            rep.label = label;
            reports.push(rep);
        }
    }
    let verdict = if reports.iter().any(|r| r.verdict == GapVerdict::Gap) {
        GapVerdict::Gap
    } else if !exhausted && reports.iter().all(|r| r.verdict == GapVerdict::NoGap) {
        GapVerdict::NoGap
    } else {
        GapVerdict::Inconclusive
    };
    Ok(GapSearchOutcome { reports, verdict, exhausted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use proptest::prelude::*;

    fn z(n: usize) -> AbelianGroup {
        make_group(&format!("Z{n}")).unwrap()
    }

    #[test]
    fn parsing_and_small_groups() {
        let g = z(2);
        assert_eq!(g.order(), 2);
        assert_eq!(g.add(1, 1), 0);
        let k = make_group("Z2xZ2").unwrap();
        assert_eq!(k.order(), 4);
        assert!((0..4).all(|a| k.add(a, a) == 0));
        assert_eq!(k.to_string(), "Z2xZ2");
        assert!(make_group("Z1").is_err());
        assert!(make_group("Q8").is_err());
        assert_eq!(make_group("Z2xZ4").unwrap().residues(5), vec![1, 2]);
    }

    #[test]
    fn z6_is_z2_times_z3() {
        let (a, b) = (z(6), make_group("Z2xZ3").unwrap());
        // CRT: x ↦ (x mod 2, x mod 3)
        let phi = |x: usize| b.index(&[x % 2, x % 3]);
        let mut seen = [false; 6];
        for x in 0..6 {
            seen[phi(x)] = true;
            for y in 0..6 {
                assert_eq!(phi(a.add(x, y)), b.add(phi(x), phi(y)));
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn group_axioms() {
        for spec in ["Z2", "Z3", "Z4", "Z2xZ2", "Z2xZ4", "Z3xZ5", "Z16", "Z2xZ2xZ2xZ2"] {
            let g = make_group(spec).unwrap();
            let n = g.order();
            for a in 0..n {
                assert_eq!(g.add(a, g.zero()), a);
                assert_eq!(g.add(a, g.neg(a)), 0);
                for b in 0..n {
                    assert_eq!(g.add(a, b), g.add(b, a));
                    for c in 0..n {
                        assert_eq!(g.add(g.add(a, b), c), g.add(a, g.add(b, c)));
                    }
                }
            }
        }
    }

    #[test]
    fn relation_sizes() {
        let caps = Caps::default();
        let l2 = build_equation_language(&z(2), 3, &caps).unwrap();
        let r31 = l2.relation(3, 1).unwrap();
        let odd: Vec<Vec<usize>> = r31.feasible_tuples();
        assert_eq!(odd, vec![vec![0, 0, 1], vec![0, 1, 0], vec![1, 0, 0], vec![1, 1, 1]]);
        assert_eq!(l2.relation(1, 0).unwrap().feasible_tuples(), vec![vec![0]]);
        let l3 = build_equation_language(&z(3), 3, &caps).unwrap();
        for a in 0..3 {
            assert_eq!(l3.relation(2, a).unwrap().feasible_tuples().len(), 3);
        }
        let l = build_equation_language(&make_group("Z2xZ3").unwrap(), 3, &caps).unwrap();
        for m in 1..=3 {
            for a in 0..6 {
                assert_eq!(l.relation(m, a).unwrap().feasible_tuples().len(), 6usize.pow(m as u32 - 1));
            }
        }
    }

    #[test]
    fn contradictory_pair() {
        let l = build_equation_language(&z(2), 3, &Caps::default()).unwrap();
        let mut inst = Instance::new(2, 2);
        inst.add(l.relation(2, 0).unwrap().clone(), vec![0, 1]).unwrap();
        inst.add(l.relation(2, 1).unwrap().clone(), vec![0, 1]).unwrap();
        assert!(!linear_satisfiable(&inst, &l, &Caps::default()).unwrap());
        let mut one = Instance::new(3, 2);
        for a in 0..2 {
            one = Instance::new(3, 2);
            one.add(l.relation(3, a).unwrap().clone(), vec![0, 1, 2]).unwrap();
            assert!(linear_satisfiable(&one, &l, &Caps::default()).unwrap());
        }
        let _ = one;
    }

    #[test]
    fn k4_tseitin_parity() {
        let caps = Caps::default();
        let l = build_equation_language(&z(2), 3, &caps).unwrap();
        for mask in 0..16usize {
            let charges: Vec<usize> = (0..4).map(|i| (mask >> i) & 1).collect();
            let inst = tseitin(&l, 4, &k4(), &charges).unwrap();
            assert_eq!(inst.n(), 6);
            assert_eq!(inst.constraints().len(), 4);
            let odd = charges.iter().sum::<usize>() % 2 == 1;
            assert_eq!(linear_satisfiable(&inst, &l, &caps).unwrap(), !odd);
            assert_eq!(inst.brute_force_opt(&caps).unwrap().0.is_finite(), !odd);
        }
    }

    #[test]
    fn tseitin_degree_check() {
        let l = build_equation_language(&z(2), 2, &Caps::default()).unwrap();
        assert!(matches!(tseitin(&l, 4, &k4(), &[0; 4]), Err(Error::Arity(_))));
    }

    #[test]
    fn kxor_is_deterministic() {
        let l = build_equation_language(&z(2), 3, &Caps::default()).unwrap();
        let a = random_kxor(&l, 8, 10, 3, 7).unwrap();
        assert_eq!(a, random_kxor(&l, 8, 10, 3, 7).unwrap());
        assert_ne!(a, random_kxor(&l, 8, 10, 3, 8).unwrap());
        let empty = random_kxor(&l, 8, 0, 3, 7).unwrap();
        assert!(linear_satisfiable(&empty, &l, &Caps::default()).unwrap());
    }

    #[test]
    fn dense_kxor_is_mostly_unsatisfiable() {
        let caps = Caps::default();
        let l = build_equation_language(&z(2), 3, &caps).unwrap();
        let unsat = (0..20)
            .filter(|&s| !linear_satisfiable(&random_kxor(&l, 12, 48, 3, s).unwrap(), &l, &caps).unwrap())
            .count();
        assert!(unsat >= 15, "{unsat}/20 unsatisfiable");
    }

    #[test]
    fn cubic_graphs_are_cubic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [4, 6, 8, 10] {
            let e = random_cubic_graph(n, &mut rng).unwrap();
            assert_eq!(e.len(), 3 * n / 2);
            for v in 0..n {
                assert_eq!(e.iter().filter(|&&(a, b)| a == v || b == v).count(), 3);
            }
        }
    }

    #[test]
    fn full_level_has_no_gap() {
        let caps = Caps::default();
        let l = build_equation_language(&z(2), 3, &caps).unwrap();
        let params = GapSearch {
            family: Family::Kxor { ratio: 2 },
            level: 4,
            mode: SubsetMode::Full,
            n_min: 4,
            n_max: 4,
            samples: 3,
            seed: 3,
            budget: 10,
            sdp: SdpOptions::default(),
        };
        let out = gap_search(&l, &params, &caps).unwrap();
        assert_eq!(out.reports.len(), 3);
        assert!(out.reports.iter().all(|r| r.verdict == GapVerdict::NoGap), "{:?}", out.reports);
        assert_eq!(out.verdict, GapVerdict::NoGap);
    }

    #[test]
    fn exhausted_budget_is_inconclusive() {
        let caps = Caps::default();
        let l = build_equation_language(&z(2), 3, &caps).unwrap();
        let params = GapSearch {
            family: Family::Kxor { ratio: 2 },
            level: 3,
            mode: SubsetMode::Full,
            n_min: 3,
            n_max: 4,
            samples: 2,
            seed: 1,
            budget: 1,
            sdp: SdpOptions::default(),
        };
        let out = gap_search(&l, &params, &caps).unwrap();
        assert!(out.exhausted);
        assert_ne!(out.verdict, GapVerdict::NoGap);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn elimination_matches_enumeration(p in prop_oneof![Just(2usize), Just(3usize)], n in 1usize..7, m in 0usize..10, seed in any::<u64>()) {
            let caps = Caps::default();
            let l = build_equation_language(&z(p), 3, &caps).unwrap();
            let inst = random_kxor(&l, n.max(3), m, 3, seed).unwrap();
            let fin = inst.brute_force_opt(&caps).unwrap().0.is_finite();
            prop_assert_eq!(linear_satisfiable(&inst, &l, &caps).unwrap(), fin);
        }
    }
}
