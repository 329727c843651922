//! Gadget reductions between valued constraint languages.
//!
//! Every reduction produces a [`ReductionTrace`]: the source instance `I`, the
//! produced instance `J = Σ_i J_i`, and for each constraint `φ_i(x̄_i)` of `I`
//! a [`Part`] holding `X_i`, `Y_i`, the constraints of `J_i` and the map
//! `σ ↦ α^σ_i` as a table over `D^{X_i}`. Source variables that occur in no
//! constraint get a padding part (a null constraint on that variable).
//!
//! The trace is what the verification harness ([`verify_reduction`]) checks
//! and what [`transport_solution`] uses to build a Lasserre solution of `J`
//! from one of `I`.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};

use crate::caps::{sat_pow, Caps};
use crate::error::{Error, Result};
use crate::lasserre::{build_las, check_residuals, sdp_value, verify_l7, L7Report, LasModel, LasResiduals};
use crate::model::{
    decode_tuple, encode_tuple, is_sorted_subset, next_tuple, positions_in, sorted_union, Instance, Language,
    WeightedRelation,
};
use crate::augment::SubsetMode;
use crate::value::{denominator_lcm, floor_to_grid, ExtValue, Rational};

/// An instance template with designated external variables; the remaining
/// template variables are auxiliaries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gadget {
    target: String,
    template: Instance,
    externals: Vec<usize>,
    aux: Vec<usize>,
}

impl Gadget {
    pub fn new(target: impl Into<String>, template: Instance, externals: Vec<usize>) -> Result<Self> {
        let target = target.into();
        if externals.is_empty() {
            return Err(Error::GadgetMismatch(format!("gadget `{target}` has no external variables")));
        }
        for (i, &x) in externals.iter().enumerate() {
            if x >= template.n() {
                return Err(Error::GadgetMismatch(format!("gadget `{target}`: external {x} out of range")));
            }
            if externals[..i].contains(&x) {
                return Err(Error::GadgetMismatch(format!("gadget `{target}`: external {x} repeated")));
            }
        }
        let aux = (0..template.n()).filter(|v| !externals.contains(v)).collect();
        Ok(Gadget { target, template, externals, aux })
    }

    /// The gadget consisting of the single constraint `φ(x_1, …, x_m)`.
    pub fn single(relation: Arc<WeightedRelation>) -> Self {
        let m = relation.arity();
        let mut template = Instance::new(m, relation.domain());
        let name = String::from(relation.name());
        template.add(relation, (0..m).collect()).expect("scope matches arity");
        Gadget { target: name, template, externals: (0..m).collect(), aux: Vec::new() }
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn template(&self) -> &Instance {
        &self.template
    }

    pub fn externals(&self) -> &[usize] {
        &self.externals
    }

    pub fn aux(&self) -> &[usize] {
        &self.aux
    }

    pub fn arity(&self) -> usize {
        self.externals.len()
    }

    pub fn domain(&self) -> usize {
        self.template.d()
    }
}

/// The relation expressed by a gadget, with the canonical minimising
/// auxiliary assignment of every external tuple.
#[derive(Clone, Debug)]
pub struct Expressed {
    pub relation: WeightedRelation,
    witnesses: Vec<Vec<usize>>,
}

impl Expressed {
    /// Lexicographically smallest minimising auxiliary labels for `externals`.
    pub fn witness(&self, externals: &[usize]) -> &[usize] {
        &self.witnesses[encode_tuple(externals, self.relation.domain())]
    }
}

/// `φ(x̄) = min_v̄ φ_I(x̄, v̄)` by enumeration.
pub fn express(gadget: &Gadget, caps: &Caps) -> Result<Expressed> {
    let d = gadget.domain();
    let m = gadget.arity();
    let p = gadget.aux.len();
    let size = sat_pow(d as u128, (m + p) as u128);
    if size > caps.enumeration {
        return Err(Error::cap("gadget enumeration", size, caps.enumeration));
    }
    let mut table = Vec::with_capacity(d.pow(m as u32));
    let mut witnesses = Vec::with_capacity(d.pow(m as u32));
    let mut sigma = vec![0usize; gadget.template.n()];
    for code in 0..d.pow(m as u32) {
        let ext = decode_tuple(code, d, m);
        for (&v, &a) in gadget.externals.iter().zip(&ext) {
            sigma[v] = a;
        }
        let mut aux = vec![0usize; p];
        let mut best = (ExtValue::Infinite, aux.clone());
        loop {
            for (&v, &a) in gadget.aux.iter().zip(&aux) {
                sigma[v] = a;
            }
            let val = gadget.template.evaluate(&sigma);
            if val < best.0 {
                best = (val, aux.clone());
            }
            if !next_tuple(&mut aux, d) {
                break;
            }
        }
        table.push(best.0);
        witnesses.push(best.1);
    }
    let relation = WeightedRelation::new(gadget.target.clone(), m, d, table)?;
    Ok(Expressed { relation, witnesses })
}

/// An interpretation of a language over `D'` in one over `D` with parameters
/// `(dim, S, h)`, together with its verified gadgets.
#[derive(Clone, Debug)]
pub struct Interpretation {
    dim: usize,
    domain: usize,
    target_domain: usize,
    s: Vec<Vec<usize>>,
    h: Vec<usize>,
    /// `D'`-label → code of the lexicographically smallest `s ∈ S` with `h(s)` equal to it
    preimage: Vec<usize>,
    /// code over `D^dim` → `h` of it, if in `S`
    decode: Vec<Option<usize>>,
    phi_s: (Gadget, Expressed),
    eq: Gadget,
    gadgets: Vec<(Arc<WeightedRelation>, Gadget, Expressed)>,
}

impl Interpretation {
    /// Verifies every gadget by enumeration: `φ_S`, `h⁻¹(eq_{D'})` and
    /// `h⁻¹(φ)` for each relation of `target` (on tuples of `S`).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dim: usize,
        domain: usize,
        s: Vec<Vec<usize>>,
        h: Vec<usize>,
        target: &Language,
        phi_s: Gadget,
        eq: Gadget,
        gadgets: Vec<Gadget>,
        caps: &Caps,
    ) -> Result<Self> {
        let bad = |m: String| Error::Interpretation(m);
        if dim == 0 {
            return Err(bad("dimension must be positive".into()));
        }
        if s.len() != h.len() {
            return Err(bad(format!("|S| = {} but h has {} entries", s.len(), h.len())));
        }
        let dd = target.domain();
        let size = sat_pow(domain as u128, dim as u128);
        if size > caps.table {
            return Err(Error::cap("interpretation block", size, caps.table));
        }
        let mut decode = vec![None; size as usize];
        for (t, &img) in s.iter().zip(&h) {
            if t.len() != dim || t.iter().any(|&a| a >= domain) {
                return Err(bad(format!("S element {t:?} is not in D^{dim}")));
            }
            if img >= dd {
                return Err(bad(format!("h maps {t:?} to {img}, outside D' of size {dd}")));
            }
            let c = encode_tuple(t, domain);
            if decode[c].is_some() {
                return Err(bad(format!("S element {t:?} repeated")));
            }
            decode[c] = Some(img);
        }
        let mut preimage = vec![usize::MAX; dd];
        for (c, img) in decode.iter().enumerate() {
            if let Some(a) = *img {
                if preimage[a] == usize::MAX {
                    preimage[a] = c;
                }
            }
        }
        if let Some(a) = preimage.iter().position(|&c| c == usize::MAX) {
            return Err(bad(format!("h is not surjective: label {a} has no preimage")));
        }
        let check_domain = |g: &Gadget, arity: usize| -> Result<()> {
            if g.domain() != domain || g.arity() != arity {
                return Err(bad(format!(
                    "gadget `{}` has arity {} over domain {}, expected arity {arity} over {domain}",
                    g.target(),
                    g.arity(),
                    g.domain()
                )));
            }
            Ok(())
        };
        check_domain(&phi_s, dim)?;
        let phi_s_expr = express(&phi_s, caps)?;
        for (c, slot) in decode.iter().enumerate() {
            let want = if slot.is_some() { ExtValue::zero() } else { ExtValue::Infinite };
            let got = phi_s_expr.relation.value_at(c);
            if *got != want {
                return Err(bad(format!(
                    "gadget `{}` (φ_S) has value {got} at {:?}, expected {want}",
                    phi_s.target(),
                    decode_tuple(c, domain, dim)
                )));
            }
        }
        let pull = |g: &Gadget, expr: &Expressed, m: usize, f: &dyn Fn(&[usize]) -> ExtValue| -> Result<()> {
            let mut idx = vec![0usize; m];
            loop {
                let mut tuple = Vec::with_capacity(m * dim);
                let mut image = Vec::with_capacity(m);
                for &i in &idx {
                    tuple.extend(&s[i]);
                    image.push(h[i]);
                }
                let got = expr.relation.value(&tuple);
                let want = f(&image);
                if *got != want {
                    return Err(bad(format!(
                        "gadget `{}` has value {got} at {tuple:?}, expected {want}",
                        g.target()
                    )));
                }
                if !next_tuple(&mut idx, s.len()) {
                    return Ok(());
                }
            }
        };
        check_domain(&eq, 2 * dim)?;
        let eq_expr = express(&eq, caps)?;
        pull(&eq, &eq_expr, 2, &|t| if t[0] == t[1] { ExtValue::zero() } else { ExtValue::Infinite })?;
        let mut verified = Vec::new();
        for rel in target.relations() {
            let g = gadgets
                .iter()
                .find(|g| g.target() == rel.name())
                .ok_or_else(|| bad(format!("no gadget for relation `{}`", rel.name())))?;
            check_domain(g, dim * rel.arity())?;
            let expr = express(g, caps)?;
            pull(g, &expr, rel.arity(), &|t| rel.value(t).clone())?;
            verified.push((rel.clone(), g.clone(), expr));
        }
        Ok(Interpretation {
            dim,
            domain,
            target_domain: dd,
            s,
            h,
            preimage,
            decode,
            phi_s: (phi_s, phi_s_expr),
            eq,
            gadgets: verified,
        })
    }

    /// The interpretation of a language in itself: `dim = 1`, `S = D`, `h = id`.
    pub fn identity(lang: &Language, caps: &Caps) -> Result<Self> {
        let d = lang.domain();
        let phi_s = Gadget::new("S", Instance::new(1, d), vec![0])?;
        let eq = Gadget::single(Arc::new(WeightedRelation::equality(d)));
        let gadgets = lang.relations().iter().map(|r| Gadget::single(r.clone())).collect();
        Self::new(1, d, (0..d).map(|a| vec![a]).collect(), (0..d).collect(), lang, phi_s, eq, gadgets, caps)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> usize {
        self.domain
    }

    pub fn target_domain(&self) -> usize {
        self.target_domain
    }

    pub fn s(&self) -> &[Vec<usize>] {
        &self.s
    }

    pub fn h(&self) -> &[usize] {
        &self.h
    }

    pub fn eq_gadget(&self) -> &Gadget {
        &self.eq
    }

    /// `h(t)` for `t ∈ D^dim`, `None` outside `S`.
    pub fn apply_h(&self, t: &[usize]) -> Option<usize> {
        self.decode[encode_tuple(t, self.domain)]
    }

    /// The lexicographically smallest `s ∈ S` with `h(s) = a`.
    pub fn preimage(&self, a: usize) -> Vec<usize> {
        decode_tuple(self.preimage[a], self.domain, self.dim)
    }
}

/// Which construction produced a trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReductionKind {
    Identity,
    Expressibility,
    Equality,
    Interpretation,
    Opt,
    Feas,
    /// Gadget replacement without the exact-expression precondition.
    Custom,
    Composed,
}

impl fmt::Display for ReductionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReductionKind::Identity => "identity",
            ReductionKind::Expressibility => "express",
            ReductionKind::Equality => "eq",
            ReductionKind::Interpretation => "interp",
            ReductionKind::Opt => "opt",
            ReductionKind::Feas => "feas",
            ReductionKind::Custom => "custom",
            ReductionKind::Composed => "composed",
        })
    }
}

/// `vcspval(J_i, α^σ_i) ≤ scale · φ_i(σ) + shift` is the local condition
/// checked for each part; `(1, 0)` is the unscaled one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bound {
    pub scale: Rational,
    pub shift: Rational,
}

impl Bound {
    pub fn exact() -> Self {
        Bound { scale: Rational::one(), shift: Rational::zero() }
    }
}

/// One `(X_i, J_i, α_i)` of a trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Part {
    /// Source constraint, `None` for a padding part.
    pub source: Option<usize>,
    /// `X_i`, sorted.
    pub x: Vec<usize>,
    /// `Y_i`, sorted.
    pub y: Vec<usize>,
    /// Constraints of `J` forming `J_i`.
    pub constraints: Vec<usize>,
    /// `α^σ_i` (labels on `y`) for each code of `σ` over `x`.
    pub alpha: Vec<Vec<usize>>,
    pub bound: Bound,
}

/// How `vcspopt(I)` is recovered from values of `J`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ValueMap {
    Exact,
    /// `v − offset` when at most `threshold`, else `∞`.
    Opt { copies: usize, offset: Rational, threshold: Rational },
    /// `⌊(v − offset) / copies⌋` on the grid `1/grid`.
    Feas { copies: usize, offset: Rational, grid: BigInt },
    /// Maps of successive reductions, first to last.
    Chain(Vec<ValueMap>),
}

impl ValueMap {
    pub fn recover(&self, v: &ExtValue) -> ExtValue {
        let ExtValue::Finite(x) = v else { return ExtValue::Infinite };
        match self {
            ValueMap::Exact => v.clone(),
            ValueMap::Opt { offset, threshold, .. } => {
                let r = x - offset;
                if &r <= threshold {
                    ExtValue::Finite(r)
                } else {
                    ExtValue::Infinite
                }
            }
            ValueMap::Feas { copies, offset, grid } => {
                let r = (x - offset) / Rational::from_integer(BigInt::from(*copies));
                ExtValue::Finite(floor_to_grid(&r, grid))
            }
            ValueMap::Chain(maps) => maps.iter().rev().fold(v.clone(), |acc, m| m.recover(&acc)),
        }
    }

    /// The copy count `M` of a scaled reduction (1 when unscaled).
    pub fn copies(&self) -> usize {
        match self {
            ValueMap::Exact => 1,
            ValueMap::Opt { copies, .. } | ValueMap::Feas { copies, .. } => *copies,
            ValueMap::Chain(maps) => maps.iter().map(ValueMap::copies).product(),
        }
    }
}

/// How an assignment of `J` is pulled back to `I` (the `σ^α` of condition (a)).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Pullback {
    /// `σ(x) = α(map[x])`.
    Vars(Vec<usize>),
    /// `σ(x) = h(α(blocks[x]))`; `decode` maps block codes to `h`.
    Blocks { blocks: Vec<Vec<usize>>, domain: usize, decode: Vec<Option<usize>> },
    /// Pull back along the second map, then the first.
    Chain(Box<Pullback>, Box<Pullback>),
}

impl Pullback {
    pub fn pull(&self, alpha: &[usize]) -> Option<Vec<usize>> {
        match self {
            Pullback::Vars(map) => Some(map.iter().map(|&v| alpha[v]).collect()),
            Pullback::Blocks { blocks, domain, decode } => blocks
                .iter()
                .map(|b| {
                    let t: Vec<usize> = b.iter().map(|&v| alpha[v]).collect();
                    decode[encode_tuple(&t, *domain)]
                })
                .collect(),
            Pullback::Chain(first, second) => first.pull(&second.pull(alpha)?),
        }
    }
}

/// The record of a reduction `I ↦ J`.
#[derive(Clone, Debug)]
pub struct ReductionTrace {
    kind: ReductionKind,
    source: Instance,
    target: Instance,
    parts: Vec<Part>,
    value_map: ValueMap,
    pullback: Pullback,
    /// Representative of each source variable under merged equalities.
    merged: Option<Vec<usize>>,
}

impl ReductionTrace {
    /// `J = I` with `α = id`.
    pub fn identity(inst: &Instance) -> Self {
        let mut b = Builder::new(inst.d());
        b.reserve(inst.n());
        for (i, c) in inst.constraints().iter().enumerate() {
            let j = b.push(c.relation().clone(), c.scope().to_vec());
            b.part(Some(i), c.scope_set().to_vec(), vec![j], Bound::exact(), inst.d(), |x, s| x.iter().copied().zip(s.iter().copied()).collect());
        }
        b.pad_vars(inst, |v| v);
        b.finish(ReductionKind::Identity, inst, ValueMap::Exact, Pullback::Vars((0..inst.n()).collect()), None)
    }

    pub fn kind(&self) -> ReductionKind {
        self.kind
    }

    pub fn source(&self) -> &Instance {
        &self.source
    }

    pub fn target(&self) -> &Instance {
        &self.target
    }

    pub fn parts(&self) -> &[Part] {
        &self.parts
    }

    /// Mutable access to the parts, for negative controls of the harness.
    pub fn parts_mut(&mut self) -> &mut [Part] {
        &mut self.parts
    }

    pub fn value_map(&self) -> &ValueMap {
        &self.value_map
    }

    pub fn pullback(&self) -> &Pullback {
        &self.pullback
    }

    /// `vcspopt(I)` as determined by `vcspopt(J)`.
    pub fn recover_value(&self, target_value: &ExtValue) -> ExtValue {
        self.value_map.recover(target_value)
    }

    /// Necessary condition for `σ` on the sorted set `vars` to have positive
    /// support in a feasible Las(k) solution with `k ≥ 2` and `k ≥` arity:
    /// every constraint inside `vars` is finite and merged variables agree.
    pub fn may_support(&self, vars: &[usize], labels: &[usize]) -> bool {
        for c in self.source.constraints() {
            if is_sorted_subset(c.scope_set(), vars) {
                let pos = positions_in(c.scope_set(), vars);
                let sub: Vec<usize> = pos.iter().map(|&p| labels[p]).collect();
                if c.value_on_set(&sub).is_infinite() {
                    return false;
                }
            }
        }
        if let Some(rep) = &self.merged {
            for i in 0..vars.len() {
                for j in i + 1..vars.len() {
                    if rep[vars[i]] == rep[vars[j]] && labels[i] != labels[j] {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// The trace of `I ↦ J ↦ K` from `self: I ↦ J` and `next: J ↦ K`.
    pub fn then(&self, next: &ReductionTrace) -> Result<ReductionTrace> {
        if next.source != self.target {
            return Err(Error::InvalidInstance("composed traces must chain: source of the second is not the target of the first".into()));
        }
        let mut parts = Vec::with_capacity(self.parts.len());
        for p1 in &self.parts {
            let members: Vec<&Part> = next
                .parts
                .iter()
                .filter(|p2| match p2.source {
                    Some(c) => p1.constraints.contains(&c),
                    None => is_sorted_subset(&p2.x, &p1.y),
                })
                .collect();
            let mut constraints: Vec<usize> = members.iter().flat_map(|p| p.constraints.iter().copied()).collect();
            constraints.sort_unstable();
            constraints.dedup();
            let mut y: Vec<usize> = Vec::new();
            for p in &members {
                y = sorted_union(&y, &p.y);
            }
            let dj = next.source.d();
            let mut alpha = Vec::with_capacity(p1.alpha.len());
            for a1 in &p1.alpha {
                let mut map: BTreeMap<usize, usize> = BTreeMap::new();
                for p2 in &members {
                    let pos = positions_in(&p2.x, &p1.y);
                    let sub: Vec<usize> = pos.iter().map(|&q| a1[q]).collect();
                    let a2 = &p2.alpha[encode_tuple(&sub, dj)];
                    for (&v, &l) in p2.y.iter().zip(a2) {
                        map.entry(v).or_insert(l);
                    }
                }
                alpha.push(y.iter().map(|v| map[v]).collect());
            }
            let mut scale: Option<Rational> = None;
            let mut shift = Rational::zero();
            for p2 in &members {
                shift += &p2.bound.shift;
                let crisp = p2.source.is_none_or(|c| next.source.constraints()[c].relation().is_crisp());
                if !crisp {
                    match &scale {
                        None => scale = Some(p2.bound.scale.clone()),
                        Some(s) if *s == p2.bound.scale => {}
                        Some(_) => {
                            return Err(Error::Value("cannot compose: parts of one gadget are scaled differently".into()))
                        }
                    }
                }
            }
            let s2 = scale.unwrap_or_else(Rational::one);
            let bound = Bound { scale: &s2 * &p1.bound.scale, shift: &s2 * &p1.bound.shift + shift };
            parts.push(Part { source: p1.source, x: p1.x.clone(), y, constraints, alpha, bound });
        }
        Ok(ReductionTrace {
            kind: ReductionKind::Composed,
            source: self.source.clone(),
            target: next.target.clone(),
            parts,
            value_map: ValueMap::Chain(vec![self.value_map.clone(), next.value_map.clone()]),
            pullback: Pullback::Chain(Box::new(self.pullback.clone()), Box::new(next.pullback.clone())),
            merged: self.merged.clone(),
        })
    }
}

/// Accumulates the constraints of `J` and the parts.
struct Builder {
    d: usize,
    n: usize,
    constraints: Vec<(Arc<WeightedRelation>, Vec<usize>)>,
    parts: Vec<Part>,
}

impl Builder {
    fn new(d: usize) -> Self {
        Builder { d, n: 0, constraints: Vec::new(), parts: Vec::new() }
    }

    /// Fresh variables `n..n+count`.
    fn reserve(&mut self, count: usize) -> usize {
        let base = self.n;
        self.n += count;
        base
    }

    fn push(&mut self, rel: Arc<WeightedRelation>, scope: Vec<usize>) -> usize {
        self.constraints.push((rel, scope));
        self.constraints.len() - 1
    }

    /// Copies a gadget with externals on `ext` and fresh auxiliaries;
    /// returns the auxiliary variables and the new constraint indices.
    fn instantiate(&mut self, g: &Gadget, ext: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let base = self.reserve(g.aux.len());
        let map = |v: usize| match g.externals.iter().position(|&e| e == v) {
            Some(j) => ext[j],
            None => base + g.aux.iter().position(|&a| a == v).expect("aux var"),
        };
        let mut idx = Vec::new();
        for c in g.template.constraints() {
            let scope = c.scope().iter().map(|&v| map(v)).collect();
            idx.push(self.push(c.relation().clone(), scope));
        }
        ((base..base + g.aux.len()).collect(), idx)
    }

    /// Adds a part; `f(x, σ)` lists the `(J variable, label)` pairs of `α^σ`.
    fn part(
        &mut self,
        source: Option<usize>,
        x: Vec<usize>,
        constraints: Vec<usize>,
        bound: Bound,
        d: usize,
        f: impl Fn(&[usize], &[usize]) -> BTreeMap<usize, usize>,
    ) {
        let count = d.pow(x.len() as u32);
        let mut y: Vec<usize> = Vec::new();
        let mut alpha = Vec::with_capacity(count);
        for code in 0..count {
            let sigma = decode_tuple(code, d, x.len());
            let map = f(&x, &sigma);
            if code == 0 {
                y = map.keys().copied().collect();
            }
            alpha.push(map.into_values().collect());
        }
        self.parts.push(Part { source, x, y, constraints, alpha, bound });
    }

    /// Padding parts `X = {v}` with `Y` the image of `v`, for isolated variables.
    fn pad_vars(&mut self, inst: &Instance, image: impl Fn(usize) -> usize) {
        let mut used = vec![false; inst.n()];
        for c in inst.constraints() {
            for &v in c.scope() {
                used[v] = true;
            }
        }
        for v in (0..inst.n()).filter(|&v| !used[v]) {
            let w = image(v);
            self.part(None, vec![v], Vec::new(), Bound::exact(), inst.d(), |_, s| [(w, s[0])].into_iter().collect());
        }
    }

    fn finish(
        self,
        kind: ReductionKind,
        source: &Instance,
        value_map: ValueMap,
        pullback: Pullback,
        merged: Option<Vec<usize>>,
    ) -> ReductionTrace {
        let mut target = Instance::new(self.n, self.d);
        for (rel, scope) in self.constraints {
            target.add(rel, scope).expect("builder scopes are in range");
        }
        ReductionTrace { kind, source: source.clone(), target, parts: self.parts, value_map, pullback, merged }
    }
}

fn identity_part(b: &mut Builder, inst: &Instance, i: usize, copies: usize, scale: Rational) {
    let c = &inst.constraints()[i];
    let idx: Vec<usize> = (0..copies).map(|_| b.push(c.relation().clone(), c.scope().to_vec())).collect();
    let bound = Bound { scale, shift: Rational::zero() };
    b.part(Some(i), c.scope_set().to_vec(), idx, bound, inst.d(), |x, s| x.iter().copied().zip(s.iter().copied()).collect());
}

/// Replaces each constraint whose relation is the target of a gadget by a
/// fresh copy of that gadget. Every gadget must express its target exactly.
pub fn reduce_expressibility(inst: &Instance, gadgets: &[Gadget], caps: &Caps) -> Result<ReductionTrace> {
    replace_gadgets(inst, gadgets, caps, true)
}

/// As [`reduce_expressibility`] but without requiring exact expression; the
/// harness decides whether the result is a valid reduction.
pub fn reduce_with_gadgets(inst: &Instance, gadgets: &[Gadget], caps: &Caps) -> Result<ReductionTrace> {
    replace_gadgets(inst, gadgets, caps, false)
}

fn replace_gadgets(inst: &Instance, gadgets: &[Gadget], caps: &Caps, exact: bool) -> Result<ReductionTrace> {
    let d = inst.d();
    let mut expressed = Vec::with_capacity(gadgets.len());
    for g in gadgets {
        if g.domain() != d {
            return Err(Error::DomainMismatch(format!(
                "gadget `{}` has domain {} but the instance has {d}",
                g.target(),
                g.domain()
            )));
        }
        expressed.push(express(g, caps)?);
    }
    let mut b = Builder::new(d);
    b.reserve(inst.n());
    for (i, c) in inst.constraints().iter().enumerate() {
        let found = gadgets.iter().position(|g| g.target() == c.relation().name());
        let Some(gi) = found else {
            identity_part(&mut b, inst, i, 1, Rational::one());
            continue;
        };
        let (g, expr) = (&gadgets[gi], &expressed[gi]);
        if g.arity() != c.relation().arity() {
            return Err(Error::GadgetMismatch(format!(
                "gadget `{}` has arity {} but the relation has {}",
                g.target(),
                g.arity(),
                c.relation().arity()
            )));
        }
        if exact && !expr.relation.same_table(c.relation()) {
            let code = (0..expr.relation.table().len())
                .find(|&k| expr.relation.value_at(k) != c.relation().value_at(k))
                .expect("tables differ");
            return Err(Error::GadgetMismatch(format!(
                "gadget `{}` expresses {} at {:?}, relation has {}",
                g.target(),
                expr.relation.value_at(code),
                decode_tuple(code, d, g.arity()),
                c.relation().value_at(code)
            )));
        }
        let scope = c.scope().to_vec();
        let (aux, idx) = b.instantiate(g, &scope);
        b.part(Some(i), c.scope_set().to_vec(), idx, Bound::exact(), d, |x, s| {
            let ext: Vec<usize> = scope.iter().map(|v| s[x.binary_search(v).expect("scope var")]).collect();
            let mut map: BTreeMap<usize, usize> = x.iter().copied().zip(s.iter().copied()).collect();
            map.extend(aux.iter().copied().zip(expr.witness(&ext).iter().copied()));
            map
        });
    }
    b.pad_vars(inst, |v| v);
    let kind = if exact { ReductionKind::Expressibility } else { ReductionKind::Custom };
    Ok(b.finish(kind, inst, ValueMap::Exact, Pullback::Vars((0..inst.n()).collect()), None))
}

fn is_equality(rel: &WeightedRelation) -> bool {
    rel.same_table(&WeightedRelation::equality(rel.domain()))
}

/// Merges variables along equality constraints; each class is represented by
/// its smallest variable, and `J` has one variable per class.
pub fn reduce_equality(inst: &Instance) -> ReductionTrace {
    let n = inst.n();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], v: usize) -> usize {
        let mut r = v;
        while p[r] != r {
            r = p[r];
        }
        let mut v = v;
        while p[v] != r {
            let next = p[v];
            p[v] = r;
            v = next;
        }
        r
    }
    for c in inst.constraints() {
        if is_equality(c.relation()) {
            let a = find(&mut parent, c.scope()[0]);
            let b = find(&mut parent, c.scope()[1]);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            parent[hi] = lo;
        }
    }
    let rep: Vec<usize> = (0..n).map(|v| find(&mut parent, v)).collect();
    let mut jvar = vec![usize::MAX; n];
    let mut count = 0;
    for v in 0..n {
        if rep[v] == v {
            jvar[v] = count;
            count += 1;
        }
    }
    let image: Vec<usize> = (0..n).map(|v| jvar[rep[v]]).collect();
    let mut b = Builder::new(inst.d());
    b.reserve(count);
    for (i, c) in inst.constraints().iter().enumerate() {
        let idx = if is_equality(c.relation()) {
            Vec::new()
        } else {
            let scope = c.scope().iter().map(|&v| image[v]).collect();
            vec![b.push(c.relation().clone(), scope)]
        };
        b.part(Some(i), c.scope_set().to_vec(), idx, Bound::exact(), inst.d(), |x, s| {
            let mut map = BTreeMap::new();
            for (&v, &l) in x.iter().zip(s) {
                map.entry(image[v]).or_insert(l);
            }
            map
        });
    }
    b.pad_vars(inst, |v| image[v]);
    b.finish(ReductionKind::Equality, inst, ValueMap::Exact, Pullback::Vars(image), Some(rep))
}

/// Replaces each variable by a block of `dim` variables constrained by `φ_S`
/// and each constraint by its pulled-back gadget.
pub fn apply_interpretation(interp: &Interpretation, inst: &Instance) -> Result<ReductionTrace> {
    if inst.d() != interp.target_domain {
        return Err(Error::DomainMismatch(format!(
            "instance domain {} but the interpretation targets {}",
            inst.d(),
            interp.target_domain
        )));
    }
    let dim = interp.dim;
    let mut b = Builder::new(interp.domain);
    let base = b.reserve(inst.n() * dim);
    let blocks: Vec<Vec<usize>> = (0..inst.n()).map(|v| (base + v * dim..base + (v + 1) * dim).collect()).collect();
    let (sg, se) = &interp.phi_s;
    let mut used = vec![false; inst.n()];
    for (i, c) in inst.constraints().iter().enumerate() {
        let (_, g, expr) = interp
            .gadgets
            .iter()
            .find(|(r, _, _)| r.name() == c.relation().name() && r.same_table(c.relation()))
            .ok_or_else(|| Error::Interpretation(format!("no verified gadget for relation `{}`", c.relation().name())))?;
        let mut idx = Vec::new();
        let mut s_aux = Vec::new();
        for &v in c.scope_set() {
            used[v] = true;
            let (aux, ci) = b.instantiate(sg, &blocks[v]);
            idx.extend(ci);
            s_aux.push(aux);
        }
        let ext: Vec<usize> = c.scope().iter().flat_map(|&v| blocks[v].iter().copied()).collect();
        let (g_aux, ci) = b.instantiate(g, &ext);
        idx.extend(ci);
        let scope = c.scope().to_vec();
        let blocks = &blocks;
        b.part(Some(i), c.scope_set().to_vec(), idx, Bound::exact(), inst.d(), |x, s| {
            let mut map = BTreeMap::new();
            for (k, (&v, &l)) in x.iter().zip(s).enumerate() {
                let t = interp.preimage(l);
                map.extend(blocks[v].iter().copied().zip(t.iter().copied()));
                map.extend(s_aux[k].iter().copied().zip(se.witness(&t).iter().copied()));
            }
            let ext_labels: Vec<usize> = scope
                .iter()
                .flat_map(|v| interp.preimage(s[x.binary_search(v).expect("scope var")]))
                .collect();
            map.extend(g_aux.iter().copied().zip(expr.witness(&ext_labels).iter().copied()));
            map
        });
    }
    for v in (0..inst.n()).filter(|&v| !used[v]) {
        let (aux, idx) = b.instantiate(sg, &blocks[v]);
        let blk = blocks[v].clone();
        b.part(None, vec![v], idx, Bound::exact(), inst.d(), |_, s| {
            let t = interp.preimage(s[0]);
            let mut map: BTreeMap<usize, usize> = blk.iter().copied().zip(t.iter().copied()).collect();
            map.extend(aux.iter().copied().zip(se.witness(&t).iter().copied()));
            map
        });
    }
    let pullback = Pullback::Blocks { blocks: blocks.clone(), domain: interp.domain, decode: interp.decode.clone() };
    Ok(b.finish(ReductionKind::Interpretation, inst, ValueMap::Exact, pullback, None))
}

/// The copy count `M = ⌊q·W·L⌋ + 1` (1 when `φ` is crisp): `q` constraints,
/// `W` the largest spread of finite values and `L` the common denominator of
/// all finite values, over the instance's relations and `φ`.
pub fn copy_count(inst: &Instance, phi: &WeightedRelation, caps: &Caps) -> Result<usize> {
    if phi.is_crisp() {
        return Ok(1);
    }
    let mut rels = inst.relations();
    rels.push(Arc::new(phi.clone()));
    let mut w = Rational::zero();
    for r in &rels {
        if let (Some(lo), Some(hi)) = (r.min_finite(), r.max_finite()) {
            let spread = hi - lo;
            if spread > w {
                w = spread;
            }
        }
    }
    let l = denominator_lcm(rels.iter().flat_map(|r| r.table().iter().filter_map(ExtValue::finite)));
    let q = Rational::from_integer(BigInt::from(inst.constraints().len()));
    let m = (q * w * Rational::from_integer(l)).floor().to_integer() + BigInt::one();
    let big = || Error::Overflow(format!("copy count {m} exceeds cap {}", caps.copies));
    let m = m.to_u128().ok_or_else(big)?;
    if m > caps.copies {
        return Err(big());
    }
    Ok(m as usize)
}

/// Replaces each `opt(φ)` constraint by `M` copies of `φ`.
pub fn reduce_opt(inst: &Instance, phi: &Arc<WeightedRelation>, caps: &Caps) -> Result<ReductionTrace> {
    check_phi(inst, phi)?;
    let target = phi.opt();
    let m = copy_count(inst, phi, caps)?;
    let hits: Vec<bool> = inst.constraints().iter().map(|c| c.relation().same_table(&target)).collect();
    let s = hits.iter().filter(|&&h| h).count();
    check_copies(s * m + inst.constraints().len(), caps)?;
    let min = phi.min_finite().unwrap_or_else(Rational::zero);
    let mut threshold = Rational::zero();
    let mut b = Builder::new(inst.d());
    b.reserve(inst.n());
    for (i, c) in inst.constraints().iter().enumerate() {
        if hits[i] {
            let idx: Vec<usize> = (0..m).map(|_| b.push(phi.clone(), c.scope().to_vec())).collect();
            let shift = Rational::from_integer(BigInt::from(m)) * &min;
            let bound = Bound { scale: Rational::one(), shift };
            b.part(Some(i), c.scope_set().to_vec(), idx, bound, inst.d(), |x, s| x.iter().copied().zip(s.iter().copied()).collect());
        } else {
            threshold += c.relation().max_finite().unwrap_or_else(Rational::zero);
            identity_part(&mut b, inst, i, 1, Rational::one());
        }
    }
    b.pad_vars(inst, |v| v);
    let offset = Rational::from_integer(BigInt::from(s * m)) * min;
    let map = ValueMap::Opt { copies: m, offset, threshold };
    Ok(b.finish(ReductionKind::Opt, inst, map, Pullback::Vars((0..inst.n()).collect()), None))
}

/// Replaces each `feas(φ)` constraint by one copy of `φ` and repeats every
/// other constraint `M` times.
pub fn reduce_feas(inst: &Instance, phi: &Arc<WeightedRelation>, caps: &Caps) -> Result<ReductionTrace> {
    check_phi(inst, phi)?;
    let target = phi.feas();
    let m = copy_count(inst, phi, caps)?;
    let hits: Vec<bool> = inst.constraints().iter().map(|c| c.relation().same_table(&target)).collect();
    let t = hits.iter().filter(|&&h| h).count();
    check_copies((inst.constraints().len() - t) * m + t, caps)?;
    let min = phi.min_finite().unwrap_or_else(Rational::zero);
    let max = phi.max_finite().unwrap_or_else(Rational::zero);
    let mut b = Builder::new(inst.d());
    b.reserve(inst.n());
    let mut rels = inst.relations();
    rels.push(phi.clone());
    let grid = denominator_lcm(rels.iter().flat_map(|r| r.table().iter().filter_map(ExtValue::finite)));
    for (i, c) in inst.constraints().iter().enumerate() {
        if hits[i] {
            let idx = vec![b.push(phi.clone(), c.scope().to_vec())];
            let bound = Bound { scale: Rational::one(), shift: max.clone() };
            b.part(Some(i), c.scope_set().to_vec(), idx, bound, inst.d(), |x, s| x.iter().copied().zip(s.iter().copied()).collect());
        } else {
            identity_part(&mut b, inst, i, m, Rational::from_integer(BigInt::from(m)));
        }
    }
    b.pad_vars(inst, |v| v);
    let offset = Rational::from_integer(BigInt::from(t)) * min;
    let map = ValueMap::Feas { copies: m, offset, grid };
    Ok(b.finish(ReductionKind::Feas, inst, map, Pullback::Vars((0..inst.n()).collect()), None))
}

fn check_phi(inst: &Instance, phi: &WeightedRelation) -> Result<()> {
    if phi.domain() != inst.d() {
        return Err(Error::DomainMismatch(format!("φ has domain {} but the instance has {}", phi.domain(), inst.d())));
    }
    if phi.min_finite().is_none() {
        return Err(Error::InvalidRelation(format!("`{}` has no finite value", phi.name())));
    }
    Ok(())
}

fn check_copies(total: usize, caps: &Caps) -> Result<()> {
    if total as u128 > caps.copies {
        return Err(Error::Overflow(format!("{total} constraints exceed the copy cap {}", caps.copies)));
    }
    Ok(())
}

/// A concrete failure of one of the conditions (a)–(c).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// (a): an optimal `α` of `J` whose pull-back is worse than its value.
    Optimal { alpha: Vec<usize>, sigma: Option<Vec<usize>>, source_value: ExtValue, bound: ExtValue },
    /// (b): `σ` on `X_i` whose `α^σ_i` exceeds the local bound.
    Local { part: usize, sigma: Vec<usize>, alpha: Vec<usize>, value: ExtValue, bound: ExtValue },
    /// (c): `α^{σ_i}_i` and `α^{σ_r}_r` disagree on a shared variable.
    Consistency { parts: (usize, usize), vars: Vec<usize>, sigma: Vec<usize>, var: usize, labels: (usize, usize) },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Optimal { alpha, sigma, source_value, bound } => match sigma {
                Some(s) => write!(f, "optimal α {alpha:?} pulls back to σ {s:?} of value {source_value} > {bound}"),
                None => write!(f, "optimal α {alpha:?} has no pull-back (bound {bound})"),
            },
            Violation::Local { part, sigma, alpha, value, bound } => {
                write!(f, "part {part}: σ {sigma:?} gives α {alpha:?} of value {value} > {bound}")
            }
            Violation::Consistency { parts, vars, sigma, var, labels } => write!(
                f,
                "parts {} and {}: σ {sigma:?} on {vars:?} gives labels {} and {} to J variable {var}",
                parts.0, parts.1, labels.0, labels.1
            ),
        }
    }
}

/// Outcome of [`verify_reduction`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyReport {
    pub source_opt: ExtValue,
    pub target_opt: ExtValue,
    /// `vcspopt(I)` recovered from `vcspopt(J)` through the value map.
    pub recovered_opt: ExtValue,
    pub checked_a: usize,
    pub checked_b: usize,
    pub checked_c: usize,
    pub a: Option<Violation>,
    pub b: Option<Violation>,
    pub c: Option<Violation>,
}

impl VerifyReport {
    pub fn values_agree(&self) -> bool {
        self.source_opt == self.recovered_opt
    }

    pub fn passed(&self) -> bool {
        self.values_agree() && self.a.is_none() && self.b.is_none() && self.c.is_none()
    }
}

/// Exhaustive check of the reduction conditions.
///
/// (a) runs over all optimal assignments of `J`; (b) and (c) over every
/// assignment `σ` passing [`ReductionTrace::may_support`], which contains the
/// positive support of every feasible Las(k) solution. Values are compared
/// through the trace's value map and per-part bounds. The first violation of
/// each condition (in enumeration order) is reported.
pub fn verify_reduction(trace: &ReductionTrace, caps: &Caps) -> Result<VerifyReport> {
    let (source_opt, _) = trace.source.brute_force_opt(caps)?;
    let (target_opt, optimal) = trace.target.optimal_assignments(caps)?;
    let recovered_opt = trace.recover_value(&target_opt);
    let mut rep = VerifyReport {
        source_opt,
        target_opt,
        recovered_opt,
        checked_a: 0,
        checked_b: 0,
        checked_c: 0,
        a: None,
        b: None,
        c: None,
    };
    for alpha in &optimal {
        rep.checked_a += 1;
        let bound = trace.recover_value(&trace.target.evaluate(alpha));
        if bound.is_infinite() {
            continue;
        }
        let sigma = trace.pullback.pull(alpha);
        let source_value = sigma.as_ref().map_or(ExtValue::Infinite, |s| trace.source.evaluate(s));
        if source_value > bound {
            rep.a = Some(Violation::Optimal { alpha: alpha.clone(), sigma, source_value, bound });
            break;
        }
    }
    let d = trace.source.d();
    let dj = trace.target.d();
    'b: for (i, p) in trace.parts.iter().enumerate() {
        for code in 0..p.alpha.len() {
            let sigma = decode_tuple(code, d, p.x.len());
            let phi = match p.source {
                Some(c) => trace.source.constraints()[c].value_on_set(&sigma).clone(),
                None => ExtValue::zero(),
            };
            let ExtValue::Finite(phi) = phi else { continue };
            if !trace.may_support(&p.x, &sigma) {
                continue;
            }
            rep.checked_b += 1;
            let alpha = &p.alpha[code];
            let value = part_value(trace, p, alpha, dj);
            let bound = &p.bound.scale * phi + &p.bound.shift;
            if value.finite().is_none_or(|v| *v > bound) {
                rep.b = Some(Violation::Local {
                    part: i,
                    sigma,
                    alpha: alpha.clone(),
                    value,
                    bound: ExtValue::Finite(bound),
                });
                break 'b;
            }
        }
    }
    'c: for i in 0..trace.parts.len() {
        for r in i + 1..trace.parts.len() {
            let (pi, pr) = (&trace.parts[i], &trace.parts[r]);
            let shared: Vec<usize> = pi.y.iter().copied().filter(|v| pr.y.binary_search(v).is_ok()).collect();
            if shared.is_empty() {
                continue;
            }
            let vars = sorted_union(&pi.x, &pr.x);
            let size = sat_pow(d as u128, vars.len() as u128);
            if size > caps.enumeration {
                return Err(Error::cap("consistency enumeration", size, caps.enumeration));
            }
            let (xi, xr) = (positions_in(&pi.x, &vars), positions_in(&pr.x, &vars));
            let mut sigma = vec![0usize; vars.len()];
            loop {
                if trace.may_support(&vars, &sigma) {
                    rep.checked_c += 1;
                    let si: Vec<usize> = xi.iter().map(|&q| sigma[q]).collect();
                    let sr: Vec<usize> = xr.iter().map(|&q| sigma[q]).collect();
                    let ai = &pi.alpha[encode_tuple(&si, d)];
                    let ar = &pr.alpha[encode_tuple(&sr, d)];
                    for &v in &shared {
                        let li = ai[pi.y.binary_search(&v).expect("shared")];
                        let lr = ar[pr.y.binary_search(&v).expect("shared")];
                        if li != lr {
                            rep.c = Some(Violation::Consistency {
                                parts: (i, r),
                                vars: vars.clone(),
                                sigma: sigma.clone(),
                                var: v,
                                labels: (li, lr),
                            });
                            break 'c;
                        }
                    }
                }
                if !next_tuple(&mut sigma, d) {
                    break;
                }
            }
        }
    }
    Ok(rep)
}

/// `vcspval(J_i, α)` for `α` on `Y_i`.
fn part_value(trace: &ReductionTrace, p: &Part, alpha: &[usize], dj: usize) -> ExtValue {
    let mut acc = ExtValue::zero();
    for &j in &p.constraints {
        let c = &trace.target.constraints()[j];
        let code = c
            .scope()
            .iter()
            .fold(0usize, |a, v| a * dj + alpha[p.y.binary_search(v).expect("J_i scope inside Y_i")]);
        acc += c.relation().value_at(code);
    }
    acc
}

/// `k = max{k', ar(J)} · ar(I)`; the source solution must be of level `2k`.
pub fn transport_levels(trace: &ReductionTrace, k_prime: usize) -> (usize, usize) {
    let ar_s = trace.source.max_arity().max(1);
    let ar_t = trace.target.max_arity().max(1);
    let k = k_prime.max(ar_t) * ar_s;
    (k, 2 * k)
}

/// A Lasserre solution of `J` built from one of `I`.
#[derive(Clone, Debug)]
pub struct Transported {
    /// Las(k') model of `J`.
    pub model: LasModel,
    pub gram: DMatrix<f64>,
    pub residuals: LasResiduals,
    pub l7: L7Report,
    /// `sdpval(I, λ, 2k)`.
    pub source_value: f64,
    /// `sdpval(J, κ, k')`.
    pub target_value: f64,
    /// Largest entrywise difference between `κ` computed from two admissible
    /// choices of `X_i`; `None` if only one choice was found.
    pub well_definedness: Option<f64>,
}

/// Builds `κ` for the Las(k') relaxation of `J` from a Gram matrix `λ` of
/// `source_model` (the Las(2k) relaxation of `I`): for each index `(Y', α)`
/// of `J`, `κ(α) = Σ_{σ : α^σ_X|Y' = α} λ_X(σ)` for an admissible `X`, a
/// union of part scopes whose images cover `Y'`. Gram entries of `κ` are
/// sums of entries of `λ`.
pub fn transport_solution(
    trace: &ReductionTrace,
    source_model: &LasModel,
    lambda: &DMatrix<f64>,
    k_prime: usize,
    caps: &Caps,
) -> Result<Transported> {
    let bad = |m: String| Error::Transport(m);
    if source_model.instance() != &trace.source {
        return Err(bad("the Lasserre model is not built on the trace's source instance".into()));
    }
    let (k, two_k) = transport_levels(trace, k_prime);
    if source_model.level() < two_k {
        return Err(bad(format!(
            "source solution has level {} but k = {k} requires level {two_k}",
            source_model.level()
        )));
    }
    if lambda.nrows() != source_model.n_indices() || lambda.ncols() != source_model.n_indices() {
        return Err(bad("Gram matrix does not match the source model".into()));
    }
    let model = build_las(&trace.target, k_prime, SubsetMode::Full, caps)?;
    let mut containing: Vec<Vec<usize>> = vec![Vec::new(); trace.target.n()];
    for (i, p) in trace.parts.iter().enumerate() {
        for &v in &p.y {
            containing[v].push(i);
        }
    }
    let blocks = &model.augmentation().blocks;
    let mut first = Vec::with_capacity(blocks.len());
    let mut alt = Vec::with_capacity(blocks.len());
    let mut distinct = false;
    for block in blocks {
        let mut x1: Vec<usize> = Vec::new();
        let mut x2: Vec<usize> = Vec::new();
        for &v in &block.vars {
            let c = &containing[v];
            let (Some(&a), Some(&b)) = (c.first(), c.last()) else {
                return Err(bad(format!("J variable {v} lies in no Y_i: missing α map")));
            };
            x1 = sorted_union(&x1, &trace.parts[a].x);
            x2 = sorted_union(&x2, &trace.parts[b].x);
        }
        if x2 == x1 {
            if let Some(p) = trace
                .parts
                .iter()
                .find(|p| !is_sorted_subset(&p.x, &x1) && sorted_union(&x1, &p.x).len() <= two_k)
            {
                x2 = sorted_union(&x1, &p.x);
            }
        }
        if x2 != x1 {
            distinct = true;
        }
        first.push(groups(trace, source_model, &x1, &block.vars)?);
        alt.push(groups(trace, source_model, &x2, &block.vars)?);
    }
    let gram = assemble(&model, &first, lambda);
    let well_definedness = distinct.then(|| {
        let other = assemble(&model, &alt, lambda);
        (&gram - &other).abs().max()
    });
    let residuals = check_residuals(&model, &gram);
    let l7 = verify_l7(&model, &gram);
    let source_value = sdp_value(source_model, lambda);
    let target_value = sdp_value(&model, &gram);
    Ok(Transported { model, gram, residuals, l7, source_value, target_value, well_definedness })
}

/// For each label code on `y`, the source indices `λ_X(σ)` with `α^σ_X|y` equal to it.
fn groups(trace: &ReductionTrace, source_model: &LasModel, x: &[usize], y: &[usize]) -> Result<Vec<Vec<usize>>> {
    let bx = source_model.augmentation().block_of(x).ok_or_else(|| {
        Error::Transport(format!("admissible set {x:?} is not a designated scope-set of the source model"))
    })?;
    let d = trace.source.d();
    let dj = trace.target.d();
    let inside: Vec<usize> = (0..trace.parts.len()).filter(|&i| is_sorted_subset(&trace.parts[i].x, x)).collect();
    let mut how = Vec::with_capacity(y.len());
    for &v in y {
        let r = *inside
            .iter()
            .find(|&&i| trace.parts[i].y.binary_search(&v).is_ok())
            .ok_or_else(|| Error::Transport(format!("no part inside {x:?} covers J variable {v}")))?;
        let p = &trace.parts[r];
        how.push((r, positions_in(&p.x, x), p.y.binary_search(&v).expect("covered")));
    }
    let mut out = vec![Vec::new(); dj.pow(y.len() as u32)];
    for code in 0..d.pow(x.len() as u32) {
        let sigma = decode_tuple(code, d, x.len());
        let labels: Vec<usize> = how
            .iter()
            .map(|(r, pos, at)| {
                let sub: Vec<usize> = pos.iter().map(|&q| sigma[q]).collect();
                trace.parts[*r].alpha[encode_tuple(&sub, d)][*at]
            })
            .collect();
        out[encode_tuple(&labels, dj)].push(source_model.index(bx, code));
    }
    Ok(out)
}

fn assemble(model: &LasModel, groups: &[Vec<Vec<usize>>], lambda: &DMatrix<f64>) -> DMatrix<f64> {
    let n = model.n_indices();
    let mut members: Vec<&[usize]> = Vec::with_capacity(n);
    let zero = [0usize];
    members.push(&zero);
    for p in 1..n {
        let (b, code) = model.index_label(p).expect("nonzero index");
        members.push(&groups[b][code]);
    }
    let mut gram = DMatrix::zeros(n, n);
    for p in 0..n {
        for q in p..n {
            let mut s = 0.0;
            for &a in members[p] {
                for &b in members[q] {
                    s += lambda[(a, b)];
                }
            }
            gram[(p, q)] = s;
            gram[(q, p)] = s;
        }
    }
    gram
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lasserre::{solve_sdp, SdpOptions, SdpOutcome};
    use proptest::prelude::*;

    fn imp() -> Arc<WeightedRelation> {
        Arc::new(WeightedRelation::from_fn("imp", 2, 2, |t| if t == [1, 0] { ExtValue::int(1) } else { ExtValue::zero() }).unwrap())
    }

    fn chain_gadget() -> Gadget {
        let mut t = Instance::new(3, 2);
        t.add(imp(), vec![0, 2]).unwrap();
        t.add(imp(), vec![2, 1]).unwrap();
        Gadget::new("chain", t, vec![0, 1]).unwrap()
    }

    fn chain_rel() -> Arc<WeightedRelation> {
        Arc::new(express(&chain_gadget(), &Caps::default()).unwrap().relation)
    }

    #[test]
    fn single_gadget_expresses_itself() {
        let r = imp();
        let e = express(&Gadget::single(r.clone()), &Caps::default()).unwrap();
        assert!(e.relation.same_table(&r));
    }

    #[test]
    fn chain_gadget_table() {
        let e = express(&chain_gadget(), &Caps::default()).unwrap();
        for t in crate::model::all_tuples(2, 2) {
            // brute force over the middle variable
            let want = (0..2)
                .map(|v| imp().value(&[t[0], v]).clone() + imp().value(&[v, t[1]]).clone())
                .min()
                .unwrap();
            assert_eq!(*e.relation.value(&t), want);
        }
        assert_eq!(*e.relation.value(&[1, 0]), ExtValue::int(1));
        assert_eq!(e.witness(&[1, 0]), &[0]);
        assert_eq!(e.witness(&[1, 1]), &[1]);
    }

    #[test]
    fn infinite_template_expresses_infinity() {
        let never = Arc::new(WeightedRelation::crisp_fn("never", 1, 2, |_| false).unwrap());
        let mut t = Instance::new(2, 2);
        t.add(never, vec![1]).unwrap();
        let e = express(&Gadget::new("x", t, vec![0]).unwrap(), &Caps::default()).unwrap();
        assert!(e.relation.table().iter().all(ExtValue::is_infinite));
    }

    #[test]
    fn expressibility_without_targets_is_identity() {
        let mut inst = Instance::new(3, 2);
        inst.add(imp(), vec![0, 1]).unwrap();
        inst.add(imp(), vec![1, 2]).unwrap();
        let t = reduce_expressibility(&inst, &[chain_gadget()], &Caps::default()).unwrap();
        assert_eq!(t.target(), &inst);
        assert!(verify_reduction(&t, &Caps::default()).unwrap().passed());
    }

    #[test]
    fn expressibility_rejects_wrong_gadget() {
        let mut inst = Instance::new(2, 2);
        inst.add(imp().clone(), vec![0, 1]).unwrap();
        let mut g = chain_gadget();
        g.target = "imp".into();
        // the chain table coincides with imp, so it is accepted as an imp gadget
        assert!(reduce_expressibility(&inst, &[g], &Caps::default()).is_ok());
        let mut bad_t = Instance::new(2, 2);
        bad_t.add(imp(), vec![1, 0]).unwrap();
        let bad = Gadget::new("imp", bad_t, vec![0, 1]).unwrap();
        let err = reduce_expressibility(&inst, &[bad], &Caps::default()).unwrap_err();
        assert!(matches!(err, Error::GadgetMismatch(_)));
    }

    #[test]
    fn expressibility_preserves_optimum() {
        let chain = chain_rel();
        let mut inst = Instance::new(4, 2);
        inst.add(chain.clone(), vec![0, 1]).unwrap();
        inst.add(chain, vec![2, 2]).unwrap();
        inst.add(imp(), vec![3, 0]).unwrap();
        let t = reduce_expressibility(&inst, &[chain_gadget()], &Caps::default()).unwrap();
        assert_eq!(t.target().n(), 6);
        let rep = verify_reduction(&t, &Caps::default()).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.checked_a > 0 && rep.checked_b > 0);
    }

    fn eq2() -> Arc<WeightedRelation> {
        Arc::new(WeightedRelation::equality(2))
    }

    #[test]
    fn equality_self_loop_is_dropped() {
        let mut inst = Instance::new(1, 2);
        inst.add(eq2(), vec![0, 0]).unwrap();
        let t = reduce_equality(&inst);
        assert_eq!(t.target().n(), 1);
        assert!(t.target().constraints().is_empty());
        assert!(verify_reduction(&t, &Caps::default()).unwrap().passed());
    }

    #[test]
    fn equality_chain_merges() {
        let one = Arc::new(WeightedRelation::from_fn("one", 1, 2, |t| ExtValue::int(t[0] as i64)).unwrap());
        let mut inst = Instance::new(4, 2);
        inst.add(eq2(), vec![2, 1]).unwrap();
        inst.add(eq2(), vec![1, 0]).unwrap();
        inst.add(one, vec![2]).unwrap();
        let t = reduce_equality(&inst);
        assert_eq!(t.target().n(), 2);
        assert_eq!(t.target().constraints().len(), 1);
        assert_eq!(t.target().constraints()[0].scope(), &[0]);
        assert_eq!(t.pullback(), &Pullback::Vars(vec![0, 0, 0, 1]));
        let rep = verify_reduction(&t, &Caps::default()).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    fn parity(m: usize, a: usize) -> WeightedRelation {
        WeightedRelation::crisp_fn(format!("R{m}_{a}"), m, 2, |t| t.iter().sum::<usize>() % 2 == a).unwrap()
    }

    fn z2_in_three() -> (Language, Interpretation) {
        let lang = Language::from_relations(2, [parity(2, 0), parity(2, 1)]).unwrap();
        let caps = Caps::default();
        let not2 = Arc::new(WeightedRelation::crisp_fn("not2", 1, 3, |t| t[0] != 2).unwrap());
        let mut st = Instance::new(1, 3);
        st.add(not2, vec![0]).unwrap();
        let phi_s = Gadget::new("S", st, vec![0]).unwrap();
        let eq = Gadget::single(Arc::new(WeightedRelation::equality(3)));
        let gadgets = (0..2)
            .map(|a| {
                let r = WeightedRelation::crisp_fn(format!("R2_{a}"), 2, 3, |t| t[0] < 2 && t[1] < 2 && (t[0] + t[1]) % 2 == a)
                    .unwrap();
                Gadget::single(Arc::new(r))
            })
            .collect();
        let interp = Interpretation::new(1, 3, vec![vec![0], vec![1]], vec![0, 1], &lang, phi_s, eq, gadgets, &caps).unwrap();
        (lang, interp)
    }

    #[test]
    fn identity_interpretation_is_isomorphic() {
        let lang = Language::from_relations(2, [(*imp()).clone()]).unwrap();
        let interp = Interpretation::identity(&lang, &Caps::default()).unwrap();
        let mut inst = Instance::new(3, 2);
        inst.add(lang.relations()[0].clone(), vec![0, 1]).unwrap();
        inst.add(lang.relations()[0].clone(), vec![2, 1]).unwrap();
        let t = apply_interpretation(&interp, &inst).unwrap();
        assert_eq!(t.target().n(), 3);
        let rep = verify_reduction(&t, &Caps::default()).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn z2_inside_three_labels() {
        let (lang, interp) = z2_in_three();
        let mut inst = Instance::new(4, 2);
        inst.add(lang.relations()[1].clone(), vec![0, 1]).unwrap();
        inst.add(lang.relations()[1].clone(), vec![1, 2]).unwrap();
        inst.add(lang.relations()[0].clone(), vec![0, 2]).unwrap();
        let t = apply_interpretation(&interp, &inst).unwrap();
        let rep = verify_reduction(&t, &Caps::default()).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert_eq!(rep.source_opt, ExtValue::zero());
    }

    #[test]
    fn non_surjective_h_is_rejected() {
        let lang = Language::from_relations(2, [parity(2, 0)]).unwrap();
        let phi_s = Gadget::new("S", Instance::new(1, 2), vec![0]).unwrap();
        let eq = Gadget::single(Arc::new(WeightedRelation::equality(2)));
        let err = Interpretation::new(1, 2, vec![vec![0], vec![1]], vec![0, 0], &lang, phi_s, eq, vec![], &Caps::default())
            .unwrap_err();
        assert!(matches!(err, Error::Interpretation(m) if m.contains("surjective")));
    }

    #[test]
    fn opt_of_crisp_needs_one_copy() {
        let r = Arc::new(parity(2, 1));
        let mut inst = Instance::new(2, 2);
        inst.add(Arc::new(r.opt()), vec![0, 1]).unwrap();
        assert_eq!(copy_count(&inst, &r, &Caps::default()).unwrap(), 1);
        let t = reduce_opt(&inst, &r, &Caps::default()).unwrap();
        assert_eq!(t.target().constraints().len(), 1);
        assert!(verify_reduction(&t, &Caps::default()).unwrap().passed());
    }

    #[test]
    fn opt_copies_force_argmin() {
        let phi = Arc::new(WeightedRelation::from_fn("u", 1, 2, |t| ExtValue::int(t[0] as i64)).unwrap());
        let zero = Arc::new(WeightedRelation::from_fn("z", 2, 2, |_| ExtValue::zero()).unwrap());
        let mut inst = Instance::new(3, 2);
        inst.add(Arc::new(phi.opt()), vec![1]).unwrap();
        inst.add(zero, vec![0, 2]).unwrap();
        let t = reduce_opt(&inst, &phi, &Caps::default()).unwrap();
        let (_, all) = t.target().optimal_assignments(&Caps::default()).unwrap();
        assert!(all.iter().all(|a| a[1] == 0));
        assert!(verify_reduction(&t, &Caps::default()).unwrap().passed());
    }

    #[test]
    fn feas_without_targets_scales() {
        let phi = Arc::new(WeightedRelation::from_fn("u", 1, 2, |t| ExtValue::int(2 * t[0] as i64)).unwrap());
        let mut inst = Instance::new(2, 2);
        inst.add(imp(), vec![0, 1]).unwrap();
        inst.add(Arc::new(WeightedRelation::from_fn("w", 1, 2, |t| ExtValue::int(1 - t[0] as i64)).unwrap()), vec![0])
            .unwrap();
        let t = reduce_feas(&inst, &phi, &Caps::default()).unwrap();
        let m = t.value_map().copies();
        assert_eq!(m, 2 * 2 + 1);
        assert_eq!(t.target().constraints().len(), 2 * m);
        let caps = Caps::default();
        let (vi, _) = inst.brute_force_opt(&caps).unwrap();
        let (vj, _) = t.target().brute_force_opt(&caps).unwrap();
        assert_eq!(vj, vi.scale(&Rational::from_integer(BigInt::from(m))));
        assert!(verify_reduction(&t, &caps).unwrap().passed());
    }

    #[test]
    fn feas_prefers_scaled_optimum() {
        // feas(φ) admits x = 1, where φ is expensive; the scaled objective still
        // picks the source optimum and the φ-terms are recovered away
        let phi = Arc::new(WeightedRelation::from_fn("u", 1, 2, |t| ExtValue::int(3 * t[0] as i64)).unwrap());
        let w = Arc::new(WeightedRelation::from_fn("w", 1, 2, |t| ExtValue::int(1 - t[0] as i64)).unwrap());
        let mut inst = Instance::new(1, 2);
        inst.add(Arc::new(phi.feas()), vec![0]).unwrap();
        inst.add(w, vec![0]).unwrap();
        let caps = Caps::default();
        let t = reduce_feas(&inst, &phi, &caps).unwrap();
        let rep = verify_reduction(&t, &caps).unwrap();
        assert!(rep.passed(), "{rep:?}");
        let m = t.value_map().copies() as i64;
        assert_eq!(rep.source_opt, ExtValue::zero());
        assert_eq!(rep.target_opt, ExtValue::int(3.min(m)));
    }

    #[test]
    fn tampered_alpha_is_witnessed() {
        let chain = chain_rel();
        let mut inst = Instance::new(3, 2);
        inst.add(chain.clone(), vec![0, 1]).unwrap();
        inst.add(chain, vec![1, 2]).unwrap();
        let mut t = reduce_expressibility(&inst, &[chain_gadget()], &Caps::default()).unwrap();
        // flip the label of the shared variable 1 in part 0 for σ = (0, 0)
        let pos = t.parts()[0].y.binary_search(&1).unwrap();
        t.parts_mut()[0].alpha[0][pos] ^= 1;
        let rep = verify_reduction(&t, &Caps::default()).unwrap();
        assert!(matches!(rep.c, Some(Violation::Consistency { var: 1, .. })), "{rep:?}");
    }

    #[test]
    fn unsatisfiable_target_is_vacuous_for_a() {
        let mut inst = Instance::new(2, 2);
        inst.add(Arc::new(parity(2, 0)), vec![0, 1]).unwrap();
        inst.add(Arc::new(parity(2, 1)), vec![0, 1]).unwrap();
        let t = ReductionTrace::identity(&inst);
        let rep = verify_reduction(&t, &Caps::default()).unwrap();
        assert_eq!(rep.checked_a, 0);
        assert!(rep.passed());
    }

    #[test]
    fn composition_matches_sequential() {
        let chain = chain_rel();
        let mut inst = Instance::new(4, 2);
        inst.add(chain, vec![0, 1]).unwrap();
        inst.add(eq2(), vec![1, 2]).unwrap();
        inst.add(imp(), vec![2, 3]).unwrap();
        let caps = Caps::default();
        let t1 = reduce_equality(&inst);
        let t2 = reduce_expressibility(t1.target(), &[chain_gadget()], &caps).unwrap();
        let t = t1.then(&t2).unwrap();
        assert_eq!(t.target(), t2.target());
        let rep = verify_reduction(&t, &caps).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    fn solve(inst: &Instance, level: usize) -> (LasModel, DMatrix<f64>) {
        let model = build_las(inst, level, SubsetMode::Full, &Caps::default()).unwrap();
        match solve_sdp(&model, &SdpOptions::default()) {
            SdpOutcome::Feasible(s) => (model, s.gram),
            other => panic!("expected a feasible solution, got {other:?}"),
        }
    }

    #[test]
    fn identity_transport_restricts() {
        let mut inst = Instance::new(3, 2);
        inst.add(imp(), vec![0, 1]).unwrap();
        inst.add(imp(), vec![1, 2]).unwrap();
        let t = ReductionTrace::identity(&inst);
        let (_, two_k) = transport_levels(&t, 2);
        let (model, gram) = solve(&inst, two_k);
        let out = transport_solution(&t, &model, &gram, 2, &Caps::default()).unwrap();
        assert!(out.residuals.max() < 1e-5, "{:?}", out.residuals);
        assert!(out.target_value <= out.source_value + 1e-5);
        for (b, block) in out.model.augmentation().blocks.iter().enumerate() {
            let src = model.augmentation().block_of(&block.vars).unwrap();
            for code in 0..2usize.pow(block.vars.len() as u32) {
                let p = out.model.index(b, code);
                let q = model.index(src, code);
                assert!((out.gram[(p, p)] - gram[(q, q)]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn transport_checks_level() {
        let mut inst = Instance::new(2, 2);
        inst.add(imp(), vec![0, 1]).unwrap();
        let t = ReductionTrace::identity(&inst);
        let (model, gram) = solve(&inst, 2);
        let err = transport_solution(&t, &model, &gram, 2, &Caps::default()).unwrap_err();
        assert!(matches!(err, Error::Transport(_)));
    }

    fn random_instance(rels: &[Arc<WeightedRelation>], n: usize, picks: &[(usize, usize, usize)]) -> Instance {
        let mut inst = Instance::new(n, 2);
        for &(r, a, b) in picks {
            let rel = &rels[r % rels.len()];
            let scope = if rel.arity() == 1 { vec![a % n] } else { vec![a % n, b % n] };
            inst.add(rel.clone(), scope).unwrap();
        }
        inst
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn equality_reduction_is_sound(picks in proptest::collection::vec((0usize..3, 0usize..5, 0usize..5), 1..6)) {
            let one = Arc::new(WeightedRelation::from_fn("one", 1, 2, |t| ExtValue::int(t[0] as i64)).unwrap());
            let inst = random_instance(&[eq2(), imp(), one], 5, &picks);
            let rep = verify_reduction(&reduce_equality(&inst), &Caps::default()).unwrap();
            prop_assert!(rep.passed(), "{:?}", rep);
        }

        #[test]
        fn opt_and_feas_reductions_are_sound(picks in proptest::collection::vec((0usize..3, 0usize..4, 0usize..4), 1..5)) {
            let phi = Arc::new(WeightedRelation::from_fn("f", 2, 2, |t| match (t[0], t[1]) {
                (1, 1) => ExtValue::Infinite,
                (a, b) => ExtValue::int((2 * a + b) as i64),
            }).unwrap());
            let caps = Caps::default();
            let opt_inst = random_instance(&[Arc::new(phi.opt()), imp(), phi.clone()], 4, &picks);
            let rep = verify_reduction(&reduce_opt(&opt_inst, &phi, &caps).unwrap(), &caps).unwrap();
            prop_assert!(rep.passed(), "{:?}", rep);
            let feas_inst = random_instance(&[Arc::new(phi.feas()), imp(), phi.clone()], 4, &picks);
            let rep = verify_reduction(&reduce_feas(&feas_inst, &phi, &caps).unwrap(), &caps).unwrap();
            prop_assert!(rep.passed(), "{:?}", rep);
        }
    }
}

