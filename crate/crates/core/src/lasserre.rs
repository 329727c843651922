//! The Lasserre SDP hierarchy Las(k) in Gram form, solved by ADMM.
//!
//! The Gram matrix is indexed by `P = {λ_0} ∪ {(X, σ)}` over designated
//! scope-sets. `λ_0` plays the role of the empty assignment, so every entry
//! `⟨λ(σ), λ(τ)⟩` with compatible `σ, τ` equals the moment `y(σ∘τ)` of its
//! (L6) class; incompatible entries are pinned to 0 by (L5). The solver works
//! on the class vector `y`:
//!
//! ```text
//! min cᵀy  s.t.  A y = b,  y ≥ 0,  M(y) ⪰ 0
//! ```
//!
//! where `A y = b` holds `y(∅) = 1` and a triangular (hence independent) set
//! of marginal equalities `y(U∖v, τ) = Σ_a y(U, τ[v↦a])`. These follow from
//! (L1)–(L6) for feasible points (they are the Gram form of (L7)), so adding
//! them leaves the feasible set unchanged.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::augment::{Augmentation, SubsetMode};
use crate::caps::Caps;
use crate::error::{Error, Result};
use crate::model::{decode_tuple, encode_tuple, sorted_union, Instance};
use crate::sherali_adams::block_value;
use crate::value::{rational_to_f64, ExtValue};

const NONE: u32 = u32::MAX;

/// The Las(k) model of an instance.
#[derive(Clone, Debug)]
pub struct LasModel {
    instance: Instance,
    aug: Augmentation,
    /// `(block, code)` per index; index 0 is `λ_0` (block `usize::MAX`)
    indices: Vec<(usize, usize)>,
    block_base: Vec<usize>,
    scopes: Vec<Vec<usize>>,
    scope_offset: Vec<usize>,
    scope_index: BTreeMap<Vec<usize>, usize>,
    n_classes: usize,
    /// class of each entry (row-major over `P × P`), `NONE` for (L5) zeros
    pattern: Vec<u32>,
    /// objective weight of each class
    objective: Vec<f64>,
    /// classes forced to zero by (L3) and exact propagation
    zero: Vec<bool>,
    infeasible: bool,
    rows: Vec<(Vec<(usize, f64)>, f64)>,
}

impl LasModel {
    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn augmentation(&self) -> &Augmentation {
        &self.aug
    }

    pub fn level(&self) -> usize {
        self.aug.k
    }

    pub fn mode(&self) -> SubsetMode {
        self.aug.mode
    }

    /// `|P|`, including `λ_0`.
    pub fn n_indices(&self) -> usize {
        self.indices.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Index of `λ_b(code)` for block `b`.
    pub fn index(&self, block: usize, code: usize) -> usize {
        self.block_base[block] + code
    }

    /// `(block, code)` of an index other than 0.
    pub fn index_label(&self, p: usize) -> Option<(usize, usize)> {
        (p != 0).then(|| self.indices[p])
    }

    /// Index of `λ_X(σ)` for a designated scope-set `X`.
    pub fn index_of(&self, vars: &[usize], code: usize) -> Option<usize> {
        self.aug.block_of(vars).map(|b| self.index(b, code))
    }

    /// Class of entry `(p, q)`, `None` for entries pinned by (L5).
    pub fn class_of(&self, p: usize, q: usize) -> Option<usize> {
        let c = self.pattern[p * self.indices.len() + q];
        (c != NONE).then_some(c as usize)
    }

    /// `(U, τ)` of a class.
    pub fn class_label(&self, c: usize) -> (Vec<usize>, Vec<usize>) {
        let s = self.scope_offset.partition_point(|&o| o <= c) - 1;
        let u = self.scopes[s].clone();
        let labels = decode_tuple(c - self.scope_offset[s], self.instance.d(), u.len());
        (u, labels)
    }

    pub fn class_of_assignment(&self, vars: &[usize], labels: &[usize]) -> Option<usize> {
        let s = *self.scope_index.get(vars)?;
        Some(self.scope_offset[s] + encode_tuple(labels, self.instance.d()))
    }

    /// Classes pinned to 0 before solving.
    pub fn is_forced_zero(&self, c: usize) -> bool {
        self.zero[c]
    }

    /// Presolve alone proved the relaxation infeasible.
    pub fn is_exactly_infeasible(&self) -> bool {
        self.infeasible
    }

    pub fn n_affine_rows(&self) -> usize {
        self.rows.len()
    }

    /// Objective weight of index `p` (0 for null blocks and `λ_0`).
    pub fn index_weight(&self, p: usize) -> f64 {
        if p == 0 {
            return 0.0;
        }
        self.objective[self.class_of(p, p).expect("diagonal entries are compatible")]
    }
}

/// Builds Las(k); requires `k ≥` the largest arity.
pub fn build_las(inst: &Instance, k: usize, mode: SubsetMode, caps: &Caps) -> Result<LasModel> {
    if k < inst.max_arity() {
        return Err(Error::Arity(format!("Las({k}) needs k ≥ max arity {}", inst.max_arity())));
    }
    let cap = caps.las_indices.saturating_sub(1);
    let aug = Augmentation::new(inst, k, mode, cap, "las indices")?;
    let d = inst.d();
    let mut indices = vec![(usize::MAX, 0usize)];
    let mut block_base = Vec::with_capacity(aug.blocks.len());
    for (b, block) in aug.blocks.iter().enumerate() {
        block_base.push(indices.len());
        for code in 0..d.pow(block.vars.len() as u32) {
            indices.push((b, code));
        }
    }
    // class scopes: unions of two scope-sets from {∅} ∪ blocks
    let mut scope_set: BTreeMap<Vec<usize>, ()> = BTreeMap::new();
    scope_set.insert(Vec::new(), ());
    for a in &aug.blocks {
        scope_set.insert(a.vars.clone(), ());
        for b in &aug.blocks {
            scope_set.insert(sorted_union(&a.vars, &b.vars), ());
        }
    }
    let mut scopes: Vec<Vec<usize>> = scope_set.into_keys().collect();
    scopes.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    let mut scope_offset = Vec::with_capacity(scopes.len());
    let mut scope_index = BTreeMap::new();
    let mut n_classes: u128 = 0;
    for (s, u) in scopes.iter().enumerate() {
        scope_offset.push(n_classes as usize);
        scope_index.insert(u.clone(), s);
        n_classes += (d as u128).pow(u.len() as u32);
        if n_classes > caps.las_classes {
            return Err(Error::cap("las classes", n_classes, caps.las_classes));
        }
    }
    let n_classes = n_classes as usize;
    let n_idx = indices.len();
    let labels_of: Vec<(Vec<usize>, Vec<usize>)> = indices
        .iter()
        .map(|&(b, code)| {
            if b == usize::MAX {
                (Vec::new(), Vec::new())
            } else {
                let vars = aug.blocks[b].vars.clone();
                let l = decode_tuple(code, d, vars.len());
                (vars, l)
            }
        })
        .collect();
    let mut pattern = vec![NONE; n_idx * n_idx];
    for p in 0..n_idx {
        for q in p..n_idx {
            let c = compose_class(&labels_of[p], &labels_of[q], d, &scope_index, &scope_offset);
            let c = c.map_or(NONE, |c| c as u32);
            pattern[p * n_idx + q] = c;
            pattern[q * n_idx + p] = c;
        }
    }
    let mut objective = vec![0.0; n_classes];
    let mut zero = vec![false; n_classes];
    for (b, block) in aug.blocks.iter().enumerate() {
        if block.constraints.is_empty() {
            continue;
        }
        let s = scope_index[&block.vars];
        for code in 0..d.pow(block.vars.len() as u32) {
            let c = scope_offset[s] + code;
            match block_value(inst, &aug, b, code) {
                ExtValue::Infinite => zero[c] = true,
                ExtValue::Finite(v) => objective[c] = rational_to_f64(&v),
            }
        }
    }
    propagate_zeros(&scopes, &scope_index, &scope_offset, d, &mut zero);
    let infeasible = zero[0];
    let mut rows = vec![(vec![(0usize, 1.0)], 1.0)];
    for (s, u) in scopes.iter().enumerate().skip(1) {
        for code in 0..d.pow(u.len() as u32) {
            let tau = decode_tuple(code, d, u.len());
            let Some(pos) = tau.iter().position(|&a| a == 0) else { continue };
            let mut row = Vec::with_capacity(d + 1);
            let mut t = tau.clone();
            for a in 0..d {
                t[pos] = a;
                row.push((scope_offset[s] + encode_tuple(&t, d), 1.0));
            }
            let mut sub_u = u.clone();
            sub_u.remove(pos);
            let mut sub_t = tau.clone();
            sub_t.remove(pos);
            let ss = scope_index[&sub_u];
            row.push((scope_offset[ss] + encode_tuple(&sub_t, d), -1.0));
            rows.push((row, 0.0));
        }
    }
    Ok(LasModel {
        instance: inst.clone(),
        aug,
        indices,
        block_base,
        scopes,
        scope_offset,
        scope_index,
        n_classes,
        pattern,
        objective,
        zero,
        infeasible,
        rows,
    })
}

fn compose_class(
    a: &(Vec<usize>, Vec<usize>),
    b: &(Vec<usize>, Vec<usize>),
    d: usize,
    scope_index: &BTreeMap<Vec<usize>, usize>,
    scope_offset: &[usize],
) -> Option<usize> {
    let (mut i, mut j) = (0, 0);
    let (mut vars, mut labels) = (Vec::new(), Vec::new());
    while i < a.0.len() || j < b.0.len() {
        if j == b.0.len() || (i < a.0.len() && a.0[i] < b.0[j]) {
            vars.push(a.0[i]);
            labels.push(a.1[i]);
            i += 1;
        } else if i == a.0.len() || b.0[j] < a.0[i] {
            vars.push(b.0[j]);
            labels.push(b.1[j]);
            j += 1;
        } else {
            if a.1[i] != b.1[j] {
                return None;
            }
            vars.push(a.0[i]);
            labels.push(a.1[i]);
            i += 1;
            j += 1;
        }
    }
    let s = scope_index[&vars];
    Some(scope_offset[s] + encode_tuple(&labels, d))
}

/// Exact zero propagation through `y ≥ 0` and the marginal equalities: a zero
/// class zeroes all its extensions, and a class whose extensions along some
/// variable are all zero is zero.
fn propagate_zeros(scopes: &[Vec<usize>], scope_index: &BTreeMap<Vec<usize>, usize>, offset: &[usize], d: usize, zero: &mut [bool]) {
    // (scope, variable position) → parent scope for every one-variable extension
    let mut parents: Vec<Vec<(usize, usize)>> = vec![Vec::new(); scopes.len()];
    for (s, u) in scopes.iter().enumerate() {
        for pos in 0..u.len() {
            let mut sub = u.clone();
            sub.remove(pos);
            parents[scope_index[&sub]].push((s, pos));
        }
    }
    loop {
        let mut changed = false;
        for (s, u) in scopes.iter().enumerate() {
            for code in 0..d.pow(u.len() as u32) {
                let c = offset[s] + code;
                let tau = decode_tuple(code, d, u.len());
                for &(ext, pos) in &parents[s] {
                    let mut t = tau.clone();
                    t.insert(pos, 0);
                    let ext_classes: Vec<usize> = (0..d)
                        .map(|a| {
                            t[pos] = a;
                            offset[ext] + encode_tuple(&t, d)
                        })
                        .collect();
                    if zero[c] {
                        for e in ext_classes {
                            if !zero[e] {
                                zero[e] = true;
                                changed = true;
                            }
                        }
                    } else if ext_classes.iter().all(|&e| zero[e]) {
                        zero[c] = true;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// ADMM settings.
#[derive(Clone, Debug, PartialEq)]
pub struct SdpOptions {
    /// Target for the primal and dual residuals.
    pub eps: f64,
    pub max_iter: usize,
    /// Stable primal residual above this margin signals infeasibility.
    pub delta_inf: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions { eps: 1e-7, max_iter: 50_000, delta_inf: 1e-5 }
    }
}

/// Solver diagnostics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SdpDiagnostics {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub rho: f64,
    /// Size of the PSD block after removing rows forced to zero.
    pub active_indices: usize,
}

/// A feasible Gram solution.
#[derive(Clone, Debug)]
pub struct GramSolution {
    /// `M[p, q] = ⟨λ_p, λ_q⟩` over `P`.
    pub gram: DMatrix<f64>,
    /// Moment of every (L6) class.
    pub moments: Vec<f64>,
    pub value: f64,
    pub diagnostics: SdpDiagnostics,
}

/// Outcome of [`solve_sdp`].
#[derive(Clone, Debug)]
pub enum SdpOutcome {
    Feasible(GramSolution),
    /// `exact` when presolve proved it; otherwise decided numerically by the
    /// residual margin.
    Infeasible { exact: bool, diagnostics: SdpDiagnostics },
    /// Neither the residual nor the infeasibility criterion was met.
    NotConverged(SdpDiagnostics),
}

impl SdpOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            SdpOutcome::Feasible(s) => Some(s.value),
            SdpOutcome::Infeasible { .. } => Some(f64::INFINITY),
            SdpOutcome::NotConverged(_) => None,
        }
    }
}

/// Solves the model by ADMM on `(y, X, z)` with `X = M(y)`, `z = y`:
/// `y` minimises a weighted least-squares term over `A y = b` (cached
/// Cholesky factor), `X` is the PSD projection, `z` the projection onto
/// `y ≥ 0` with forced zeros.
pub fn solve_sdp(model: &LasModel, opts: &SdpOptions) -> SdpOutcome {
    if model.infeasible {
        return SdpOutcome::Infeasible { exact: true, diagnostics: SdpDiagnostics::default() };
    }
    let nc = model.n_classes;
    let n_all = model.indices.len();
    let active: Vec<usize> = (0..n_all)
        .filter(|&p| !model.zero[model.class_of(p, p).expect("diagonal")])
        .collect();
    let na = active.len();
    let mut pat = vec![NONE; na * na];
    let mut weight = vec![1.0f64; nc];
    for (i, &p) in active.iter().enumerate() {
        for (j, &q) in active.iter().enumerate() {
            let c = model.pattern[p * n_all + q];
            pat[i * na + j] = c;
            if c != NONE {
                weight[c as usize] += 1.0;
            }
        }
    }
    // K = A W⁻¹ Aᵀ through the column view of A
    let nr = model.rows.len();
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nc];
    for (r, (row, _)) in model.rows.iter().enumerate() {
        for &(c, v) in row {
            cols[c].push((r, v));
        }
    }
    let mut kmat = DMatrix::<f64>::zeros(nr, nr);
    for (c, col) in cols.iter().enumerate() {
        for &(r, v) in col {
            for &(s, w) in col {
                kmat[(r, s)] += v * w / weight[c];
            }
        }
    }
    let chol = kmat.cholesky().expect("marginal equalities are independent");
    let b = DVector::from_iterator(nr, model.rows.iter().map(|(_, b)| *b));

    let mut rho = 1.0f64;
    let mut y = vec![0.0f64; nc];
    let mut z = vec![0.0f64; nc];
    let mut u = vec![0.0f64; nc];
    let mut xm = DMatrix::<f64>::zeros(na, na);
    let mut um = DMatrix::<f64>::zeros(na, na);
    let mut diag = SdpDiagnostics { active_indices: na, ..Default::default() };
    let mut history: Vec<f64> = Vec::new();
    const WINDOW: usize = 200;
    const BALANCE_UNTIL: usize = 5000;

    for it in 1..=opts.max_iter {
        // y-update
        let mut rhs = vec![0.0f64; nc];
        for i in 0..na {
            for j in 0..na {
                let c = pat[i * na + j];
                if c != NONE {
                    rhs[c as usize] += xm[(i, j)] - um[(i, j)];
                }
            }
        }
        for c in 0..nc {
            rhs[c] += z[c] - u[c] - model.objective[c] / rho;
            y[c] = rhs[c] / weight[c];
        }
        let mut ay = DVector::<f64>::zeros(nr);
        for (r, (row, _)) in model.rows.iter().enumerate() {
            ay[r] = row.iter().map(|&(c, v)| v * y[c]).sum();
        }
        let lam = chol.solve(&(ay - &b));
        for (c, col) in cols.iter().enumerate() {
            let corr: f64 = col.iter().map(|&(r, v)| v * lam[r]).sum();
            y[c] -= corr / weight[c];
        }
        // X-update
        let my = moment_matrix(&pat, na, &y);
        let x_old = core::mem::replace(&mut xm, psd_projection(&my + &um));
        // z-update
        let z_old = z.clone();
        for c in 0..nc {
            z[c] = if model.zero[c] { 0.0 } else { (y[c] + u[c]).max(0.0) };
        }
        // duals
        let diff_m = &my - &xm;
        um += &diff_m;
        let mut r_yz = 0.0;
        for c in 0..nc {
            let dlt = y[c] - z[c];
            u[c] += dlt;
            r_yz += dlt * dlt;
        }
        let r_p = (diff_m.norm_squared() + r_yz).sqrt();
        let dz: f64 = z.iter().zip(&z_old).map(|(a, b)| (a - b) * (a - b)).sum();
        let r_d = rho * ((&xm - &x_old).norm_squared() + dz).sqrt();
        diag.iterations = it;
        diag.primal_residual = r_p;
        diag.dual_residual = r_d;
        diag.rho = rho;
        if r_p <= opts.eps && r_d <= opts.eps {
            return SdpOutcome::Feasible(finish(model, z, diag));
        }
        history.push(r_p);
        if it >= 5 * WINDOW && r_p > opts.delta_inf {
            let old = history[it - 1 - WINDOW];
            if (old - r_p).abs() <= 1e-3 * r_p {
                return SdpOutcome::Infeasible { exact: false, diagnostics: diag };
            }
        }
        if it < BALANCE_UNTIL && it % 20 == 0 {
            let factor = if r_p > 10.0 * r_d {
                2.0
            } else if r_d > 10.0 * r_p {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                rho *= factor;
                um /= factor;
                for v in u.iter_mut() {
                    *v /= factor;
                }
            }
        }
    }
    SdpOutcome::NotConverged(diag)
}

fn moment_matrix(pat: &[u32], n: usize, y: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        let c = pat[i * n + j];
        if c == NONE {
            0.0
        } else {
            y[c as usize]
        }
    })
}

/// Eigendecompositions of the diagonal blocks of a symmetric matrix, one per
/// connected component of its nonzero pattern. nalgebra's symmetric QR
/// iteration breaks down (non-finite eigenvalues) on matrices that decouple,
/// e.g. ones with zero rows, so each block is decomposed on its own.
fn block_eigen(m: &DMatrix<f64>) -> Vec<(Vec<usize>, SymmetricEigen<f64, nalgebra::Dyn>)> {
    let n = m.nrows();
    let mut comp = vec![usize::MAX; n];
    let mut out = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        comp[start] = id;
        let mut members = vec![start];
        let mut head = 0;
        while head < members.len() {
            let p = members[head];
            head += 1;
            for q in 0..n {
                if comp[q] == usize::MAX && (m[(p, q)] != 0.0 || m[(q, p)] != 0.0) {
                    comp[q] = id;
                    members.push(q);
                }
            }
        }
        members.sort_unstable();
        let k = members.len();
        let sub = DMatrix::from_fn(k, k, |i, j| 0.5 * (m[(members[i], members[j])] + m[(members[j], members[i])]));
        out.push((members, SymmetricEigen::new(sub)));
    }
    out
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    block_eigen(m)
        .iter()
        .flat_map(|(_, e)| e.eigenvalues.iter().copied())
        .fold(f64::INFINITY, f64::min)
}

fn psd_projection(m: DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (members, eig) in block_eigen(&m) {
        let vals = eig.eigenvalues.map(|v| v.max(0.0));
        let v = &eig.eigenvectors;
        let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * vals[j]);
        let block = scaled * v.transpose();
        for (i, &p) in members.iter().enumerate() {
            for (j, &q) in members.iter().enumerate() {
                out[(p, q)] = block[(i, j)];
            }
        }
    }
    out
}

fn finish(model: &LasModel, moments: Vec<f64>, diagnostics: SdpDiagnostics) -> GramSolution {
    let n = model.indices.len();
    let gram = moment_matrix(&model.pattern, n, &moments);
    let value = model.objective.iter().zip(&moments).map(|(c, y)| c * y).sum();
    GramSolution { gram, moments, value, diagnostics }
}

/// `SDPval` of a Gram matrix: `Σ_p ‖λ_p‖² · weight(p)`.
pub fn sdp_value(model: &LasModel, gram: &DMatrix<f64>) -> f64 {
    (1..model.indices.len()).map(|p| gram[(p, p)] * model.index_weight(p)).sum()
}

/// Maximal violations of (L1)–(L6) and PSD-ness of a Gram matrix.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LasResiduals {
    pub l1: f64,
    /// Most negative entry (0 when all are nonnegative).
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
    pub l5: f64,
    /// Largest spread between two entries of one class.
    pub l6: f64,
    /// `max(0, -λ_min(M))`.
    pub psd: f64,
}

impl LasResiduals {
    pub fn max(&self) -> f64 {
        [self.l1, self.l2, self.l3, self.l4, self.l5, self.l6, self.psd].into_iter().fold(0.0, f64::max)
    }
}

/// Residual check of a Gram matrix against the model.
pub fn check_residuals(model: &LasModel, gram: &DMatrix<f64>) -> LasResiduals {
    let n = model.indices.len();
    let mut r = LasResiduals { l1: (gram[(0, 0)] - 1.0).abs(), ..Default::default() };
    let mut lo = vec![f64::INFINITY; model.n_classes];
    let mut hi = vec![f64::NEG_INFINITY; model.n_classes];
    for p in 0..n {
        for q in 0..n {
            let v = gram[(p, q)];
            r.l2 = r.l2.max(-v);
            match model.class_of(p, q) {
                None => r.l5 = r.l5.max(v.abs()),
                Some(c) => {
                    lo[c] = lo[c].min(v);
                    hi[c] = hi[c].max(v);
                }
            }
        }
    }
    for c in 0..model.n_classes {
        if hi[c] >= lo[c] {
            r.l6 = r.l6.max(hi[c] - lo[c]);
        }
    }
    let d = model.instance.d();
    for (b, block) in model.aug.blocks.iter().enumerate() {
        for code in 0..d.pow(block.vars.len() as u32) {
            let p = model.index(b, code);
            if !block.constraints.is_empty() && block_value(&model.instance, &model.aug, b, code).is_infinite() {
                r.l3 = r.l3.max(gram[(p, p)].abs());
            }
        }
        if block.vars.len() == 1 {
            let s: f64 = (0..d).map(|a| gram[(model.index(b, a), model.index(b, a))]).sum();
            r.l4 = r.l4.max((s - 1.0).abs());
        }
    }
    r.psd = (-min_eigenvalue(gram)).max(0.0);
    r
}

/// Result of [`verify_l7`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct L7Report {
    pub max_residual: f64,
    pub checked: usize,
    /// `(block i, block j, σ code)` attaining the maximum.
    pub worst: Option<(usize, usize, usize)>,
}

/// Checks `‖Σ_{τ|X_j = σ} λ_i(τ)‖² = ‖λ_j(σ)‖²` for all blocks `X_j ⊊ X_i`
/// and all `σ`, using sums of Gram entries.
pub fn verify_l7(model: &LasModel, gram: &DMatrix<f64>) -> L7Report {
    let d = model.instance.d();
    let mut rep = L7Report::default();
    for (i, j) in model.aug.all_marginal_pairs() {
        let xi = &model.aug.blocks[i].vars;
        let xj = &model.aug.blocks[j].vars;
        let pos = crate::model::positions_in(xj, xi);
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); d.pow(xj.len() as u32)];
        for code in 0..d.pow(xi.len() as u32) {
            let t = decode_tuple(code, d, xi.len());
            let sub: Vec<usize> = pos.iter().map(|&p| t[p]).collect();
            groups[encode_tuple(&sub, d)].push(model.index(i, code));
        }
        for (sigma, group) in groups.iter().enumerate() {
            let mut lhs = 0.0;
            for &p in group {
                for &q in group {
                    lhs += gram[(p, q)];
                }
            }
            let pj = model.index(j, sigma);
            let res = (lhs - gram[(pj, pj)]).abs();
            rep.checked += 1;
            if rep.worst.is_none() || res > rep.max_residual {
                rep.max_residual = res;
                rep.worst = Some((i, j, sigma));
            }
        }
    }
    rep
}

/// `SDPopt(I, k)`: `∞` on (numerical) infeasibility.
pub fn sdp_opt(inst: &Instance, k: usize, mode: SubsetMode, opts: &SdpOptions, caps: &Caps) -> Result<f64> {
    let model = build_las(inst, k, mode, caps)?;
    match solve_sdp(&model, opts) {
        SdpOutcome::Feasible(s) => Ok(s.value),
        SdpOutcome::Infeasible { .. } => Ok(f64::INFINITY),
        SdpOutcome::NotConverged(d) => Err(Error::NonConvergence(format!(
            "{} iterations, primal residual {:e}, dual residual {:e}",
            d.iterations, d.primal_residual, d.dual_residual
        ))),
    }
}

/// The advisory tolerance `min |φ(x) − φ(y)|` over distinct finite values of
/// each relation: solving to within it decides exact solvability.
pub fn advisory_epsilon(inst: &Instance) -> Option<f64> {
    let mut best: Option<f64> = None;
    for rel in inst.relations() {
        let mut vals: Vec<f64> = rel.table().iter().filter_map(|v| v.finite().map(rational_to_f64)).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        vals.dedup();
        for w in vals.windows(2) {
            let gap = w[1] - w[0];
            best = Some(best.map_or(gap, |b: f64| b.min(gap)));
        }
    }
    best
}

/// Human-readable summary of the residuals.
pub fn describe_residuals(r: &LasResiduals) -> String {
    format!(
        "l1 {:e} l2 {:e} l3 {:e} l4 {:e} l5 {:e} l6 {:e} psd {:e}",
        r.l1, r.l2, r.l3, r.l4, r.l5, r.l6, r.psd
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WeightedRelation;
    use crate::sherali_adams::lp_opt;
    use crate::value::rational_to_f64;
    use alloc::sync::Arc;
    use proptest::prelude::*;

    fn caps() -> Caps {
        Caps::default()
    }

    fn parity_pair() -> Instance {
        let r0 = Arc::new(WeightedRelation::crisp_fn("R2_0", 2, 2, |t| (t[0] + t[1]) % 2 == 0).unwrap());
        let r1 = Arc::new(WeightedRelation::crisp_fn("R2_1", 2, 2, |t| (t[0] + t[1]) % 2 == 1).unwrap());
        let mut inst = Instance::new(2, 2);
        inst.add(r0, vec![0, 1]).unwrap();
        inst.add(r1, vec![0, 1]).unwrap();
        inst
    }

    #[test]
    fn index_count_single_binary() {
        let mut inst = Instance::new(2, 2);
        inst.add(Arc::new(WeightedRelation::equality(2)), vec![0, 1]).unwrap();
        let m = build_las(&inst, 2, SubsetMode::Full, &caps()).unwrap();
        assert_eq!(m.n_indices(), 1 + 2 + 2 + 4);
        // ⟨λ_x(a), λ_y(b)⟩ and ⟨λ_0, λ_xy(ab)⟩ share a class
        let px = m.index_of(&[0], 1).unwrap();
        let py = m.index_of(&[1], 0).unwrap();
        let pxy = m.index_of(&[0, 1], 2).unwrap();
        assert_eq!(m.class_of(px, py), m.class_of(0, pxy));
        // incompatible pairs are pinned
        assert_eq!(m.class_of(px, m.index_of(&[0], 0).unwrap()), None);
        // eq forbids (0,1) and (1,0)
        assert!(m.is_forced_zero(m.class_of(m.index_of(&[0, 1], 1).unwrap(), 0).unwrap()));
    }

    #[test]
    fn arity_precondition() {
        let mut inst = Instance::new(2, 2);
        inst.add(Arc::new(WeightedRelation::equality(2)), vec![0, 1]).unwrap();
        assert!(matches!(build_las(&inst, 1, SubsetMode::Full, &caps()), Err(Error::Arity(_))));
    }

    #[test]
    fn parity_pair_is_infeasible() {
        let m = build_las(&parity_pair(), 2, SubsetMode::Full, &caps()).unwrap();
        assert!(matches!(solve_sdp(&m, &SdpOptions::default()), SdpOutcome::Infeasible { exact: true, .. }));
    }

    #[test]
    fn single_constraint_value() {
        let phi = WeightedRelation::new(
            "p",
            2,
            2,
            vec![ExtValue::int(3), ExtValue::ratio(1, 2), ExtValue::Infinite, ExtValue::int(2)],
        )
        .unwrap();
        let mut inst = Instance::new(2, 2);
        inst.add(Arc::new(phi), vec![0, 1]).unwrap();
        let m = build_las(&inst, 2, SubsetMode::Full, &caps()).unwrap();
        let SdpOutcome::Feasible(s) = solve_sdp(&m, &SdpOptions::default()) else { panic!("infeasible") };
        assert!((s.value - 0.5).abs() < 1e-6, "{}", s.value);
        assert!(check_residuals(&m, &s.gram).max() < 1e-6);
        assert!(verify_l7(&m, &s.gram).max_residual < 1e-6);
    }

    #[test]
    fn integral_point_has_zero_residuals() {
        let mut inst = Instance::new(3, 2);
        let eq = Arc::new(WeightedRelation::equality(2));
        inst.add(eq.clone(), vec![0, 1]).unwrap();
        inst.add(eq, vec![1, 2]).unwrap();
        let m = build_las(&inst, 2, SubsetMode::Full, &caps()).unwrap();
        let sigma = [1usize, 1, 1];
        let moments: Vec<f64> = (0..m.n_classes())
            .map(|c| {
                let (u, t) = m.class_label(c);
                if u.iter().zip(&t).all(|(&v, &a)| sigma[v] == a) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let gram = moment_matrix(&m.pattern, m.n_indices(), &moments);
        assert!(check_residuals(&m, &gram).max() < 1e-12);
        assert_eq!(verify_l7(&m, &gram).max_residual, 0.0);
        // negative control: break the class of one diagonal entry
        let mut bad = gram.clone();
        let p = m.index_of(&[0], 1).unwrap();
        bad[(p, p)] = 0.7;
        assert!(verify_l7(&m, &bad).max_residual > 0.1);
        assert!(check_residuals(&m, &bad).l6 > 0.1);
    }

    fn arb_instance() -> impl Strategy<Value = Instance> {
        let rel = proptest::collection::vec(
            prop_oneof![4 => (0i64..4).prop_map(ExtValue::int), 1 => Just(ExtValue::Infinite)],
            4,
        );
        (2usize..=3, proptest::collection::vec((rel, 0usize..3, 0usize..3), 1..4)).prop_map(|(n, cs)| {
            let mut inst = Instance::new(n, 2);
            for (i, (t, a, b)) in cs.into_iter().enumerate() {
                let r = Arc::new(WeightedRelation::new(format!("r{i}"), 2, 2, t).unwrap());
                inst.add(r, vec![a % n, b % n]).unwrap();
            }
            inst
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn sandwich_and_full_level(inst in arb_instance()) {
            let (opt, _) = inst.brute_force_opt(&caps()).unwrap();
            let n = inst.n();
            let m = build_las(&inst, n, SubsetMode::Full, &caps()).unwrap();
            let out = solve_sdp(&m, &SdpOptions::default());
            let v = out.value().expect("converged");
            match &opt {
                ExtValue::Infinite => prop_assert!(v.is_infinite()),
                ExtValue::Finite(o) => prop_assert!((v - rational_to_f64(o)).abs() < 1e-4, "{} vs {}", v, o),
            }
            if let SdpOutcome::Feasible(s) = &out {
                prop_assert!(check_residuals(&m, &s.gram).max() < 1e-6);
                prop_assert!(verify_l7(&m, &s.gram).max_residual < 1e-6);
            }
            let lp = lp_opt(&inst, 2, SubsetMode::Full, &caps()).unwrap();
            let las2 = sdp_opt(&inst, 2, SubsetMode::Full, &SdpOptions::default(), &caps()).unwrap();
            prop_assert!(lp.to_f64() <= las2 + 1e-5, "lp {} las {}", lp, las2);
            prop_assert!(las2 <= v + 1e-5);
        }
    }
}
