//! The Sherali-Adams LP hierarchy SA(k), built and solved exactly.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::{One, Signed, Zero};

use crate::augment::{Augmentation, SubsetMode};
use crate::caps::Caps;
use crate::error::Result;
use crate::lp::{LinearProgram, LpOutcome, LpStats};
use crate::model::{decode_tuple, encode_tuple, positions_in, Instance};
use crate::value::{ExtValue, Rational};

/// The SA(k) linear program of an instance.
#[derive(Clone, Debug)]
pub struct SaModel {
    instance: Instance,
    aug: Augmentation,
    /// per block: column of each assignment code, `None` when eliminated by (S2)
    columns: Vec<Vec<Option<usize>>>,
    lp: LinearProgram,
}

/// An optimal SA(k) solution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SaSolution {
    pub value: ExtValue,
    /// per block, `λ(σ)` for every assignment code (zero on eliminated ones);
    /// empty when the relaxation is infeasible
    pub lambda: Vec<Vec<Rational>>,
    pub stats: LpStats,
}

impl SaModel {
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

    pub fn lp(&self) -> &LinearProgram {
        &self.lp
    }

    pub fn n_columns(&self) -> usize {
        self.lp.n_cols()
    }

    pub fn column(&self, block: usize, code: usize) -> Option<usize> {
        self.columns[block][code]
    }

    /// Objective coefficient of block `b` at assignment `code`: the sum of the
    /// values of the original constraints on that block, ∞ if any is infeasible.
    pub fn block_value(&self, b: usize, code: usize) -> ExtValue {
        block_value(&self.instance, &self.aug, b, code)
    }
}

pub(crate) fn block_value(inst: &Instance, aug: &Augmentation, b: usize, code: usize) -> ExtValue {
    let block = &aug.blocks[b];
    let labels = decode_tuple(code, inst.d(), block.vars.len());
    let mut acc = ExtValue::zero();
    for &ci in &block.constraints {
        acc += inst.constraints()[ci].value_on_set(&labels);
    }
    acc
}

/// Builds SA(k) for `inst`.
pub fn build_sa(inst: &Instance, k: usize, mode: SubsetMode, caps: &Caps) -> Result<SaModel> {
    let aug = Augmentation::new(inst, k, mode, caps.sa_columns, "sa columns")?;
    let d = inst.d();
    let mut n_cols = 0usize;
    let mut columns = Vec::with_capacity(aug.blocks.len());
    let mut objective = Vec::new();
    for b in 0..aug.blocks.len() {
        let size = d.pow(aug.blocks[b].vars.len() as u32);
        let mut cols = Vec::with_capacity(size);
        for code in 0..size {
            match block_value(inst, &aug, b, code) {
                ExtValue::Infinite => cols.push(None),
                ExtValue::Finite(v) => {
                    if !v.is_zero() {
                        objective.push((n_cols, v));
                    }
                    cols.push(Some(n_cols));
                    n_cols += 1;
                }
            }
        }
        columns.push(cols);
    }
    let mut lp = LinearProgram::new(n_cols);
    lp.set_objective(objective);
    // (S3)
    for cols in &columns {
        lp.add_row(cols.iter().flatten().map(|&c| (c, Rational::one())).collect(), Rational::one());
    }
    // (S4), immediate designated subsets only
    for b in 0..aug.blocks.len() {
        let x = &aug.blocks[b].vars;
        for t in aug.marginal_targets(b) {
            let y = &aug.blocks[t].vars;
            let pos = positions_in(y, x);
            let mut rows: Vec<Vec<(usize, Rational)>> = vec![Vec::new(); d.pow(y.len() as u32)];
            for (code, col) in columns[b].iter().enumerate() {
                if let Some(c) = col {
                    let labels = decode_tuple(code, d, x.len());
                    let sub: Vec<usize> = pos.iter().map(|&p| labels[p]).collect();
                    rows[encode_tuple(&sub, d)].push((*c, Rational::one()));
                }
            }
            for (tau, mut row) in rows.into_iter().enumerate() {
                if let Some(c) = columns[t][tau] {
                    row.push((c, -Rational::one()));
                }
                if !row.is_empty() {
                    lp.add_row(row, Rational::zero());
                }
            }
        }
    }
    Ok(SaModel { instance: inst.clone(), aug, columns, lp })
}

/// Solves the model exactly; the value is ∞ when the LP is infeasible.
pub fn solve_lp_exact(model: &SaModel) -> SaSolution {
    let (out, stats) = model.lp.solve_with_stats();
    match out {
        LpOutcome::Optimal { value, x } => {
            let lambda = model
                .columns
                .iter()
                .map(|cols| {
                    cols.iter()
                        .map(|c| c.map(|c| x[c].clone()).unwrap_or_else(Rational::zero))
                        .collect()
                })
                .collect();
            SaSolution { value: ExtValue::Finite(value), lambda, stats }
        }
        LpOutcome::Infeasible => SaSolution { value: ExtValue::Infinite, lambda: Vec::new(), stats },
        LpOutcome::Unbounded => unreachable!("SA programs are bounded: every column lies in [0, 1]"),
    }
}

/// `LPopt(I, k)`.
pub fn lp_opt(inst: &Instance, k: usize, mode: SubsetMode, caps: &Caps) -> Result<ExtValue> {
    Ok(solve_lp_exact(&build_sa(inst, k, mode, caps)?).value)
}

impl SaSolution {
    pub fn is_feasible(&self) -> bool {
        self.value.is_finite()
    }

    /// `λ_i(σ)` for augmented constraint `i` and assignment code `σ` on its scope-set.
    pub fn lambda(&self, model: &SaModel, i: usize, code: usize) -> &Rational {
        &self.lambda[model.aug.constraints[i].block][code]
    }
}

/// Checks (S1)–(S4) exactly on the unreduced system over all augmented
/// constraints. Returns the first violation.
pub fn verify_sa(model: &SaModel, sol: &SaSolution) -> core::result::Result<(), String> {
    if !sol.is_feasible() {
        return Ok(());
    }
    let inst = &model.instance;
    let d = inst.d();
    let aug = &model.aug;
    let mut objective = Rational::zero();
    for (i, c) in aug.constraints.iter().enumerate() {
        let lam = &sol.lambda[c.block];
        let mut sum = Rational::zero();
        for (code, l) in lam.iter().enumerate() {
            if l.is_negative() {
                return Err(format!("S1: constraint {i}, assignment {code}: {l}"));
            }
            if let Some(o) = c.original {
                let labels = decode_tuple(code, d, c.vars.len());
                match inst.constraints()[o].value_on_set(&labels) {
                    ExtValue::Infinite if !l.is_zero() => {
                        return Err(format!("S2: constraint {i}, assignment {code}: {l}"));
                    }
                    ExtValue::Finite(v) => objective += v * l,
                    _ => {}
                }
            }
            sum += l;
        }
        if !sum.is_one() {
            return Err(format!("S3: constraint {i} sums to {sum}"));
        }
    }
    for (bi, bj) in aug.all_marginal_pairs() {
        let x = &aug.blocks[bi].vars;
        let y = &aug.blocks[bj].vars;
        let pos = positions_in(y, x);
        let mut marg = vec![Rational::zero(); d.pow(y.len() as u32)];
        for (code, l) in sol.lambda[bi].iter().enumerate() {
            let labels = decode_tuple(code, d, x.len());
            let sub: Vec<usize> = pos.iter().map(|&p| labels[p]).collect();
            marg[encode_tuple(&sub, d)] += l;
        }
        if marg != sol.lambda[bj] {
            return Err(format!("S4: block {x:?} does not marginalise onto {y:?}"));
        }
    }
    if ExtValue::Finite(objective.clone()) != sol.value {
        return Err(format!("objective mismatch: {objective} vs {}", sol.value));
    }
    Ok(())
}
