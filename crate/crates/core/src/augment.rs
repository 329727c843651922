//! Null-constraint augmentation shared by the LP and SDP builders.
//!
//! Every designated scope-set (a nonempty `X` with `|X| ≤ k`) gets exactly one
//! block of relaxation variables; all constraints with that scope-set share it.
//! Constraints whose scope-set is larger than `k` get their own block.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::caps::sat_pow;
use crate::error::{Error, Result};
use crate::model::{combinations, is_sorted_subset, sorted_union, Instance};

/// Which scope-sets receive null constraints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SubsetMode {
    /// Every nonempty subset of the variables of size at most `k`.
    #[default]
    Full,
    /// Only nonempty subsets of unions of scope-sets of size at most `k`
    /// (a weaker relaxation, for scalability experiments).
    Scopes,
}

impl core::fmt::Display for SubsetMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            SubsetMode::Full => "full",
            SubsetMode::Scopes => "scopes",
        })
    }
}

impl core::str::FromStr for SubsetMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SubsetMode::Full),
            "scopes" => Ok(SubsetMode::Scopes),
            _ => Err(Error::Value(alloc::format!("unknown subset mode `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    /// Sorted scope-set.
    pub vars: Vec<usize>,
    /// Original constraints whose scope-set is `vars`.
    pub constraints: Vec<usize>,
    /// `|vars| ≤ k`: the designated block for this scope-set.
    pub designated: bool,
}

/// A constraint of the augmented instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AugConstraint {
    pub vars: Vec<usize>,
    /// Index into the original instance, `None` for null constraints.
    pub original: Option<usize>,
    pub block: usize,
}

#[derive(Clone, Debug)]
pub struct Augmentation {
    pub k: usize,
    pub mode: SubsetMode,
    pub blocks: Vec<Block>,
    pub constraints: Vec<AugConstraint>,
    index: BTreeMap<Vec<usize>, usize>,
}

impl Augmentation {
    /// Builds the augmentation; `column_cap` bounds `Σ_blocks d^{|X|}`.
    pub fn new(inst: &Instance, k: usize, mode: SubsetMode, column_cap: u128, what: &'static str) -> Result<Self> {
        if k == 0 {
            return Err(Error::Value("relaxation level must be at least 1".into()));
        }
        let n = inst.n();
        let d = inst.d() as u128;
        let family: Vec<Vec<usize>> = match mode {
            SubsetMode::Full => {
                let mut total: u128 = 0;
                let mut binom: u128 = 1;
                for j in 1..=k.min(n) {
                    binom = binom.saturating_mul((n + 1 - j) as u128) / j as u128;
                    total = total.saturating_add(binom.saturating_mul(sat_pow(d, j as u128)));
                }
                if total > column_cap {
                    return Err(Error::cap(what, total, column_cap));
                }
                let vars: Vec<usize> = (0..n).collect();
                (1..=k.min(n)).flat_map(|j| combinations(&vars, j)).collect()
            }
            SubsetMode::Scopes => {
                let mut unions: BTreeSet<Vec<usize>> = inst
                    .constraints()
                    .iter()
                    .map(|c| c.scope_set().to_vec())
                    .filter(|s| s.len() <= k)
                    .collect();
                loop {
                    let current: Vec<Vec<usize>> = unions.iter().cloned().collect();
                    let mut grew = false;
                    for a in 0..current.len() {
                        for b in a + 1..current.len() {
                            let u = sorted_union(&current[a], &current[b]);
                            if u.len() <= k && unions.insert(u) {
                                grew = true;
                            }
                        }
                    }
                    if !grew {
                        break;
                    }
                }
                let mut closed: BTreeSet<Vec<usize>> = BTreeSet::new();
                for u in &unions {
                    for j in 1..=u.len() {
                        closed.extend(combinations(u, j));
                    }
                }
                let mut fam: Vec<Vec<usize>> = closed.into_iter().collect();
                fam.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
                fam
            }
        };
        let mut blocks: Vec<Block> = Vec::new();
        let mut index = BTreeMap::new();
        for x in family {
            index.insert(x.clone(), blocks.len());
            blocks.push(Block { vars: x, constraints: Vec::new(), designated: true });
        }
        let mut constraints = Vec::new();
        for (i, c) in inst.constraints().iter().enumerate() {
            let vars = c.scope_set().to_vec();
            let b = if vars.len() <= k {
                match index.get(&vars) {
                    Some(&b) => b,
                    None => unreachable!("designated family covers small scopes"),
                }
            } else {
                blocks.push(Block { vars: vars.clone(), constraints: Vec::new(), designated: false });
                blocks.len() - 1
            };
            blocks[b].constraints.push(i);
            constraints.push(AugConstraint { vars, original: Some(i), block: b });
        }
        for (b, block) in blocks.iter().enumerate() {
            if block.designated && block.constraints.is_empty() {
                constraints.push(AugConstraint { vars: block.vars.clone(), original: None, block: b });
            }
        }
        let total: u128 = blocks
            .iter()
            .fold(0u128, |acc, b| acc.saturating_add(sat_pow(d, b.vars.len() as u128)));
        if total > column_cap {
            return Err(Error::cap(what, total, column_cap));
        }
        Ok(Augmentation { k, mode, blocks, constraints, index })
    }

    /// Block of the designated scope-set `vars`, if any.
    pub fn block_of(&self, vars: &[usize]) -> Option<usize> {
        self.index.get(vars).copied()
    }

    /// Designated blocks strictly inside block `b` that marginal rows must
    /// reach; the remaining ones follow by transitivity.
    pub fn marginal_targets(&self, b: usize) -> Vec<usize> {
        let x = &self.blocks[b].vars;
        if self.blocks[b].designated {
            if x.len() < 2 {
                return Vec::new();
            }
            combinations(x, x.len() - 1)
                .into_iter()
                .filter_map(|y| self.block_of(&y))
                .collect()
        } else {
            let subs: Vec<usize> = (0..self.blocks.len())
                .filter(|&j| self.blocks[j].designated && is_sorted_subset(&self.blocks[j].vars, x))
                .collect();
            subs.iter()
                .copied()
                .filter(|&j| {
                    !subs.iter().any(|&o| {
                        o != j
                            && self.blocks[o].vars.len() > self.blocks[j].vars.len()
                            && is_sorted_subset(&self.blocks[j].vars, &self.blocks[o].vars)
                    })
                })
                .collect()
        }
    }

    /// Every pair `(i, j)` of blocks with `X_j ⊊ X_i`, `X_j` designated.
    pub fn all_marginal_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.blocks.len() {
            for j in 0..self.blocks.len() {
                if i != j
                    && self.blocks[j].designated
                    && self.blocks[j].vars.len() < self.blocks[i].vars.len()
                    && is_sorted_subset(&self.blocks[j].vars, &self.blocks[i].vars)
                {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WeightedRelation;
    use alloc::sync::Arc;
    use alloc::vec;

    #[test]
    fn full_mode_counts() {
        let mut inst = Instance::new(2, 2);
        inst.add(Arc::new(WeightedRelation::equality(2)), vec![0, 1]).unwrap();
        let a = Augmentation::new(&inst, 2, SubsetMode::Full, 1000, "test").unwrap();
        assert_eq!(a.blocks.len(), 3);
        assert_eq!(a.constraints.len(), 3);
        assert_eq!(a.constraints[0].original, Some(0));
        assert_eq!(a.blocks[2].vars, vec![0, 1]);
        assert_eq!(a.marginal_targets(2), vec![0, 1]);
    }

    #[test]
    fn large_constraints_get_own_blocks() {
        let r = Arc::new(WeightedRelation::crisp_fn("p", 3, 2, |t| t.iter().sum::<usize>() % 2 == 0).unwrap());
        let mut inst = Instance::new(3, 2);
        inst.add(r.clone(), vec![0, 1, 2]).unwrap();
        inst.add(r, vec![2, 1, 0]).unwrap();
        let a = Augmentation::new(&inst, 1, SubsetMode::Full, 1000, "test").unwrap();
        assert_eq!(a.blocks.len(), 5);
        assert_eq!(a.marginal_targets(3), vec![0, 1, 2]);
    }

    #[test]
    fn scopes_mode_is_smaller() {
        let mut inst = Instance::new(6, 2);
        let eq = Arc::new(WeightedRelation::equality(2));
        inst.add(eq.clone(), vec![0, 1]).unwrap();
        inst.add(eq, vec![4, 5]).unwrap();
        let s = Augmentation::new(&inst, 3, SubsetMode::Scopes, 10_000, "test").unwrap();
        let f = Augmentation::new(&inst, 3, SubsetMode::Full, 10_000, "test").unwrap();
        assert_eq!(s.blocks.len(), 6);
        assert!(f.blocks.len() > s.blocks.len());
    }

    #[test]
    fn cap_is_enforced() {
        let inst = Instance::new(30, 2);
        let e = Augmentation::new(&inst, 5, SubsetMode::Full, 1000, "sa columns").unwrap_err();
        assert!(e.is_cap_exceeded());
    }
}
