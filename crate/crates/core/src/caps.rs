/// Resource caps shared by the enumerative and LP/SDP builders.
///
/// Every cap is enforced with an explicit [`crate::Error::CapExceeded`]
/// rather than a silent slowdown.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Caps {
    /// Maximum number of total assignments enumerated by brute force.
    pub enumeration: u128,
    /// Maximum number of candidate operations in an fpol LP.
    pub operations: u128,
    /// Maximum number of tuple combinations inspected by a polymorphism test.
    pub tuple_combinations: u128,
    /// Maximum number of columns in a Sherali-Adams model.
    pub sa_columns: u128,
    /// Maximum number of indices (including the unit index) in a Lasserre model.
    pub las_indices: u128,
    /// Maximum number of moment classes (distinct Gram entries) in a Lasserre model.
    pub las_classes: u128,
    /// Maximum relation table size `d^r`.
    pub table: u128,
    /// Maximum number of gadget copies used by the opt/feas reductions.
    pub copies: u128,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            enumeration: 10_000_000,
            operations: 100_000,
            tuple_combinations: 50_000_000,
            sa_columns: 1_000_000,
            las_indices: 4000,
            las_classes: 6000,
            table: 10_000_000,
            copies: 1_000_000,
        }
    }
}

/// `base^exp` saturating at `u128::MAX`.
pub fn sat_pow(base: u128, exp: u128) -> u128 {
    if base <= 1 {
        return if exp == 0 { 1 } else { base };
    }
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.saturating_mul(base);
        if acc == u128::MAX {
            break;
        }
    }
    acc
}
