//! Antenna-group combinatorics: which groups a space-domain symbol activates
//! and the selection matrices that express it.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::config::SystemConfig;
use crate::error::{Error, Result};

/// Hard cap on enumerable table sizes. Tables beyond this would allocate
/// millions of selection matrices; configurations that large are outside the
/// intended operating range.
const MAX_ENUMERABLE: u64 = 1 << 16;

/// Count of used antenna-group combinations: the largest power of two not
/// exceeding C(n_m, n_rf).
pub fn compute_num_agcs(n_m: usize, n_rf: usize) -> Result<u64> {
    if n_rf < 1 {
        return Err(Error::DimensionMismatch("n_rf must be >= 1".into()));
    }
    if n_rf > n_m {
        return Err(Error::DimensionMismatch(format!(
            "n_rf = {n_rf} exceeds the group count n_m = {n_m}"
        )));
    }
    let c = binomial(n_m as u64, n_rf as u64).ok_or_else(|| {
        Error::InvalidConfig(format!("C({n_m}, {n_rf}) overflows the combination count"))
    })?;
    let floor_log2 = 127 - c.leading_zeros();
    if floor_log2 >= 64 {
        return Err(Error::InvalidConfig(format!(
            "2^{floor_log2} antenna-group combinations do not fit in a u64"
        )));
    }
    Ok(1u64 << floor_log2)
}

fn binomial(n: u64, k: u64) -> Option<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc.checked_mul((n - k + i) as u128)?;
        acc /= i as u128;
    }
    Some(acc)
}

/// The enumerated antenna-group combinations of one grouping, together with
/// their selection matrices.
///
/// Group indices are 0-based. Combination `m` activates groups
/// `combos[m]`, i.e. antennas `u * n_k .. (u + 1) * n_k` for each group `u`
/// in the combination. The selection matrix `C_m` is `n_t x n_rf` with ones
/// exactly in those rows of column `j` that belong to the `j`-th activated
/// group. `D_m = C_m C_m^H` is then symmetric 0/1 with `[D_m]_{ij} = 1`
/// exactly when antennas i and j share one active group, and has trace
/// `n_k * n_rf`; it collapses to a diagonal matrix only for `n_k = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgcTable {
    n_m: usize,
    n_rf: usize,
    n_k: usize,
    combos: Vec<Vec<usize>>,
    selection: Vec<DMatrix<Complex64>>,
}

impl AgcTable {
    /// Enumerates the first M combinations in lexicographic order.
    ///
    /// The grouping only pins how many combinations are used, not which;
    /// taking the lexicographically first M keeps tables deterministic and
    /// reproducible across runs.
    pub fn enumerate(n_m: usize, n_rf: usize, n_k: usize) -> Result<Self> {
        let m = compute_num_agcs(n_m, n_rf)?;
        if n_k < 1 {
            return Err(Error::DimensionMismatch("n_k must be >= 1".into()));
        }
        if m > MAX_ENUMERABLE {
            return Err(Error::InvalidConfig(format!(
                "table of {m} combinations exceeds the enumerable cap of {MAX_ENUMERABLE}"
            )));
        }
        let combos = first_combinations(n_m, n_rf, m as usize);
        let selection = combos.iter().map(|u| selection_matrix(u, n_m, n_rf, n_k)).collect();
        Ok(Self { n_m, n_rf, n_k, combos, selection })
    }

    /// Table for a validated configuration.
    pub fn for_config(cfg: &SystemConfig) -> Result<Self> {
        cfg.validate()?;
        Self::enumerate(cfg.n_m, cfg.n_rf, cfg.n_k)
    }

    /// Builds a table from explicit combinations (e.g. a permuted order).
    /// Each combination must be strictly increasing, in range, and distinct,
    /// and there must be exactly M of them.
    pub fn from_combos(
        combos: Vec<Vec<usize>>,
        n_m: usize,
        n_rf: usize,
        n_k: usize,
    ) -> Result<Self> {
        let m = compute_num_agcs(n_m, n_rf)?;
        if combos.len() as u64 != m {
            return Err(Error::InvalidConfig(format!(
                "expected exactly {m} combinations, got {}",
                combos.len()
            )));
        }
        for u in &combos {
            if u.len() != n_rf {
                return Err(Error::InvalidConfig(format!(
                    "combination {u:?} does not have n_rf = {n_rf} entries"
                )));
            }
            if !u.windows(2).all(|w| w[0] < w[1]) || u.iter().any(|&g| g >= n_m) {
                return Err(Error::InvalidConfig(format!(
                    "combination {u:?} is not strictly increasing within 0..{n_m}"
                )));
            }
        }
        let mut sorted = combos.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("combinations must be distinct".into()));
        }
        let selection = combos.iter().map(|u| selection_matrix(u, n_m, n_rf, n_k)).collect();
        Ok(Self { n_m, n_rf, n_k, combos, selection })
    }

    /// Number of combinations M.
    pub fn len(&self) -> usize {
        self.combos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.combos.is_empty()
    }

    pub fn n_t(&self) -> usize {
        self.n_m * self.n_k
    }

    pub fn n_rf(&self) -> usize {
        self.n_rf
    }

    pub fn n_k(&self) -> usize {
        self.n_k
    }

    /// 0-based group indices activated by combination `m`.
    pub fn combo(&self, m: usize) -> &[usize] {
        &self.combos[m]
    }

    pub fn combos(&self) -> &[Vec<usize>] {
        &self.combos
    }

    /// Selection matrix C_m, shape n_t x n_rf.
    pub fn selection_matrix(&self, m: usize) -> &DMatrix<Complex64> {
        &self.selection[m]
    }

    /// 0-based antenna rows on which D_m = C_m C_m^H has a one.
    pub fn active_antennas(&self, m: usize) -> Vec<usize> {
        self.combos[m]
            .iter()
            .flat_map(|&u| (u * self.n_k)..((u + 1) * self.n_k))
            .collect()
    }

    /// Checks a table-wide structural invariant set; used by tests.
    pub fn check_invariants(&self) -> Result<()> {
        for (idx, c) in self.selection.iter().enumerate() {
            if c.nrows() != self.n_t() || c.ncols() != self.n_rf {
                return Err(Error::DimensionMismatch(format!(
                    "selection matrix {idx} has shape {}x{}",
                    c.nrows(),
                    c.ncols()
                )));
            }
            for j in 0..self.n_rf {
                let ones = c.column(j).iter().filter(|v| v.re == 1.0 && v.im == 0.0).count();
                let zeros = c.column(j).iter().filter(|v| v.re == 0.0 && v.im == 0.0).count();
                if ones != self.n_k || ones + zeros != self.n_t() {
                    return Err(Error::InvalidConfig(format!(
                        "column {j} of selection matrix {idx} is not a {}-hot 0/1 column",
                        self.n_k
                    )));
                }
            }
        }
        Ok(())
    }
}

fn selection_matrix(combo: &[usize], n_m: usize, n_rf: usize, n_k: usize) -> DMatrix<Complex64> {
    let n_t = n_m * n_k;
    let mut c = DMatrix::<Complex64>::zeros(n_t, n_rf);
    for (j, &u) in combo.iter().enumerate() {
        for r in (u * n_k)..((u + 1) * n_k) {
            c[(r, j)] = Complex64::new(1.0, 0.0);
        }
    }
    c
}

/// First `m` k-subsets of {0, .., n-1} in lexicographic order.
fn first_combinations(n: usize, k: usize, m: usize) -> Vec<Vec<usize>> {
    let mut combos = Vec::with_capacity(m);
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        combos.push(cur.clone());
        if combos.len() == m {
            return combos;
        }
        // Rightmost index that can still advance.
        let mut i = k - 1;
        while cur[i] == i + n - k {
            debug_assert!(i > 0, "caller never asks for more than C(n, k) subsets");
            i -= 1;
        }
        cur[i] += 1;
        for j in (i + 1)..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}
