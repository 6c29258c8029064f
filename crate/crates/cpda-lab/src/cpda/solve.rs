use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use super::wideint::WideInt;
use super::{CpdaError, Seed};

/// Arithmetic effort counters for a solve. Only multiplications and
/// divisions are counted; additions are considered free, matching the usual
/// cost model for comparing the exact solve against digit extraction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub multiplications: u64,
    pub divisions: u64,
}

impl OpCounts {
    pub fn total(self) -> u64 {
        self.multiplications + self.divisions
    }
}

/// Result of solving the blinded linear system exactly.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    /// Polynomial coefficients in ascending order: `[c0, c1, ..., c_{m-1}]`.
    /// `c0` is the recovered sum of readings, `c_t` the aggregate random of
    /// degree `t`.
    pub coefficients: Vec<WideInt>,
    pub ops: OpCounts,
}

/// Solve `V * c = f` where `V` is the Vandermonde matrix of the seeds
/// (row i = `[1, s_i, s_i^2, ...]`), in exact rational arithmetic.
///
/// Distinct seeds make `V` nonsingular with nonzero leading minors, so
/// plain elimination without pivoting succeeds and performs a fixed number
/// of operations for a given system size. Duplicate seeds (or a zero pivot,
/// which cannot arise from distinct positive seeds) report `SingularMatrix`;
/// a solution with any fractional component reports `NonIntegerSolution`,
/// which for well-formed inputs indicates corrupted values.
pub fn solve_vandermonde(seeds: &[Seed], values: &[WideInt]) -> Result<SolveOutcome, CpdaError> {
    let m = seeds.len();
    if m == 0 || values.len() != m {
        return Err(CpdaError::PreconditionViolated(format!(
            "need equally many seeds and values, got {} and {}",
            m,
            values.len()
        )));
    }
    for i in 0..m {
        for j in (i + 1)..m {
            if seeds[i].0 == seeds[j].0 {
                return Err(CpdaError::SingularMatrix);
            }
        }
    }

    let mut ops = OpCounts::default();
    let rat = |v: i128| BigRational::from(BigInt::from(v));

    // Augmented matrix rows [1, s, s^2, ..., s^{m-1} | f]; successive powers
    // cost one multiplication each.
    let mut aug: Vec<Vec<BigRational>> = Vec::with_capacity(m);
    for (seed, value) in seeds.iter().zip(values) {
        let s = rat(seed.0 as i128);
        let mut row = Vec::with_capacity(m + 1);
        let mut power = BigRational::from(BigInt::from(1));
        row.push(power.clone());
        for _ in 1..m {
            power *= &s;
            ops.multiplications += 1;
            row.push(power.clone());
        }
        row.push(rat(value.value()));
        aug.push(row);
    }

    // Forward elimination. Factors are always applied (even when zero) so
    // the operation count depends only on m.
    for col in 0..m {
        if aug[col][col].is_zero() {
            return Err(CpdaError::SingularMatrix);
        }
        for row in (col + 1)..m {
            let factor = &aug[row][col] / &aug[col][col];
            ops.divisions += 1;
            aug[row][col] = BigRational::zero();
            for k in (col + 1)..=m {
                let delta = &factor * &aug[col][k];
                ops.multiplications += 1;
                aug[row][k] -= delta;
            }
        }
    }

    // Back substitution.
    let mut solution = vec![BigRational::zero(); m];
    for row in (0..m).rev() {
        let mut acc = aug[row][m].clone();
        for k in (row + 1)..m {
            let delta = &aug[row][k] * &solution[k];
            ops.multiplications += 1;
            acc -= delta;
        }
        solution[row] = acc / &aug[row][row];
        ops.divisions += 1;
    }

    let mut coefficients = Vec::with_capacity(m);
    for x in solution {
        if !x.is_integer() {
            return Err(CpdaError::NonIntegerSolution);
        }
        let int = x.to_integer();
        let v = int.to_i128().ok_or(CpdaError::MagnitudeOverflow)?;
        coefficients.push(WideInt::new(v)?);
    }
    Ok(SolveOutcome { coefficients, ops })
}

/// Result of base-`s` digit extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    /// Recovered coefficients from highest degree down to degree 1.
    pub coefficients_high_to_low: Vec<WideInt>,
    /// What remains below degree 1 — the constant term, provided every true
    /// coefficient below the top was smaller than the base.
    pub residual: WideInt,
    pub divisions: u64,
}

impl Extraction {
    /// Coefficients in ascending degree order `[c1, ..., c_degree]`.
    pub fn coefficients_low_to_high(&self) -> Vec<WideInt> {
        let mut v = self.coefficients_high_to_low.clone();
        v.reverse();
        v
    }

    /// Evaluate the extracted polynomial back at `base` and add the
    /// residual; always reproduces the original value.
    pub fn reassemble(&self, base: Seed) -> Result<WideInt, CpdaError> {
        let b = WideInt::from(base.0);
        let mut acc = WideInt::ZERO;
        for &c in &self.coefficients_high_to_low {
            acc = acc.checked_mul(b)?.checked_add(c)?;
        }
        acc.checked_mul(b)?.checked_add(self.residual)
    }
}

/// Read `v` as a base-`s` numeral of `degree + 1` digits: repeated division
/// by `s`, cheapest digit first, using exactly `degree` divisions.
///
/// If `v = c0 + c1*s + ... + c_d*s^d` with `0 <= c_t < s` for all `t < d`,
/// the extraction recovers every coefficient exactly (the top coefficient
/// `c_d` absorbs whatever is left and is not bounded). When some lower
/// coefficient reaches `s`, digits blend and the results are systematically
/// wrong — that failure mode is precisely what makes small seeds dangerous
/// and a large private seed useful.
pub fn extract_base_coefficients(v: WideInt, base: Seed, degree: u32) -> Extraction {
    assert!(!v.is_negative(), "extraction requires a non-negative value");
    assert!(base.0 >= 2, "extraction requires base >= 2");
    let b = WideInt::from(base.0);
    let mut quotient = v;
    let mut low_digits = Vec::with_capacity(degree as usize);
    for _ in 0..degree {
        let (q, r) = quotient.div_rem(b).expect("positive base");
        low_digits.push(r);
        quotient = q;
    }
    // low_digits = [residual, c1, c2, ...]; quotient = c_degree.
    let residual = if degree == 0 { v } else { low_digits[0] };
    let mut coefficients_high_to_low = vec![quotient];
    for &d in low_digits.iter().skip(1).rev() {
        coefficients_high_to_low.push(d);
    }
    if degree == 0 {
        coefficients_high_to_low.clear();
    }
    Extraction { coefficients_high_to_low, residual, divisions: degree as u64 }
}
