use super::CpdaError;

/// Bound on the magnitude of any protocol value: `|v| < 2^120`.
///
/// The worst case in a round is a blinded sum at the cheap-mode leader
/// seed, roughly `m * r_max * seed^(m-1)`; with the default 2^40 seed,
/// 32-bit randoms and three participants that stays below ~2^114. The
/// headroom to `i128` lets every operation be checked, so configurations
/// that would exceed the bound surface as errors rather than wrong sums.
pub const MAX_MAGNITUDE_BITS: u32 = 120;

const LIMIT: i128 = 1i128 << MAX_MAGNITUDE_BITS;

/// Exact signed integer used for all share, blinded-sum and aggregate
/// arithmetic. A thin wrapper over `i128` whose constructors and arithmetic
/// reject any value with `|v| >= 2^120`, so overflow is an explicit error
/// rather than a wrong answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WideInt(i128);

impl WideInt {
    pub const ZERO: WideInt = WideInt(0);
    pub const ONE: WideInt = WideInt(1);

    pub fn new(v: i128) -> Result<Self, CpdaError> {
        if v.unsigned_abs() >= LIMIT as u128 {
            return Err(CpdaError::MagnitudeOverflow);
        }
        Ok(WideInt(v))
    }

    pub fn value(self) -> i128 {
        self.0
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn checked_add(self, rhs: WideInt) -> Result<WideInt, CpdaError> {
        self.0
            .checked_add(rhs.0)
            .ok_or(CpdaError::MagnitudeOverflow)
            .and_then(WideInt::new)
    }

    pub fn checked_sub(self, rhs: WideInt) -> Result<WideInt, CpdaError> {
        self.0
            .checked_sub(rhs.0)
            .ok_or(CpdaError::MagnitudeOverflow)
            .and_then(WideInt::new)
    }

    pub fn checked_mul(self, rhs: WideInt) -> Result<WideInt, CpdaError> {
        self.0
            .checked_mul(rhs.0)
            .ok_or(CpdaError::MagnitudeOverflow)
            .and_then(WideInt::new)
    }

    /// Euclidean-style division for the non-negative dividends used in digit
    /// extraction: returns `(quotient, remainder)` with
    /// `0 <= remainder < divisor`. The divisor must be positive.
    pub fn div_rem(self, divisor: WideInt) -> Result<(WideInt, WideInt), CpdaError> {
        if divisor.0 <= 0 {
            return Err(CpdaError::PreconditionViolated(format!(
                "division by non-positive value {}",
                divisor.0
            )));
        }
        let q = self.0.div_euclid(divisor.0);
        let r = self.0.rem_euclid(divisor.0);
        Ok((WideInt(q), WideInt(r)))
    }
}

impl From<u64> for WideInt {
    fn from(v: u64) -> Self {
        WideInt(v as i128)
    }
}

impl From<u32> for WideInt {
    fn from(v: u32) -> Self {
        WideInt(v as i128)
    }
}

impl std::fmt::Display for WideInt {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Sum an iterator of values with overflow checking.
pub fn checked_sum<I: IntoIterator<Item = WideInt>>(iter: I) -> Result<WideInt, CpdaError> {
    let mut acc = WideInt::ZERO;
    for v in iter {
        acc = acc.checked_add(v)?;
    }
    Ok(acc)
}
