//! Numeric abstractions shared by the solvers and oracles.
//!
//! Flow computations are carried out over signed primitive integers
//! ([`Capacity`]), while the expectation oracles are generic over any ordered
//! field ([`Scalar`]) so that the same code can be run in `f64` for speed or in
//! an exact rational type when a test needs bit-exact answers.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num, PrimInt, Signed, ToPrimitive};

/// Ordered field used by the expectation oracles.
pub trait Scalar: Num + Clone + PartialOrd + FromPrimitive + ToPrimitive + Debug {
    /// Converts an input probability. Exact for rational implementations.
    fn from_probability(p: f64) -> Self {
        Self::from_f64(p).unwrap_or_else(|| panic!("probability {p} is not representable"))
    }

    fn from_count(k: u64) -> Self {
        Self::from_u64(k).unwrap_or_else(|| panic!("count {k} is not representable"))
    }

    fn to_real(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where T: Num + Clone + PartialOrd + FromPrimitive + ToPrimitive + Debug {}

/// Floating-point scalars, needed where the oracle evaluates transcendental
/// functions (the coupon-collector integral).
pub trait RealScalar: Scalar + Float {}

impl<T> RealScalar for T where T: Scalar + Float {}

/// Integer capacity type of a flow network.
pub trait Capacity: PrimInt + Signed + Debug + Send + Sync {
    fn from_u64_checked(v: u64) -> Self {
        Self::from(v).unwrap_or_else(|| panic!("capacity {v} overflows the capacity type"))
    }

    fn as_u64(self) -> u64 {
        self.to_u64().expect("negative capacity")
    }
}

impl<T> Capacity for T where T: PrimInt + Signed + Debug + Send + Sync {}

pub type BigRational = Ratio<BigInt>;
