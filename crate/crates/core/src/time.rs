use core::cmp::Ordering;
use core::fmt;
use core::ops::{Add, Sub};

/// Simulated time in seconds.
///
/// Always finite and non-negative, which makes the total order below sound.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    pub fn from_secs(secs: f64) -> Self {
        assert!(
            secs.is_finite() && secs >= 0.0,
            "simulation time must be finite and non-negative, got {secs}"
        );
        // adding +0.0 turns -0.0 into +0.0, keeping `==` and `total_cmp` in agreement
        SimTime(secs + 0.0)
    }

    pub fn as_secs(self) -> f64 {
        self.0
    }

    /// Seconds elapsed since `earlier`; panics if `earlier` is later.
    pub fn since(self, earlier: SimTime) -> f64 {
        assert!(earlier <= self, "time went backwards: {earlier} > {self}");
        self.0 - earlier.0
    }
}

impl Eq for SimTime {}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add<f64> for SimTime {
    type Output = SimTime;

    fn add(self, delay: f64) -> SimTime {
        assert!(delay >= 0.0, "negative delay {delay}");
        SimTime::from_secs(self.0 + delay)
    }
}

impl Sub for SimTime {
    type Output = f64;

    fn sub(self, rhs: SimTime) -> f64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}", self.0)
    }
}
