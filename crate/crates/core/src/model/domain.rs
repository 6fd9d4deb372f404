use serde::{Deserialize, Serialize};

/// Direction of the deterministic flow between jumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// `g > 0`: levels increase between jumps.
    Growth,
    /// `g < 0`: levels decrease between jumps.
    Decay,
}

impl Orientation {
    /// `+1` for growth, `-1` for decay.
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Growth => 1.0,
            Orientation::Decay => -1.0,
        }
    }
}

/// Open interval `(d0, d1)` of admissible levels, endpoints possibly infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateDomain {
    pub d0: f64,
    pub d1: f64,
    pub orientation: Orientation,
}

impl StateDomain {
    pub fn new(d0: f64, d1: f64, orientation: Orientation) -> Result<Self, String> {
        if d0.is_nan() || d1.is_nan() || d0 >= d1 {
            return Err(format!("domain requires d0 < d1, got ({d0}, {d1})"));
        }
        Ok(Self { d0, d1, orientation })
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.d0 && x < self.d1
    }

    /// Endpoint the flow starts from (`d0` for growth).
    pub fn upstream(&self) -> f64 {
        match self.orientation {
            Orientation::Growth => self.d0,
            Orientation::Decay => self.d1,
        }
    }

    /// Endpoint the flow runs toward (`d1` for growth).
    pub fn downstream(&self) -> f64 {
        match self.orientation {
            Orientation::Growth => self.d1,
            Orientation::Decay => self.d0,
        }
    }

    /// Finite reference point: 1 when inside, else the midpoint of the given
    /// truncation (or of the domain when bounded).
    pub fn default_anchor(&self, truncation: Option<(f64, f64)>) -> f64 {
        if self.contains(1.0) {
            return 1.0;
        }
        if let Some((a, b)) = truncation {
            return 0.5 * (a + b);
        }
        match (self.d0.is_finite(), self.d1.is_finite()) {
            (true, true) => 0.5 * (self.d0 + self.d1),
            (true, false) => self.d0 + 1.0,
            (false, true) => self.d1 - 1.0,
            (false, false) => 0.0,
        }
    }
}
