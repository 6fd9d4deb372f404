use super::domain::{Orientation, StateDomain};
use super::flow::FlowModel;
use super::hazard::HazardModel;
use super::ModelError;

/// Flow and hazard together: everything that happens between jumps.
#[derive(Clone, Debug)]
pub struct Dynamics {
    pub flow: FlowModel,
    pub hazard: HazardModel,
}

impl Dynamics {
    pub fn new(flow: FlowModel, hazard: HazardModel) -> Self {
        Self { flow, hazard }
    }

    pub fn domain(&self) -> StateDomain {
        self.flow.domain
    }

    pub fn orientation(&self) -> Orientation {
        self.flow.domain.orientation
    }

    pub fn g(&self, x: f64) -> f64 {
        self.flow.g(x)
    }

    pub fn phi(&self, x: f64) -> f64 {
        self.hazard.phi(x)
    }

    pub fn big_g(&self, x: f64) -> f64 {
        self.flow.big_g(x).unwrap_or(f64::NAN)
    }

    pub fn q(&self, x: f64) -> f64 {
        self.hazard.q(&self.flow, x)
    }

    pub fn q_inv(&self, s: f64) -> Result<f64, ModelError> {
        self.hazard.q_inv(&self.flow, s)
    }

    /// Time to travel from `x` to `y` along the flow.
    pub fn travel_time(&self, x: f64, y: f64) -> f64 {
        self.flow.travel_time(x, y)
    }

    pub fn flow_map(&self, t: f64, x: f64) -> f64 {
        self.flow.flow_map(t, x)
    }

    /// Discounted potential `Q_lambda = lambda G + Q`. Both `G` and `Q` are
    /// nondecreasing in flow order, for either orientation.
    pub fn q_lambda(&self, lambda: f64, x: f64) -> f64 {
        let q = self.q(x);
        if lambda == 0.0 {
            return q;
        }
        lambda * self.big_g(x) + q
    }

    /// `Q` at the downstream endpoint (`Q(d1)` for growth, `Q(d0)` for decay).
    pub fn q_downstream(&self) -> f64 {
        let (a, b) = self.hazard.endpoint_values();
        match self.orientation() {
            Orientation::Growth => b,
            Orientation::Decay => a,
        }
    }

    /// `Q` at the upstream endpoint.
    pub fn q_upstream(&self) -> f64 {
        let (a, b) = self.hazard.endpoint_values();
        match self.orientation() {
            Orientation::Growth => a,
            Orientation::Decay => b,
        }
    }

    /// True when every trajectory jumps almost surely (`Q` diverges downstream).
    pub fn jumps_certain(&self) -> bool {
        self.q_downstream() == f64::INFINITY
    }

    /// Survival probability from `x` to `y` (`y` downstream of `x`).
    pub fn survival(&self, x: f64, y: f64) -> f64 {
        let d = crate::numeric::ext_sub(self.q(y), self.q(x));
        (-d).exp()
    }

    pub fn label(&self) -> String {
        format!("{}|{}|{:?}", self.flow.label(), self.hazard.label(), self.domain())
    }
}
