//! Physical model of a single energy-harvesting sensor: battery, request and
//! age-of-information dynamics together with the per-slot cost.
//!
//! Within a slot the order of events is fixed: the request bit is observed, the
//! edge node picks an action, the sensor transmits if its battery is non-empty,
//! the on-demand age is charged, and finally the harvested energy is added.

use serde::{Deserialize, Serialize};

use crate::belief::choose_m;
use crate::error::{Error, Result};

/// Default span threshold for relative value iteration.
pub const DEFAULT_THETA: f64 = 1e-7;
/// Default tolerance used when the truncation depth is chosen automatically.
pub const DEFAULT_DEPTH_EPS: f64 = 1e-4;

/// Truncation depth of the belief space: either fixed, or the smallest depth
/// whose beliefs are within `eps` of a full battery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Depth {
    Fixed(usize),
    Auto { eps: f64 },
}

impl Default for Depth {
    fn default() -> Self {
        Depth::Auto {
            eps: DEFAULT_DEPTH_EPS,
        }
    }
}

/// Scalar definition of a single-sensor problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Per-slot probability of harvesting one unit of energy.
    pub lambda: f64,
    /// Per-slot probability of a user request.
    pub p: f64,
    /// Battery capacity `B` in energy units.
    pub battery: usize,
    /// Cap on the age of information.
    pub delta_max: usize,
    /// Belief truncation depth `M`.
    pub depth: Depth,
    /// Span threshold of relative value iteration.
    pub theta: f64,
}

impl ModelParams {
    /// Parameters with automatic depth selection and the default threshold.
    pub fn new(lambda: f64, p: f64, battery: usize, delta_max: usize) -> Self {
        ModelParams {
            lambda,
            p,
            battery,
            delta_max,
            depth: Depth::default(),
            theta: DEFAULT_THETA,
        }
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = Depth::Fixed(depth);
        self
    }

    pub fn with_auto_depth(mut self, eps: f64) -> Self {
        self.depth = Depth::Auto { eps };
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::invalid(
                "lambda",
                format!("{} is outside (0, 1]; with no harvesting the sensor can never transmit", self.lambda),
            ));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::invalid("p", format!("{} is outside [0, 1]", self.p)));
        }
        if self.battery < 1 {
            return Err(Error::invalid("battery", "capacity must be at least 1"));
        }
        if self.delta_max < 2 {
            return Err(Error::invalid("delta_max", "age cap must be at least 2"));
        }
        match self.depth {
            Depth::Fixed(0) => return Err(Error::invalid("m", "truncation depth must be at least 1")),
            Depth::Auto { eps } if !(eps > 0.0 && eps < 1.0) => {
                return Err(Error::invalid("m_auto_eps", format!("{eps} is outside (0, 1)")))
            }
            _ => {}
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::invalid("theta", format!("{} must be positive", self.theta)));
        }
        Ok(())
    }

    /// The concrete truncation depth `M`.
    pub fn resolved_depth(&self) -> usize {
        match self.depth {
            Depth::Fixed(m) => m,
            Depth::Auto { eps } => choose_m(self.lambda, self.battery, eps).max(1),
        }
    }
}

/// Command decision of the edge node for one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    #[default]
    Wait = 0,
    Command = 1,
}

impl Action {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Action::Command
        } else {
            Action::Wait
        }
    }

    pub fn is_command(self) -> bool {
        self == Action::Command
    }

    pub fn bit(self) -> u8 {
        self as u8
    }
}

/// Full state of the environment, including the part hidden from the edge node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EnvState {
    /// True battery level in `0..=B`.
    pub battery: usize,
    pub request: bool,
    /// Age of information, saturated at `delta_max`.
    pub age: usize,
    /// Battery level reported by the most recent update, in `1..=B`.
    pub known_battery: usize,
}

/// Battery level after one slot: `min(b + e - d, B)`.
pub fn battery_step(level: usize, harvested: bool, sent: bool, capacity: usize) -> Result<usize> {
    if sent && level == 0 {
        return Err(Error::EnergyCausality);
    }
    let next = level + usize::from(harvested) - usize::from(sent);
    Ok(next.min(capacity))
}

/// Age after one slot: reset to 1 on delivery, otherwise incremented up to the cap.
pub fn aoi_step(age: usize, sent: bool, delta_max: usize) -> usize {
    if sent {
        1
    } else {
        (age + 1).min(delta_max)
    }
}

/// Age seen by the requesting users at this slot, zero when nobody asked.
pub fn on_demand_aoi(request: bool, sent: bool, age: usize, delta_max: usize) -> usize {
    if request {
        aoi_step(age, sent, delta_max)
    } else {
        0
    }
}

/// Cost of `action` in `state`; a command to an empty sensor delivers nothing.
pub fn immediate_cost(state: &EnvState, action: Action, delta_max: usize) -> usize {
    let sent = action.is_command() && state.battery >= 1;
    on_demand_aoi(state.request, sent, state.age, delta_max)
}
