//! Per-turbine sensor channels.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    Speed,
    Direction,
    Yaw,
    Power,
}

impl SignalKind {
    pub const ALL: [SignalKind; 4] = [SignalKind::Speed, SignalKind::Direction, SignalKind::Yaw, SignalKind::Power];

    pub fn name(self) -> &'static str {
        match self {
            SignalKind::Speed => "speed",
            SignalKind::Direction => "direction",
            SignalKind::Yaw => "yaw",
            SignalKind::Power => "power",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// One value per channel: speed (m/s), direction (deg), yaw offset (deg), power (W).
/// Also used for additive errors on those channels, in the same units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Signals {
    pub speed: f64,
    pub direction: f64,
    pub yaw: f64,
    pub power: f64,
}

impl Signals {
    pub const ZERO: Signals = Signals {
        speed: 0.0,
        direction: 0.0,
        yaw: 0.0,
        power: 0.0,
    };

    pub fn new(speed: f64, direction: f64, yaw: f64, power: f64) -> Self {
        Self {
            speed,
            direction,
            yaw,
            power,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.speed, self.direction, self.yaw, self.power]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn map(self, mut f: impl FnMut(SignalKind, f64) -> f64) -> Self {
        let mut out = self;
        for k in SignalKind::ALL {
            out[k] = f(k, self[k]);
        }
        out
    }
}

impl Index<SignalKind> for Signals {
    type Output = f64;

    fn index(&self, k: SignalKind) -> &f64 {
        match k.index() {
            0 => &self.speed,
            1 => &self.direction,
            2 => &self.yaw,
            _ => &self.power,
        }
    }
}

impl IndexMut<SignalKind> for Signals {
    fn index_mut(&mut self, k: SignalKind) -> &mut f64 {
        match k.index() {
            0 => &mut self.speed,
            1 => &mut self.direction,
            2 => &mut self.yaw,
            _ => &mut self.power,
        }
    }
}

/// One sample of every channel of every turbine.
pub type Frame = Vec<Signals>;
