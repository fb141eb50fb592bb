//! Engineering wake model with advection delay.
//!
//! Each turbine sheds a Gaussian velocity deficit whose centreline is
//! deflected by the turbine's yaw offset. Deficits travel downstream at the
//! free-stream speed: a downstream rotor sees the upstream turbine's yaw and
//! thrust as they were `distance / U∞` seconds earlier (rounded to the nearest
//! physics step). Multiple deficits combine as a root sum of squares.
//!
//! Frame: x East, y North (metres). Wind direction is meteorological, i.e. the
//! direction the wind blows *from*; 270° is a westerly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const AIR_DENSITY: f64 = 1.225;
pub const MAX_YAW_DEG: f64 = 45.0;

/// Thrust coefficient as a piecewise-linear function of wind speed,
/// held constant beyond the end points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CtCurve {
    points: Vec<[f64; 2]>,
}

impl CtCurve {
    pub fn constant(ct: f64) -> Self {
        Self { points: vec![[0.0, ct]] }
    }

    pub fn new(mut points: Vec<[f64; 2]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("ct curve needs at least one point".into()));
        }
        points.sort_by(|a, b| a[0].total_cmp(&b[0]));
        Ok(Self { points })
    }

    pub fn at(&self, speed: f64) -> f64 {
        let p = &self.points;
        if speed <= p[0][0] {
            return p[0][1];
        }
        for w in p.windows(2) {
            if speed <= w[1][0] {
                let t = (speed - w[0][0]) / (w[1][0] - w[0][0]);
                return w[0][1] + t * (w[1][1] - w[0][1]);
            }
        }
        p[p.len() - 1][1]
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TurbineSpec {
    /// m
    pub rotor_diameter: f64,
    /// m
    pub hub_height: f64,
    /// W
    pub rated_power: f64,
    pub cp: f64,
    pub ct_curve: CtCurve,
    /// Power scales with cos(γ)^p.
    pub yaw_loss_exponent: f64,
}

impl Default for TurbineSpec {
    fn default() -> Self {
        Self {
            rotor_diameter: 80.0,
            hub_height: 70.0,
            rated_power: 2.0e6,
            cp: 0.45,
            ct_curve: CtCurve::constant(0.8),
            yaw_loss_exponent: 2.0,
        }
    }
}

impl TurbineSpec {
    pub fn validate(&self) -> Result<()> {
        let betz = 16.0 / 27.0;
        if !(self.rotor_diameter > 0.0) {
            return Err(Error::InvalidInput("rotor_diameter must be positive".into()));
        }
        if !(self.cp >= 0.0 && self.cp < betz) {
            return Err(Error::InvalidInput(format!("cp must lie in [0, 16/27), got {}", self.cp)));
        }
        if self.ct_curve.values().any(|ct| !(ct > 0.0 && ct < 1.0)) {
            return Err(Error::InvalidInput("every ct value must lie in (0, 1)".into()));
        }
        if !(self.yaw_loss_exponent > 0.0) {
            return Err(Error::InvalidInput("yaw_loss_exponent must be positive".into()));
        }
        if !(self.rated_power > 0.0) {
            return Err(Error::InvalidInput("rated_power must be positive".into()));
        }
        Ok(())
    }

    pub fn rotor_area(&self) -> f64 {
        std::f64::consts::PI * (0.5 * self.rotor_diameter).powi(2)
    }

    pub fn ct(&self, speed: f64) -> f64 {
        self.ct_curve.at(speed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WakeModel {
    /// Linear wake expansion rate k in σ/D = k·x/D + 0.2√β.
    pub expansion_rate: f64,
    /// Multiplies the initial deflection angle ct/2·γ.
    pub deflection_coefficient: f64,
    /// Decay rate β_d of the deflection angle, angle(x) = angle₀ / (1 + β_d·x/D)².
    pub deflection_decay: f64,
}

impl Default for WakeModel {
    fn default() -> Self {
        Self {
            expansion_rate: 0.04,
            deflection_coefficient: 1.0,
            deflection_decay: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InflowCondition {
    /// Free-stream speed U∞ (m/s).
    pub speed: f64,
    /// Meteorological direction θ∞ (degrees, wind coming from).
    pub direction: f64,
}

impl InflowCondition {
    pub fn new(speed: f64, direction: f64) -> Self {
        Self { speed, direction }
    }

    /// Unit vector the flow travels along.
    pub fn downwind(&self) -> [f64; 2] {
        let t = self.direction.to_radians();
        [-t.sin(), -t.cos()]
    }

    /// Unit vector 90° to the left of the flow.
    pub fn crosswind(&self) -> [f64; 2] {
        let [dx, dy] = self.downwind();
        [-dy, dx]
    }

    /// (downstream, crosswind) coordinates of `point` relative to `origin`.
    pub fn project(&self, origin: [f64; 2], point: [f64; 2]) -> (f64, f64) {
        let r = [point[0] - origin[0], point[1] - origin[1]];
        let d = self.downwind();
        let c = self.crosswind();
        (r[0] * d[0] + r[1] * d[1], r[0] * c[0] + r[1] * c[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarmLayout {
    pub positions: Vec<[f64; 2]>,
    pub turbines: Vec<TurbineSpec>,
}

impl Default for FarmLayout {
    fn default() -> Self {
        Self::east_west_pair(TurbineSpec::default(), 7.0)
    }
}

impl FarmLayout {
    /// Two turbines on an East-West line `spacing_diameters` rotor diameters apart.
    pub fn east_west_pair(spec: TurbineSpec, spacing_diameters: f64) -> Self {
        let s = spacing_diameters * spec.rotor_diameter;
        Self {
            positions: vec![[0.0, 0.0], [s, 0.0]],
            turbines: vec![spec.clone(), spec],
        }
    }

    pub fn uniform(positions: Vec<[f64; 2]>, spec: TurbineSpec) -> Self {
        let turbines = vec![spec; positions.len()];
        Self { positions, turbines }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.is_empty() || self.positions.len() != self.turbines.len() {
            return Err(Error::InvalidInput(
                "layout needs one turbine spec per position and at least one turbine".into(),
            ));
        }
        for t in &self.turbines {
            t.validate()?;
        }
        for (i, a) in self.positions.iter().enumerate() {
            for b in &self.positions[i + 1..] {
                if a == b {
                    return Err(Error::InvalidInput(format!("duplicate turbine position {a:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn max_separation(&self) -> f64 {
        let mut best: f64 = 0.0;
        for a in &self.positions {
            for b in &self.positions {
                best = best.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }
        best
    }

    /// Turbine indices sorted from most upstream to most downstream.
    pub fn upstream_order(&self, inflow: &InflowCondition) -> Vec<usize> {
        let d = inflow.downwind();
        let mut order: Vec<usize> = (0..self.len()).collect();
        let along = |i: usize| self.positions[i][0] * d[0] + self.positions[i][1] * d[1];
        order.sort_by(|&a, &b| along(a).total_cmp(&along(b)).then(a.cmp(&b)));
        order
    }
}

/// P = min(½ρA·cp·U³, rated) · cos(γ)^p, in watts.
pub fn turbine_power(spec: &TurbineSpec, effective_speed: f64, yaw_offset_deg: f64) -> f64 {
    let u = effective_speed.max(0.0);
    let aero = 0.5 * AIR_DENSITY * spec.rotor_area() * spec.cp * u * u * u;
    let c = yaw_offset_deg.to_radians().cos().max(0.0);
    aero.min(spec.rated_power) * c.powf(spec.yaw_loss_exponent)
}

fn wake_width_over_d(model: &WakeModel, x_over_d: f64, ct: f64) -> f64 {
    let root = (1.0 - ct).sqrt();
    let beta = 0.5 * (1.0 + root) / root;
    model.expansion_rate * x_over_d + 0.2 * beta.sqrt()
}

/// Crosswind displacement of the wake centreline `downstream_x` metres behind
/// a rotor yawed by `yaw_deg`. Odd in the yaw angle.
pub fn centerline_offset(spec: &TurbineSpec, model: &WakeModel, downstream_x: f64, ct: f64, yaw_deg: f64) -> f64 {
    let d = spec.rotor_diameter;
    let angle0 = model.deflection_coefficient * yaw_deg.to_radians() * ct / 2.0;
    if model.deflection_decay == 0.0 {
        return angle0 * downstream_x;
    }
    let b = model.deflection_decay;
    angle0 * d / b * (1.0 - 1.0 / (1.0 + b * downstream_x / d))
}

fn deficit_impl(
    spec: &TurbineSpec,
    model: &WakeModel,
    downstream_x: f64,
    crosswind_y: f64,
    ct: f64,
    source_yaw: f64,
    saturate: bool,
) -> Result<f64> {
    if !(ct > 0.0 && ct < 1.0) {
        return Err(Error::ModelValidity(format!("thrust coefficient {ct} outside (0, 1)")));
    }
    if !(downstream_x > 0.0) {
        return Err(Error::InvalidInput(format!("downstream distance must be positive, got {downstream_x}")));
    }
    let d = spec.rotor_diameter;
    let sigma_d = wake_width_over_d(model, downstream_x / d, ct);
    let mut arg = 1.0 - ct * source_yaw.to_radians().cos() / (8.0 * sigma_d * sigma_d);
    if arg < 0.0 {
        if !saturate {
            return Err(Error::ModelValidity(format!(
                "near wake at x = {downstream_x:.1} m is outside the Gaussian model's range"
            )));
        }
        arg = 0.0;
    }
    let centre = 1.0 - arg.sqrt();
    let y_eff = crosswind_y - centerline_offset(spec, model, downstream_x, ct, source_yaw);
    let sigma = sigma_d * d;
    Ok((centre * (-(y_eff * y_eff) / (2.0 * sigma * sigma)).exp()).clamp(0.0, 1.0))
}

/// Fractional velocity deficit (relative to U∞) at `(downstream_x, crosswind_y)`
/// behind a rotor with thrust coefficient `ct` and yaw offset `source_yaw` (degrees).
pub fn wake_deficit(
    spec: &TurbineSpec,
    model: &WakeModel,
    downstream_x: f64,
    crosswind_y: f64,
    ct: f64,
    source_yaw: f64,
) -> Result<f64> {
    deficit_impl(spec, model, downstream_x, crosswind_y, ct, source_yaw, false)
}

/// Yaw and thrust a rotor emitted at a given time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceRecord {
    pub yaw: f64,
    pub ct: f64,
    pub time: f64,
}

/// Fixed-capacity history, newest first when queried.
#[derive(Debug, Clone)]
pub struct RecordRing {
    buf: Vec<SourceRecord>,
    head: usize,
}

impl RecordRing {
    /// Ring of `capacity` slots, every slot holding `initial`.
    pub fn filled(capacity: usize, initial: SourceRecord) -> Self {
        Self {
            buf: vec![initial; capacity.max(1)],
            head: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.buf.len()
    }

    pub fn push(&mut self, rec: SourceRecord) {
        self.head = (self.head + 1) % self.buf.len();
        self.buf[self.head] = rec;
    }

    /// Record pushed `lag` pushes ago (0 = newest).
    pub fn get(&self, lag: usize) -> Result<SourceRecord> {
        let n = self.buf.len();
        if lag >= n {
            return Err(Error::Internal(format!("lag {lag} exceeds wake history horizon {n}")));
        }
        Ok(self.buf[(self.head + n - lag) % n])
    }
}

/// Physical state of one simulated farm.
#[derive(Debug, Clone)]
pub struct WakeState {
    yaw: Vec<f64>,
    rings: Vec<RecordRing>,
    speeds: Vec<f64>,
    clock: f64,
    physics_dt: f64,
}

fn lag_steps(downstream_x: f64, speed: f64, dt: f64) -> usize {
    (downstream_x / speed / dt).round() as usize
}

fn combine(deficits_sq: f64) -> f64 {
    deficits_sq.sqrt().min(1.0)
}

impl WakeState {
    /// Zero-yaw steady state at `inflow`. The history horizon covers the
    /// longest advection delay possible at `min_speed`.
    pub fn new(
        layout: &FarmLayout,
        model: &WakeModel,
        inflow: &InflowCondition,
        min_speed: f64,
        physics_dt: f64,
    ) -> Result<Self> {
        layout.validate()?;
        if !(min_speed > 0.0 && physics_dt > 0.0) {
            return Err(Error::InvalidInput("min_speed and physics_dt must be positive".into()));
        }
        if inflow.speed < min_speed {
            return Err(Error::InvalidInput(format!(
                "inflow speed {} below the history sizing speed {min_speed}",
                inflow.speed
            )));
        }
        let n = layout.len();
        let yaw = vec![0.0; n];
        let speeds = steady_state_speeds(layout, model, inflow, &yaw)?;
        let capacity = lag_steps(layout.max_separation(), min_speed, physics_dt) + 2;
        let rings = (0..n)
            .map(|i| {
                RecordRing::filled(
                    capacity,
                    SourceRecord {
                        yaw: 0.0,
                        ct: layout.turbines[i].ct(speeds[i]),
                        time: 0.0,
                    },
                )
            })
            .collect();
        Ok(Self {
            yaw,
            rings,
            speeds,
            clock: 0.0,
            physics_dt,
        })
    }

    pub fn yaw(&self) -> &[f64] {
        &self.yaw
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn physics_dt(&self) -> f64 {
        self.physics_dt
    }

    pub fn history_horizon(&self) -> usize {
        self.rings.first().map_or(0, RecordRing::capacity)
    }

    pub fn powers(&self, layout: &FarmLayout) -> Vec<f64> {
        layout
            .turbines
            .iter()
            .zip(self.speeds.iter().zip(&self.yaw))
            .map(|(spec, (&u, &g))| turbine_power(spec, u, g))
            .collect()
    }

    /// Advances one physics step and returns the effective rotor speeds.
    pub fn step_physics(
        &mut self,
        layout: &FarmLayout,
        model: &WakeModel,
        inflow: &InflowCondition,
        commanded_yaw: &[f64],
        dt: f64,
    ) -> Result<Vec<f64>> {
        if commanded_yaw.len() != layout.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} yaw commands, got {}",
                layout.len(),
                commanded_yaw.len()
            )));
        }
        if (dt - self.physics_dt).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "step dt {dt} differs from the configured physics dt {}",
                self.physics_dt
            )));
        }
        for (y, &c) in self.yaw.iter_mut().zip(commanded_yaw) {
            *y = c.clamp(-MAX_YAW_DEG, MAX_YAW_DEG);
        }
        let order = layout.upstream_order(inflow);
        let mut speeds = vec![inflow.speed; layout.len()];
        for (k, &i) in order.iter().enumerate() {
            let mut sum_sq = 0.0;
            for &j in &order[..k] {
                let (x, y) = inflow.project(layout.positions[j], layout.positions[i]);
                if x <= 0.0 {
                    continue;
                }
                let rec = self.rings[j].get(lag_steps(x, inflow.speed, dt))?;
                let d = wake_deficit(&layout.turbines[j], model, x, y, rec.ct, rec.yaw)?;
                sum_sq += d * d;
            }
            speeds[i] = inflow.speed * (1.0 - combine(sum_sq));
            self.rings[i].push(SourceRecord {
                yaw: self.yaw[i],
                ct: layout.turbines[i].ct(speeds[i]),
                time: self.clock,
            });
        }
        self.speeds = speeds.clone();
        self.clock += dt;
        Ok(speeds)
    }

    /// Hub-height speed at each point, from the current wake history.
    /// Points closer to a rotor than the Gaussian model supports see a
    /// saturated deficit. Does not mutate the state.
    pub fn flow_field_snapshot(
        &self,
        layout: &FarmLayout,
        model: &WakeModel,
        inflow: &InflowCondition,
        points: &[[f64; 2]],
    ) -> Vec<f64> {
        points
            .iter()
            .map(|&p| {
                let mut sum_sq = 0.0;
                for j in 0..layout.len() {
                    let (x, y) = inflow.project(layout.positions[j], p);
                    if x <= 0.0 {
                        continue;
                    }
                    let lag = lag_steps(x, inflow.speed, self.physics_dt).min(self.rings[j].capacity() - 1);
                    let rec = self.rings[j].get(lag).expect("lag clamped to horizon");
                    let d = deficit_impl(&layout.turbines[j], model, x, y, rec.ct, rec.yaw, true).unwrap_or(0.0);
                    sum_sq += d * d;
                }
                inflow.speed * (1.0 - combine(sum_sq))
            })
            .collect()
    }
}

/// Effective speeds with every wake fully developed (no advection delay).
pub fn steady_state_speeds(
    layout: &FarmLayout,
    model: &WakeModel,
    inflow: &InflowCondition,
    yaw: &[f64],
) -> Result<Vec<f64>> {
    if yaw.len() != layout.len() {
        return Err(Error::InvalidInput("one yaw offset per turbine required".into()));
    }
    let order = layout.upstream_order(inflow);
    let mut speeds = vec![inflow.speed; layout.len()];
    for (k, &i) in order.iter().enumerate() {
        let mut sum_sq = 0.0;
        for &j in &order[..k] {
            let (x, y) = inflow.project(layout.positions[j], layout.positions[i]);
            if x <= 0.0 {
                continue;
            }
            let ct = layout.turbines[j].ct(speeds[j]);
            let d = wake_deficit(&layout.turbines[j], model, x, y, ct, yaw[j].clamp(-MAX_YAW_DEG, MAX_YAW_DEG))?;
            sum_sq += d * d;
        }
        speeds[i] = inflow.speed * (1.0 - combine(sum_sq));
    }
    Ok(speeds)
}

pub fn steady_farm_power(layout: &FarmLayout, model: &WakeModel, inflow: &InflowCondition, yaw: &[f64]) -> Result<f64> {
    let speeds = steady_state_speeds(layout, model, inflow, yaw)?;
    Ok(layout
        .turbines
        .iter()
        .zip(speeds.iter().zip(yaw))
        .map(|(spec, (&u, &g))| turbine_power(spec, u, g.clamp(-MAX_YAW_DEG, MAX_YAW_DEG)))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> TurbineSpec {
        TurbineSpec::default()
    }

    #[test]
    fn power_curve_values() {
        let s = spec();
        assert_eq!(turbine_power(&s, 0.0, 0.0), 0.0);
        let p = turbine_power(&s, 6.5, 0.0);
        assert!((p - 380_477.108_179_014_8).abs() < 1e-6, "{p}");
        let ratio = turbine_power(&s, 6.5, 20.0) / p;
        assert!((ratio - 0.883_022_221_559_489_1).abs() < 1e-12);
        assert_eq!(turbine_power(&s, 40.0, 0.0), s.rated_power);
    }

    #[test]
    fn deficit_at_seven_diameters() {
        let s = spec();
        let d = wake_deficit(&s, &WakeModel::default(), 560.0, 0.0, 0.8, 0.0).unwrap();
        assert!((d - 0.193_870_548_561_127_73).abs() < 1e-12, "{d}");
        assert!(wake_deficit(&s, &WakeModel::default(), 560.0, 5_000.0, 0.8, 0.0).unwrap() < 1e-12);
    }

    #[test]
    fn invalid_model_inputs() {
        let s = spec();
        let m = WakeModel::default();
        assert!(matches!(wake_deficit(&s, &m, 560.0, 0.0, 1.0, 0.0), Err(Error::ModelValidity(_))));
        assert!(matches!(wake_deficit(&s, &m, 40.0, 0.0, 0.8, 0.0), Err(Error::ModelValidity(_))));
        assert!(wake_deficit(&s, &m, -10.0, 0.0, 0.8, 0.0).is_err());
    }

    #[test]
    fn deflection_is_odd_in_yaw() {
        let s = spec();
        let m = WakeModel::default();
        let plus = centerline_offset(&s, &m, 560.0, 0.8, 20.0);
        let minus = centerline_offset(&s, &m, 560.0, 0.8, -20.0);
        assert!(plus > 0.0);
        assert_eq!(plus, -minus);
    }

    #[test]
    fn ct_curve_interpolates() {
        let c = CtCurve::new(vec![[8.0, 0.6], [4.0, 0.8]]).unwrap();
        assert_eq!(c.at(2.0), 0.8);
        assert!((c.at(6.0) - 0.7).abs() < 1e-12);
        assert_eq!(c.at(20.0), 0.6);
    }

    #[test]
    fn ring_respects_horizon() {
        let rec = SourceRecord { yaw: 0.0, ct: 0.8, time: 0.0 };
        let mut r = RecordRing::filled(3, rec);
        r.push(SourceRecord { yaw: 1.0, ..rec });
        r.push(SourceRecord { yaw: 2.0, ..rec });
        assert_eq!(r.get(0).unwrap().yaw, 2.0);
        assert_eq!(r.get(1).unwrap().yaw, 1.0);
        assert_eq!(r.get(2).unwrap().yaw, 0.0);
        assert!(matches!(r.get(3), Err(Error::Internal(_))));
    }

    #[test]
    fn single_turbine_sees_free_stream() {
        let layout = FarmLayout::uniform(vec![[0.0, 0.0]], spec());
        let m = WakeModel::default();
        let inflow = InflowCondition::new(6.3, 270.0);
        let mut st = WakeState::new(&layout, &m, &inflow, 6.0, 5.0).unwrap();
        for k in 0..30 {
            let u = st.step_physics(&layout, &m, &inflow, &[(k as f64) * 2.0 - 30.0], 5.0).unwrap();
            assert_eq!(u, vec![6.3]);
        }
        assert_eq!(st.clock(), 150.0);
    }

    #[test]
    fn waked_turbine_follows_wind_direction() {
        let layout = FarmLayout::default();
        let m = WakeModel::default();
        let west = steady_state_speeds(&layout, &m, &InflowCondition::new(6.5, 270.0), &[0.0, 0.0]).unwrap();
        assert_eq!(west[0], 6.5);
        assert!(west[1] < 6.0);
        let east = steady_state_speeds(&layout, &m, &InflowCondition::new(6.5, 90.0), &[0.0, 0.0]).unwrap();
        assert!(east[0] < 6.0);
        assert_eq!(east[1], 6.5);
    }

    #[test]
    fn yaw_is_clamped_and_clock_advances() {
        let layout = FarmLayout::default();
        let m = WakeModel::default();
        let inflow = InflowCondition::new(6.5, 270.0);
        let mut st = WakeState::new(&layout, &m, &inflow, 6.0, 5.0).unwrap();
        st.step_physics(&layout, &m, &inflow, &[80.0, -60.0], 5.0).unwrap();
        assert_eq!(st.yaw(), &[45.0, -45.0]);
        assert_eq!(st.clock(), 5.0);
        assert!(st.step_physics(&layout, &m, &inflow, &[0.0], 5.0).is_err());
        assert!(st.step_physics(&layout, &m, &inflow, &[0.0, 0.0], 10.0).is_err());
    }

    #[test]
    fn snapshot_is_pure_and_matches_deficit() {
        let layout = FarmLayout::default();
        let m = WakeModel::default();
        let inflow = InflowCondition::new(6.5, 270.0);
        let st = WakeState::new(&layout, &m, &inflow, 6.0, 5.0).unwrap();
        let pts = [[-2_000.0, 0.0], [560.0, 0.0], [300.0, 40.0]];
        let a = st.flow_field_snapshot(&layout, &m, &inflow, &pts);
        let b = st.flow_field_snapshot(&layout, &m, &inflow, &pts);
        assert_eq!(a, b);
        assert_eq!(a[0], 6.5);
        // point (560, 0) is the second rotor: only the first turbine's wake acts there
        let expected = 6.5 * (1.0 - 0.193_870_548_561_127_73);
        assert!((a[1] - expected).abs() < 1e-9);
    }
}
