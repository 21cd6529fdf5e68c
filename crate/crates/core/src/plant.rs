//! Hybrid power plant: fuel cell and battery as the priority block,
//! ultracapacitor for surge.
//!
//! Allocation rule per step:
//! - the cells (fuel cell first, then battery) serve the load up to their
//!   combined limit `P_max`;
//! - any remainder comes from the ultracapacitor, limited by its output cap
//!   and stored energy; what is still missing is a brownout;
//! - when the ultracapacitor is idle and not full, spare cell headroom charges it.
//!
//! Allocation and integration are generic over [`Scalar`], so the balance and
//! conservation invariants can be checked exactly with rationals.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::powermodel::DemandProfile;
use crate::scalar::{clamp, max, min, Real, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum PlantError {
    #[error("load must be non-negative, got {0}")]
    NegativeLoad(String),
    #[error("time step must be positive")]
    BadStep,
    #[error("invalid source spec: {0}")]
    InvalidSpec(String),
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    FuelCell,
    Battery,
    Ultracap,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec<T> {
    pub kind: SourceKind,
    /// J. Zero is allowed for the ultracapacitor only (source disabled).
    pub energy_capacity: T,
    /// W.
    pub max_output: T,
    /// W; ultracapacitor only.
    pub max_charge_accept: T,
}

/// Nominal voltages used to turn the quoted mAh / F ratings into joules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NominalRatings {
    pub cell_voltage: f64,
    pub fuel_cell_mah: f64,
    pub battery_mah: f64,
    pub ultracap_farads: f64,
    pub ultracap_swing_v: f64,
}

impl Default for NominalRatings {
    fn default() -> Self {
        Self {
            cell_voltage: 11.1,
            fuel_cell_mah: 10_000.0,
            battery_mah: 2_000.0,
            ultracap_farads: 1_000.0,
            ultracap_swing_v: 3.0,
        }
    }
}

impl NominalRatings {
    pub fn fuel_cell_joules(&self) -> f64 {
        self.fuel_cell_mah * 3.6 * self.cell_voltage
    }

    pub fn battery_joules(&self) -> f64 {
        self.battery_mah * 3.6 * self.cell_voltage
    }

    pub fn ultracap_joules(&self) -> f64 {
        0.5 * self.ultracap_farads * self.ultracap_swing_v * self.ultracap_swing_v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec<T> {
    pub fuel_cell: SourceSpec<T>,
    pub battery: SourceSpec<T>,
    pub ultracap: SourceSpec<T>,
    /// Fraction of charging power that ends up stored in the ultracapacitor.
    pub charge_efficiency: T,
    /// `soc_uc >= 1 - full_band` counts as fully charged.
    pub full_band: T,
    /// SOC below this after a step is float residue and snaps to 0.
    pub empty_band: T,
}

impl<T: Real> PlantSpec<T> {
    /// 3 W fuel cell, 13 W battery, 30 W / 1000 F ultracapacitor.
    pub fn paper_defaults() -> Self {
        Self::from_ratings(&NominalRatings::default())
    }

    pub fn from_ratings(r: &NominalRatings) -> Self {
        Self {
            fuel_cell: SourceSpec {
                kind: SourceKind::FuelCell,
                energy_capacity: T::lit(r.fuel_cell_joules()),
                max_output: T::lit(3.0),
                max_charge_accept: T::zero(),
            },
            battery: SourceSpec {
                kind: SourceKind::Battery,
                energy_capacity: T::lit(r.battery_joules()),
                max_output: T::lit(13.0),
                max_charge_accept: T::zero(),
            },
            ultracap: SourceSpec {
                kind: SourceKind::Ultracap,
                energy_capacity: T::lit(r.ultracap_joules()),
                max_output: T::lit(30.0),
                max_charge_accept: T::lit(10.0),
            },
            charge_efficiency: T::one(),
            full_band: T::lit(1e-9),
            empty_band: T::lit(1e-12),
        }
    }
}

impl<T: Scalar> PlantSpec<T> {
    /// Combined fuel-cell + battery output limit.
    pub fn p_max(&self) -> T {
        self.fuel_cell.max_output + self.battery.max_output
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        for s in [&self.fuel_cell, &self.battery] {
            if !(s.energy_capacity > T::zero()) || !(s.max_output > T::zero()) {
                return Err(PlantError::InvalidSpec(format!("{:?}", s.kind)));
            }
        }
        let uc = &self.ultracap;
        if uc.energy_capacity < T::zero()
            || uc.max_output < T::zero()
            || uc.max_charge_accept < T::zero()
        {
            return Err(PlantError::InvalidSpec("ultracap".into()));
        }
        if !(self.charge_efficiency > T::zero()) || self.charge_efficiency > T::one() {
            return Err(PlantError::InvalidSpec("charge_efficiency".into()));
        }
        Ok(())
    }
}

/// State of charge of each source, plus the running energy lost to SOC clamping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantState<T> {
    pub soc_fc: T,
    pub soc_batt: T,
    pub soc_uc: T,
    pub spec: PlantSpec<T>,
    /// J removed or added by clamping SOC into [0, 1]; stays zero when
    /// decisions come from [`allocate`].
    pub clamped_energy: T,
}

impl<T: Scalar> PlantState<T> {
    pub fn new(spec: PlantSpec<T>, soc_fc: T, soc_batt: T, soc_uc: T) -> Result<Self, PlantError> {
        spec.validate()?;
        let unit = |s: T| s >= T::zero() && s <= T::one();
        if !(unit(soc_fc) && unit(soc_batt) && unit(soc_uc)) {
            return Err(PlantError::InvalidSpec("soc outside [0, 1]".into()));
        }
        let soc_uc = if spec.ultracap.energy_capacity == T::zero() {
            T::zero()
        } else {
            soc_uc
        };
        Ok(Self {
            soc_fc,
            soc_batt,
            soc_uc,
            spec,
            clamped_energy: T::zero(),
        })
    }

    pub fn fuel_cell_energy(&self) -> T {
        self.soc_fc * self.spec.fuel_cell.energy_capacity
    }

    pub fn battery_energy(&self) -> T {
        self.soc_batt * self.spec.battery.energy_capacity
    }

    pub fn cell_energy(&self) -> T {
        self.fuel_cell_energy() + self.battery_energy()
    }

    pub fn ultracap_energy(&self) -> T {
        self.soc_uc * self.spec.ultracap.energy_capacity
    }

    pub fn total_energy(&self) -> T {
        self.cell_energy() + self.ultracap_energy()
    }

    pub fn ultracap_full(&self) -> bool {
        self.spec.ultracap.energy_capacity == T::zero()
            || self.soc_uc >= T::one() - self.spec.full_band
    }

    /// Fuel-cell and battery output available for one step of `dt`.
    fn cell_available(&self, dt: T) -> (T, T) {
        (
            min(self.spec.fuel_cell.max_output, self.fuel_cell_energy() / dt),
            min(self.spec.battery.max_output, self.battery_energy() / dt),
        )
    }
}

/// Power split for one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationDecision<T> {
    pub p_load: T,
    /// Combined fuel-cell + battery output to the load.
    pub p_fc_batt: T,
    pub p_uc: T,
    /// Cell output routed into the ultracapacitor.
    pub p_charge: T,
    pub brownout: bool,
}

impl<T: Scalar> AllocationDecision<T> {
    pub fn idle() -> Self {
        Self {
            p_load: T::zero(),
            p_fc_batt: T::zero(),
            p_uc: T::zero(),
            p_charge: T::zero(),
            brownout: false,
        }
    }

    pub fn supplied(&self) -> T {
        self.p_fc_batt + self.p_uc
    }

    pub fn shortfall(&self) -> T {
        max(T::zero(), self.p_load - self.supplied())
    }
}

/// Splits `p_load` across the sources for a step of `dt` seconds.
pub fn allocate<T: Scalar>(
    p_load: T,
    state: &PlantState<T>,
    dt: T,
) -> Result<AllocationDecision<T>, PlantError> {
    if p_load < T::zero() {
        return Err(PlantError::NegativeLoad(format!("{p_load:?}")));
    }
    if !(dt > T::zero()) {
        return Err(PlantError::BadStep);
    }
    let (fc, batt) = state.cell_available(dt);
    let cells = fc + batt;
    let p_fc_batt = min(p_load, cells);
    let deficit = p_load - p_fc_batt;

    let uc_available = min(state.spec.ultracap.max_output, state.ultracap_energy() / dt);
    let p_uc = if deficit > T::zero() {
        min(deficit, uc_available)
    } else {
        T::zero()
    };
    let brownout = p_uc < deficit;

    let mut p_charge = T::zero();
    if p_uc == T::zero() && !state.ultracap_full() {
        let uc = &state.spec.ultracap;
        let headroom = (uc.energy_capacity - state.ultracap_energy()) / (state.spec.charge_efficiency * dt);
        p_charge = max(
            T::zero(),
            min(min(uc.max_charge_accept, cells - p_fc_batt), headroom),
        );
    }

    Ok(AllocationDecision {
        p_load,
        p_fc_batt,
        p_uc,
        p_charge,
        brownout,
    })
}

fn clamp_soc<T: Scalar>(energy: T, capacity: T, empty_band: T, lost: &mut T) -> T {
    if capacity == T::zero() {
        return T::zero();
    }
    let soc = energy / capacity;
    let mut clamped = clamp(soc, T::zero(), T::one());
    if clamped < empty_band {
        clamped = T::zero();
    }
    if clamped != soc {
        let diff = (soc - clamped) * capacity;
        *lost = *lost + if diff < T::zero() { T::zero() - diff } else { diff };
    }
    clamped
}

/// Applies a decision for `dt` seconds.
pub fn step<T: Scalar>(
    state: &PlantState<T>,
    decision: &AllocationDecision<T>,
    dt: T,
) -> Result<PlantState<T>, PlantError> {
    if !(dt > T::zero()) {
        return Err(PlantError::BadStep);
    }
    let spec = &state.spec;
    let cell_power = decision.p_fc_batt + decision.p_charge;
    let fc_power = min(
        cell_power,
        min(spec.fuel_cell.max_output, state.fuel_cell_energy() / dt),
    );
    let batt_power = cell_power - fc_power;

    let mut lost = state.clamped_energy;
    let e_fc = state.fuel_cell_energy() - fc_power * dt;
    let e_batt = state.battery_energy() - batt_power * dt;
    let e_uc = state.ultracap_energy() + spec.charge_efficiency * decision.p_charge * dt
        - decision.p_uc * dt;

    Ok(PlantState {
        soc_fc: clamp_soc(e_fc, spec.fuel_cell.energy_capacity, spec.empty_band, &mut lost),
        soc_batt: clamp_soc(e_batt, spec.battery.energy_capacity, spec.empty_band, &mut lost),
        soc_uc: clamp_soc(e_uc, spec.ultracap.energy_capacity, spec.empty_band, &mut lost),
        spec: *spec,
        clamped_energy: lost,
    })
}

/// Surge power the ultracapacitor can hold for one second.
pub fn available_surge<T: Scalar>(state: &PlantState<T>) -> T {
    min(state.spec.ultracap.max_output, state.ultracap_energy() / T::one())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrechargeOutcome<T> {
    pub state: PlantState<T>,
    /// Seconds spent charging before departure.
    pub duration: T,
    /// J of predicted demand above `P_max`.
    pub surge_energy: T,
    /// Largest predicted excess over `P_max`, W.
    pub peak_surge: T,
    /// J added to the ultracapacitor.
    pub charged_energy: T,
}

/// Charges the ultracapacitor from the cells at its acceptance rate until it
/// holds the predicted surge energy plus `reserve` joules, or is full.
pub fn precharge<T: Real>(
    state: &PlantState<T>,
    predicted: &DemandProfile<T>,
    reserve: T,
) -> PrechargeOutcome<T> {
    let spec = &state.spec;
    let p_max = spec.p_max();
    let n = predicted.samples.len();
    let excess: Vec<T> = predicted
        .samples
        .iter()
        .map(|&d| (d - p_max).max(T::zero()))
        .collect();
    let peak_surge = excess.iter().copied().fold(T::zero(), T::max);
    let surge_energy: T = excess
        .iter()
        .take(n.saturating_sub(1))
        .map(|&e| e * predicted.interval)
        .sum();

    let target = surge_energy + reserve.max(T::zero());
    let stored = state.ultracap_energy();
    let room = spec.ultracap.energy_capacity - stored;
    let rate = spec.ultracap.max_charge_accept.min(p_max);
    let eta = spec.charge_efficiency;
    let wanted = (target - stored).min(room).max(T::zero());
    if wanted <= T::zero() || rate <= T::zero() || state.ultracap_full() {
        return PrechargeOutcome {
            state: *state,
            duration: T::zero(),
            surge_energy,
            peak_surge,
            charged_energy: T::zero(),
        };
    }
    // Cells deliver wanted / eta; never more than they hold.
    let drawn = (wanted / eta).min(state.cell_energy());
    let duration = drawn / rate;
    let fc_drawn = (spec.fuel_cell.max_output.min(rate) * duration).min(state.fuel_cell_energy());
    let batt_drawn = drawn - fc_drawn;

    let mut next = *state;
    let mut lost = state.clamped_energy;
    next.soc_fc = clamp_soc(
        state.fuel_cell_energy() - fc_drawn,
        spec.fuel_cell.energy_capacity,
        spec.empty_band,
        &mut lost,
    );
    next.soc_batt = clamp_soc(
        state.battery_energy() - batt_drawn,
        spec.battery.energy_capacity,
        spec.empty_band,
        &mut lost,
    );
    next.soc_uc = clamp_soc(stored + drawn * eta, spec.ultracap.energy_capacity, spec.empty_band, &mut lost);
    next.clamped_energy = lost;
    PrechargeOutcome {
        state: next,
        duration,
        surge_energy,
        peak_surge,
        charged_energy: drawn * eta,
    }
}

/// One row of the plant trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantRecord<T> {
    pub t: T,
    pub decision: AllocationDecision<T>,
    pub soc_fc: T,
    pub soc_batt: T,
    pub soc_uc: T,
}

/// `t,p_load,p_fc_batt,p_uc,p_charge,soc_fc,soc_batt,soc_uc,brownout`.
pub fn write_plant_csv<T: Real, W: Write>(rows: &[PlantRecord<T>], out: W) -> Result<(), PlantError> {
    let mut wtr = csv::Writer::from_writer(out);
    let err = |e: csv::Error| PlantError::Csv(e.to_string());
    wtr.write_record([
        "t", "p_load", "p_fc_batt", "p_uc", "p_charge", "soc_fc", "soc_batt", "soc_uc", "brownout",
    ])
    .map_err(err)?;
    for r in rows {
        let d = &r.decision;
        wtr.write_record([
            r.t.to_string(),
            d.p_load.to_string(),
            d.p_fc_batt.to_string(),
            d.p_uc.to_string(),
            d.p_charge.to_string(),
            r.soc_fc.to_string(),
            r.soc_batt.to_string(),
            r.soc_uc.to_string(),
            u8::from(d.brownout).to_string(),
        ])
        .map_err(err)?;
    }
    wtr.flush().map_err(|e| PlantError::Csv(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    fn state(soc_uc: f64) -> PlantState<f64> {
        PlantState::new(PlantSpec::paper_defaults(), 1.0, 1.0, soc_uc).unwrap()
    }

    #[test]
    fn derived_capacities() {
        let s = PlantSpec::<f64>::paper_defaults();
        assert!((s.battery.energy_capacity - 79_920.0).abs() < 1e-6);
        assert!((s.fuel_cell.energy_capacity - 399_600.0).abs() < 1e-6);
        assert!((s.ultracap.energy_capacity - 4_500.0).abs() < 1e-9);
        assert_eq!(s.p_max(), 16.0);
    }

    #[test]
    fn light_load_charges_with_headroom() {
        let d = allocate(10.0, &state(0.5), 1.0).unwrap();
        assert_eq!((d.p_fc_batt, d.p_charge, d.p_uc, d.brownout), (10.0, 6.0, 0.0, false));
    }

    #[test]
    fn surge_covered_by_ultracap() {
        let d = allocate(40.0, &state(0.8), 1.0).unwrap();
        assert_eq!((d.p_fc_batt, d.p_uc, d.p_charge, d.brownout), (16.0, 24.0, 0.0, false));
    }

    #[test]
    fn surge_above_cap_browns_out() {
        let d = allocate(50.0, &state(0.8), 1.0).unwrap();
        assert_eq!((d.p_fc_batt, d.p_uc, d.brownout), (16.0, 30.0, true));
        assert_eq!(d.shortfall(), 4.0);
    }

    #[test]
    fn idle_when_full() {
        let d = allocate(0.0, &state(1.0), 1.0).unwrap();
        assert_eq!(d, AllocationDecision::idle());
    }

    #[test]
    fn negative_load_rejected() {
        assert!(matches!(
            allocate(-1.0, &state(0.5), 0.1),
            Err(PlantError::NegativeLoad(_))
        ));
    }

    #[test]
    fn step_charge_raises_soc() {
        let s = state(0.5);
        let d = AllocationDecision {
            p_load: 10.0,
            p_fc_batt: 10.0,
            p_uc: 0.0,
            p_charge: 6.0,
            brownout: false,
        };
        let next = step(&s, &d, 1.0).unwrap();
        assert!((next.soc_uc - s.soc_uc - 6.0 / 4500.0).abs() < 1e-12);
    }

    #[test]
    fn step_zero_decision_is_identity() {
        let s = state(0.3);
        assert_eq!(step(&s, &AllocationDecision::idle(), 0.1).unwrap(), s);
    }

    #[test]
    fn step_drains_uc_exactly_to_zero() {
        let s = state(30.0 / 4500.0);
        let d = AllocationDecision {
            p_load: 46.0,
            p_fc_batt: 16.0,
            p_uc: 30.0,
            p_charge: 0.0,
            brownout: false,
        };
        let next = step(&s, &d, 1.0).unwrap();
        assert_eq!(next.soc_uc, 0.0);
        assert!(next.clamped_energy < 1e-12);
    }

    #[test]
    fn step_rejects_bad_dt() {
        assert_eq!(
            step(&state(0.5), &AllocationDecision::idle(), 0.0),
            Err(PlantError::BadStep)
        );
    }

    #[test]
    fn fuel_cell_drains_first() {
        let s = state(1.0);
        let d = allocate(10.0, &s, 1.0).unwrap();
        let next = step(&s, &d, 1.0).unwrap();
        assert!((s.fuel_cell_energy() - next.fuel_cell_energy() - 3.0).abs() < 1e-9);
        assert!((s.battery_energy() - next.battery_energy() - 7.0).abs() < 1e-9);
    }

    #[test]
    fn precharge_no_surge() {
        let prof = DemandProfile::constant(12.0, 10.0, 0.1);
        let out = precharge(&state(0.0), &prof, 0.0);
        assert_eq!(out.duration, 0.0);
        assert_eq!(out.state, state(0.0));
    }

    #[test]
    fn precharge_tops_up_to_surge_energy() {
        // 28 W for 10 s is 12 W over P_max: 120 J of surge.
        let prof = DemandProfile::constant(28.0, 10.0, 1.0);
        let s = state(30.0 / 4500.0);
        let out = precharge(&s, &prof, 0.0);
        assert!((out.surge_energy - 120.0).abs() < 1e-9);
        assert!((out.duration - 9.0).abs() < 1e-9);
        assert!((out.state.ultracap_energy() - 120.0).abs() < 1e-9);
        assert!((out.charged_energy - 90.0).abs() < 1e-9);
        assert_eq!(out.peak_surge, 12.0);
    }

    #[test]
    fn precharge_full_uc_unchanged() {
        let prof = DemandProfile::constant(40.0, 10.0, 1.0);
        let out = precharge(&state(1.0), &prof, 0.0);
        assert_eq!(out.duration, 0.0);
        assert_eq!(out.state, state(1.0));
    }

    #[test]
    fn available_surge_cases() {
        assert_eq!(available_surge(&state(1.0)), 30.0);
        assert_eq!(available_surge(&state(0.0)), 0.0);
        assert!((available_surge(&state(12.0 / 4500.0)) - 12.0).abs() < 1e-12);
    }

    #[test]
    fn disabled_ultracap_never_supplies() {
        let mut spec = PlantSpec::<f64>::paper_defaults();
        spec.ultracap.energy_capacity = 0.0;
        let s = PlantState::new(spec, 1.0, 1.0, 1.0).unwrap();
        let d = allocate(40.0, &s, 0.1).unwrap();
        assert_eq!((d.p_uc, d.p_charge, d.brownout), (0.0, 0.0, true));
        assert_eq!(available_surge(&s), 0.0);
    }

    type Q = Ratio<i128>;

    fn q(n: i128, d: i128) -> Q {
        Q::new(n, d)
    }

    fn rational_state(soc_uc: Q) -> PlantState<Q> {
        let src = |kind, cap: i128, out: i128, acc: i128| SourceSpec {
            kind,
            energy_capacity: q(cap, 1),
            max_output: q(out, 1),
            max_charge_accept: q(acc, 1),
        };
        let spec = PlantSpec {
            fuel_cell: src(SourceKind::FuelCell, 399_600, 3, 0),
            battery: src(SourceKind::Battery, 79_920, 13, 0),
            ultracap: src(SourceKind::Ultracap, 4_500, 30, 10),
            charge_efficiency: q(1, 1),
            full_band: q(0, 1),
            empty_band: q(0, 1),
        };
        PlantState::new(spec, q(1, 1), q(1, 1), soc_uc).unwrap()
    }

    #[test]
    fn rational_balance_and_conservation_are_exact() {
        let dt = q(1, 10);
        let mut s = rational_state(q(1, 2000));
        for load in [q(0, 1), q(10, 1), q(33, 2), q(40, 1), q(77, 3), q(50, 1), q(5, 1)] {
            let d = allocate(load, &s, dt).unwrap();
            if !d.brownout {
                assert_eq!(d.p_fc_batt + d.p_uc, load);
            }
            assert_eq!(d.p_uc * d.p_charge, q(0, 1));
            let next = step(&s, &d, dt).unwrap();
            let cells_out = s.cell_energy() - next.cell_energy();
            assert_eq!(cells_out, (d.p_fc_batt + d.p_charge) * dt);
            assert_eq!(
                next.ultracap_energy() - s.ultracap_energy(),
                (d.p_charge - d.p_uc) * dt
            );
            s = next;
        }
    }

    #[test]
    fn plant_csv_header() {
        let rows = [PlantRecord {
            t: 0.0,
            decision: AllocationDecision::idle(),
            soc_fc: 1.0,
            soc_batt: 1.0,
            soc_uc: 0.5,
        }];
        let mut buf = Vec::new();
        write_plant_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,p_load,p_fc_batt,p_uc,p_charge,soc_fc,soc_batt,soc_uc,brownout\n"));
    }
}
