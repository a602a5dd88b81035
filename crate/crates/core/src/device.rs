//! Behavioral model of the dual-gate ambipolar transistor.
//!
//! The bottom gate selects the carrier type: a bias inside `p_window`
//! makes the channel p-type, inside `n_window` n-type, and anything in the
//! band between them leaves the device OFF. Within a window the drive is
//! separable and piecewise linear in both gate voltages:
//!
//! ```text
//! P: g_tg = clamp((vdd - v_tg) / span, 0, 1)   g_bg = clamp((p.high - v_bg) / |p|, 0, 1)
//! N: g_tg = clamp(v_tg / span, 0, 1)           g_bg = clamp((v_bg - n.low) / |n|, 0, 1)
//! |I| = i_on * g_tg * g_bg * min(|v_a - v_b| / v_dsat, 1)
//! ```
//!
//! Conduction is bi-directional: current always flows from the higher
//! potential terminal to the lower one, whichever that is.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantizer::{DeviceConfig, DeviceType};

#[derive(Debug, Error, PartialEq)]
pub enum DeviceError {
    #[error("bottom-gate bias {v_bg} V puts the device in region {region:?}, not {expected:?}")]
    RegionMismatch {
        v_bg: f64,
        region: Region,
        expected: DeviceType,
    },
    #[error("invalid device parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    P,
    N,
    Off,
}

impl From<DeviceType> for Region {
    fn from(t: DeviceType) -> Self {
        match t {
            DeviceType::P => Region::P,
            DeviceType::N => Region::N,
        }
    }
}

/// Closed voltage interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasWindow {
    pub low: f64,
    pub high: f64,
}

impl BiasWindow {
    pub fn contains(&self, v: f64) -> bool {
        self.low <= v && v <= self.high
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviceParams {
    /// Full-drive saturation current (A).
    pub i_on: f64,
    /// Drain-source voltage at which the current saturates (V).
    pub v_dsat: f64,
    pub vdd: f64,
    pub p_window: BiasWindow,
    pub n_window: BiasWindow,
    /// Top-gate swing from the off bias to full drive (V).
    pub tg_window_span: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        DeviceParams {
            i_on: 2e-6,
            v_dsat: 0.2,
            vdd: 3.0,
            p_window: BiasWindow { low: 0.0, high: 1.24 },
            n_window: BiasWindow { low: 1.76, high: 3.0 },
            tg_window_span: 1.24,
        }
    }
}

impl DeviceParams {
    pub fn validate(&self) -> Result<(), DeviceError> {
        let err = |m: &str| Err(DeviceError::Params(m.to_string()));
        if !(self.i_on > 0.0) || !(self.v_dsat > 0.0) || !(self.vdd > 0.0) || !(self.tg_window_span > 0.0) {
            return err("i_on, v_dsat, vdd and tg_window_span must be positive");
        }
        if !(self.p_window.width() > 0.0) || !(self.n_window.width() > 0.0) {
            return err("bias windows must have positive width");
        }
        if !(self.p_window.high < self.n_window.low) {
            return err("p_window must end below n_window (an OFF band must separate them)");
        }
        Ok(())
    }

    /// Top-gate bias that turns a device of the given type off.
    pub fn gating_off_vtg(&self, dtype: DeviceType) -> f64 {
        match dtype {
            DeviceType::P => self.vdd,
            DeviceType::N => 0.0,
        }
    }
}

pub fn region_of(v_bg: f64, p: &DeviceParams) -> Region {
    if p.p_window.contains(v_bg) {
        Region::P
    } else if p.n_window.contains(v_bg) {
        Region::N
    } else {
        Region::Off
    }
}

/// Drive factor in `[0, 1]` for a device whose bottom gate sits in the
/// window of `dtype`.
pub fn drive(v_tg: f64, v_bg: f64, dtype: DeviceType, p: &DeviceParams) -> Result<f64, DeviceError> {
    let region = region_of(v_bg, p);
    if region != Region::from(dtype) {
        return Err(DeviceError::RegionMismatch {
            v_bg,
            region,
            expected: dtype,
        });
    }
    Ok(drive_unchecked(v_tg, v_bg, dtype, p))
}

fn drive_unchecked(v_tg: f64, v_bg: f64, dtype: DeviceType, p: &DeviceParams) -> f64 {
    let (g_tg, g_bg) = match dtype {
        DeviceType::P => (
            (p.vdd - v_tg) / p.tg_window_span,
            (p.p_window.high - v_bg) / p.p_window.width(),
        ),
        DeviceType::N => (v_tg / p.tg_window_span, (v_bg - p.n_window.low) / p.n_window.width()),
    };
    g_tg.clamp(0.0, 1.0) * g_bg.clamp(0.0, 1.0)
}

/// Drive at the device's actual operating region (0 when OFF).
pub fn region_drive(v_tg: f64, v_bg: f64, p: &DeviceParams) -> f64 {
    match region_of(v_bg, p) {
        Region::P => drive_unchecked(v_tg, v_bg, DeviceType::P, p),
        Region::N => drive_unchecked(v_tg, v_bg, DeviceType::N, p),
        Region::Off => 0.0,
    }
}

/// Current magnitude for a given drive and terminal difference.
#[inline]
pub fn channel_current(drive: f64, v_ds: f64, p: &DeviceParams) -> f64 {
    if v_ds == 0.0 {
        return 0.0;
    }
    let magnitude = p.i_on * drive * (v_ds.abs() / p.v_dsat).min(1.0);
    magnitude.copysign(v_ds)
}

/// One configured device in the array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceInstance {
    pub config: DeviceConfig,
    pub feature_index: usize,
    /// Set per classification from the feature level.
    pub v_tg: f64,
    /// Fixed by the stored weight.
    pub v_bg: f64,
}

impl DeviceInstance {
    pub fn drive(&self, p: &DeviceParams) -> f64 {
        region_drive(self.v_tg, self.v_bg, p)
    }

    /// Signed current flowing into terminal `b` from terminal `a`.
    ///
    /// The carrier type follows the bottom-gate bias actually applied, so a
    /// device biased into the OFF band conducts nothing.
    pub fn current(&self, v_a: f64, v_b: f64, p: &DeviceParams) -> f64 {
        channel_current(self.drive(p), v_a - v_b, p)
    }

    /// True when the bottom gate lies inside the window of the configured type.
    pub fn is_consistent(&self, p: &DeviceParams) -> bool {
        region_of(self.v_bg, p) == Region::from(self.config.dtype)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> DeviceParams {
        DeviceParams::default()
    }

    fn inst(dtype: DeviceType, v_tg: f64, v_bg: f64) -> DeviceInstance {
        DeviceInstance {
            config: DeviceConfig::new(dtype, 31),
            feature_index: 0,
            v_tg,
            v_bg,
        }
    }

    #[test]
    fn regions_with_default_windows() {
        assert_eq!(region_of(0.0, &p()), Region::P);
        assert_eq!(region_of(3.0, &p()), Region::N);
        assert_eq!(region_of(1.5, &p()), Region::Off);
        assert_eq!(region_of(1.24, &p()), Region::P);
        assert_eq!(region_of(1.76, &p()), Region::N);
    }

    #[test]
    fn drive_examples() {
        assert_eq!(drive(3.0, 0.0, DeviceType::P, &p()), Ok(0.0));
        assert_eq!(drive(3.0, 1.0, DeviceType::P, &p()), Ok(0.0));
        let full = drive(3.0 - 1.24, 0.0, DeviceType::P, &p()).unwrap();
        assert!((full - 1.0).abs() < 1e-12);
        let quarter = drive(0.62, 2.38, DeviceType::N, &p()).unwrap();
        assert!((quarter - 0.25).abs() < 1e-12);
        assert!(matches!(
            drive(1.0, 1.5, DeviceType::N, &p()),
            Err(DeviceError::RegionMismatch { region: Region::Off, .. })
        ));
        assert!(matches!(
            drive(1.0, 0.5, DeviceType::N, &p()),
            Err(DeviceError::RegionMismatch { region: Region::P, .. })
        ));
    }

    #[test]
    fn current_examples() {
        let d = inst(DeviceType::P, 3.0 - 1.24, 0.0);
        assert_eq!(d.current(1.1, 1.1, &p()), 0.0);
        let i = d.current(3.0, 1.5, &p());
        assert!((i - 2e-6).abs() < 1e-18, "{i}");
        assert_eq!(d.current(1.5, 3.0, &p()), -i);
        // triode region: 0.1 V across the channel gives half the saturated current
        let tri = d.current(3.0, 2.9, &p());
        assert!((tri - 1e-6).abs() < 1e-15);
    }

    #[test]
    fn params_validation() {
        assert!(p().validate().is_ok());
        let mut bad = p();
        bad.n_window.low = 1.0;
        assert!(bad.validate().is_err());
        let mut bad = p();
        bad.i_on = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn gating_off_matches_rails() {
        let params = p();
        let pd = inst(DeviceType::P, params.gating_off_vtg(DeviceType::P), 0.0);
        let nd = inst(DeviceType::N, params.gating_off_vtg(DeviceType::N), 3.0);
        assert_eq!(pd.current(3.0, 1.5, &params), 0.0);
        assert_eq!(nd.current(1.5, 0.0, &params), 0.0);
    }

    fn any_type() -> impl Strategy<Value = DeviceType> {
        prop_oneof![Just(DeviceType::P), Just(DeviceType::N)]
    }

    proptest! {
        #[test]
        fn off_band_conducts_nothing(
            t in any_type(), v_tg in 0.0f64..=3.0, v_bg in 1.2400001f64..1.7599999,
            v_a in 0.0f64..=3.0, v_b in 0.0f64..=3.0,
        ) {
            prop_assert_eq!(inst(t, v_tg, v_bg).current(v_a, v_b, &p()), 0.0);
        }

        #[test]
        fn terminal_swap_is_exact_negation(
            t in any_type(), v_tg in 0.0f64..=3.0, v_bg in 0.0f64..=3.0,
            v_a in 0.0f64..=3.0, v_b in 0.0f64..=3.0,
        ) {
            let d = inst(t, v_tg, v_bg);
            prop_assert_eq!(d.current(v_a, v_b, &p()), -d.current(v_b, v_a, &p()));
        }

        #[test]
        fn current_bounded_by_i_on(
            t in any_type(), v_tg in 0.0f64..=3.0, v_bg in 0.0f64..=3.0,
            v_a in 0.0f64..=3.0, v_b in 0.0f64..=3.0,
        ) {
            prop_assert!(inst(t, v_tg, v_bg).current(v_a, v_b, &p()).abs() <= p().i_on);
        }

        #[test]
        fn current_monotone_in_each_factor(
            v_tg in 0.0f64..=3.0, dv_tg in 0.0f64..=1.0,
            v_bg in 0.0f64..=1.24, dv_bg in 0.0f64..=1.24,
            v_ds in 0.0f64..=3.0, d_ds in 0.0f64..=1.0,
        ) {
            let params = p();
            let base = inst(DeviceType::P, v_tg, v_bg).current(v_ds, 0.0, &params);
            // lower top gate -> more P drive
            let tg = inst(DeviceType::P, (v_tg - dv_tg).max(0.0), v_bg).current(v_ds, 0.0, &params);
            // lower bottom gate (still in window) -> more P drive
            let bg = inst(DeviceType::P, v_tg, (v_bg - dv_bg).max(0.0)).current(v_ds, 0.0, &params);
            let ds = inst(DeviceType::P, v_tg, v_bg).current((v_ds + d_ds).min(3.0), 0.0, &params);
            prop_assert!(tg >= base && bg >= base && ds >= base);
        }

        #[test]
        fn sign_encoding_on_the_line(
            v_tg in 0.0f64..=3.0, level_bg in 0.0f64..=1.24, v_line in 0.0f64..=3.0,
        ) {
            let params = p();
            // P: rail -> line, N: line -> ground
            let pd = inst(DeviceType::P, v_tg, level_bg);
            prop_assert!(pd.current(params.vdd, v_line, &params) >= 0.0);
            let nd = inst(DeviceType::N, v_tg, 3.0 - level_bg);
            prop_assert!(nd.current(v_line, 0.0, &params) >= 0.0);
        }
    }
}
