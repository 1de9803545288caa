//! Forward model of the link: fibre and detector response, where the source
//! sits, what the monitor records, and finite-size fluctuation of measured
//! gains.

use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, check_probability, Error, Result};

/// Fibre channel and Bob's detection system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelDetector {
    pub alpha_db_per_km: f64,
    pub distance_km: f64,
    pub eta_bob: f64,
    /// Background click probability per pulse.
    pub y0: f64,
    pub e_det: f64,
    /// Error rate of background clicks.
    pub e0: f64,
}

impl ChannelDetector {
    /// Parameters measured by GYS, the default link of the simulations.
    pub fn gys(distance_km: f64) -> Self {
        ChannelDetector { alpha_db_per_km: 0.21, distance_km, eta_bob: 0.045, y0: 1.7e-6, e_det: 0.033, e0: 0.5 }
    }

    pub fn at_distance(&self, distance_km: f64) -> Self {
        ChannelDetector { distance_km, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_db_per_km > 0.0 && self.alpha_db_per_km.is_finite()) {
            return Err(Error::domain(format!("alpha = {} dB/km must be positive", self.alpha_db_per_km)));
        }
        if !(self.distance_km >= 0.0 && self.distance_km.is_finite()) {
            return Err(Error::domain(format!("distance {} km must be >= 0", self.distance_km)));
        }
        check_probability("eta_bob", self.eta_bob)?;
        check_probability("y0", self.y0)?;
        check_probability("e_det", self.e_det)?;
        check_probability("e0", self.e0)?;
        Ok(())
    }

    /// Fibre transmittance `10^(−αl/10)`.
    pub fn transmittance(&self) -> f64 {
        10f64.powf(-self.alpha_db_per_km * self.distance_km / 10.0)
    }

    /// Fibre transmittance times detector efficiency.
    pub fn system_transmittance(&self) -> f64 {
        self.transmittance() * self.eta_bob
    }
}

/// Overall gain and QBER when Alice emits a Poisson mixture of mean `mu` photons.
pub fn simulate_gain_qber(channel: &ChannelDetector, mu: f64) -> Result<(f64, f64)> {
    if !(mu >= 0.0) {
        return Err(Error::domain(format!("mean photon number {mu} must be >= 0")));
    }
    let signal = -(-channel.system_transmittance() * mu).exp_m1();
    let q = (channel.y0 + signal).min(1.0);
    if q == 0.0 {
        return Ok((0.0, channel.e0));
    }
    let e = (channel.e0 * channel.y0 + channel.e_det * signal) / (channel.y0 + signal);
    Ok((q, e))
}

/// Where the untrusted source sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Uni-directional link: the source feeds Alice directly.
    AtAlice,
    /// Plug-and-play: Bob's bright pulses cross the fibre before reaching Alice.
    AtBob,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    /// Mean photons per pulse where the source is located.
    pub mean_photons: f64,
    pub placement: Placement,
    /// Pulses per session; `None` for the infinite-data limit.
    pub pulses: Option<f64>,
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mean_photons >= 1.0 && self.mean_photons.is_finite()) {
            return Err(Error::domain(format!("source mean {} photons must be >= 1", self.mean_photons)));
        }
        if let Some(k) = self.pulses {
            if !(k >= 1.0 && k.is_finite()) {
                return Err(Error::domain(format!("pulse count {k} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// Mean photons per pulse entering Alice's lab.
pub fn input_photons(source: &SourceConfig, channel: &ChannelDetector) -> f64 {
    match source.placement {
        Placement::AtAlice => source.mean_photons,
        Placement::AtBob => source.mean_photons * channel.transmittance(),
    }
}

/// Monitor-arm mean photons per pulse. In the uni-directional case the source mean itself.
pub fn intensity_at_alice(source: &SourceConfig, channel: &ChannelDetector, q: f64) -> f64 {
    match source.placement {
        Placement::AtAlice => source.mean_photons,
        Placement::AtBob => source.mean_photons * channel.transmittance() * (1.0 - q),
    }
}

/// Source mean in Bob's lab that yields monitor-arm mean `monitor_mean` at Alice.
pub fn source_photons_from_monitor(monitor_mean: f64, channel: &ChannelDetector, q: f64) -> Result<f64> {
    check_open_unit("q", q)?;
    if !(monitor_mean > 0.0) {
        return Err(Error::domain(format!("monitor mean {monitor_mean} must be positive")));
    }
    Ok(monitor_mean / (channel.transmittance() * (1.0 - q)))
}

/// Monitor noise implied by a measured spread, assuming a Poissonian actual distribution.
pub fn infer_monitor_noise(measured_std: f64, mean: f64) -> Result<f64> {
    if !(measured_std >= 0.0) || !(mean >= 0.0) {
        return Err(Error::domain("measured spread and mean must be >= 0"));
    }
    let var = measured_std * measured_std;
    if var < mean {
        return Err(Error::domain(format!("measured variance {var} is below the Poissonian variance {mean}")));
    }
    Ok((var - mean).sqrt())
}

/// Measured gain and QBER of one intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateMeasurement {
    pub gain: f64,
    pub qber: f64,
}

impl StateMeasurement {
    pub fn simulate(channel: &ChannelDetector, mu: f64) -> Result<Self> {
        let (gain, qber) = simulate_gain_qber(channel, mu)?;
        Ok(StateMeasurement { gain, qber })
    }

    pub fn error_gain(&self) -> f64 {
        self.gain * self.qber
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyMeasurements {
    pub signal: StateMeasurement,
    pub decoy: StateMeasurement,
    pub vacuum: StateMeasurement,
}

/// Measured quantities after shifting each one against the bound it feeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjustedGains {
    pub signal_gain_upper: f64,
    pub decoy_gain_lower: f64,
    pub vacuum_gain_upper: f64,
    pub signal_error_gain_upper: f64,
    pub vacuum_error_gain_lower: f64,
}

impl AdjustedGains {
    pub fn unadjusted(m: &DecoyMeasurements) -> Self {
        AdjustedGains {
            signal_gain_upper: m.signal.gain,
            decoy_gain_lower: m.decoy.gain,
            vacuum_gain_upper: m.vacuum.gain,
            signal_error_gain_upper: m.signal.error_gain(),
            vacuum_error_gain_lower: m.vacuum.error_gain(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

/// `value ± u·sqrt(value/pulses)`, clamped to `[0, 1]`.
pub fn fluctuate(value: f64, pulses: f64, u: f64, direction: Direction) -> f64 {
    if u == 0.0 || pulses.is_infinite() {
        return value;
    }
    let shift = u * (value / pulses).sqrt();
    match direction {
        Direction::Up => (value + shift).min(1.0),
        Direction::Down => (value - shift).max(0.0),
    }
}

/// Worst-case measured values with `u` standard deviations per state.
///
/// `pulses` holds the pulse counts of signal, decoy and vacuum states.
pub fn apply_fluctuation(m: &DecoyMeasurements, pulses: [f64; 3], u: f64) -> Result<AdjustedGains> {
    if !(u >= 0.0) {
        return Err(Error::domain(format!("fluctuation width {u} must be >= 0")));
    }
    if pulses.iter().any(|n| !(*n >= 1.0)) {
        return Err(Error::domain("each state needs at least one pulse"));
    }
    let [ns, nd, nv] = pulses;
    Ok(AdjustedGains {
        signal_gain_upper: fluctuate(m.signal.gain, ns, u, Direction::Up),
        decoy_gain_lower: fluctuate(m.decoy.gain, nd, u, Direction::Down),
        vacuum_gain_upper: fluctuate(m.vacuum.gain, nv, u, Direction::Up),
        signal_error_gain_upper: fluctuate(m.signal.error_gain(), ns, u, Direction::Up),
        vacuum_error_gain_lower: fluctuate(m.vacuum.error_gain(), nv, u, Direction::Down),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gys_channel_example() {
        let (q, e) = simulate_gain_qber(&ChannelDetector::gys(20.0), 0.5).unwrap();
        assert!((q - 0.0085195).abs() < 5e-8, "{q}");
        assert!((e - 0.033093).abs() < 5e-7, "{e}");
        let (q, e) = simulate_gain_qber(&ChannelDetector::gys(20.0), 0.0).unwrap();
        assert_eq!((q, e), (1.7e-6, 0.5));
    }

    #[test]
    fn gain_saturates_at_one() {
        let ch = ChannelDetector { eta_bob: 1.0, distance_km: 0.0, y0: 0.1, ..ChannelDetector::gys(0.0) };
        let (q, _) = simulate_gain_qber(&ch, 1e3).unwrap();
        assert_eq!(q, 1.0);
    }

    #[test]
    fn plug_and_play_inversion() {
        let ch = ChannelDetector::gys(25.0);
        let mb = source_photons_from_monitor(1.818e7, &ch, 0.05).unwrap();
        assert!((mb / 1e7 - 6.411).abs() < 1e-3, "{mb}");
        let src = SourceConfig { mean_photons: mb, placement: Placement::AtBob, pulses: None };
        assert!((intensity_at_alice(&src, &ch, 0.05) / 1.818e7 - 1.0).abs() < 1e-12);
        let uni = SourceConfig { placement: Placement::AtAlice, ..src };
        assert_eq!(intensity_at_alice(&uni, &ch, 0.05), mb);
    }

    #[test]
    fn monitor_noise_examples() {
        let s = infer_monitor_noise(3.097e5, 1.818e7).unwrap();
        assert!((s / 1e5 - 3.097).abs() < 1e-3);
        let s = infer_monitor_noise(6.557e4, 5.101e6).unwrap();
        assert!((s / 1e4 - 6.553).abs() < 1e-3);
        assert_eq!(infer_monitor_noise(1e3, 1e6).unwrap(), 0.0);
        assert!(infer_monitor_noise(1e2, 1e6).is_err());
    }

    #[test]
    fn fluctuation_example() {
        assert!((fluctuate(0.01, 1e11, 6.0, Direction::Down) - 0.0099981026).abs() < 1e-9);
        assert_eq!(fluctuate(0.01, 1e11, 0.0, Direction::Down), 0.01);
        assert_eq!(fluctuate(0.01, f64::INFINITY, 6.0, Direction::Up), 0.01);
        assert_eq!(fluctuate(1e-12, 1.0, 6.0, Direction::Down), 0.0);
    }
}
