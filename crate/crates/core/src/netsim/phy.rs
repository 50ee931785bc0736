//! Radio propagation: two-ray ground reflection with a free-space region
//! below the crossover distance.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PhyError {
    #[error("distance must be positive, got {0}")]
    BadDistance(f64),
    #[error("invalid PHY configuration: {0}")]
    InvalidConfig(String),
}

/// Radio parameters. The defaults are the classic 914 MHz WaveLAN-style
/// constants that give a 250 m reception range and a 550 m carrier-sense
/// range under two-ray ground propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct PhyConfig {
    /// Transmit power, watts.
    pub tx_power: f64,
    pub antenna_gain_tx: f64,
    pub antenna_gain_rx: f64,
    /// Antenna heights, metres.
    pub antenna_height_tx: f64,
    pub antenna_height_rx: f64,
    /// Carrier wavelength, metres.
    pub wavelength: f64,
    /// System loss factor (>= 1).
    pub system_loss: f64,
    /// Minimum power for successful reception, watts.
    pub rx_threshold: f64,
    /// Minimum power for carrier sensing, watts.
    pub cs_threshold: f64,
    /// Link bitrate, bits/second.
    pub bitrate: f64,
}

impl Default for PhyConfig {
    fn default() -> Self {
        PhyConfig {
            tx_power: 0.28183815,
            antenna_gain_tx: 1.0,
            antenna_gain_rx: 1.0,
            antenna_height_tx: 1.5,
            antenna_height_rx: 1.5,
            wavelength: 0.328227,
            system_loss: 1.0,
            rx_threshold: 3.652e-10,
            cs_threshold: 1.559e-11,
            bitrate: 2_000_000.0,
        }
    }
}

impl PhyConfig {
    pub fn validate(&self) -> Result<(), PhyError> {
        let all_positive = [
            self.tx_power,
            self.antenna_gain_tx,
            self.antenna_gain_rx,
            self.antenna_height_tx,
            self.antenna_height_rx,
            self.wavelength,
            self.rx_threshold,
            self.cs_threshold,
            self.bitrate,
        ]
        .iter()
        .all(|v| *v > 0.0);
        if !all_positive || self.system_loss < 1.0 {
            return Err(PhyError::InvalidConfig(
                "all parameters must be positive and system loss >= 1".into(),
            ));
        }
        if self.cs_threshold > self.rx_threshold {
            return Err(PhyError::InvalidConfig(
                "carrier-sense threshold must not exceed the reception threshold".into(),
            ));
        }
        Ok(())
    }

    /// Distance where the ground reflection starts to dominate:
    /// 4 * pi * ht * hr / lambda.
    pub fn crossover_distance(&self) -> f64 {
        4.0 * std::f64::consts::PI * self.antenna_height_tx * self.antenna_height_rx
            / self.wavelength
    }

    /// Received power at distance `d`: free space below the crossover,
    /// two-ray ground beyond it. The step at the crossover is inherent to
    /// the model and intentionally not smoothed.
    pub fn rx_power(&self, d: f64) -> Result<f64, PhyError> {
        if !(d > 0.0) {
            return Err(PhyError::BadDistance(d));
        }
        let pt = self.tx_power * self.antenna_gain_tx * self.antenna_gain_rx;
        if d < self.crossover_distance() {
            let denom = 4.0 * std::f64::consts::PI * d;
            Ok(pt * self.wavelength * self.wavelength / (denom * denom * self.system_loss))
        } else {
            let h = self.antenna_height_tx * self.antenna_height_rx;
            Ok(pt * h * h / (d.powi(4) * self.system_loss))
        }
    }

    /// Time on air for a frame of `bytes`, including the fixed preamble.
    pub fn airtime(&self, bytes: u32, preamble: f64) -> f64 {
        preamble + bytes as f64 * 8.0 / self.bitrate
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_power_at_250m() {
        let phy = PhyConfig::default();
        let p = phy.rx_power(250.0).unwrap();
        let expected = 3.652e-10;
        assert!(
            (p - expected).abs() / expected < 1e-3,
            "got {p:e}, expected {expected:e} within 0.1%"
        );
    }

    #[test]
    fn crossover_is_86m() {
        let phy = PhyConfig::default();
        let d = phy.crossover_distance();
        assert!((d - 86.14).abs() < 0.01, "crossover {d}");
    }

    #[test]
    fn two_ray_scales_as_inverse_fourth_power() {
        let phy = PhyConfig::default();
        let p1 = phy.rx_power(100.0).unwrap();
        let p2 = phy.rx_power(200.0).unwrap();
        assert!((p1 / p2 - 16.0).abs() < 1e-9);
    }

    #[test]
    fn monotone_within_each_regime() {
        let phy = PhyConfig::default();
        let xo = phy.crossover_distance();
        let mut prev = f64::INFINITY;
        for i in 1..80 {
            let d = i as f64;
            if d >= xo {
                break;
            }
            let p = phy.rx_power(d).unwrap();
            assert!(p < prev);
            prev = p;
        }
        let mut prev = f64::INFINITY;
        for i in 87..1000 {
            let p = phy.rx_power(i as f64).unwrap();
            assert!(p < prev);
            prev = p;
        }
    }

    #[test]
    fn non_positive_distance_rejected() {
        let phy = PhyConfig::default();
        assert!(matches!(phy.rx_power(0.0), Err(PhyError::BadDistance(_))));
        assert!(matches!(phy.rx_power(-5.0), Err(PhyError::BadDistance(_))));
    }

    #[test]
    fn threshold_ordering_validated() {
        let mut phy = PhyConfig::default();
        phy.cs_threshold = 1e-9;
        assert!(phy.validate().is_err());
    }

    #[test]
    fn reception_range_matches_the_ecosystem_convention() {
        let phy = PhyConfig::default();
        assert!(phy.rx_power(250.0).unwrap() >= phy.rx_threshold * 0.999);
        assert!(phy.rx_power(251.0).unwrap() < phy.rx_threshold);
        assert!(phy.rx_power(100.0).unwrap() >= phy.rx_threshold);
        assert!(phy.rx_power(600.0).unwrap() < phy.rx_threshold);
        // 600 m is even below carrier sense.
        assert!(phy.rx_power(600.0).unwrap() < phy.cs_threshold);
    }
}
