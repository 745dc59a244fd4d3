use serde::{Deserialize, Serialize};

use super::MixerError;
use crate::acoustics::Regime;

/// Recipe for one family of mixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// One near target plus `n_speakers − 1` far interferers.
    pub n_speakers: usize,
    pub regime: Regime,
    /// Adds a near intruder active only at the end of the mixture.
    pub intruded: bool,
    pub mixture_length: f64,
    pub rms_near_db: [f64; 2],
    pub rms_far_db: [f64; 2],
    pub intruder_length: [f64; 2],
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_speakers: 2,
            regime: Regime::Normal,
            intruded: false,
            mixture_length: 5.0,
            rms_near_db: [-30.0, -20.0],
            rms_far_db: [-30.0, -20.0],
            intruder_length: [1.0, 3.0],
        }
    }
}

impl ScenarioConfig {
    /// Comparison-table recipe: every source drawn from (−30, −20) dB.
    pub fn standard(n_speakers: usize) -> Self {
        Self { n_speakers, ..Self::default() }
    }

    /// Ablation recipe: far sources may be up to 10 dB louder.
    pub fn ablation(n_speakers: usize, intruded: bool, regime: Regime) -> Self {
        Self { n_speakers, intruded, regime, rms_far_db: [-30.0, -10.0], ..Self::default() }
    }

    pub fn key(&self) -> String {
        format!(
            "{}spk-{}-{}",
            self.n_speakers,
            self.regime.as_str(),
            if self.intruded { "intruded" } else { "unintruded" }
        )
    }

    pub fn samples(&self) -> usize {
        (self.mixture_length * 16_000.0).round() as usize
    }

    pub fn validate(&self) -> Result<(), MixerError> {
        let bad = |m: &str| Err(MixerError::Config(m.into()));
        if self.n_speakers < 2 {
            return bad("n_speakers must be >= 2");
        }
        if !(self.mixture_length > 0.0) {
            return bad("mixture_length must be positive");
        }
        for (name, iv) in [("rms_near_db", self.rms_near_db), ("rms_far_db", self.rms_far_db), ("intruder_length", self.intruder_length)] {
            if !(iv[0] <= iv[1]) {
                return Err(MixerError::Config(format!("{name} interval is empty: {iv:?}")));
            }
        }
        if self.intruded && !(self.intruder_length[0] > 0.0 && self.intruder_length[1] <= self.mixture_length) {
            return bad("intruder_length must lie within (0, mixture_length]");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let s = ScenarioConfig::standard(3);
        assert_eq!(s.samples(), 80_000);
        assert_eq!(s.rms_far_db, [-30.0, -20.0]);
        let a = ScenarioConfig::ablation(2, true, Regime::Faint);
        assert_eq!(a.rms_far_db, [-30.0, -10.0]);
        assert_eq!(a.key(), "2spk-faint-intruded");
        a.validate().unwrap();
    }

    #[test]
    fn rejects_invalid() {
        assert!(ScenarioConfig { n_speakers: 1, ..Default::default() }.validate().is_err());
        assert!(ScenarioConfig { rms_near_db: [-10.0, -20.0], ..Default::default() }.validate().is_err());
        assert!(ScenarioConfig { mixture_length: 0.0, ..Default::default() }.validate().is_err());
    }
}
