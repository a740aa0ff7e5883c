//! A validated bundle of the pieces one transmission depends on.

use crate::agc::AgcTable;
use crate::channel::ChannelMatrix;
use crate::config::SystemConfig;
use crate::covariance::CovarianceSet;
use crate::error::{Error, Result};
use crate::precoding::PhaseVector;

/// Channel, precoder phases, configuration, and combination table with
/// mutually consistent dimensions.
#[derive(Debug, Clone)]
pub struct TransmissionModel {
    channel: ChannelMatrix,
    precoder: PhaseVector,
    config: SystemConfig,
    agc: AgcTable,
}

impl TransmissionModel {
    pub fn new(
        channel: ChannelMatrix,
        precoder: PhaseVector,
        config: SystemConfig,
        agc: AgcTable,
    ) -> Result<Self> {
        config.validate()?;
        if channel.n_r() != config.n_r || channel.n_t() != config.n_t {
            return Err(Error::DimensionMismatch(format!(
                "channel is {}x{}, config expects {}x{}",
                channel.n_r(),
                channel.n_t(),
                config.n_r,
                config.n_t
            )));
        }
        if precoder.len() != config.n_t {
            return Err(Error::DimensionMismatch(format!(
                "phase vector has {} entries, expected {}",
                precoder.len(),
                config.n_t
            )));
        }
        if agc.n_t() != config.n_t || agc.n_rf() != config.n_rf || agc.n_k() != config.n_k {
            return Err(Error::DimensionMismatch(
                "combination table does not match the configuration".into(),
            ));
        }
        Ok(Self { channel, precoder, config, agc })
    }

    /// Builds the table from the configuration.
    pub fn with_default_table(
        channel: ChannelMatrix,
        precoder: PhaseVector,
        config: SystemConfig,
    ) -> Result<Self> {
        let agc = AgcTable::for_config(&config)?;
        Self::new(channel, precoder, config, agc)
    }

    pub fn channel(&self) -> &ChannelMatrix {
        &self.channel
    }

    pub fn precoder(&self) -> &PhaseVector {
        &self.precoder
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn agc(&self) -> &AgcTable {
        &self.agc
    }

    pub fn set_precoder(&mut self, precoder: PhaseVector) -> Result<()> {
        if precoder.len() != self.config.n_t {
            return Err(Error::DimensionMismatch(format!(
                "phase vector has {} entries, expected {}",
                precoder.len(),
                self.config.n_t
            )));
        }
        self.precoder = precoder;
        Ok(())
    }

    /// The M receive covariances of this model.
    pub fn covariances(&self) -> Result<CovarianceSet> {
        CovarianceSet::build(&self.channel, &self.precoder, &self.config, &self.agc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_channel;
    use crate::rng::substream;

    #[test]
    fn construction_checks_every_dimension() {
        let cfg = SystemConfig::new(8, 4, 2, 4, 2, 1.0, 1.0).unwrap();
        let mut rng = substream(3, 0);
        let (_, h) = sample_channel(&cfg, 5, &mut rng).unwrap();
        let psi = PhaseVector::zeros(cfg.n_t);
        let model = TransmissionModel::with_default_table(h.clone(), psi.clone(), cfg).unwrap();
        assert_eq!(model.covariances().unwrap().len(), 4);

        let bad_psi = PhaseVector::zeros(5);
        assert!(TransmissionModel::with_default_table(h.clone(), bad_psi, cfg).is_err());

        let other = SystemConfig::new(8, 2, 2, 4, 2, 1.0, 1.0).unwrap();
        assert!(TransmissionModel::with_default_table(h, psi, other).is_err());
    }
}
