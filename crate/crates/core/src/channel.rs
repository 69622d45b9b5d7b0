//! Linear-loss quantum channel: fibre spans or fixed attenuators.

use std::fmt;

use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::tx::PulsePair;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Channel {
    /// Standard fibre of the given length (km) at `fiber_loss_coeff`.
    Fiber { length_km: f64 },
    /// Fixed optical attenuation (dB).
    Attenuator { db: f64 },
}

impl Channel {
    pub fn fiber(length_km: f64) -> Result<Self> {
        if !(length_km >= 0.0 && length_km.is_finite()) {
            return Err(Error::InvalidArgument(format!("fibre length {length_km} km")));
        }
        Ok(Channel::Fiber { length_km })
    }

    pub fn attenuator(db: f64) -> Result<Self> {
        if !(db >= 0.0) || db.is_nan() {
            return Err(Error::InvalidArgument(format!("attenuation {db} dB")));
        }
        Ok(Channel::Attenuator { db })
    }

    /// Loss of the channel itself (dB), without Alice's excess loss.
    pub fn channel_db(&self, params: &SystemParams) -> f64 {
        match *self {
            Channel::Fiber { length_km } => params.fiber_loss_coeff * length_km,
            Channel::Attenuator { db } => db,
        }
    }

    /// Fibre length, or the fibre length equivalent to an attenuator (km).
    pub fn distance_km(&self, params: &SystemParams) -> f64 {
        match *self {
            Channel::Fiber { length_km } => length_km,
            Channel::Attenuator { db } if params.fiber_loss_coeff > 0.0 => db / params.fiber_loss_coeff,
            Channel::Attenuator { .. } => f64::NAN,
        }
    }

    /// Total loss seen by the pulses (dB), including `excess_loss_alice`.
    pub fn total_db(&self, params: &SystemParams) -> f64 {
        self.channel_db(params) + params.excess_loss_alice
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::Fiber { length_km } => write!(f, "{length_km} km fibre"),
            Channel::Attenuator { db } => write!(f, "{db} dB attenuator"),
        }
    }
}

/// Converts a loss in dB to a linear power transmittance.
pub fn db_to_transmittance(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

/// Power transmittance of the channel plus Alice's excess loss, in (0, 1].
pub fn transmittance(channel: &Channel, params: &SystemParams) -> f64 {
    db_to_transmittance(channel.total_db(params))
}

/// Scales both bins by the channel transmittance; phases pass through untouched.
pub fn propagate(pair: &PulsePair, channel: &Channel, params: &SystemParams) -> PulsePair {
    attenuate(pair, transmittance(channel, params))
}

pub(crate) fn attenuate(pair: &PulsePair, t: f64) -> PulsePair {
    PulsePair { flux_early: pair.flux_early * t, flux_late: pair.flux_late * t, ..*pair }
}
